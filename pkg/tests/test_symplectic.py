import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from nbody_index import mcgehee as mg
from nbody_index import symplectic as sm
from nbody_index.errors import DegenerateCrossingError
from nbody_index.symplectic import J, L_D, LagrangianFrame

from oracles import winding_maslov

AXIOMS = settings(max_examples=50, derandomize=True, deadline=None)
seeds = st.integers(min_value=0, max_value=2**32 - 1)


def _sym(rng, n, scale=1.0):
    A = rng.normal(scale=scale, size=(n, n))
    return 0.5 * (A + A.T)


def random_coefficient(rng, k):
    """Smooth random symmetric path tau -> A0 + A1 sin(w tau) + A2 tau."""
    A0, A1, A2 = _sym(rng, 2 * k), _sym(rng, 2 * k), _sym(rng, 2 * k, 0.3)
    w = rng.uniform(0.5, 2.0)
    return lambda t: A0 + A1 * math.sin(w * t) + A2 * t


def random_problem(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 4))
    L = float(rng.uniform(1.0, 4.0))
    coeff = random_coefficient(rng, k)
    return rng, k, L, coeff, LagrangianFrame.random(k, rng), LagrangianFrame.random(k, rng)


def integrate(coeff, span):
    path = sm.integrate_linear(coeff, span)
    assert path.symplecticity_defect() <= sm.TOL_SYMP
    return path


# ---------------------------------------------------------------- integrator


def test_zero_coefficient_gives_identity():
    path = integrate(lambda t: np.zeros((4, 4)), (0.0, 3.0))
    for tau in (0.0, 1.3, 3.0):
        assert np.allclose(path.gamma(tau), np.eye(4), atol=1e-14)


def test_oscillator_is_rotation():
    path = integrate(lambda t: np.eye(2), (0.0, 10.0))
    for tau in np.linspace(0, 10, 23):
        R = np.array([[math.cos(tau), -math.sin(tau)], [math.sin(tau), math.cos(tau)]])
        assert np.allclose(path.gamma(tau), R, atol=1e-9)


def test_frozen_radial_block_matches_expm():
    B = mg.block_B1(-math.sqrt(2.0), 1.0)
    path = integrate(lambda t: B, (0.0, 4.0))
    for tau in (0.5, 2.0, 4.0):
        E = expm(tau * J(1) @ B)
        assert np.linalg.norm(path.gamma(tau) - E) <= 1e-8 * np.linalg.norm(E)


def test_symplectic_correction_reduces_defect(rng):
    S = expm(J(2) @ _sym(rng, 4))
    noisy = S + 1e-6 * rng.normal(size=S.shape)
    assert sm.symplecticity_defect(sm.symplectic_correction(noisy)) < 1e-12 < sm.symplecticity_defect(noisy)


def test_lagrangian_frame_validation():
    with pytest.raises(ValueError):
        LagrangianFrame(np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0], [0.0, 0.0]]))  # not isotropic
    with pytest.raises(ValueError):
        LagrangianFrame(np.zeros((4, 2)))
    F = LagrangianFrame.random(3, np.random.default_rng(0)).orthonormal()
    assert np.allclose(F.T @ J(3) @ F, 0.0, atol=1e-12)
    assert L_D(2).dim_intersection(sm.L_N(2)) == 0
    assert L_D(2).dim_intersection(L_D(2)) == 2


# ------------------------------------------------------------------ crossings


def test_identity_path_crossings():
    path = integrate(lambda t: np.zeros((4, 4)), (0.0, 1.0))
    ev = sm.detect_crossings(path)
    assert ev[0].location == "start" and ev[0].kernel_dim == 2
    res = sm.maslov_report(path)
    assert res.mu == 0 and res.degenerate
    with pytest.raises(DegenerateCrossingError):
        sm.maslov_index(path)


def test_oscillator_crossings():
    eps = 0.1
    path = integrate(lambda t: np.eye(2), (0.0, 2 * math.pi))
    ev = sm.detect_crossings(path, span=(eps, 2 * math.pi))
    assert [e.location for e in ev] == ["interior", "end"]
    assert ev[0].tau_c == pytest.approx(math.pi, abs=1e-10)
    assert ev[1].tau_c == pytest.approx(2 * math.pi)
    assert ev[0].form_inertia == (1, 0, 0)
    form, inert = sm.crossing_form(path, L_D(1), math.pi)
    assert form.shape == (1, 1) and inert == (1, 0, 0)


def test_positive_coefficient_gives_positive_forms(rng):
    for _ in range(5):
        C = rng.normal(size=(4, 4))
        B = C @ C.T + 0.5 * np.eye(4)
        path = integrate(lambda t: B, (0.0, 6.0))
        for e in sm.detect_crossings(path):
            if e.location != "end":
                assert e.form_inertia == (e.kernel_dim, 0, 0)


def test_radial_block_start_crossing(kepler_cc):
    orb = mg.HomotheticOrbit.apex(kepler_cc, -1.0)
    rp = mg.reduced_flow(orb, 50.0)
    path = integrate(lambda t: mg.block_B1(float(rp.v(t)), orb.b), (0.0, 50.0))
    ev = sm.detect_crossings(path)
    assert len(ev) == 1 and ev[0].location == "start" and ev[0].form_inertia == (1, 0, 0)


def test_inertia_adds_up(rng):
    for seed in range(10):
        _, k, L, coeff, V, W = random_problem(seed)
        for e in sm.detect_crossings(integrate(coeff, (0.0, L)), W, V):
            assert e.kernel_dim >= 1
            assert sum(e.form_inertia) == e.kernel_dim


# ---------------------------------------------------------------- Maslov index


def test_oscillator_maslov():
    path = integrate(lambda t: np.eye(2), (0.0, 2 * math.pi + 0.1))
    assert sm.maslov_index(path) == 3
    assert sm.maslov_index(path, span=(0.0, 2 * math.pi)) == 2
    assert winding_maslov(lambda t: np.eye(2), (0.0, 2 * math.pi + 0.1), L_D(1).frame, L_D(1).frame) == 3


@pytest.mark.parametrize("T", [1.0, 5.0, 20.0, 50.0])
def test_radial_block_maslov_is_one(kepler_cc, T):
    orb = mg.HomotheticOrbit.apex(kepler_cc, -1.0)
    rp = mg.reduced_flow(orb, T)
    path = integrate(lambda t: mg.block_B1(float(rp.v(t)), orb.b), (0.0, T))
    assert sm.maslov_index(path) == 1


@pytest.mark.parametrize("seed", range(12))
def test_maslov_matches_winding_oracle(seed):
    _, k, L, coeff, V, W = random_problem(seed)
    path = integrate(coeff, (0.0, L))
    assert sm.maslov_index(path, W, V) == winding_maslov(coeff, (0.0, L), V.frame, W.frame, n_samples=1501)


def test_profile_matches_single_spans():
    _, k, L, coeff, V, W = random_problem(7)
    path = integrate(coeff, (0.0, L))
    hz = [L / 4, L / 2, L]
    prof = sm.maslov_profile(path, hz, W, V)
    assert [r.mu for r in prof] == [sm.maslov_index(path, W, V, span=(0.0, h)) for h in hz]


def test_plus_curve_equivalence(rng):
    for _ in range(10):
        k = int(rng.integers(1, 4))
        C = rng.normal(size=(k, k))
        P = C @ C.T + 0.2 * np.eye(k)
        Q0, R0, R1 = rng.normal(size=(k, k)), _sym(rng, k), _sym(rng, k)

        def coeff(t, P=P, Q0=Q0, R0=R0, R1=R1):
            Q = Q0 * math.cos(t)
            return np.block([[P, Q], [Q.T, R0 + R1 * math.sin(t)]])

        path = integrate(coeff, (0.0, 5.0))
        res = sm.maslov_report(path)
        assert res.is_plus_curve
        assert res.mu == res.plus_count == sm.plus_curve_index(path)


def test_symplectic_sum_layout(rng):
    assert np.array_equal(sm.symplectic_sum(np.eye(2), np.eye(2)), np.eye(4))
    O1, O2 = rng.normal(size=(2, 2, 2))
    a1, b1, c1, d1 = O1[0, 0], O1[0, 1], O1[1, 0], O1[1, 1]
    a2, b2, c2, d2 = O2[0, 0], O2[0, 1], O2[1, 0], O2[1, 1]
    expected = np.array([[a1, 0, b1, 0], [0, a2, 0, b2], [c1, 0, d1, 0], [0, c2, 0, d2]])
    assert np.array_equal(sm.symplectic_sum(O1, O2), expected)
    S1, S2 = expm(J(1) @ _sym(rng, 2)), expm(J(2) @ _sym(rng, 4))
    assert sm.symplecticity_defect(sm.symplectic_sum(S1, S2)) < 1e-12


def test_writers(tmp_path):
    path = integrate(lambda t: np.eye(2), (0.0, 2 * math.pi + 0.1))
    res = sm.maslov_report(path)
    sm.write_crossings_csv(res.events, tmp_path / "c.csv")
    rows = list(csv.reader((tmp_path / "c.csv").open()))
    assert rows[0] == ["tau_c", "kernel_dim", "coindex", "nullity", "index"]
    assert len(rows) == 4
    sm.write_maslov_json(res, tmp_path / "m.json")
    assert json.loads((tmp_path / "m.json").read_text())["mu"] == 3


# ------------------------------------------------------------- axiom suite


@AXIOMS
@given(seed=seeds, c=st.floats(-0.8, 0.8))
def test_reparametrization_invariance(seed, c):
    _, k, L, coeff, V, W = random_problem(seed)
    phi = lambda s: s + c * L / (2 * math.pi) * math.sin(2 * math.pi * s / L)
    dphi = lambda s: 1 + c * math.cos(2 * math.pi * s / L)
    mu = sm.maslov_index(integrate(coeff, (0.0, L)), W, V)
    mu_re = sm.maslov_index(integrate(lambda s: dphi(s) * coeff(phi(s)), (0.0, L)), W, V)
    assert mu == mu_re


@AXIOMS
@given(seed=seeds, frac=st.floats(0.1, 0.9))
def test_path_additivity(seed, frac):
    _, k, L, coeff, V, W = random_problem(seed)
    path = integrate(coeff, (0.0, L))
    c = frac * L
    whole = sm.maslov_index(path, W, V)
    assert whole == sm.maslov_index(path, W, V, span=(0.0, c)) + sm.maslov_index(path, W, V, span=(c, L))


@AXIOMS
@given(seed=seeds)
def test_symplectic_invariance(seed):
    rng, k, L, coeff, V, W = random_problem(seed)
    sigma = expm(J(k) @ _sym(rng, 2 * k, 0.5))
    si = np.linalg.inv(sigma)
    moved = lambda t: si.T @ coeff(t) @ si
    mu = sm.maslov_index(integrate(coeff, (0.0, L)), W, V)
    mu_s = sm.maslov_index(integrate(moved, (0.0, L)), W.transformed(sigma), V.transformed(sigma))
    assert mu == mu_s


@AXIOMS
@given(seed=seeds)
def test_symplectic_additivity(seed):
    _, k1, L, c1, V1, W1 = random_problem(seed)
    rng2, k2, _, c2, V2, W2 = random_problem(seed + 1)
    mu1 = sm.maslov_index(integrate(c1, (0.0, L)), W1, V1)
    mu2 = sm.maslov_index(integrate(c2, (0.0, L)), W2, V2)
    both = integrate(sm.sum_coefficients(c1, c2), (0.0, L))
    assert sm.maslov_index(both, sm.frame_sum(W1, W2), sm.frame_sum(V1, V2)) == mu1 + mu2


@AXIOMS
@given(seed=seeds)
def test_monotonicity(seed):
    rng, k, L, coeff, V, W = random_problem(seed)
    C0, C1 = rng.normal(size=(2, 2 * k, 2 * k))
    w = rng.uniform(0.5, 2.0)

    def bigger(t):
        C = C0 + C1 * math.sin(w * t)
        return coeff(t) + C @ C.T + 0.05 * np.eye(2 * k)

    mu_small = sm.maslov_index(integrate(coeff, (0.0, L)), W, V)
    mu_big = sm.maslov_index(integrate(bigger, (0.0, L)), W, V)
    assert mu_big >= mu_small
