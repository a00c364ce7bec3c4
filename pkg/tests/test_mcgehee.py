import csv
import math

import numpy as np
import pytest

from nbody_index import central_config as ccm
from nbody_index import mcgehee as mg
from nbody_index.mcgehee import HomotheticOrbit, McGeheeState
from nbody_index.symplectic import J, symplectic_sum

from oracles import fd_jacobian, kepler_apex, kepler_collision_time


def test_orbit_validation(kepler_cc):
    with pytest.raises(ValueError):
        HomotheticOrbit(kepler_cc, -1.0, 1.0, 0.0)  # energy relation broken
    with pytest.raises(ValueError):
        HomotheticOrbit.apex(kepler_cc, 0.5)
    with pytest.raises(ValueError):
        HomotheticOrbit.from_radius(kepler_cc, -1.0, 10.0)
    orb = HomotheticOrbit.default(kepler_cc, 1.0)
    assert orb.r0 == 1.0 and orb.v0 < 0


def test_apex_flow_matches_closed_form(kepler_cc):
    b = kepler_cc.b_value
    orb = HomotheticOrbit.apex(kepler_cc, -1.0)
    path = mg.reduced_flow(orb, 20.0)
    for tau in np.linspace(0, 20, 41):
        v, r = kepler_apex(b, -1.0, tau)
        assert float(path.v(tau)) == pytest.approx(v, abs=1e-8)
        assert float(path.r(tau)) == pytest.approx(r, rel=1e-7)
    taus = np.linspace(0.01, 20, 400)
    assert np.all(np.diff(path.v(taus)) < 0)
    assert np.all(np.diff(path.r(taus)) < 0)


def test_equilibrium_speed_is_fixed(lagrange_cc):
    orb = HomotheticOrbit.from_radius(lagrange_cc, 0.0, 2.0)
    assert 0.5 * orb.v0**2 - orb.b == pytest.approx(0.0, abs=1e-14)
    path = mg.reduced_flow(orb, 5.0)
    assert np.max(np.abs(path.v(np.linspace(0, 5, 50)) - orb.v0)) <= 1e-12


def test_physical_time_closed_form(lagrange_cc):
    # h0 = 0: v stays at -sqrt(2b), r = r0 exp(v tau)
    orb = HomotheticOrbit.from_radius(lagrange_cc, 0.0, 2.0)
    v, r0 = orb.v0, orb.r0
    path = mg.reduced_flow(orb, 8.0)
    for tau in (0.5, 2.0, 8.0):
        exact = r0**1.5 * (1 - math.exp(1.5 * v * tau)) / (-1.5 * v)
        assert mg.physical_time(path, tau) == pytest.approx(exact, rel=1e-9)
    assert mg.collision_time(path) == pytest.approx(r0**1.5 / (-1.5 * v), rel=1e-9)


@pytest.mark.parametrize("h0", [-1.0, 0.0, 1.0])
def test_energy_relation_along_flow(lagrange_cc, h0):
    orb = HomotheticOrbit.default(lagrange_cc, h0)
    tol = 1e-10
    path = mg.reduced_flow(orb, 30.0, tol=tol)
    res = path.energy_residual(np.linspace(0, 30, 500))
    assert np.max(np.abs(res)) <= 10 * tol * max(1.0, orb.b)
    v = path.v(np.linspace(1e-3, 30, 500))
    assert np.all(v < 0)


def test_kepler_limits(kepler_cc):
    b = kepler_cc.b_value
    orb = HomotheticOrbit.apex(kepler_cc, -1.0)
    path = mg.reduced_flow(orb, 50.0)
    assert float(path.v(50.0)) == pytest.approx(-math.sqrt(2 * b), abs=1e-6)
    assert mg.collision_time(path) == pytest.approx(kepler_collision_time(b, -1.0), rel=1e-9)
    t = path.t(np.linspace(0, 50, 200))
    assert np.all(np.diff(t) >= 0)  # saturates at T+ in double precision
    assert np.all(np.diff(t[:40]) > 0)
    T = 0.5 * mg.collision_time(path)
    assert float(path.t(mg.tau_of_t(path, T))) == pytest.approx(T, rel=1e-12)
    with pytest.raises(ValueError):
        mg.tau_of_t(path, 10 * T)


def test_block_examples():
    assert np.array_equal(mg.block_B1(0.0, 1.0), [[1, 0], [0, -2]])
    assert np.array_equal(mg.block_Blambda(0.0, 0.0), [[1, 0], [0, 0]])
    assert np.allclose(mg.block_Blambda(-2.0, 1.0), [[1, -0.5], [-0.5, -1]])


def test_homothetic_bhat_example():
    B = mg.homothetic_Bhat(0.0, 1.0, np.zeros((1, 1)))
    expected = symplectic_sum(np.array([[1.0, 0], [0, -2]]), np.array([[1.0, 0], [0, 0]]))
    assert np.array_equal(B, expected)


def _polar_hamiltonian(chart):
    k = chart.dim

    def H(z):
        p1, p2, r, x = z[0], z[1 : 1 + k], z[1 + k], z[2 + k :]
        return 0.5 * p1**2 + 0.5 * p2 @ chart.metric_inv(x) @ p2 / r**2 - chart.potential(x) / r

    return H


def _random_state(rng, chart, scale=0.2):
    k = chart.dim
    return McGeheeState(v=-rng.uniform(0.1, 1.5), u=rng.normal(scale=scale, size=k),
                        r=rng.uniform(0.3, 2.0), x=rng.normal(scale=scale, size=k))


def test_tau_form_matches_polar_hessian(lagrange_cc, rng):
    chart = lagrange_cc.chart
    H = _polar_hamiltonian(chart)
    grad = lambda z: fd_jacobian(H, z, h=1e-5).ravel()
    for _ in range(5):
        st = _random_state(rng, chart)
        z = np.concatenate([[st.v / math.sqrt(st.r)], math.sqrt(st.r) * st.u, [st.r], st.x])
        D2 = fd_jacobian(grad, z, h=1e-4)
        B = mg.tau_form_B(st, lagrange_cc.system, chart)
        assert np.allclose(B, st.r**1.5 * D2, atol=2e-5 * np.max(np.abs(B)))


def test_conjugation_identity(lagrange_cc, euler_cc, rng):
    for cc in (lagrange_cc, euler_cc):
        chart = cc.chart
        k = chart.dim
        for _ in range(10):
            st = _random_state(rng, chart)
            Bt = mg.tau_form_B(st, cc.system, chart)
            R = mg.R_matrix(st.r, k)
            Ri = np.linalg.inv(R)
            expected = -J(k + 1) @ mg.R_log_derivative(st.v, k) + Ri.T @ Bt @ Ri
            Bh = mg.full_Bhat(st, cc.system, chart)
            assert np.allclose(Bh, Bh.T, atol=1e-14)
            assert np.allclose(Bh, expected, atol=1e-8)
            # R is symplectic, so the conjugated coefficient is symmetric
            assert np.allclose(R.T @ J(k + 1) @ R, J(k + 1), atol=1e-12)


def test_homothetic_blocks_are_a_permutation(lagrange_cc, euler_cc):
    for cc in (lagrange_cc, euler_cc):
        chart = cc.chart
        k = chart.dim
        Hx = chart.hess_potential(np.zeros(k))
        lam, Q = np.linalg.eigh(Hx)
        for v in (0.0, -0.7, -math.sqrt(2 * cc.b_value)):
            st = McGeheeState(v, np.zeros(k), 0.8, np.zeros(k))
            B = mg.full_Bhat(st, cc.system, chart)
            assert np.allclose(B, mg.homothetic_Bhat(v, cc.b_value, Hx), atol=1e-12)
            P = np.zeros((2 * k + 2, 2 * k + 2))
            P[0, 0] = P[k + 1, k + 1] = 1.0
            P[1 : k + 1, 1 : k + 1] = Q
            P[k + 2 :, k + 2 :] = Q
            blocks = [mg.block_B1(v, cc.b_value)] + [mg.block_Blambda(v, l) for l in lam]
            assert np.allclose(P.T @ B @ P, symplectic_sum(*blocks), atol=1e-12)


def test_homothetic_data_is_invariant(lagrange_cc):
    chart = lagrange_cc.chart
    k = chart.dim
    st = McGeheeState(-0.4, np.zeros(k), 1.3, np.zeros(k))
    dv, du, dr, dx = mg.mcgehee_vector_field(st, chart)
    assert np.max(np.abs(du)) <= 1e-12
    assert np.max(np.abs(dx)) <= 1e-12
    assert dv == pytest.approx(0.5 * 0.16 - lagrange_cc.b_value, abs=1e-12)
    assert dr == pytest.approx(-0.52)
    h0 = (0.5 * 0.16 - lagrange_cc.b_value) / 1.3
    assert abs(mg.energy_residual(st, chart, h0)) <= 1e-12


def test_path_csv(kepler_cc, tmp_path):
    path = mg.reduced_flow(HomotheticOrbit.apex(kepler_cc, -1.0), 5.0)
    out = tmp_path / "path.csv"
    mg.write_path_csv(path, out, n=11)
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["tau", "v", "r", "t_phys", "energy_residual"]
    assert len(rows) == 12
    assert float(rows[-1][0]) == pytest.approx(5.0)
