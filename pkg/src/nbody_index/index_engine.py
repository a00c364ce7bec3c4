"""Index computations along a colliding homothetic orbit.

Two independent routes to the Morse index on ``[0, T]``:

* the Maslov route: crossings of the Dirichlet subspace by the regularized
  linear flow in fictitious time, split into the radial block and one
  2x2 block per restricted-Hessian eigenvalue;
* the Galerkin route: the second variation of the action discretized with
  piecewise-linear elements in physical time, counted by matrix inertia.

The identity ``morse(0, T) + n* = mu(0, tau(T))`` ties them together.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from . import nbody_core as core
from . import symplectic as sm
from .central_config import CentralConfiguration, SpiralTag
from .errors import DegenerateCrossingError, IntegratorError, MeshTooCoarseError, NBodyIndexError
from .mcgehee import (
    HomotheticOrbit,
    ReducedPath,
    block_B1,
    block_Blambda,
    homothetic_Bhat,
    reduced_flow,
    tau_of_t,
)


class IndexMismatchError(NBodyIndexError):
    """The full coefficient path and the sum of its blocks gave different indices."""


class Verdict(str, enum.Enum):
    MORSE_ZERO = "MorseZero"
    MORSE_INFINITE = "MorseInfinite"
    INCONCLUSIVE = "Inconclusive"


def tangential_hessian(cc: CentralConfiguration) -> np.ndarray:
    """Chart Hessian of the potential at the central configuration (diag(spectrum) if synthetic)."""
    if cc.chart is not None:
        k = cc.chart.dim
        return cc.chart.hess_potential(np.zeros(k)) if k else np.zeros((0, 0))
    return np.diag(np.asarray(cc.spectrum, dtype=float))


def _path_for(orbit: HomotheticOrbit, tau_max: float, path: ReducedPath | None, tol: float = 1e-11) -> ReducedPath:
    if path is not None and path.tau_max >= tau_max * (1 - 1e-12):
        return path
    return reduced_flow(orbit, tau_max, tol=tol)


def _profile(coeff, horizons, tol) -> list[sm.MaslovResult]:
    path = sm.integrate_linear(coeff, (0.0, max(horizons)), tol=tol)
    return sm.maslov_profile(path, horizons)


def _mu_list(results: Sequence[sm.MaslovResult]) -> list[int]:
    for r in results:
        if r.degenerate:
            bad = next(e for e in r.events if not e.regular)
            raise DegenerateCrossingError(f"non-regular crossing at tau={bad.tau_c}", bad)
    return [r.mu for r in results]


@dataclass
class GeometricalIndex:
    horizons: list[float]
    mu_total: list[int]
    mu_b1: list[int]
    mu_per_lambda: list[tuple[float, list[int]]]
    mu_full: list[int] | None = None
    epsilon: float = 0.0


def geometrical_index(
    orbit: HomotheticOrbit,
    horizons: float | Sequence[float],
    tol: float = 1e-11,
    path: ReducedPath | None = None,
    check_full: bool = True,
    epsilon: float = 0.0,
) -> GeometricalIndex:
    """Maslov index of the regularized linear flow on ``[0, T]`` for each horizon T.

    Sums the radial block and the per-eigenvalue blocks and, with
    ``check_full``, compares against the undiagonalized coefficient path
    (IndexMismatchError on disagreement).  ``epsilon`` shifts every
    eigenvalue up by ``epsilon``.  A non-regular crossing is retried once
    with a tiny shift and recorded in ``epsilon``.
    """
    hz = [float(horizons)] if np.isscalar(horizons) else [float(h) for h in horizons]
    if not hz or any(b <= a for a, b in zip(hz, hz[1:])) or hz[0] <= 0:
        raise ValueError("horizons must be positive and strictly increasing")
    rp = _path_for(orbit, hz[-1], path)
    b = orbit.b
    try:
        mu_b1 = _mu_list(_profile(lambda t: block_B1(float(rp.v(t)), b), hz, tol))
        cache: dict[float, list[int]] = {}
        per = []
        for lam in orbit.spectrum:
            key = float(lam) + epsilon
            if key not in cache:
                cache[key] = _mu_list(_profile(lambda t, l=key: block_Blambda(float(rp.v(t)), l), hz, tol))
            per.append((float(lam), cache[key]))
        total = [mu_b1[i] + sum(m[i] for _, m in per) for i in range(len(hz))]
        full = None
        if check_full:
            H = tangential_hessian(orbit.cc) + epsilon * np.eye(len(orbit.spectrum))
            full = _mu_list(_profile(lambda t: homothetic_Bhat(float(rp.v(t)), b, H), hz, tol))
            if full != total:
                raise IndexMismatchError(f"full path gives {full}, block sum gives {total}")
    except DegenerateCrossingError:
        if epsilon > 0:
            raise
        return geometrical_index(orbit, hz, tol, rp, check_full, epsilon=1e-8)
    return GeometricalIndex(hz, total, mu_b1, per, full, epsilon)


def epsilon_perturbed_index(
    orbit: HomotheticOrbit,
    epsilon: float,
    tau_max: float | Sequence[float],
    path: ReducedPath | None = None,
    tol: float = 1e-11,
):
    """Maslov index with the tangential Hessian shifted by ``-epsilon`` (eigenvalues up by epsilon).

    Returns an int for a scalar ``tau_max`` and a list for a sequence of horizons.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    res = geometrical_index(orbit, tau_max, tol, path, check_full=False, epsilon=float(epsilon))
    return res.mu_total[0] if np.isscalar(tau_max) else res.mu_total


@dataclass
class ScalarCrossing:
    tau: np.ndarray
    a: np.ndarray
    c: np.ndarray
    zeros: list[float]

    @property
    def zero_count(self) -> int:
        return len(self.zeros)

    @property
    def a_min(self) -> float:
        return float(np.min(self.a))


def _count_zeros(sol, taus, comp: int) -> list[float]:
    vals = sol(taus)[comp]
    zeros = [0.0]
    for i in range(1, taus.size - 1):
        if vals[i] == 0.0:
            zeros.append(float(taus[i]))
        elif vals[i] * vals[i + 1] < 0:
            zeros.append(float(brentq(lambda s: sol(s)[comp], taus[i], taus[i + 1], xtol=1e-13)))
    return zeros


def scalar_crossing_ode(
    orbit: HomotheticOrbit,
    lam: float,
    tau_max: float,
    path: ReducedPath | None = None,
    tol: float = 1e-11,
    subdiv: int = 8,
) -> ScalarCrossing:
    """Solve a'' = (b/8 - r h0/8 + lam) a and c'' = (b/8 + 3 r h0/8 + lam) c.

    Initial data a(0)=1, a'(0) = -v(0)/4, c(0)=0, c'(0)=1.  The zero list of
    c starts with tau=0 and then records each later sign change.
    """
    rp = _path_for(orbit, tau_max, path)
    b, h0 = orbit.b, orbit.h0

    def rhs(tau, y):
        r = float(rp.r(tau))
        return [y[1], (b / 8 - r * h0 / 8 + lam) * y[0], y[3], (b / 8 + 3 * r * h0 / 8 + lam) * y[2]]

    sol = solve_ivp(rhs, (0.0, tau_max), [1.0, -0.25 * orbit.v0, 0.0, 1.0], method="DOP853",
                    rtol=tol, atol=tol * 1e-3, dense_output=True)
    if not sol.success:
        raise IntegratorError(f"scalar crossing ODE failed: {sol.message}")
    s = sol.t
    taus = np.append((s[:-1, None] + np.diff(s)[:, None] * np.linspace(0, 1, subdiv, endpoint=False)).ravel(), s[-1])
    y = sol.sol(taus)
    return ScalarCrossing(taus, y[0], y[2], _count_zeros(sol.sol, taus, 2))


def scalar_b1_ode(orbit: HomotheticOrbit, tau_max: float, path: ReducedPath | None = None, tol: float = 1e-11) -> ScalarCrossing:
    """Radial block as a scalar equation: c'' = (3 v^2/16 + 11 b/4) c, c(0)=0, c'(0)=1."""
    rp = _path_for(orbit, tau_max, path)
    b = orbit.b

    def rhs(tau, y):
        v = float(rp.v(tau))
        return [y[1], (3 * v * v / 16 + 11 * b / 4) * y[0]]

    sol = solve_ivp(rhs, (0.0, tau_max), [0.0, 1.0], method="DOP853", rtol=tol, atol=tol * 1e-3, dense_output=True)
    if not sol.success:
        raise IntegratorError(f"radial scalar ODE failed: {sol.message}")
    taus = np.linspace(0.0, tau_max, 8 * sol.t.size)
    y = sol.sol(taus)
    return ScalarCrossing(taus, np.full(taus.size, np.nan), y[0], _count_zeros(sol.sol, taus, 0))


# ---------------------------------------------------------------- Galerkin


@dataclass
class GalerkinProblem:
    T: float
    mesh_size: int
    form_matrix: np.ndarray = field(repr=False)
    tau_end: float = 0.0


def _configuration_hessians(cc: CentralConfiguration, r: np.ndarray) -> np.ndarray:
    """E_X^T D^2U(r s0) E_X for each radius, in an M-orthonormal basis of X."""
    if cc.system is None:
        diag = np.concatenate([[2.0 * cc.b_value], np.asarray(cc.spectrum) - cc.b_value])
        return (r[:, None] ** -3.0 * diag)[:, None, :] * np.eye(diag.size)
    sys = cc.system
    E = core.mass_orthonormal_basis(sys)
    s0 = np.asarray(cc.shape, dtype=float).ravel()
    return np.array([E.T @ core.hess_potential(sys, ri * s0) @ E for ri in r])


def assemble_galerkin(
    orbit: HomotheticOrbit,
    m: int,
    T: float | None = None,
    tau_end: float | None = None,
    path: ReducedPath | None = None,
    n_gauss: int = 6,
) -> GalerkinProblem:
    """Second variation on P1 elements with Dirichlet ends and m interior nodes.

    Nodes are uniform in tau; element lengths and the local coordinate
    inside each element are quadratures of r^{3/2} in tau, so short
    elements near collision keep full relative precision.
    """
    if m < 1:
        raise ValueError("mesh size must be positive")
    if (T is None) == (tau_end is None):
        raise ValueError("give exactly one of T and tau_end")
    if tau_end is None:
        rp = _path_for(orbit, 1.0, path)
        while float(rp.t(rp.tau_max)) < T:
            rp = reduced_flow(orbit, 2 * rp.tau_max)
        tau_end = tau_of_t(rp, T)
    else:
        rp = _path_for(orbit, tau_end, path)
        T = float(rp.t(tau_end))
    n = orbit.n_star
    nodes = np.linspace(0.0, tau_end, m + 2)
    xg, wg = np.polynomial.legendre.leggauss(n_gauss)
    lo, hi = nodes[:-1], nodes[1:]
    half = 0.5 * (hi - lo)
    tq = lo[:, None] + half[:, None] * (xg + 1)  # (elements, gauss)
    wq = half[:, None] * wg
    r32 = lambda tau: np.exp(1.5 * rp.log_r(tau))
    h = np.sum(wq * r32(tq), axis=1)
    # t(tq) - t(lo): nested Gauss rule on [lo, tq]
    sub_half = 0.5 * (tq - lo[:, None])
    sub = lo[:, None, None] + sub_half[..., None] * (xg + 1)
    dt_local = np.sum(sub_half[..., None] * wg * r32(sub), axis=2)
    phi1 = dt_local / h[:, None]
    phi0 = 1.0 - phi1
    rq = np.exp(rp.log_r(tq))
    H = _configuration_hessians(orbit.cc, rq.ravel()).reshape(tq.shape + (n, n))
    w = wq * r32(tq)
    P00 = np.einsum("eq,eqij->eij", w * phi0 * phi0, H)
    P01 = np.einsum("eq,eqij->eij", w * phi0 * phi1, H)
    P11 = np.einsum("eq,eqij->eij", w * phi1 * phi1, H)
    I = np.eye(n)
    A = np.zeros(((m + 2) * n, (m + 2) * n))
    for e in range(m + 1):
        i, j = e * n, (e + 1) * n
        A[i : i + n, i : i + n] += I / h[e] + P00[e]
        A[j : j + n, j : j + n] += I / h[e] + P11[e]
        A[i : i + n, j : j + n] += -I / h[e] + P01[e]
        A[j : j + n, i : i + n] += -I / h[e] + P01[e].T
    A = A[n:-n, n:-n]
    return GalerkinProblem(float(T), m, 0.5 * (A + A.T), float(tau_end))


def negative_count(A: np.ndarray, block: int | None = None) -> int:
    """Number of negative eigenvalues via block Schur complements (LDL^T fallback)."""
    n = A.shape[0]
    if block:
        count = 0
        S = A[:block, :block]
        for start in range(0, n, block):
            if start:
                L = A[start : start + block, start - block : start]
                D = A[start : start + block, start : start + block]
                try:
                    if np.linalg.cond(S) > 1e12:
                        raise np.linalg.LinAlgError
                    S = D - L @ np.linalg.solve(S, L.T)
                except np.linalg.LinAlgError:
                    return negative_count(A)
            w = np.linalg.eigvalsh(0.5 * (S + S.T))
            count += int(np.sum(w < 0))
        return count
    _, d, _ = scipy.linalg.ldl(A)
    return int(np.sum(np.linalg.eigvalsh(d) < 0))


def galerkin_morse_index(
    orbit: HomotheticOrbit,
    T: float | None = None,
    m: int = 64,
    tau_end: float | None = None,
    path: ReducedPath | None = None,
    check_refinement: bool = True,
) -> int:
    """Negative-eigenvalue count of the discretized second variation on [0, T].

    Computed at m and 2m interior nodes; MeshTooCoarseError if they differ.
    """
    counts = []
    for mm in ([m, 2 * m] if check_refinement else [m]):
        prob = assemble_galerkin(orbit, mm, T=T, tau_end=tau_end, path=path)
        counts.append(negative_count(prob.form_matrix, block=orbit.n_star))
    if len(set(counts)) > 1:
        raise MeshTooCoarseError(f"negative count changes from {counts[0]} (m={m}) to {counts[1]} (m={2 * m})")
    return counts[0]


# ------------------------------------------------------ physical-time route


def radial_solution(orbit: HomotheticOrbit, T: float, tol: float = 1e-12):
    """Dense solution of r'' = -b / r^2 from (r0, v0 / sqrt(r0)) on [0, T]."""
    b = orbit.b
    sol = solve_ivp(lambda t, y: [y[1], -b / y[0] ** 2], (0.0, T), [orbit.r0, orbit.v0 / math.sqrt(orbit.r0)],
                    method="DOP853", rtol=tol, atol=tol * 1e-2, dense_output=True)
    if not sol.success or np.any(sol.y[0] <= 0):
        raise IntegratorError(f"radial motion failed before T={T}: {sol.message}")
    return sol.sol


def t_side_maslov(orbit: HomotheticOrbit, T: float, coords: str = "polar", tol: float = 1e-11) -> int:
    """Maslov index of the physical-time linearization on [0, T].

    ``polar`` uses (p1, p2, r, x) with B(t) = diag(1, I/r^2, -2b/r^3, -H/r);
    ``cartesian`` uses M-orthonormal coordinates of X with
    B(t) = diag(I, -E^T D^2U(r s0) E).
    """
    rsol = radial_solution(orbit, T)
    n = orbit.n_star
    if coords == "polar":
        H = tangential_hessian(orbit.cc)
        b = orbit.b

        def coeff(t):
            r = float(rsol(t)[0])
            return scipy.linalg.block_diag(1.0, np.eye(n - 1) / r**2, -2 * b / r**3, -H / r)

    elif coords == "cartesian":

        def coeff(t):
            r = float(rsol(t)[0])
            return scipy.linalg.block_diag(np.eye(n), -_configuration_hessians(orbit.cc, np.array([r]))[0])

    else:
        raise ValueError(f"unknown coordinates {coords!r}")
    path = sm.integrate_linear(coeff, (0.0, T), tol=tol)
    return sm.maslov_index(path)


@dataclass(frozen=True)
class TheoremRow:
    T: float
    tau: float
    galerkin: int
    maslov: int
    n_star: int

    @property
    def passed(self) -> bool:
        return self.galerkin + self.n_star == self.maslov


def index_theorem_check(
    orbit: HomotheticOrbit,
    T_grid: Sequence[float] | None = None,
    m: int = 64,
    tau_grid: Sequence[float] | None = None,
    tol: float = 1e-11,
) -> list[TheoremRow]:
    """Compare morse(0, T) + n* (Galerkin) with mu(0, tau(T)) (Maslov) on a grid.

    The grid may be given in physical time or directly in tau.
    """
    if (T_grid is None) == (tau_grid is None):
        raise ValueError("give exactly one of T_grid and tau_grid")
    if tau_grid is None:
        T_grid = [float(T) for T in T_grid]
        rp = reduced_flow(orbit, 1.0)
        while float(rp.t(rp.tau_max)) < max(T_grid):
            rp = reduced_flow(orbit, 2 * rp.tau_max)
        taus = [tau_of_t(rp, T) for T in T_grid]
    else:
        taus = [float(s) for s in tau_grid]
        rp = reduced_flow(orbit, max(taus))
        T_grid = [float(rp.t(s)) for s in taus]
    order = np.argsort(taus)
    H = tangential_hessian(orbit.cc)
    path = sm.integrate_linear(lambda t: homothetic_Bhat(float(rp.v(t)), orbit.b, H), (0.0, max(taus)), tol=tol)
    prof = sm.maslov_profile(path, [taus[i] for i in order])
    maslov = {int(i): _mu_list([res])[0] for i, res in zip(order, prof)}
    rows = []
    for i, (T, s) in enumerate(zip(T_grid, taus)):
        g = galerkin_morse_index(orbit, m=m, tau_end=s, path=rp)
        rows.append(TheoremRow(T, s, g, maslov[i], orbit.n_star))
    return rows


def corrupt_orbit(orbit: HomotheticOrbit, factor: float) -> HomotheticOrbit:
    """Same start radius and energy with b scaled by ``factor`` (for negative controls)."""
    cc = dataclasses.replace(orbit.cc, b_value=orbit.cc.b_value * factor)
    if orbit.v0 == 0.0 and orbit.h0 < 0:
        return HomotheticOrbit.apex(cc, orbit.h0)
    return HomotheticOrbit.from_radius(cc, orbit.h0, orbit.r0)


# ---------------------------------------------------------------- verdicts


def predicted_density(cc: CentralConfiguration) -> float:
    """Asymptotic crossings per unit tau: sum over spiral eigenvalues of sqrt(-(b/8+lam))/pi."""
    return sum(math.sqrt(-(cc.b_value / 8 + lam)) / math.pi for lam in cc.spectrum if cc.b_value / 8 + lam < 0)


@dataclass
class IndexReport:
    orbit: HomotheticOrbit
    tau_horizons: list[float]
    mu_total: list[int]
    mu_b1: list[int]
    mu_per_lambda: list[tuple[float, list[int]]]
    galerkin_index: dict[tuple[float, int], int] = field(default_factory=dict)
    verdict: Verdict = Verdict.INCONCLUSIVE
    predicted: Verdict = Verdict.INCONCLUSIVE
    diagnostics: dict = field(default_factory=dict)

    @property
    def consistent(self) -> bool:
        return self.verdict is self.predicted

    def to_json(self) -> dict:
        cc = self.orbit.cc
        cls = cc.classification
        return {
            "orbit": {"h0": self.orbit.h0, "r0": self.orbit.r0, "v0": self.orbit.v0, "b": cc.b_value, "n_star": cc.n_star},
            "spectrum": list(cc.spectrum),
            "classification": {"tag": cls.tag.value, "margin": None if math.isinf(cls.margin) else cls.margin,
                               "vacuous": cls.vacuous},
            "horizons": list(self.tau_horizons),
            "mu_total": list(self.mu_total),
            "mu_b1": list(self.mu_b1),
            "mu_per_lambda": [{"lambda": lam, "mu": list(mu)} for lam, mu in self.mu_per_lambda],
            "galerkin": {f"T={T!r},m={m}": v for (T, m), v in sorted(self.galerkin_index.items())},
            "verdict": self.verdict.value,
            "predicted": self.predicted.value,
            "diagnostics": self.diagnostics,
        }


def theorem_a_verdict(
    orbit: HomotheticOrbit,
    horizons: Sequence[float] = (5.0, 10.0, 20.0, 50.0),
    slope_rtol: float = 0.2,
    boundary_eps: float = 1e-3,
    tol: float = 1e-11,
) -> IndexReport:
    """Read the Morse index at collision off the Maslov index at growing horizons.

    MorseZero: the total index equals n* on the last three horizons (for a
    boundary classification the eps-shifted index must agree too).
    MorseInfinite: strictly increasing with a fitted slope within
    ``slope_rtol`` of the predicted crossing density.  Anything else is
    Inconclusive.
    """
    hz = [float(h) for h in horizons]
    if len(hz) < 4:
        raise ValueError("need at least four horizons")
    cc = orbit.cc
    n = orbit.n_star
    geo = geometrical_index(orbit, hz, tol)
    mu = geo.mu_total
    diag: dict = {"epsilon_fallback": geo.epsilon}
    tag = cc.classification.tag
    predicted = Verdict.MORSE_INFINITE if tag is SpiralTag.SPIRAL else Verdict.MORSE_ZERO

    verdict = Verdict.INCONCLUSIVE
    if all(m == n for m in mu[-3:]):
        verdict = Verdict.MORSE_ZERO
        if tag is SpiralTag.NON_SPIRAL_BOUNDARY:
            mu_eps = epsilon_perturbed_index(orbit, boundary_eps, hz, tol=tol)
            diag["mu_epsilon"] = mu_eps
            if not all(a <= b for a, b in zip(mu_eps, mu)) or mu_eps[-1] != n:
                verdict = Verdict.INCONCLUSIVE
    elif all(b > a for a, b in zip(mu, mu[1:])):
        tail = slice(max(0, len(hz) - 3), None)
        slope = float(np.polyfit(hz[tail], mu[tail], 1)[0])
        density = predicted_density(cc)
        diag.update(fitted_slope=slope, predicted_density=density)
        if slope > 0 and density > 0 and abs(slope - density) <= slope_rtol * density:
            verdict = Verdict.MORSE_INFINITE
    if verdict is Verdict.INCONCLUSIVE:
        diag["reason"] = "total index neither stabilized at n* nor growing at the predicted rate"
    return IndexReport(orbit, hz, mu, geo.mu_b1, geo.mu_per_lambda, verdict=verdict, predicted=predicted,
                       diagnostics=diag)
