"""McGehee blow-up of a homothetic orbit and the linearized coefficient matrices.

The state is ``(v, u, r, x)`` with fictitious time ``tau`` (``dt = r^{3/2} dtau``).
Along a homothetic orbit ``u = 0`` and ``x = x0`` so only the reduced flow

    v' = v^2/2 - b,    r' = r v

has to be integrated; it is integrated in ``(v, log r, t)``.
Linearized coefficient matrices use the phase-space ordering
``(p1, p2, r, x)``: momenta first, then positions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .central_config import CentralConfiguration
from .errors import IntegratorError
from .nbody_core import EllipsoidChart, MassSystem


@dataclass(frozen=True)
class HomotheticOrbit:
    """Colliding homothetic orbit r(t) s0 with energy h0, started at (r0, v0)."""

    cc: CentralConfiguration
    h0: float
    r0: float
    v0: float

    def __post_init__(self):
        b = self.cc.b_value
        if self.r0 <= 0:
            raise ValueError("r0 must be positive")
        if self.v0 > 0:
            raise ValueError("v0 must be non-positive for a colliding orbit")
        if self.h0 < 0 and self.r0 > -b / self.h0 * (1 + 1e-12):
            raise ValueError(f"r0={self.r0} exceeds the apex radius {-b / self.h0} for h0={self.h0}")
        resid = 0.5 * self.v0**2 - b - self.r0 * self.h0
        if abs(resid) > 1e-12 * max(1.0, b, abs(self.r0 * self.h0)):
            raise ValueError(f"energy relation violated at tau=0 (residual {resid:.3e})")

    @classmethod
    def apex(cls, cc: CentralConfiguration, h0: float) -> "HomotheticOrbit":
        """Start at rest at the maximal radius -b/h0 (needs h0 < 0)."""
        if h0 >= 0:
            raise ValueError("apex start needs negative energy")
        return cls(cc, float(h0), -cc.b_value / h0, 0.0)

    @classmethod
    def from_radius(cls, cc: CentralConfiguration, h0: float, r0: float) -> "HomotheticOrbit":
        """Start at radius r0 moving inwards with the speed fixed by the energy."""
        vv = 2.0 * (cc.b_value + r0 * h0)
        if vv < -1e-14:
            raise ValueError(f"no real v0 at r0={r0} for h0={h0}")
        return cls(cc, float(h0), float(r0), -math.sqrt(max(vv, 0.0)))

    @classmethod
    def default(cls, cc: CentralConfiguration, h0: float, r0: float = 1.0) -> "HomotheticOrbit":
        """Apex start for h0 < 0, otherwise start at ``r0``."""
        return cls.apex(cc, h0) if h0 < 0 else cls.from_radius(cc, h0, r0)

    @property
    def b(self) -> float:
        return self.cc.b_value

    @property
    def n_star(self) -> int:
        return self.cc.n_star

    @property
    def spectrum(self) -> tuple[float, ...]:
        return self.cc.spectrum


@dataclass(frozen=True)
class McGeheeState:
    v: float
    u: np.ndarray
    r: float
    x: np.ndarray
    tau: float = 0.0
    t_phys: float = 0.0


@dataclass
class ReducedPath:
    """Dense solution of the reduced flow on ``[0, tau_max]``."""

    orbit: HomotheticOrbit
    tau_max: float
    tol: float
    sol: object = field(repr=False)
    tau_steps: np.ndarray = field(repr=False)

    def _eval(self, tau):
        tau = np.asarray(tau, dtype=float)
        if np.any(tau < -1e-12) or np.any(tau > self.tau_max * (1 + 1e-12) + 1e-12):
            raise ValueError(f"tau outside [0, {self.tau_max}]")
        flat = np.clip(tau, 0.0, self.tau_max).ravel()
        return self.sol(flat).reshape((3,) + tau.shape)

    def v(self, tau):
        return self._eval(tau)[0]

    def log_r(self, tau):
        return self._eval(tau)[1]

    def r(self, tau):
        return np.exp(self._eval(tau)[1])

    def t(self, tau):
        return self._eval(tau)[2]

    def energy_residual(self, tau):
        y = self._eval(tau)
        return 0.5 * y[0] ** 2 - self.orbit.b - np.exp(y[1]) * self.orbit.h0

    def state(self, tau: float, chart_dim: int | None = None) -> McGeheeState:
        k = self.orbit.n_star - 1 if chart_dim is None else chart_dim
        y = self._eval(tau)
        return McGeheeState(float(y[0]), np.zeros(k), float(np.exp(y[1])), np.zeros(k), float(tau), float(y[2]))

    def samples(self, n: int | None = None) -> np.ndarray:
        """Rows ``(tau, v, r, t_phys, energy_residual)`` on the step grid (or n uniform points)."""
        taus = self.tau_steps if n is None else np.linspace(0.0, self.tau_max, n)
        y = self._eval(taus)
        r = np.exp(y[1])
        return np.column_stack([taus, y[0], r, y[2], 0.5 * y[0] ** 2 - self.orbit.b - r * self.orbit.h0])


MAX_STEP = 0.25


def reduced_flow(orbit: HomotheticOrbit, tau_max: float, tol: float = 1e-10) -> ReducedPath:
    """Integrate v' = v^2/2 - b, (log r)' = v, t' = r^{3/2} on [0, tau_max].

    Steps are capped at ``MAX_STEP`` so that the dense output between steps
    keeps the accuracy of the step values; the flow is cheap to integrate.
    """
    if tau_max <= 0:
        raise ValueError("tau_max must be positive")
    b = orbit.b

    def rhs(_tau, y):
        return [0.5 * y[0] ** 2 - b, y[0], math.exp(1.5 * y[1])]

    y0 = [orbit.v0, math.log(orbit.r0), 0.0]
    sol = solve_ivp(
        rhs, (0.0, tau_max), y0, method="DOP853", rtol=tol, atol=tol * 1e-2,
        dense_output=True, max_step=MAX_STEP,
    )
    if not sol.success:
        raise IntegratorError(f"reduced flow failed: {sol.message}")
    if not np.all(np.isfinite(sol.y)):
        raise IntegratorError("reduced flow produced non-finite values")
    return ReducedPath(orbit, float(tau_max), tol, sol.sol, sol.t)


def physical_time(path: ReducedPath, tau: float | None = None) -> float:
    """t(tau) = integral of r^{3/2} from 0 to tau (default: tau_max)."""
    return float(path.t(path.tau_max if tau is None else tau))


def collision_time(path: ReducedPath) -> float:
    """Estimate of the collision instant T+: t(tau_max) plus the exponential tail."""
    v_end = float(path.v(path.tau_max))
    r_end = float(path.r(path.tau_max))
    return physical_time(path) + r_end**1.5 / (1.5 * abs(v_end))


def tau_of_t(path: ReducedPath, T: float) -> float:
    """Invert t(tau) on the integrated span."""
    if T < 0:
        raise ValueError("T must be non-negative")
    if T == 0:
        return 0.0
    t_end = physical_time(path)
    if T > t_end:
        raise ValueError(f"T={T} is beyond the integrated span (t(tau_max)={t_end})")
    return float(brentq(lambda s: float(path.t(s)) - T, 0.0, path.tau_max, xtol=1e-14, rtol=1e-15))


def block_B1(v: float, b: float) -> np.ndarray:
    """Radial 2x2 block [[1, -3v/4], [-3v/4, -2b]]."""
    return np.array([[1.0, -0.75 * v], [-0.75 * v, -2.0 * b]])


def block_Blambda(v: float, lam: float) -> np.ndarray:
    """Tangential 2x2 block [[1, v/4], [v/4, -lambda]] for one eigenvalue."""
    return np.array([[1.0, 0.25 * v], [0.25 * v, -lam]])


def R_matrix(r: float, k: int) -> np.ndarray:
    """diag(r^{3/4}, r^{-1/4} I_k, r^{-3/4}, r^{1/4} I_k) in (p1, p2, r, x) order."""
    return np.diag(
        np.concatenate([[r**0.75], np.full(k, r**-0.25), [r**-0.75], np.full(k, r**0.25)])
    )


def R_log_derivative(v: float, k: int) -> np.ndarray:
    """R' R^{-1} along the reduced flow (uses r' = r v)."""
    return np.diag(np.concatenate([[0.75 * v], np.full(k, -0.25 * v), [-0.75 * v], np.full(k, 0.25 * v)]))


def _check_system(sys, chart):
    if sys is not None and sys != chart.system:
        raise ValueError("chart belongs to a different mass system")


def _quad_parts(x: np.ndarray, u: np.ndarray):
    """Closed-form pieces of q(x, u) = <M-hat^{-1}(x) u, u> for the gnomonic chart."""
    k = x.size
    s = 1.0 + x @ x
    xu = x @ u
    uu = u @ u
    minv = s * (np.eye(k) + np.outer(x, x))
    minv_u = s * (u + x * xu)
    # d(M^{-1}u)_i / dx_j
    d_minv_u = 2.0 * np.outer(u + x * xu, x) + s * (xu * np.eye(k) + np.outer(x, u))
    q = s * (uu + xu**2)
    grad_q = 2.0 * x * (uu + xu**2) + 2.0 * s * xu * u
    hess_q = (
        2.0 * (uu + xu**2) * np.eye(k)
        + 4.0 * xu * (np.outer(x, u) + np.outer(u, x))
        + 2.0 * s * np.outer(u, u)
    )
    return minv, minv_u, d_minv_u, q, grad_q, hess_q


def _assemble(k, pp1, p2p2, p1r, p2r, p2x, rr, rx, xx):
    n = 2 * (k + 1)
    B = np.zeros((n, n))
    P1, P2 = 0, slice(1, k + 1)
    R_, X_ = k + 1, slice(k + 2, n)
    B[P1, P1] = pp1
    B[P2, P2] = p2p2
    B[P1, R_] = B[R_, P1] = p1r
    B[P2, R_] = p2r
    B[R_, P2] = p2r
    B[P2, X_] = p2x
    B[X_, P2] = p2x.T
    B[R_, R_] = rr
    B[R_, X_] = rx
    B[X_, R_] = rx
    B[X_, X_] = xx
    return 0.5 * (B + B.T)


def full_Bhat(state: McGeheeState, sys: MassSystem | None, chart: EllipsoidChart) -> np.ndarray:
    """Coefficient of the regularized linear Hamiltonian system at a McGehee state.

    Order ``(p1, p2, r, x)``; size ``2 n*``.  At homothetic data it reduces to
    ``block_B1`` symplectically summed with the tangential block built from
    the chart Hessian of the potential.
    """
    _check_system(sys, chart)
    x = np.asarray(state.x, dtype=float).reshape(chart.dim)
    u = np.asarray(state.u, dtype=float).reshape(chart.dim)
    v = float(state.v)
    k = chart.dim
    minv, minv_u, d_minv_u, q, grad_q, hess_q = _quad_parts(x, u)
    U = chart.potential(x)
    gU = chart.grad_potential(x) if k else np.zeros(0)
    hU = chart.hess_potential(x) if k else np.zeros((0, 0))
    return _assemble(
        k,
        pp1=1.0,
        p2p2=minv,
        p1r=-0.75 * v,
        p2r=-2.0 * minv_u,
        p2x=d_minv_u + 0.25 * v * np.eye(k),
        rr=3.0 * q - 2.0 * U,
        rx=gU - grad_q,
        xx=0.5 * hess_q - hU,
    )


def tau_form_B(state: McGeheeState, sys: MassSystem | None, chart: EllipsoidChart) -> np.ndarray:
    """r^{3/2} times the Hessian of the polar-coordinate Hamiltonian, at p1 = v r^{-1/2}, p2 = r^{1/2} u."""
    _check_system(sys, chart)
    r = float(state.r)
    k = chart.dim
    x = np.asarray(state.x, dtype=float).reshape(k)
    p2 = math.sqrt(r) * np.asarray(state.u, dtype=float).reshape(k)
    minv, minv_p, d_minv_p, q, grad_q, hess_q = _quad_parts(x, p2)
    U = chart.potential(x)
    gU = chart.grad_potential(x) if k else np.zeros(0)
    hU = chart.hess_potential(x) if k else np.zeros((0, 0))
    d2H = _assemble(
        k,
        pp1=1.0,
        p2p2=minv / r**2,
        p1r=0.0,
        p2r=-2.0 * minv_p / r**3,
        p2x=d_minv_p / r**2,
        rr=3.0 * q / r**4 - 2.0 * U / r**3,
        rx=gU / r**2 - grad_q / r**3,
        xx=hess_q / (2.0 * r**2) - hU / r,
    )
    return r**1.5 * d2H


def homothetic_Bhat(v: float, b: float, chart_hessian: np.ndarray) -> np.ndarray:
    """full_Bhat specialised to u = 0, x = x0 (chart metric = identity there)."""
    k = chart_hessian.shape[0]
    return _assemble(
        k,
        pp1=1.0,
        p2p2=np.eye(k),
        p1r=-0.75 * v,
        p2r=np.zeros(k),
        p2x=0.25 * v * np.eye(k),
        rr=-2.0 * b,
        rx=np.zeros(k),
        xx=-np.asarray(chart_hessian, dtype=float),
    )


def mcgehee_vector_field(state: McGeheeState, chart: EllipsoidChart) -> tuple[float, np.ndarray, float, np.ndarray]:
    """(v', u', r', x') of the blown-up equations of motion at ``state``."""
    k = chart.dim
    x = np.asarray(state.x, dtype=float).reshape(k)
    u = np.asarray(state.u, dtype=float).reshape(k)
    minv, minv_u, _, q, grad_q, _ = _quad_parts(x, u)
    U = chart.potential(x)
    gU = chart.grad_potential(x) if k else np.zeros(0)
    dv = 0.5 * state.v**2 + q - U
    du = -0.5 * u * state.v + gU - 0.5 * grad_q
    return float(dv), du, float(state.r * state.v), minv_u


def energy_residual(state: McGeheeState, chart: EllipsoidChart, h0: float) -> float:
    """(<M^{-1}u,u> + v^2)/2 - U(x) - r h0."""
    k = chart.dim
    _, _, _, q, _, _ = _quad_parts(np.asarray(state.x, float).reshape(k), np.asarray(state.u, float).reshape(k))
    return 0.5 * (q + state.v**2) - chart.potential(state.x) - state.r * h0


def write_path_csv(path: ReducedPath, filename, n: int | None = None) -> None:
    rows = path.samples(n)
    with open(filename, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "v", "r", "t_phys", "energy_residual"])
        for row in rows:
            w.writerow([f"{val:.16e}" for val in row])
