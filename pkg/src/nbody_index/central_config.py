"""Central configurations: residual, projected Newton solver, restricted spectrum, spiral test."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from . import nbody_core as core
from .errors import ChartDomainError, CollisionError, NoConvergenceError, NotCentralError
from .nbody_core import EllipsoidChart, MassSystem

TOL_CC = 1e-10
TOL_MARGIN = 1e-9
MAX_ITER = 200


class SpiralTag(str, enum.Enum):
    SPIRAL = "Spiral"
    NON_SPIRAL_BOUNDARY = "NonSpiralBoundary"
    NON_SPIRAL_STRICT = "NonSpiralStrict"

    @property
    def is_spiral(self) -> bool:
        return self is SpiralTag.SPIRAL


@dataclass(frozen=True)
class SpiralClass:
    """Spiral/non-spiral tag with the signed margin lambda_1 + b/8."""

    tag: SpiralTag
    margin: float

    @property
    def vacuous(self) -> bool:
        return math.isinf(self.margin)


@dataclass(frozen=True)
class CentralConfiguration:
    """A normalized central configuration and its spectral data.

    ``system`` and ``shape`` are ``None`` for synthetic spectral data used to
    drive the index computations without an underlying n-body system.
    """

    system: MassSystem | None
    shape: np.ndarray | None
    b_value: float
    residual_norm: float
    spectrum: tuple[float, ...]
    classification: SpiralClass
    iterations: int = 0
    chart: EllipsoidChart | None = field(default=None, repr=False, compare=False)

    @property
    def n_star(self) -> int:
        if self.system is not None:
            return self.system.n_star
        return len(self.spectrum) + 1

    @property
    def lambda_1(self) -> float | None:
        return self.spectrum[0] if self.spectrum else None

    @property
    def is_synthetic(self) -> bool:
        return self.system is None


def synthetic_cc(b_value: float, spectrum: Sequence[float] = (), tol_margin: float = TOL_MARGIN) -> CentralConfiguration:
    """Spectral data (b, lambda_i) without an n-body system behind it."""
    if b_value <= 0:
        raise ValueError("b must be positive")
    spec = tuple(sorted(float(s) for s in spectrum))
    return CentralConfiguration(
        system=None,
        shape=None,
        b_value=float(b_value),
        residual_norm=0.0,
        spectrum=spec,
        classification=classify_values(spec[0] if spec else None, b_value, tol_margin),
    )


def cc_residual(sys: MassSystem, s) -> np.ndarray:
    """grad U(s) + U(s) M s as a flat vector; zero exactly at central configurations."""
    s = core.check_normalized(sys, s, tol=1e-8)
    return core.grad_potential(sys, s).ravel() + core.potential(sys, s) * sys.mass_vector * s.ravel()


def _newton_data(sys: MassSystem, s: np.ndarray):
    chart = core.make_chart(sys, s)
    E = chart.tangent_basis
    g = E.T @ core.grad_potential(sys, s).ravel()
    H = E.T @ core.hess_potential(sys, s) @ E + core.potential(sys, s) * np.eye(E.shape[1])
    return chart, g, 0.5 * (H + H.T)


def find_cc(
    sys: MassSystem,
    guess,
    tol: float = TOL_CC,
    max_iter: int = MAX_ITER,
    tol_margin: float = TOL_MARGIN,
    min_distance: float = 1e-8,
    max_step: float = 0.5,
) -> CentralConfiguration:
    """Projected Newton iteration for a critical point of U on the inertia ellipsoid.

    Each step solves the chart Newton system with a pseudo-inverse (to step
    over symmetry-induced zero modes), maps the step back through the
    gnomonic chart and halves it while the residual does not decrease.
    Steps longer than ``max_step`` (chart units) are shortened first.
    """
    s = core.normalize(sys, guess)
    trace: list[float] = []
    res = float(np.linalg.norm(cc_residual(sys, s)))
    trace.append(res)
    it = 0
    while res > tol:
        if it >= max_iter:
            raise NoConvergenceError(
                f"residual {res:.3e} above {tol:.1e} after {max_iter} iterations", trace
            )
        chart, g, H = _newton_data(sys, s)
        step = -np.linalg.pinv(H, rcond=1e-10, hermitian=True) @ g
        norm = float(np.linalg.norm(step))
        alpha = min(1.0, max_step / norm) if norm > 0 else 1.0
        accepted = None
        for _ in range(40):
            try:
                cand = chart.inverse(alpha * step).reshape(sys.n_bodies, sys.dim_d)
                if core.min_pair_distance(sys, cand) < min_distance:
                    raise CollisionError("Newton iterate approached the collision set")
                cand = core.normalize(sys, cand)
                cand_res = float(np.linalg.norm(cc_residual(sys, cand)))
            except (CollisionError, ChartDomainError):
                cand_res = math.inf
            if cand_res < res:
                accepted = (cand, cand_res)
                break
            alpha *= 0.5
        if accepted is None:
            raise NoConvergenceError(
                f"projected Newton stalled at residual {res:.3e} (no decreasing step)", trace
            )
        s, res = accepted
        trace.append(res)
        it += 1
    chart = core.make_chart(sys, s)
    b = core.potential(sys, s)
    spectrum = restricted_spectrum(sys, s, chart, tol=max(tol, TOL_CC))
    return CentralConfiguration(
        system=sys,
        shape=s,
        b_value=b,
        residual_norm=res,
        spectrum=tuple(float(x) for x in spectrum),
        classification=classify_values(spectrum[0] if len(spectrum) else None, b, tol_margin),
        iterations=it,
        chart=chart,
    )


def restricted_spectrum_generalized(sys: MassSystem, s) -> np.ndarray:
    """Eigenvalues of (D^2U + U M) w = lambda M w on X intersected with the M-complement of s."""
    s = sys.as_coords(s).ravel()
    mv = sys.mass_vector
    rows = []
    for k in range(sys.dim_d):
        r = np.zeros((sys.n_bodies, sys.dim_d))
        r[:, k] = sys.masses
        rows.append(r.ravel())
    rows.append(mv * s)
    Z = scipy.linalg.null_space(np.vstack(rows))
    if Z.shape[1] == 0:
        return np.zeros(0)
    A = core.hess_potential(sys, s) + core.potential(sys, s) * np.diag(mv)
    lam = scipy.linalg.eigh(Z.T @ A @ Z, Z.T @ (mv[:, None] * Z), eigvals_only=True)
    return np.sort(lam)


def restricted_spectrum(
    sys: MassSystem,
    s,
    chart: EllipsoidChart | None = None,
    tol: float = TOL_CC,
    validate: bool = True,
) -> np.ndarray:
    """Sorted spectrum of M^{-1} D^2 U restricted to the ellipsoid at a central configuration.

    Computed as the eigenvalues of the chart Hessian of U o psi^{-1} at the
    chart origin (the chart metric is the identity there), and, when
    ``validate`` is set, cross-checked against the generalized eigenproblem.
    """
    s = sys.as_coords(s)
    res = float(np.linalg.norm(cc_residual(sys, s)))
    if res > tol:
        raise NotCentralError(f"residual {res:.3e} exceeds {tol:.1e}: not a central configuration")
    if chart is None:
        chart = core.make_chart(sys, s)
    elif np.max(np.abs(chart.base_point - s.ravel())) > 1e-12:
        raise ValueError("chart is not based at the given configuration")
    if chart.dim == 0:
        return np.zeros(0)
    lam = np.sort(np.linalg.eigvalsh(chart.hess_potential(np.zeros(chart.dim))))
    if validate:
        other = restricted_spectrum_generalized(sys, s)
        scale = max(1.0, float(np.max(np.abs(lam))))
        if np.max(np.abs(lam - other)) > 1e-8 * scale:
            raise RuntimeError(
                f"chart and generalized spectra disagree by {np.max(np.abs(lam - other)):.2e}"
            )
    return lam


def classify_values(lambda_1: float | None, b: float, tol_margin: float = TOL_MARGIN) -> SpiralClass:
    if lambda_1 is None:
        return SpiralClass(SpiralTag.NON_SPIRAL_STRICT, math.inf)
    margin = float(lambda_1) + float(b) / 8.0
    if margin < -tol_margin:
        tag = SpiralTag.SPIRAL
    elif margin > tol_margin:
        tag = SpiralTag.NON_SPIRAL_STRICT
    else:
        tag = SpiralTag.NON_SPIRAL_BOUNDARY
    return SpiralClass(tag, margin)


def classify(cc: CentralConfiguration, tol_margin: float = TOL_MARGIN) -> SpiralClass:
    """Compare lambda_1 with -b/8; an empty spectrum is vacuously strictly non-spiral."""
    return classify_values(cc.lambda_1, cc.b_value, tol_margin)


@dataclass(frozen=True)
class SweepRow:
    parameter: float
    converged: bool
    lambda_1: float | None = None
    neg_b_over_8: float | None = None
    classification: SpiralClass | None = None
    cc: CentralConfiguration | None = None
    error: str | None = None


def spiral_sweep(
    family: Callable[[float], MassSystem],
    guess,
    grid: Sequence[float],
    **find_kwargs,
) -> list[SweepRow]:
    """Find and classify one central configuration per parameter value.

    ``guess`` is either a fixed configuration array or a callable of the
    parameter.  Failures are recorded on their row instead of raised.
    """
    rows = []
    for p in grid:
        sys = family(p)
        g = guess(p) if callable(guess) else guess
        try:
            cc = find_cc(sys, g, **find_kwargs)
        except (NoConvergenceError, CollisionError, NotCentralError, RuntimeError) as exc:
            rows.append(SweepRow(float(p), False, error=f"{type(exc).__name__}: {exc}"))
            continue
        rows.append(
            SweepRow(
                float(p),
                True,
                lambda_1=cc.lambda_1,
                neg_b_over_8=-cc.b_value / 8.0,
                classification=cc.classification,
                cc=cc,
            )
        )
    return rows


def equilateral_triangle() -> np.ndarray:
    h = math.sqrt(3.0) / 2.0
    return np.array([[1.0, 0.0], [-0.5, h], [-0.5, -h]])


def collinear_three(spacing: float = 1.0) -> np.ndarray:
    return np.array([[-spacing, 0.0], [0.0, 0.0], [spacing, 0.0]])


PRESETS: dict[str, tuple[MassSystem, np.ndarray]] = {
    "kepler1d": (MassSystem((1.0, 1.0), 1), np.array([[-0.5], [0.5]])),
    "lagrange_equal": (MassSystem((1.0, 1.0, 1.0), 2), equilateral_triangle()),
    "euler_collinear": (MassSystem((1.0, 1.0, 1.0), 2), collinear_three()),
}

FAMILIES: dict[str, tuple[Callable[[float], MassSystem], Callable[[float], np.ndarray]]] = {
    # middle mass varies, outer masses fixed at 1
    "collinear3": (lambda p: MassSystem((1.0, p, 1.0), 2), lambda p: collinear_three()),
    # third mass varies on the equilateral triangle
    "lagrange3": (lambda p: MassSystem((1.0, 1.0, p), 2), lambda p: equilateral_triangle()),
}


def preset(name: str) -> tuple[MassSystem, np.ndarray]:
    try:
        sys, guess = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return sys, guess.copy()
