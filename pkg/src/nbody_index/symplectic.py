"""Linear Hamiltonian flows, Lagrangian frames, crossings and the Maslov index.

Phase-space vectors are ordered ``(p, q)`` (momenta first), the standard
complex structure is ``J = [[0, -I], [I, 0]]`` and the Dirichlet subspace is
``L_D = {(p, 0)}``.  For a path ``Lambda(tau) = gamma(tau) V`` and a fixed
Lagrangian ``W``, crossings are the zeros of ``det(W^T J F(tau))`` where
``F`` is a frame of ``Lambda``; for ``W = V = L_D`` this is ``det(-c)`` with
``c`` the lower-left block of ``gamma``.

Fundamental solutions are stored as a chain of short segments, each
starting from the identity, so that the stored factors stay well
conditioned even when ``gamma`` itself grows exponentially.  Lagrangian
frames are carried across segment boundaries with QR re-orthonormalization.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm
from scipy.optimize import brentq, minimize_scalar

from .errors import DegenerateCrossingError, IntegratorError, UnresolvedCrossingError

TOL_SYMP = 1e-8
SIGMA_TOL = 1e-8
LOC_TOL = 1e-10

Coefficient = Callable[[float], np.ndarray]


def J(k: int) -> np.ndarray:
    """Standard complex structure on R^{2k} in (p, q) order."""
    Z, I = np.zeros((k, k)), np.eye(k)
    return np.block([[Z, -I], [I, Z]])


def symplecticity_defect(gamma: np.ndarray) -> float:
    k = gamma.shape[0] // 2
    return float(np.max(np.abs(gamma.T @ J(k) @ gamma - J(k))))


def symplectic_correction(phi: np.ndarray, sweeps: int = 2) -> np.ndarray:
    """Pull a nearly symplectic matrix back onto Sp(2k).

    Uses ``phi <- phi (I + J E / 2)`` with ``E = phi^T J phi - J``, which
    cancels the defect to first order; two sweeps are plenty near Sp.
    """
    k = phi.shape[0] // 2
    Jk = J(k)
    for _ in range(sweeps):
        E = phi.T @ Jk @ phi - Jk
        phi = phi @ (np.eye(2 * k) + 0.5 * Jk @ E)
    return phi


def _qr_pos(F: np.ndarray) -> np.ndarray:
    """Orthonormal basis of span(F) with the QR diagonal made positive."""
    Q, R = np.linalg.qr(F)
    d = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
    d[d == 0] = 1.0
    return Q * d[..., None, :]


@dataclass(frozen=True)
class LagrangianFrame:
    """A 2k x k frame spanning a Lagrangian subspace."""

    frame: np.ndarray
    tol: float = 1e-10

    def __post_init__(self):
        F = np.asarray(self.frame, dtype=float)
        if F.ndim != 2 or F.shape[0] != 2 * F.shape[1]:
            raise ValueError(f"frame must be 2k x k, got {F.shape}")
        object.__setattr__(self, "frame", F)
        if F.shape[1] and np.linalg.matrix_rank(F) < F.shape[1]:
            raise ValueError("frame is rank deficient")
        scale = max(1.0, float(np.max(np.abs(F))) ** 2)
        if F.shape[1] and np.max(np.abs(F.T @ J(F.shape[1]) @ F)) > self.tol * scale:
            raise ValueError("frame is not isotropic")

    @property
    def k(self) -> int:
        return self.frame.shape[1]

    @classmethod
    def dirichlet(cls, k: int) -> "LagrangianFrame":
        """L_D = {(p, 0)}."""
        return cls(np.vstack([np.eye(k), np.zeros((k, k))]))

    @classmethod
    def neumann(cls, k: int) -> "LagrangianFrame":
        """L_N = {(0, q)}."""
        return cls(np.vstack([np.zeros((k, k)), np.eye(k)]))

    @classmethod
    def random(cls, k: int, rng: np.random.Generator) -> "LagrangianFrame":
        # a unitary P + iQ gives the Lagrangian frame [P; Q]
        Z = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
        U, _ = np.linalg.qr(Z)
        return cls(np.vstack([U.real, U.imag]))

    def orthonormal(self) -> np.ndarray:
        return _qr_pos(self.frame)

    def transformed(self, sigma: np.ndarray) -> "LagrangianFrame":
        return LagrangianFrame(sigma @ self.frame, self.tol)

    def dim_intersection(self, other: "LagrangianFrame", sigma_tol: float = SIGMA_TOL) -> int:
        g = self.orthonormal().T @ J(self.k) @ other.orthonormal()
        return int(np.sum(np.linalg.svd(g, compute_uv=False) < sigma_tol))


def L_D(k: int) -> LagrangianFrame:
    return LagrangianFrame.dirichlet(k)


def L_N(k: int) -> LagrangianFrame:
    return LagrangianFrame.neumann(k)


@dataclass
class _Segment:
    a: float
    b: float
    sol: object = field(repr=False)
    steps: np.ndarray = field(repr=False)
    phi_end: np.ndarray = field(repr=False)


@dataclass
class SymplecticPath:
    """Fundamental solution of ``gamma' = J B(tau) gamma``, ``gamma(tau0) = I``.

    ``gamma(tau) = Phi_j(tau) Phi_{j-1}(b_{j-1}) ... Phi_0(b_0)`` where each
    local factor ``Phi_j`` solves the same equation from the identity on
    its segment ``[a_j, b_j]``.
    """

    k: int
    coeff: Coefficient = field(repr=False)
    segments: list[_Segment] = field(repr=False)
    tol: float
    _frames: dict = field(default_factory=dict, repr=False)

    @property
    def tau0(self) -> float:
        return self.segments[0].a

    @property
    def tau1(self) -> float:
        return self.segments[-1].b

    def _seg(self, tau: float) -> int:
        if tau < self.tau0 - 1e-12 or tau > self.tau1 + 1e-12:
            raise ValueError(f"tau={tau} outside [{self.tau0}, {self.tau1}]")
        starts = [s.a for s in self.segments]
        return max(0, min(len(self.segments) - 1, int(np.searchsorted(starts, tau, side="right")) - 1))

    def local(self, j: int, taus) -> np.ndarray:
        """Local factors Phi_j at the given taus, shape (m, 2k, 2k)."""
        n = 2 * self.k
        seg = self.segments[j]
        taus = np.clip(np.atleast_1d(np.asarray(taus, dtype=float)), seg.a, seg.b)
        return np.moveaxis(seg.sol(taus).reshape(n, n, -1), -1, 0)

    def gamma(self, tau: float) -> np.ndarray:
        j = self._seg(tau)
        g = np.eye(2 * self.k)
        for seg in self.segments[:j]:
            g = seg.phi_end @ g
        phi = self.local(j, tau)[0]
        if symplecticity_defect(phi) > TOL_SYMP / 10:
            phi = symplectic_correction(phi)
        return phi @ g

    @property
    def samples(self) -> list[tuple[float, np.ndarray]]:
        """(tau, gamma) at the segment boundaries."""
        out = [(self.tau0, np.eye(2 * self.k))]
        g = np.eye(2 * self.k)
        for seg in self.segments:
            g = seg.phi_end @ g
            out.append((seg.b, g.copy()))
        return out

    def grid(self, subdiv: int = 8) -> list[np.ndarray]:
        """Per segment: integrator steps refined ``subdiv`` times."""
        out = []
        for seg in self.segments:
            s = seg.steps
            fine = (s[:-1, None] + (s[1:] - s[:-1])[:, None] * np.linspace(0, 1, subdiv, endpoint=False)).ravel()
            out.append(np.append(fine, seg.b))
        return out

    def symplecticity_defect(self, subdiv: int = 2) -> float:
        """Largest defect of the local factors over the sample grid.

        The local factors are what is actually stored; the product ``gamma``
        inherits symplecticity from them up to its own conditioning.
        """
        worst = 0.0
        for j, taus in enumerate(self.grid(subdiv)):
            for phi in self.local(j, taus):
                worst = max(worst, symplecticity_defect(phi))
            worst = max(worst, symplecticity_defect(self.segments[j].phi_end))
        return worst

    def frames_at_segments(self, V: LagrangianFrame) -> list[np.ndarray]:
        """Orthonormal frames of gamma(a_j) V at every segment start."""
        key = V.frame.tobytes()
        if key not in self._frames:
            F = V.orthonormal()
            frames = [F]
            for seg in self.segments[:-1]:
                F = _qr_pos(seg.phi_end @ F)
                frames.append(F)
            self._frames[key] = frames
        return self._frames[key]

    def frame(self, tau: float, V: LagrangianFrame | None = None) -> np.ndarray:
        """Orthonormal frame of gamma(tau) V."""
        V = V or L_D(self.k)
        j = self._seg(tau)
        return _qr_pos(self.local(j, tau)[0] @ self.frames_at_segments(V)[j])


def integrate_linear(
    coeff: Coefficient,
    tau_span: tuple[float, float],
    tol: float = 1e-11,
    max_growth: float = 10.0,
    max_segment: float | None = None,
) -> SymplecticPath:
    """Integrate ``gamma' = J B(tau) gamma`` from the identity.

    Segments are cut so that each local factor grows by at most about
    ``max_growth`` (length ``log(max_growth)/|B|``).  Stored segment
    endpoints are pulled back onto Sp(2k) when their defect exceeds
    ``TOL_SYMP/10``.
    """
    a, b = map(float, tau_span)
    if not b > a:
        raise ValueError("tau_span must be increasing")
    B0 = np.asarray(coeff(a), dtype=float)
    n = B0.shape[0]
    if B0.shape != (n, n) or n % 2:
        raise ValueError("coefficient must be a square matrix of even size")
    k = n // 2
    Jk = J(k)

    def rhs(tau, y):
        return (Jk @ np.asarray(coeff(tau)) @ y.reshape(n, n)).ravel()

    segments = []
    start = a
    eye = np.eye(n).ravel()
    while start < b:
        nb = float(np.linalg.norm(np.asarray(coeff(start)), 2))
        h = math.log(max_growth) / nb if nb > 0 else b - start
        if max_segment is not None:
            h = min(h, max_segment)
        end = b if start + h >= b - 1e-12 * max(1.0, abs(b)) else start + h
        sol = solve_ivp(rhs, (start, end), eye, method="DOP853", rtol=tol, atol=tol, dense_output=True)
        if not sol.success or not np.all(np.isfinite(sol.y)):
            raise IntegratorError(f"linear flow failed on [{start}, {end}]: {sol.message}")
        phi = sol.y[:, -1].reshape(n, n)
        if symplecticity_defect(phi) > TOL_SYMP / 10:
            phi = symplectic_correction(phi)
        segments.append(_Segment(start, end, sol.sol, sol.t, phi))
        start = end
    return SymplecticPath(k, coeff, segments, tol)


@dataclass(frozen=True)
class CrossingEvent:
    tau_c: float
    kernel_dim: int
    form_inertia: tuple[int, int, int]  # (coindex, nullity, index)
    location: str = "interior"  # start | interior | end
    isolated: bool = True
    form: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def signature(self) -> int:
        return self.form_inertia[0] - self.form_inertia[2]

    @property
    def regular(self) -> bool:
        return self.form_inertia[1] == 0 and self.isolated


def inertia(S: np.ndarray, tol: float) -> tuple[int, int, int]:
    """(coindex, nullity, index) of a symmetric matrix with an absolute zero tolerance."""
    if S.size == 0:
        return (0, 0, 0)
    w = np.linalg.eigvalsh(0.5 * (S + S.T))
    return (int(np.sum(w > tol)), int(np.sum(np.abs(w) <= tol)), int(np.sum(w < -tol)))


class _CrossingFunction:
    """Evaluates g(tau) = W^T J F(tau) along a path for a fixed pair (W, V)."""

    def __init__(self, path: SymplecticPath, W: LagrangianFrame, V: LagrangianFrame):
        if W.k != path.k or V.k != path.k:
            raise ValueError("frame dimension does not match the path")
        self.path = path
        self.WJ = W.orthonormal().T @ J(path.k)
        self.F0 = path.frames_at_segments(V)

    def raw(self, j: int, taus) -> np.ndarray:
        return self.WJ @ (self.path.local(j, taus) @ self.F0[j])

    def det(self, j: int, tau: float) -> float:
        return float(np.linalg.det(self.raw(j, tau)[0]))

    def svd(self, tau: float):
        j = self.path._seg(tau)
        Q = _qr_pos(self.path.local(j, tau)[0] @ self.F0[j])
        g = self.WJ @ Q
        _, s, vt = np.linalg.svd(g)
        return Q, s, vt

    def sigma_min(self, tau: float) -> float:
        return float(self.svd(tau)[1][-1]) if self.path.k else 1.0

    def sigmas(self, j: int, taus) -> np.ndarray:
        Q = _qr_pos(self.path.local(j, taus) @ self.F0[j])
        return np.linalg.svd(self.WJ @ Q, compute_uv=False)[:, -1]


def _refine_bracket(cf: _CrossingFunction, j: int, lo: float, hi: float, loc_tol: float, depth: int = 0) -> list[float]:
    f_lo, f_hi = cf.det(j, lo), cf.det(j, hi)
    if hi - lo < 10 * loc_tol:
        return [0.5 * (lo + hi)]
    ts = np.linspace(lo, hi, 9)
    dets = np.linalg.det(cf.raw(j, ts))
    changes = [i for i in range(8) if dets[i] * dets[i + 1] < 0]
    if len(changes) <= 1 or depth > 6:
        if len(changes) > 1:
            raise UnresolvedCrossingError(f"clustered crossings in [{lo}, {hi}]")
        if not changes:
            # both ends share a sign after resampling; the change sits at a sample
            zero = ts[np.argmin(np.abs(dets))]
            return [float(zero)]
        i = changes[0]
        return [float(brentq(lambda t: cf.det(j, t), ts[i], ts[i + 1], xtol=loc_tol / 10, rtol=1e-15))]
    roots = []
    for i in changes:
        if ts[i + 1] - ts[i] < 10 * loc_tol:
            raise UnresolvedCrossingError(f"two sign changes within {ts[i + 1] - ts[i]:.1e} near tau={ts[i]}")
        roots.extend(_refine_bracket(cf, j, ts[i], ts[i + 1], loc_tol, depth + 1))
    return roots


def _scan_window(
    cf: _CrossingFunction,
    lo: float,
    hi: float,
    sigma_tol: float,
    loc_tol: float,
    screen: float,
    depth: int = 0,
    n: int = 17,
) -> list[float]:
    """Roots inside a window around a sampled minimum of the smallest singular value.

    The window is resampled; sign changes of det g are bracketed, and
    remaining minima are either resampled again or, at the last level,
    localized by bounded minimization (even-order crossings).
    """
    path = cf.path
    cuts = [lo] + [sg.a for sg in path.segments if lo < sg.a < hi] + [hi]
    roots: list[float] = []
    for a_, b_ in zip(cuts[:-1], cuts[1:]):
        if b_ - a_ <= 10 * loc_tol:
            continue
        j = path._seg(0.5 * (a_ + b_))
        ts = np.linspace(a_, b_, n)
        dets = np.linalg.det(cf.raw(j, ts))
        sig = cf.sigmas(j, ts)
        change = dets[:-1] * dets[1:] < 0
        for i in np.flatnonzero(change):
            roots.extend(_refine_bracket(cf, j, float(ts[i]), float(ts[i + 1]), loc_tol))
        cand = [i for i in range(1, n - 1)
                if not (change[i - 1] or change[i]) and sig[i] <= sig[i - 1] and sig[i] <= sig[i + 1] and sig[i] < screen]
        # only the deepest minimum is followed; flat stretches of small sigma would otherwise fan out
        for i in sorted(cand, key=lambda i: sig[i])[:1]:
            if depth < 3:
                roots.extend(_scan_window(cf, float(ts[i - 1]), float(ts[i + 1]), sigma_tol, loc_tol, screen, depth + 1, n))
                continue
            res = minimize_scalar(cf.sigma_min, bounds=(float(ts[i - 1]), float(ts[i + 1])), method="bounded",
                                  options={"xatol": loc_tol})
            t = float(res.x) if cf.sigma_min(res.x) <= sig[i] else float(ts[i])
            if cf.sigma_min(t) < sigma_tol:
                roots.append(t)
    return roots


def _event(cf: _CrossingFunction, tau: float, location: str, sigma_tol: float, isolated: bool = True) -> CrossingEvent | None:
    Q, s, vt = cf.svd(tau)
    kdim = int(np.sum(s < sigma_tol))
    if kdim == 0:
        if location != "interior":
            return None
        kdim = 1
    N = vt[-kdim:].T
    v = Q @ N
    B = np.asarray(cf.path.coeff(tau), dtype=float)
    form = v.T @ B @ v
    ftol = 1e-8 * max(1.0, float(np.linalg.norm(B, 2)))
    return CrossingEvent(float(tau), kdim, inertia(form, ftol), location, isolated, 0.5 * (form + form.T))


def detect_crossings(
    path: SymplecticPath,
    W: LagrangianFrame | None = None,
    V: LagrangianFrame | None = None,
    span: tuple[float, float] | None = None,
    sigma_tol: float = SIGMA_TOL,
    loc_tol: float = LOC_TOL,
    subdiv: int = 8,
    screen: float = 0.25,
) -> list[CrossingEvent]:
    """Crossings of ``tau -> gamma(tau) V`` with ``W`` on ``span`` (default: whole path).

    Odd-order crossings are bracketed by sign changes of ``det g`` and
    localized with Brent's method; even-order ones (e.g. two blocks crossing
    together) show up as local minima of the smallest singular value of
    the orthonormalized ``g`` and are localized by bounded minimization.
    The kernel dimension counts singular values below ``sigma_tol``.
    """
    W = W or L_D(path.k)
    V = V or L_D(path.k)
    a, b = span if span is not None else (path.tau0, path.tau1)
    if not (path.tau0 - 1e-12 <= a < b <= path.tau1 + 1e-12):
        raise ValueError("span must lie inside the integrated interval")
    cf = _CrossingFunction(path, W, V)
    events: list[CrossingEvent] = []
    ev_a = _event(cf, a, "start", sigma_tol)
    ev_b = _event(cf, b, "end", sigma_tol)

    taus, dets, sig, segs = [], [], [], []
    for j, ts in enumerate(path.grid(subdiv)):
        seg = path.segments[j]
        if seg.b <= a or seg.a >= b:
            continue
        ts = ts[(ts > a) & (ts < b)]
        ts = np.concatenate([[max(a, seg.a)], ts, [min(b, seg.b)]])
        g = cf.raw(j, ts)
        Q = _qr_pos(path.local(j, ts) @ cf.F0[j])
        s = np.linalg.svd(cf.WJ @ Q, compute_uv=False)
        taus.append(ts)
        dets.append(np.linalg.det(g))
        sig.append(s[:, -1])
        segs.append(np.full(ts.size, j))
    taus, dets, sig, segs = map(np.concatenate, (taus, dets, sig, segs))
    interior = (taus > a) & (taus < b)
    zero = sig < sigma_tol

    # runs of vanishing g at consecutive samples: crossing is not isolated
    found: list[tuple[float, bool]] = []
    run = []
    for i in range(taus.size):
        if interior[i] and zero[i]:
            run.append(i)
            continue
        if len(run) >= 2 and taus[run[-1]] - taus[run[0]] > 10 * loc_tol:
            found.append((float(taus[run[len(run) // 2]]), False))
        run = []

    roots: list[float] = []
    for i in range(taus.size - 1):
        if segs[i] != segs[i + 1] or zero[i] or zero[i + 1]:
            continue
        if dets[i] * dets[i + 1] < 0:
            roots.extend(_refine_bracket(cf, int(segs[i]), float(taus[i]), float(taus[i + 1]), loc_tol))
    for i in range(1, taus.size - 1):
        if not interior[i]:
            continue
        if zero[i] and (zero[i - 1] or zero[i + 1]):
            continue  # part of a non-isolated run
        if sig[i] <= sig[i - 1] and sig[i] <= sig[i + 1] and sig[i] < screen:
            lo, hi = float(taus[i - 1]), float(taus[i + 1])
            if hi - lo > 0:
                # may hold a crossing pair or an even-order crossing; bracketed roots reappear and are merged
                roots.extend(_scan_window(cf, lo, hi, sigma_tol, loc_tol, screen))

    roots.sort()
    merged: list[float] = []
    for t in roots:
        if merged and t - merged[-1] < 1e-7:
            if cf.sigma_min(t) < cf.sigma_min(merged[-1]):
                merged[-1] = t
            continue
        merged.append(t)
    end_tol = max(1e-9, 10 * loc_tol)
    nonisolated = [t for t, _ in found]
    if ev_a is not None:
        events.append(ev_a)
    for t in merged:
        if ev_a is not None and t - a < end_tol:
            continue
        if ev_b is not None and b - t < end_tol:
            continue
        if any(abs(t - u) < 1e-6 for u in nonisolated):
            continue
        events.append(_event(cf, t, "interior", sigma_tol))
    for t in nonisolated:
        events.append(_event(cf, t, "interior", sigma_tol, isolated=False))
    if ev_b is not None:
        events.append(ev_b)
    events.sort(key=lambda e: (e.tau_c, {"start": 0, "interior": 1, "end": 2}[e.location]))
    return events


def crossing_form(
    path: SymplecticPath,
    W: LagrangianFrame | None,
    tau_c: float,
    V: LagrangianFrame | None = None,
    sigma_tol: float = SIGMA_TOL,
) -> tuple[np.ndarray, tuple[int, int, int]]:
    """Crossing form <B v, v> on gamma(tau_c) V intersected with W, and its inertia."""
    cf = _CrossingFunction(path, W or L_D(path.k), V or L_D(path.k))
    ev = _event(cf, tau_c, "start", sigma_tol)
    if ev is None:
        raise ValueError(f"tau={tau_c} is not a crossing instant")
    if ev.form_inertia[1]:
        raise DegenerateCrossingError(f"crossing form at tau={tau_c} is degenerate", ev)
    return ev.form, ev.form_inertia


@dataclass(frozen=True)
class MaslovResult:
    mu: int
    degenerate: bool
    plus_count: int
    is_plus_curve: bool
    events: tuple[CrossingEvent, ...]
    span: tuple[float, float]

    def to_json(self) -> dict:
        return {
            "span": [float(self.span[0]), float(self.span[1])],
            "mu": self.mu,
            "degenerate": self.degenerate,
            "plus_count": self.plus_count,
            "crossings": [
                {
                    "tau_c": e.tau_c,
                    "location": e.location,
                    "kernel_dim": e.kernel_dim,
                    "coindex": e.form_inertia[0],
                    "nullity": e.form_inertia[1],
                    "index": e.form_inertia[2],
                    "isolated": e.isolated,
                }
                for e in self.events
            ],
        }


def maslov_report(
    path: SymplecticPath,
    W: LagrangianFrame | None = None,
    V: LagrangianFrame | None = None,
    span: tuple[float, float] | None = None,
    **kw,
) -> MaslovResult:
    """Maslov index mu(W, gamma V) on ``span`` from the crossing forms.

    coindex at the start + signatures inside - index at the end.  Degenerate
    or non-isolated crossings do not raise here; they set ``degenerate``.
    """
    events = detect_crossings(path, W, V, span, **kw)
    a, b = span if span is not None else (path.tau0, path.tau1)
    return _summarize(events, (a, b))


def _summarize(events: Sequence[CrossingEvent], span: tuple[float, float]) -> MaslovResult:
    mu, plus = 0, 0
    for e in events:
        co, _, idx = e.form_inertia
        if e.location == "start":
            mu += co
            plus += e.kernel_dim
        elif e.location == "interior":
            mu += co - idx
            plus += e.kernel_dim
        else:
            mu -= idx
    return MaslovResult(
        mu=int(mu),
        degenerate=any(not e.regular for e in events),
        plus_count=int(plus),
        is_plus_curve=all(e.form_inertia == (e.kernel_dim, 0, 0) for e in events),
        events=tuple(events),
        span=(float(span[0]), float(span[1])),
    )


def maslov_profile(
    path: SymplecticPath,
    horizons: Sequence[float],
    W: LagrangianFrame | None = None,
    V: LagrangianFrame | None = None,
    sigma_tol: float = SIGMA_TOL,
    loc_tol: float = LOC_TOL,
    **kw,
) -> list[MaslovResult]:
    """Maslov indices on ``[tau0, T]`` for several horizons from one crossing scan."""
    W = W or L_D(path.k)
    V = V or L_D(path.k)
    horizons = [float(T) for T in horizons]
    if not horizons or any(T <= path.tau0 for T in horizons):
        raise ValueError("horizons must lie after the start of the path")
    full = detect_crossings(path, W, V, (path.tau0, max(horizons)), sigma_tol, loc_tol, **kw)
    cf = _CrossingFunction(path, W, V)
    end_tol = max(1e-9, 10 * loc_tol)
    out = []
    for T in horizons:
        ev_end = _event(cf, T, "end", sigma_tol)
        limit = T - end_tol if ev_end is not None else T
        events = [e for e in full if e.location == "start" or (e.location == "interior" and e.tau_c < limit)]
        if ev_end is not None:
            events.append(ev_end)
        out.append(_summarize(events, (path.tau0, T)))
    return out


def maslov_index(
    path: SymplecticPath,
    W: LagrangianFrame | None = None,
    V: LagrangianFrame | None = None,
    span: tuple[float, float] | None = None,
    strict: bool = True,
    **kw,
) -> int:
    """Integer Maslov index; raises DegenerateCrossingError in strict mode."""
    res = maslov_report(path, W, V, span, **kw)
    if strict and res.degenerate:
        bad = next(e for e in res.events if not e.regular)
        raise DegenerateCrossingError(f"non-regular crossing at tau={bad.tau_c}", bad)
    return res.mu


def plus_curve_index(path: SymplecticPath, W=None, V=None, span=None, **kw) -> int:
    """dim at the start plus interior intersection dimensions."""
    return maslov_report(path, W, V, span, **kw).plus_count


def symplectic_sum(*mats: np.ndarray) -> np.ndarray:
    """Block-interleaving sum: A, B, C, D quadrants are block-diagonal over the summands."""
    if not mats:
        raise ValueError("need at least one matrix")
    quads = {"A": [], "B": [], "C": [], "D": []}
    for O in mats:
        O = np.asarray(O, dtype=float)
        m = O.shape[0] // 2
        if O.shape != (2 * m, 2 * m):
            raise ValueError(f"summand must be 2m x 2m, got {O.shape}")
        quads["A"].append(O[:m, :m])
        quads["B"].append(O[:m, m:])
        quads["C"].append(O[m:, :m])
        quads["D"].append(O[m:, m:])
    bd = {key: _block_diag(v) for key, v in quads.items()}
    return np.block([[bd["A"], bd["B"]], [bd["C"], bd["D"]]])


def _block_diag(blocks: Sequence[np.ndarray]) -> np.ndarray:
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    i = j = 0
    for blk in blocks:
        out[i : i + blk.shape[0], j : j + blk.shape[1]] = blk
        i += blk.shape[0]
        j += blk.shape[1]
    return out


def frame_sum(*frames: LagrangianFrame) -> LagrangianFrame:
    """[X1; Y1] and [X2; Y2] combined to [[X1, 0], [0, X2], [Y1, 0], [0, Y2]]."""
    X = _block_diag([f.frame[: f.k] for f in frames])
    Y = _block_diag([f.frame[f.k :] for f in frames])
    return LagrangianFrame(np.vstack([X, Y]))


def sum_coefficients(*coeffs: Coefficient) -> Coefficient:
    return lambda tau: symplectic_sum(*(c(tau) for c in coeffs))


def conjugate_coefficient(coeff: Coefficient, R: Callable[[float], np.ndarray], dR: Callable[[float], np.ndarray]) -> Coefficient:
    """Coefficient of w = R zeta: -J R' R^{-1} + R^{-T} B R^{-1} (R symplectic)."""

    def out(tau):
        Rt = np.asarray(R(tau), dtype=float)
        Ri = np.linalg.inv(Rt)
        k = Rt.shape[0] // 2
        return -J(k) @ np.asarray(dR(tau)) @ Ri + Ri.T @ np.asarray(coeff(tau)) @ Ri

    return out


def random_symplectic(k: int, rng: np.random.Generator, scale: float = 0.5) -> np.ndarray:
    S = rng.normal(scale=scale, size=(2 * k, 2 * k))
    return expm(J(k) @ (S + S.T) / 2)


def write_crossings_csv(events: Sequence[CrossingEvent], filename) -> None:
    with open(filename, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["tau_c", "kernel_dim", "coindex", "nullity", "index"])
        for e in events:
            w.writerow([f"{e.tau_c:.16e}", e.kernel_dim, *e.form_inertia])


def write_maslov_json(result: MaslovResult, filename) -> None:
    with open(filename, "w", encoding="utf-8") as fh:
        json.dump(result.to_json(), fh, indent=2, sort_keys=True)
