"""Masses, configurations, the Newtonian potential and the inertia-ellipsoid chart.

Configurations are ``(n_bodies, dim_d)`` arrays; whenever linear algebra is
needed they are flattened row-major to vectors of length ``n_bodies * dim_d``
and the mass matrix acts as the diagonal ``mass_vector``.
"""

from __future__ import annotations

import functools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ChartDomainError, CollisionError, NotNormalizedError

TOL_DIST = 1e-12
TOL_CM = 1e-10


@dataclass(frozen=True)
class MassSystem:
    """Point masses moving in ``R^dim_d``."""

    masses: tuple[float, ...]
    dim_d: int

    def __post_init__(self):
        masses = tuple(float(m) for m in self.masses)
        object.__setattr__(self, "masses", masses)
        if len(masses) < 2:
            raise ValueError("need at least two bodies")
        if any(not np.isfinite(m) or m <= 0.0 for m in masses):
            raise ValueError(f"masses must be finite and positive, got {masses}")
        if int(self.dim_d) != self.dim_d or self.dim_d < 1:
            raise ValueError(f"dim_d must be a positive integer, got {self.dim_d}")
        object.__setattr__(self, "dim_d", int(self.dim_d))

    @property
    def n_bodies(self) -> int:
        return len(self.masses)

    @property
    def n_star(self) -> int:
        """Dimension of the centred configuration space, d(n-1)."""
        return self.dim_d * (self.n_bodies - 1)

    @property
    def size(self) -> int:
        return self.dim_d * self.n_bodies

    @property
    def mass_vector(self) -> np.ndarray:
        """Diagonal of the block mass matrix M (length n*d)."""
        return np.repeat(np.asarray(self.masses), self.dim_d)

    @property
    def mass_matrix(self) -> np.ndarray:
        return np.diag(self.mass_vector)

    def as_coords(self, q) -> np.ndarray:
        """Return ``q`` as a float ``(n, d)`` array (accepts flat input too)."""
        if isinstance(q, Configuration):
            q = q.coords
        arr = np.asarray(q, dtype=float)
        if arr.size != self.size:
            raise ValueError(
                f"configuration has {arr.size} entries, expected {self.n_bodies}x{self.dim_d}"
            )
        return arr.reshape(self.n_bodies, self.dim_d)


@dataclass(frozen=True)
class Configuration:
    """A configuration together with the mass system it belongs to."""

    coords: np.ndarray
    owner: MassSystem

    def __post_init__(self):
        coords = self.owner.as_coords(self.coords).copy()
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    @property
    def flat(self) -> np.ndarray:
        return self.coords.ravel()

    def is_centered(self, tol: float = TOL_CM) -> bool:
        return float(np.linalg.norm(center_of_mass(self.owner, self.coords))) <= tol

    def is_collision_free(self, tol: float = TOL_DIST) -> bool:
        return min_pair_distance(self.owner, self.coords) > tol


@functools.lru_cache(maxsize=None)
def _pairs(n: int):
    i, j = np.triu_indices(n, k=1)
    i.flags.writeable = False
    j.flags.writeable = False
    return i, j


def pair_distances(sys: MassSystem, q) -> np.ndarray:
    q = sys.as_coords(q)
    i, j = _pairs(sys.n_bodies)
    return np.linalg.norm(q[i] - q[j], axis=1)


def min_pair_distance(sys: MassSystem, q) -> float:
    return float(np.min(pair_distances(sys, q)))


def _checked_pairs(sys: MassSystem, q, tol: float = TOL_DIST):
    q = sys.as_coords(q)
    i, j = _pairs(sys.n_bodies)
    diff = q[i] - q[j]
    dist = np.linalg.norm(diff, axis=1)
    if np.any(dist <= tol):
        k = int(np.argmin(dist))
        raise CollisionError(
            f"bodies {i[k]} and {j[k]} are at distance {dist[k]:.3e} (collision set)"
        )
    m = np.asarray(sys.masses)
    return q, i, j, diff, dist, m[i] * m[j]


def potential(sys: MassSystem, q) -> float:
    """Newtonian potential sum_{i<j} m_i m_j / |q_i - q_j| (positive sign)."""
    _, _, _, _, dist, mm = _checked_pairs(sys, q)
    return float(np.sum(mm / dist))


def grad_potential(sys: MassSystem, q) -> np.ndarray:
    """Euclidean gradient of :func:`potential`, shaped like the configuration."""
    q, i, j, diff, dist, mm = _checked_pairs(sys, q)
    f = -(mm / dist**3)[:, None] * diff  # dU/dq_i for each pair
    g = np.zeros_like(q)
    np.add.at(g, i, f)
    np.add.at(g, j, -f)
    return g


def hess_potential(sys: MassSystem, q) -> np.ndarray:
    """Euclidean Hessian of :func:`potential` as an ``(n*d, n*d)`` matrix."""
    q, i, j, diff, dist, mm = _checked_pairs(sys, q)
    d = sys.dim_d
    outer = diff[:, :, None] * diff[:, None, :]
    eye = np.eye(d)
    blocks = mm[:, None, None] * (
        3.0 * outer / dist[:, None, None] ** 5 - eye / dist[:, None, None] ** 3
    )
    H = np.zeros((sys.n_bodies, d, sys.n_bodies, d))
    for k, (a, c) in enumerate(zip(i, j)):
        H[a, :, a, :] += blocks[k]
        H[c, :, c, :] += blocks[k]
        H[a, :, c, :] -= blocks[k]
        H[c, :, a, :] -= blocks[k]
    H = H.reshape(sys.size, sys.size)
    return 0.5 * (H + H.T)


def moment_of_inertia(sys: MassSystem, q) -> float:
    """I(q) = <M q, q>."""
    x = sys.as_coords(q).ravel()
    return float(np.dot(sys.mass_vector * x, x))


def center_of_mass(sys: MassSystem, q) -> np.ndarray:
    q = sys.as_coords(q)
    m = np.asarray(sys.masses)
    return (m[:, None] * q).sum(axis=0) / m.sum()


def center(sys: MassSystem, q) -> np.ndarray:
    """Translate ``q`` so that its center of mass sits at the origin."""
    q = sys.as_coords(q)
    return q - center_of_mass(sys, q)[None, :]


def normalize(sys: MassSystem, q) -> np.ndarray:
    """Center ``q`` and rescale it onto the inertia ellipsoid I = 1."""
    q = center(sys, q)
    inertia = moment_of_inertia(sys, q)
    if inertia <= TOL_DIST**2:
        raise CollisionError("cannot normalize the total-collision configuration")
    return q / np.sqrt(inertia)


def check_normalized(sys: MassSystem, q, tol: float = TOL_CM) -> np.ndarray:
    q = sys.as_coords(q)
    if np.linalg.norm(center_of_mass(sys, q)) > tol:
        raise NotNormalizedError("configuration is not centred at the origin")
    if abs(moment_of_inertia(sys, q) - 1.0) > tol:
        raise NotNormalizedError(
            f"moment of inertia is {moment_of_inertia(sys, q)!r}, expected 1"
        )
    return q


def m_gram_schmidt(
    sys: MassSystem, seeds: np.ndarray, against: Sequence[np.ndarray] = (), drop_tol: float = 1e-8
) -> np.ndarray:
    """Gram-Schmidt in the mass inner product.

    Columns of ``seeds`` are orthonormalized (twice, for stability) against
    the already M-orthonormal vectors in ``against`` and against each other;
    seeds whose remaining M-norm falls below ``drop_tol`` are skipped.
    """
    mv = sys.mass_vector
    basis = [np.asarray(a, dtype=float) for a in against]
    n_fixed = len(basis)
    for col in np.asarray(seeds, dtype=float).T:
        w = col.copy()
        for _ in range(2):
            for b in basis:
                w -= np.dot(mv * b, w) * b
        norm = np.sqrt(np.dot(mv * w, w))
        if norm > drop_tol:
            basis.append(w / norm)
    out = basis[n_fixed:]
    if not out:
        return np.zeros((sys.size, 0))
    return np.column_stack(out)


def translation_directions(sys: MassSystem) -> list[np.ndarray]:
    """M-orthonormal basis of the rigid translations (the M-complement of X)."""
    mv = sys.mass_vector
    total = float(np.sum(sys.masses))
    out = []
    for k in range(sys.dim_d):
        t = np.zeros((sys.n_bodies, sys.dim_d))
        t[:, k] = 1.0
        t = t.ravel()
        out.append(t / np.sqrt(total))
        assert abs(np.dot(mv * out[-1], out[-1]) - 1.0) < 1e-12
    return out


def mass_orthonormal_basis(sys: MassSystem, exclude: Sequence[np.ndarray] = ()) -> np.ndarray:
    """Deterministic M-orthonormal basis of X, optionally M-orthogonal to ``exclude``.

    ``exclude`` vectors must already lie in X and be M-orthonormal.  The seed
    basis is the standard basis of ``R^{n d}``.
    """
    seeds = np.eye(sys.size)
    fixed = translation_directions(sys) + [np.asarray(e, dtype=float).ravel() for e in exclude]
    basis = m_gram_schmidt(sys, seeds, against=fixed)
    expected = sys.n_star - len(exclude)
    if basis.shape[1] != expected:
        raise RuntimeError(f"basis construction produced {basis.shape[1]} vectors, expected {expected}")
    return basis


@dataclass(frozen=True)
class EllipsoidChart:
    """Normalized-affine chart of the inertia ellipsoid around ``base_point``.

    ``inverse(x) = (s0 + E x) / |s0 + E x|_M`` with ``E`` M-orthonormal and
    M-orthogonal to ``s0``; hence ``|s0 + E x|_M^2 = 1 + |x|^2`` and the chart
    metric is the identity at ``x = 0``.
    """

    system: MassSystem
    base_point: np.ndarray
    tangent_basis: np.ndarray
    chart_radius: float = 10.0
    _mv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        s0 = self.system.as_coords(self.base_point).ravel().copy()
        E = np.asarray(self.tangent_basis, dtype=float).reshape(self.system.size, -1).copy()
        mv = self.system.mass_vector
        if E.shape[1] != self.system.n_star - 1:
            raise ValueError(f"need {self.system.n_star - 1} tangent vectors, got {E.shape[1]}")
        check_normalized(self.system, s0)
        gram = E.T @ (mv[:, None] * E)
        if E.shape[1] and (
            np.max(np.abs(gram - np.eye(E.shape[1]))) > 1e-10 or np.max(np.abs(E.T @ (mv * s0))) > 1e-10
        ):
            raise ValueError("tangent basis is not M-orthonormal and M-orthogonal to the base point")
        s0.setflags(write=False)
        E.setflags(write=False)
        object.__setattr__(self, "base_point", s0)
        object.__setattr__(self, "tangent_basis", E)
        object.__setattr__(self, "_mv", mv)

    @property
    def dim(self) -> int:
        return self.tangent_basis.shape[1]

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(self.dim)
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) >= self.chart_radius:
            raise ChartDomainError(f"|x| = {np.linalg.norm(x):.3g} outside chart radius {self.chart_radius}")
        return x

    def _lift(self, x):
        y = self.base_point + self.tangent_basis @ x
        rho2 = float(np.dot(self._mv * y, y))
        if rho2 <= 1e-24:
            raise ChartDomainError("chart denominator vanishes")
        return y, np.sqrt(rho2)

    def inverse(self, x) -> np.ndarray:
        """psi^{-1}(x) as a flat configuration on the ellipsoid."""
        y, rho = self._lift(self._check(x))
        return y / rho

    def jacobian(self, x) -> np.ndarray:
        """d psi^{-1}/dx, shape ``(n*d, n*-1)``."""
        x = self._check(x)
        y, rho = self._lift(x)
        w = self.tangent_basis.T @ (self._mv * y)
        return self.tangent_basis / rho - np.outer(y, w) / rho**3

    def metric(self, x) -> np.ndarray:
        D = self.jacobian(x)
        G = D.T @ (self._mv[:, None] * D)
        return 0.5 * (G + G.T)

    def metric_inv(self, x) -> np.ndarray:
        """Closed form of the inverse chart metric: (1 + |x|^2)(I + x x^T)."""
        x = self._check(x)
        return (1.0 + x @ x) * (np.eye(self.dim) + np.outer(x, x))

    def potential(self, x) -> float:
        return potential(self.system, self.inverse(x))

    def grad_potential(self, x) -> np.ndarray:
        s = self.inverse(x)
        return self.jacobian(x).T @ grad_potential(self.system, s).ravel()

    def hess_potential(self, x) -> np.ndarray:
        """Chart Hessian of U o psi^{-1} (chain rule with the curvature term)."""
        x = self._check(x)
        y, rho = self._lift(x)
        s = y / rho
        E = self.tangent_basis
        D = self.jacobian(x)
        g = grad_potential(self.system, s).ravel()
        H = hess_potential(self.system, s)
        w = E.T @ (self._mv * y)
        drho = w / rho
        d2rho = (E.T @ (self._mv[:, None] * E)) / rho - np.outer(w, w) / rho**3
        G = E.T @ g
        gy = float(g @ y)
        curv = (
            -(np.outer(G, drho) + np.outer(drho, G)) / rho**2
            - gy * d2rho / rho**2
            + 2.0 * gy * np.outer(drho, drho) / rho**3
        )
        out = D.T @ H @ D + curv
        return 0.5 * (out + out.T)


def make_chart(sys: MassSystem, s0, chart_radius: float = 10.0) -> EllipsoidChart:
    """Chart at ``s0`` with the deterministic Gram-Schmidt tangent basis."""
    s0 = check_normalized(sys, s0).ravel()
    E = mass_orthonormal_basis(sys, exclude=[s0])
    return EllipsoidChart(sys, s0, E, chart_radius=chart_radius)


def chart_metric(chart: EllipsoidChart, x) -> np.ndarray:
    """M-hat(x) = (d psi^{-1}/dx)^T M (d psi^{-1}/dx)."""
    return chart.metric(x)


def load_system(path) -> MassSystem:
    """Read ``masses`` and ``dim`` from a JSON or TOML file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        data = json.loads(text)
    else:
        data = _loads_toml(text)
    if "system" in data and isinstance(data["system"], dict):
        data = data["system"]
    try:
        masses = data["masses"]
        dim = data.get("dim", data.get("dim_d"))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: missing 'masses'") from exc
    if dim is None:
        raise ValueError(f"{path}: missing 'dim'")
    if not isinstance(masses, list) or not all(isinstance(m, (int, float)) for m in masses):
        raise ValueError(f"{path}: 'masses' must be a list of numbers")
    return MassSystem(tuple(masses), int(dim))


def _loads_toml(text: str) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    return tomllib.loads(text)


def configuration_to_record(q) -> dict:
    """Flat row-major serialization with an explicit ``(n, d)`` header."""
    arr = np.asarray(q.coords if isinstance(q, Configuration) else q, dtype=float)
    if arr.ndim != 2:
        raise ValueError("expected an (n, d) array")
    return {"n": int(arr.shape[0]), "d": int(arr.shape[1]), "coords": [float(v) for v in arr.ravel()]}


def configuration_from_record(rec: dict) -> np.ndarray:
    n, d = int(rec["n"]), int(rec["d"])
    coords = np.asarray(rec["coords"], dtype=float)
    if coords.size != n * d:
        raise ValueError(f"coords has {coords.size} entries, header says {n}x{d}")
    return coords.reshape(n, d)
