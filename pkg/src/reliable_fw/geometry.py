"""Polytope representation and the geometric quantities the safety analysis uses.

A polytope is stored as ``{x : A x - b <= 0}``.  Everything here is a pure
function of an immutable :class:`Polytope`.
"""
import json
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import kernels

FEAS_TOL = 1e-9
DEDUP_TOL = 1e-9
ACTIVE_TOL = 1e-9
ENUM_CAP = 10 ** 6
RANK_TOL = 1e-12


class GeometryError(ValueError):
    """Raised for empty, unbounded or otherwise unusable polytopes."""


@dataclass(frozen=True, eq=False)
class Polytope:
    """The set ``{x : A x - b <= 0}``.

    Parameters
    ----------
    A : array_like, shape (m, d)
        Constraint normals, one per row.
    b : array_like, shape (m,)
        Offsets.
    names : sequence of str, optional
        Row labels, carried through serialisation.
    """

    A: np.ndarray
    b: np.ndarray
    names: tuple = field(default=None)

    def __post_init__(self):
        A = np.array(self.A, dtype=float, ndmin=2)
        b = np.array(self.b, dtype=float).reshape(-1)
        if A.shape[0] < 1 or A.shape[1] < 1:
            raise GeometryError("polytope needs m >= 1 and d >= 1")
        if b.shape[0] != A.shape[0]:
            raise GeometryError(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise GeometryError("non-finite entries in A or b")
        if np.any(np.all(A == 0.0, axis=1)):
            raise GeometryError("all-zero constraint row")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        if self.names is not None:
            names = tuple(str(n) for n in self.names)
            if len(names) != A.shape[0]:
                raise GeometryError("names must have one entry per row")
            object.__setattr__(self, "names", names)

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def d(self):
        return self.A.shape[1]

    @property
    def row_norms(self):
        return np.linalg.norm(self.A, axis=1)

    def residuals(self, x):
        return residuals(self, x)

    def contains(self, x, tol=FEAS_TOL):
        return bool(np.all(residuals(self, x) >= -tol))

    def intersect(self, other):
        """Stack the rows of two polytopes in the same dimension."""
        if other.d != self.d:
            raise GeometryError("dimension mismatch in intersect")
        names = None
        if self.names is not None and other.names is not None:
            names = self.names + other.names
        return Polytope(np.vstack([self.A, other.A]), np.concatenate([self.b, other.b]), names)

    def to_dict(self):
        out = {"A": self.A.tolist(), "b": self.b.tolist()}
        if self.names is not None:
            out["names"] = list(self.names)
        return out

    @classmethod
    def from_dict(cls, data):
        return cls(np.array(data["A"], dtype=float), np.array(data["b"], dtype=float), data.get("names"))

    def to_json(self):
        # json writes floats with repr(), which round-trips exactly
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        if not isinstance(other, Polytope):
            return NotImplemented
        return (self.A.shape == other.A.shape and np.array_equal(self.A, other.A)
                and np.array_equal(self.b, other.b) and self.names == other.names)

    def __hash__(self):
        return hash((self.A.tobytes(), self.b.tobytes(), self.names))

    def __repr__(self):
        return f"Polytope(m={self.m}, d={self.d})"


def box(lower, upper):
    """Axis-aligned box ``lower <= x <= upper`` with unit-norm rows."""
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    d = lower.shape[0]
    eye = np.eye(d)
    return Polytope(np.vstack([eye, -eye]), np.concatenate([upper, -lower]))


def _point(P, x):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != P.d:
        raise GeometryError(f"point has dimension {x.shape[0]}, polytope has d={P.d}")
    return x


def residuals(P, x):
    """``b_i - <a_i, x>`` for every row; nonnegative entries mean feasible."""
    return P.b - P.A @ _point(P, x)


def shrink(P, tau):
    """The tau-shrunk polytope ``{x : A x - b + tau <= 0}`` (possibly empty)."""
    if tau < 0:
        raise GeometryError("shrinkage must be nonnegative")
    if tau == 0:
        return P
    return Polytope(P.A, P.b - tau, P.names)


def is_empty(P):
    """Phase-one feasibility test."""
    return not kernels.phase_one_feasible(P.A, P.b)


def project(P, x):
    """Euclidean projection onto ``P`` (exhaustive active-set search)."""
    x = _point(P, x)
    if is_empty(P):
        raise GeometryError("projection onto an empty polytope")
    return kernels.project(P.A, P.b, x)


def enumerate_vertices(P, cap=ENUM_CAP, tol=FEAS_TOL):
    """Feasible vertices, deduplicated and sorted lexicographically."""
    if math.comb(P.m, P.d) > cap:
        raise GeometryError(f"C({P.m},{P.d}) exceeds the enumeration cap {cap}")
    return kernels.enumerate_vertices(P.A, P.b, tol=tol, cap=cap)


def is_bounded(P):
    """True when ``P`` is nonempty and ``A`` has a trivial recession cone.

    Bounded iff ``max <u, x>`` is finite for ``u = +-e_j``, checked by LP.
    """
    for j in range(P.d):
        for s in (1.0, -1.0):
            c = np.zeros(P.d)
            c[j] = s
            status, _ = kernels.lp_min(P.A, P.b, c)
            if status != kernels.LP_OPTIMAL:
                return False
    return True


@dataclass(frozen=True)
class ActivePoint:
    point: np.ndarray
    rows: tuple
    sigma_min: float
    feasible: bool


@dataclass(frozen=True)
class GeometrySummary:
    """Size and conditioning constants of a bounded polytope.

    ``diameter`` is the largest vertex-to-vertex distance and ``radius`` the
    largest vertex norm.  ``rho_min`` is the smallest singular value over all
    square submatrices of independent rows (active points, feasible or not),
    and ``alpha = sqrt(d) / rho_min``.
    """

    diameter: float
    radius: float
    rho_min: float
    alpha: float
    L_A_raw: float
    vertices: np.ndarray
    active_points: tuple


def active_points(P, cap=ENUM_CAP):
    """Every intersection of ``d`` linearly independent constraint boundaries."""
    d = P.d
    if math.comb(P.m, d) > cap:
        raise GeometryError(f"C({P.m},{d}) exceeds the enumeration cap {cap}")
    combos = np.array(list(combinations(range(P.m), d)), dtype=np.intp)
    sub = P.A[combos]
    sv = np.linalg.svd(sub, compute_uv=False)
    ok = sv[:, -1] > RANK_TOL * sv[:, 0]
    out = []
    if not np.any(ok):
        return tuple(out)
    pts = np.linalg.solve(sub[ok], P.b[combos[ok]][:, :, None])[:, :, 0]
    for rows, p, s in zip(combos[ok], pts, sv[ok, -1]):
        r = residuals(P, p) / P.row_norms
        scale = max(1.0, float(np.max(np.abs(p))))
        out.append(ActivePoint(p, tuple(int(i) for i in rows), float(s),
                               bool(np.all(r >= -ACTIVE_TOL * scale))))
    return tuple(out)


def geometry_summary(P, cap=ENUM_CAP):
    if is_empty(P):
        raise GeometryError("empty polytope")
    if not is_bounded(P):
        raise GeometryError("geometry_summary needs a bounded polytope")
    V = enumerate_vertices(P, cap=cap)
    diffs = V[:, None, :] - V[None, :, :]
    diameter = float(np.sqrt(np.max(np.einsum("ijk,ijk->ij", diffs, diffs))))
    radius = float(np.max(np.linalg.norm(V, axis=1)))
    acts = active_points(P, cap=cap)
    rho = min(a.sigma_min for a in acts)
    if rho <= 0:
        raise GeometryError("degenerate polytope: rho_min = 0")
    return GeometrySummary(
        diameter=diameter,
        radius=radius,
        rho_min=rho,
        alpha=math.sqrt(P.d) / rho,
        L_A_raw=float(np.max(P.row_norms)),
        vertices=V,
        active_points=acts,
    )


def normalize(P, sigma, geom=None):
    """Rescale rows so the largest row norm is ``1 / (2 alpha)``.

    Returns the rescaled polytope and the noise level in the new units.  The
    feasible set is unchanged.  ``alpha`` is taken from ``P`` itself.
    """
    geom = geometry_summary(P) if geom is None else geom
    if geom.L_A_raw <= 0:
        raise GeometryError("zero constraint matrix")
    s = 1.0 / (2.0 * geom.alpha * geom.L_A_raw)
    if s == 1.0:
        return P, float(sigma)
    return Polytope(P.A * s, P.b * s, P.names), float(sigma) * s


def spectral_norm(M):
    """Largest singular value."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return float(np.linalg.svd(M, compute_uv=False)[0])


def chebyshev_center(P):
    """Centre and radius of the largest inscribed ball (LP)."""
    norms = P.row_norms
    A = np.hstack([P.A, norms[:, None]])
    c = np.zeros(P.d + 1)
    c[-1] = -1.0
    # keep the radius nonnegative
    cap = np.zeros((1, P.d + 1))
    cap[0, -1] = -1.0
    status, z = kernels.lp_min(np.vstack([A, cap]), np.concatenate([P.b, [0.0]]), c)
    if status != kernels.LP_OPTIMAL:
        raise GeometryError("no inscribed ball (empty or unbounded polytope)")
    return z[:-1], float(z[-1])
