"""Simulated oracles and the registry of test problems.

The noisy feasibility oracle (NFO) returns ``A x - b + noise`` for the hidden
polytope; the stochastic first-order oracle (SFO) returns ``grad f(x) +
eps(xi)`` where the noise depends only on an explicit sample token ``xi``.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import geometry
from .geometry import Polytope

logger = logging.getLogger(__name__)


class VicinityError(RuntimeError):
    """A query point lies farther than ``r0`` from the true polytope."""

    def __init__(self, point, distance, r0):
        super().__init__(f"NFO query at distance {distance:.3e} > r0={r0:g} from the feasible set")
        self.point = np.asarray(point)
        self.distance = float(distance)
        self.r0 = float(r0)


class StaleTokenError(RuntimeError):
    """A sample token was evaluated more often than allowed, or is foreign."""


@dataclass(frozen=True)
class Objective:
    """Smooth objective with the constants the theory needs.

    ``L`` bounds the Lipschitz constant of the gradient on the feasible set and
    ``M`` bounds the gradient norm there.
    """

    value: Callable
    gradient: Callable
    L: float
    M: float
    is_convex: bool
    name: str = "objective"

    def __call__(self, x):
        return self.value(x)


@dataclass(frozen=True)
class Problem:
    name: str
    objective: Objective
    polytope: Polytope
    x0: np.ndarray
    fstar: Optional[float] = None
    xstar: Optional[np.ndarray] = None
    fstar_exact: bool = False

    @property
    def f_gap0(self):
        if self.fstar is None:
            return None
        return float(self.objective.value(self.x0) - self.fstar)


# --------------------------------------------------------------------------
# noisy feasibility oracle
# --------------------------------------------------------------------------

class NoisyFeasibilityOracle:
    """Returns ``y = A x - b + theta`` with i.i.d. Gaussian ``theta``.

    Parameters
    ----------
    polytope : Polytope
        The hidden (normalised) polytope.
    sigma : float
        Noise standard deviation in the units of ``polytope``.
    rng : numpy.random.Generator
    strict_vicinity : bool
        When set, every query point must lie within ``r0`` of the polytope;
        violations raise :class:`VicinityError`.
    r0 : float
        Exceeding margin for the vicinity guard.
    record : bool
        Keep every answered query for later export.
    """

    def __init__(self, polytope, sigma, rng=None, strict_vicinity=False, r0=None, record=False):
        if sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if strict_vicinity and (r0 is None or r0 <= 0):
            raise ValueError("strict vicinity guard needs r0 > 0")
        self._P = polytope
        self.sigma = float(sigma)
        self.rng = rng if rng is not None else np.random.default_rng()
        self.strict_vicinity = bool(strict_vicinity)
        self.r0 = None if r0 is None else float(r0)
        self.count = 0
        self.guard_trips = 0
        self.max_distance = 0.0
        self.record = record
        self.log = []

    @property
    def d(self):
        return self._P.d

    @property
    def m(self):
        return self._P.m

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self._P.d:
            raise ValueError(f"query matrix must be n x {self._P.d}")
        return X

    def _guard(self, points):
        if not self.strict_vicinity:
            return
        for p in np.unique(points, axis=0):
            res = self._P.b - self._P.A @ p
            if np.all(res >= 0.0):
                continue
            dist = float(np.linalg.norm(p - geometry.project(self._P, p)))
            self.max_distance = max(self.max_distance, dist)
            if dist > self.r0 + geometry.FEAS_TOL:
                self.guard_trips += 1
                raise VicinityError(p, dist, self.r0)

    def exact(self, X):
        """Noise-free measurements (simulation diagnostics only)."""
        X = self._check(X)
        return X @ self._P.A.T - self._P.b

    def query(self, X):
        """One noisy measurement row per query row."""
        X = self._check(X)
        self._guard(X)
        Y = self.exact(X)
        if self.sigma > 0:
            Y = Y + self.rng.normal(0.0, self.sigma, size=Y.shape)
        self.count += X.shape[0]
        if self.record:
            self.log.append((X.copy(), Y.copy(), np.ones(X.shape[0], dtype=np.int64)))
        return Y

    def query_repeated(self, points, reps):
        """Average of ``reps`` independent measurements at each point.

        Distributionally identical to calling :meth:`query` with every point
        repeated ``reps`` times and averaging, because the sum of Gaussian
        noise is Gaussian.  The counter advances by ``reps`` per point.
        """
        X = self._check(points)
        reps = int(reps)
        if reps < 1:
            raise ValueError("reps must be >= 1")
        self._guard(X)
        Y = self.exact(X)
        if self.sigma > 0:
            Y = Y + self.rng.normal(0.0, self.sigma / math.sqrt(reps), size=Y.shape)
        self.count += reps * X.shape[0]
        if self.record:
            self.log.append((X.copy(), Y.copy(), np.full(X.shape[0], reps, dtype=np.int64)))
        return Y


# --------------------------------------------------------------------------
# stochastic first-order oracle
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SampleToken:
    """A realisation ``xi``; its gradient noise is fixed at mint time."""

    id: int
    owner: int
    noise: np.ndarray = field(repr=False)


def ball_noise(rng, d, radius):
    """Uniform sample from the ``d``-ball of the given radius."""
    if radius == 0:
        return np.zeros(d)
    u = rng.normal(size=d)
    u /= np.linalg.norm(u)
    return radius * rng.random() ** (1.0 / d) * u


class StochasticGradientOracle:
    """``G(x, xi) = grad f(x) + eps(xi)`` with ``eps`` uniform in a ball.

    Each token may be evaluated at most ``max_uses`` times (two for a STORM
    step); set ``max_uses=None`` to disable the guard.
    """

    _owners = itertools.count(1)

    def __init__(self, objective, sigma0, rng=None, d=None, max_uses=2):
        if sigma0 < 0:
            raise ValueError("sigma0 must be nonnegative")
        self.objective = objective
        self.sigma0 = float(sigma0)
        self.rng = rng if rng is not None else np.random.default_rng()
        self.d = d
        self.max_uses = max_uses
        self.noise_model = "ball"
        self.count = 0
        self._owner = next(self._owners)
        self._ids = itertools.count()
        self._uses = {}

    def mint(self, d=None):
        d = d if d is not None else self.d
        if d is None:
            raise ValueError("dimension unknown; pass d")
        noise = ball_noise(self.rng, d, self.sigma0)
        noise.setflags(write=False)
        tok = SampleToken(next(self._ids), self._owner, noise)
        # only the newest tokens can still be live
        self._uses = {k: v for k, v in self._uses.items() if k > tok.id - 4}
        self._uses[tok.id] = 0
        return tok

    def query(self, x, token):
        if token.owner != self._owner or token.id not in self._uses:
            raise StaleTokenError(f"token {token.id} is stale or belongs to another oracle")
        used = self._uses[token.id] + 1
        if self.max_uses is not None and used > self.max_uses:
            raise StaleTokenError(f"token {token.id} evaluated more than {self.max_uses} times")
        self._uses[token.id] = used
        self.count += 1
        return np.asarray(self.objective.gradient(np.asarray(x, dtype=float))) + token.noise


# --------------------------------------------------------------------------
# test problems
# --------------------------------------------------------------------------

def _cm_h1(x, y):
    return 127.5365 - 0.84629 * x - 144.21 * y + 0.001703 * x * x + 0.3656 * x * y


def _cm_value(z):
    x, y = float(z[0]), float(z[1])
    return 22.0 / (x * y) * (50.0 + 40.0 / _cm_h1(x, y))


def _cm_gradient(z):
    x, y = float(z[0]), float(z[1])
    h = _cm_h1(x, y)
    u = 22.0 / (x * y)
    w = 50.0 + 40.0 / h
    hx = -0.84629 + 2 * 0.001703 * x + 0.3656 * y
    hy = -144.21 + 0.3656 * x
    wh = -40.0 / (h * h)
    return np.array([-u / x * w + u * wh * hx, -u / y * w + u * wh * hy])


def _feasible_grid(P, n):
    V = geometry.enumerate_vertices(P)
    lo, hi = V.min(axis=0), V.max(axis=0)
    axes = [np.linspace(a, b, n) for a, b in zip(lo, hi)]
    G = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, P.d)
    G = G[np.all(G @ P.A.T - P.b <= 1e-12, axis=1)]
    return np.vstack([G, V])


def _smoothness_on(P, grad, n=121, margin=1.05):
    """Grid estimates of sup |grad| and sup |Hessian| over ``P``."""
    pts = _feasible_grid(P, n)
    M = max(np.linalg.norm(grad(p)) for p in pts)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    hstep = 1e-5 * np.maximum(hi - lo, 1e-12)
    L = 0.0
    for p in pts[:: max(1, len(pts) // 2000)]:
        H = np.empty((P.d, P.d))
        for j in range(P.d):
            e = np.zeros(P.d)
            e[j] = hstep[j]
            H[:, j] = (grad(p + e) - grad(p - e)) / (2 * hstep[j])
        L = max(L, float(np.linalg.norm(0.5 * (H + H.T), 2)))
    return margin * L, margin * M


_CM_CACHE = {}


def cutting_machine_problem(start=150):
    """The two-variable cutting-machine design problem.

    ``start`` picks the initial point: ``150`` for ``(150, 0.09)`` or ``130``
    for ``(130, 0.09)``.
    """
    starts = {150: (150.0, 0.09), 130: (130.0, 0.09)}
    if int(start) not in starts:
        raise ValueError("start must be 150 or 130")
    A = np.array([
        [-0.010035, 7.0877],  # h2(x, y) <= 0
        [1.0, 0.0],
        [-1.0, 0.0],
        [0.0, 1.0],
        [0.0, -1.0],
    ])
    b = np.array([-0.0844, 200.0, -100.0, 0.16, -0.08])
    P = Polytope(A, b, ("h2", "x<=200", "x>=100", "y<=0.16", "y>=0.08"))
    if "consts" not in _CM_CACHE:
        L, M = _smoothness_on(P, _cm_gradient)
        pts = _feasible_grid(P, 401)
        vals = np.array([_cm_value(p) for p in pts])
        k = int(np.argmin(vals))
        _CM_CACHE["consts"] = (L, M, float(vals[k]), pts[k].copy())
    L, M, fstar, xstar = _CM_CACHE["consts"]
    obj = Objective(_cm_value, _cm_gradient, L=L, M=M, is_convex=False, name="cutting-machine")
    return Problem("cutting-machine", obj, P, np.array(starts[int(start)]), fstar, xstar.copy())


def quadratic_objective(c, weight=1.0, P=None):
    """``weight * |x - c|^2``; ``M`` is computed over the vertices of ``P``."""
    c = np.asarray(c, dtype=float)
    L = 2.0 * weight
    M = np.inf
    if P is not None:
        V = geometry.enumerate_vertices(P)
        M = float(max(np.linalg.norm(2 * weight * (v - c)) for v in V))
    return Objective(
        value=lambda x: float(weight * np.sum((np.asarray(x) - c) ** 2)),
        gradient=lambda x: 2.0 * weight * (np.asarray(x, dtype=float) - c),
        L=L, M=M, is_convex=True, name="quadratic",
    )


def random_polytope(d, m, rng, center=None, max_tries=1000):
    """A random bounded polytope around ``center`` with nonuniform row norms."""
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    if m < d + 1:
        raise ValueError("a bounded polytope needs m >= d + 1")
    for _ in range(max_tries):
        N = rng.normal(size=(m, d))
        N /= np.linalg.norm(N, axis=1, keepdims=True)
        N *= rng.uniform(0.5, 2.0, size=(m, 1))
        b = N @ center + rng.uniform(0.5, 1.5, size=m) * np.linalg.norm(N, axis=1)
        P = Polytope(N, b)
        if geometry.is_bounded(P):
            # keep instances reasonably well conditioned
            V = geometry.enumerate_vertices(P)
            if np.max(np.linalg.norm(V - center, axis=1)) < 25.0:
                return P
    raise RuntimeError("could not sample a bounded polytope")


def _trig_objective(c, amp, freq):
    c = np.asarray(c, dtype=float)

    def value(x):
        x = np.asarray(x, dtype=float)
        return float(0.5 * np.sum((x - c) ** 2) + amp * np.sum(np.sin(freq * x)))

    def gradient(x):
        x = np.asarray(x, dtype=float)
        return (x - c) + amp * freq * np.cos(freq * x)

    return value, gradient


def synthetic_problem(kind, d=2, m=None, seed=0):
    """Seeded synthetic instances.

    kinds
    -----
    ``quad-box``
        ``|x - c|^2`` over ``[0, 1]^d`` with ``c`` drawn from ``[-0.5, 1.5]^d``.
    ``quad-box-interior``
        Same with ``c`` strictly inside the box (minimiser ``c``).
    ``quad-poly``
        ``|x - c|^2`` over a random bounded polytope.
    ``trig-quad``
        Non-convex ``0.5|x - c|^2 + a sum sin(w x)`` over a random polytope.
    """
    rng = np.random.default_rng([seed, d, 0 if m is None else m, _KIND_IDS.get(kind, 99)])
    if kind in ("quad-box", "quad-box-interior"):
        P = geometry.box(np.zeros(d), np.ones(d))
        if kind == "quad-box":
            c = rng.uniform(-0.5, 1.5, size=d)
        else:
            c = rng.uniform(0.2, 0.8, size=d)
        obj = quadratic_objective(c, P=P)
        xstar = np.clip(c, 0.0, 1.0)
        x0 = rng.uniform(0.25, 0.75, size=d)
        return Problem(kind, obj, P, x0, obj.value(xstar), xstar, fstar_exact=True)
    if kind in ("quad-poly", "trig-quad"):
        m = 2 * d + 2 if m is None else m
        P = random_polytope(d, m, rng)
        x0, _ = geometry.chebyshev_center(P)
        if kind == "quad-poly":
            c = rng.normal(size=d) * 1.5
            obj = quadratic_objective(c, P=P)
            xstar = geometry.project(P, c)
            return Problem(kind, obj, P, x0, obj.value(xstar), xstar, fstar_exact=True)
        c = rng.normal(size=d)
        amp, freq = 0.3, 2.0
        value, gradient = _trig_objective(c, amp, freq)
        V = geometry.enumerate_vertices(P)
        M = float(max(np.linalg.norm(gradient(v)) for v in V)) + amp * freq * math.sqrt(d) + 1.0
        obj = Objective(value, gradient, L=1.0 + amp * freq ** 2, M=M, is_convex=False, name="trig-quad")
        pts = _feasible_grid(P, 81 if d <= 2 else 21)
        vals = np.array([value(p) for p in pts])
        k = int(np.argmin(vals))
        return Problem(kind, obj, P, x0, float(vals[k]), pts[k].copy())
    raise ValueError(f"unknown problem kind {kind!r}; have {sorted(PROBLEMS)}")


_KIND_IDS = {"quad-box": 1, "quad-box-interior": 2, "quad-poly": 3, "trig-quad": 4}

PROBLEMS = ("cutting-machine", "cutting-machine-130", "quad-box", "quad-box-interior", "quad-poly", "trig-quad")


def get_problem(name, dim=2, seed=0, m=None):
    """Registry lookup used by the command line."""
    if name == "cutting-machine":
        return cutting_machine_problem(150)
    if name == "cutting-machine-130":
        return cutting_machine_problem(130)
    return synthetic_problem(name, d=dim, m=m, seed=seed)
