"""Data collection, least-squares polytope estimation and the constant ledger.

Measurements follow ``y = A x - b + noise``.  Writing ``z = [x, -1]`` and
``beta = [A, b]^T`` this is ``y = beta^T z + noise`` and ``beta`` is estimated
by ordinary least squares on every query made so far.
"""
import enum
import logging
import math
from dataclasses import dataclass, asdict

import numpy as np

from . import geometry
from .geometry import Polytope

logger = logging.getLogger(__name__)

COND_LIMIT = 1e12


class EstimationError(RuntimeError):
    """Degenerate design or an estimate that cannot be used."""


class Variant(str, enum.Enum):
    NONCONVEX_STOCHASTIC = "nonconvex-stochastic"
    NONCONVEX_DETERMINISTIC = "nonconvex-deterministic"
    CONVEX_STOCHASTIC = "convex-stochastic"
    CONVEX_DETERMINISTIC = "convex-deterministic"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {"1": cls.NONCONVEX_STOCHASTIC, "2": cls.NONCONVEX_DETERMINISTIC,
                   "3": cls.CONVEX_STOCHASTIC, "4": cls.CONVEX_DETERMINISTIC}
        key = str(value).strip().lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown variant {value!r}; expected one of "
                             f"{[v.value for v in cls]}") from None

    @property
    def stochastic(self):
        return self in (Variant.NONCONVEX_STOCHASTIC, Variant.CONVEX_STOCHASTIC)

    @property
    def convex(self):
        return self in (Variant.CONVEX_STOCHASTIC, Variant.CONVEX_DETERMINISTIC)


# --------------------------------------------------------------------------
# data collection
# --------------------------------------------------------------------------

def round_samples(n, d):
    """Round ``n`` up to a positive multiple of ``2 d``."""
    block = 2 * d
    k = max(1, math.ceil(n / block))
    return int(k) * block


def probe_points(x, r0):
    """The ``2 d`` probes ``x + r0 e_1, ..., x + r0 e_d, x - r0 e_1, ..., x - r0 e_d``."""
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    E = r0 * np.eye(d)
    return np.vstack([x + E, x - E])


def collect_data_points(x, n, r0):
    """Query points around ``x``: the ``2 d`` probes repeated ``n / (2 d)`` times.

    >>> collect_data_points([0.0, 0.0], 4, 0.01).tolist()
    [[0.01, 0.0], [0.0, 0.01], [-0.01, 0.0], [0.0, -0.01]]
    """
    if r0 <= 0:
        raise ValueError("r0 must be positive")
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    n = round_samples(n, d)
    return np.tile(probe_points(x, r0), (n // (2 * d), 1))


# --------------------------------------------------------------------------
# least squares
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EstimatedPolytope:
    A: np.ndarray
    b: np.ndarray
    N: int

    def polytope(self):
        return Polytope(self.A, self.b)

    def residuals(self, x):
        return self.b - self.A @ np.asarray(x, dtype=float)


class LeastSquaresState:
    """Running least-squares fit of ``beta`` with Sherman-Morrison updates.

    Internally every query point is shifted by a fixed origin (the centre of
    the first batch).  The fit, the confidence quadratic form and ``Q_t`` are
    invariant under that change of variables; it only keeps ``z^T z`` well
    conditioned when the raw coordinates are large.

    Rows may carry integer weights: a row of weight ``w`` whose response is the
    mean of ``w`` measurements at the same point contributes exactly what the
    ``w`` individual rows would.
    """

    def __init__(self, d, m, cond_limit=COND_LIMIT, refresh_tol=1e-10):
        self.d = int(d)
        self.m = int(m)
        self.cond_limit = cond_limit
        self.refresh_tol = refresh_tol
        self.origin = None
        self.N = 0
        self.info = np.zeros((d + 1, d + 1))
        self.XtY = np.zeros((d + 1, m))
        self.P = None
        self.refreshes = 0
        self.updates = 0

    # -- updates ---------------------------------------------------------
    def _design(self, X):
        Z = np.empty((X.shape[0], self.d + 1))
        Z[:, :self.d] = X - self.origin
        Z[:, self.d] = -1.0
        return Z

    def update(self, X, Y, weights=None):
        """Append rows ``(X, Y)``; ``Y`` rows are means when ``weights > 1``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if X.shape[1] != self.d or Y.shape[1] != self.m or X.shape[0] != Y.shape[0]:
            raise ValueError("update shapes do not match the state")
        w = np.ones(X.shape[0]) if weights is None else np.asarray(weights, dtype=float).reshape(-1)
        if w.shape[0] != X.shape[0] or np.any(w <= 0):
            raise ValueError("weights must be positive, one per row")
        if self.origin is None:
            self.origin = X.mean(axis=0)
        Z = self._design(X)
        if self.P is not None:
            P = self.P
            for z, wi in zip(Z, w):
                Pz = P @ z
                P = P - np.outer(Pz, Pz) * (wi / (1.0 + wi * (z @ Pz)))
            self.P = 0.5 * (P + P.T)
        self.info += (Z * w[:, None]).T @ Z
        self.XtY += (Z * w[:, None]).T @ Y
        self.N += int(round(float(w.sum())))
        self.updates += X.shape[0]
        if self.P is None:
            if np.linalg.matrix_rank(self.info) == self.d + 1:
                self._check_condition()
                self.P = np.linalg.inv(self.info)
        else:
            self._check_condition()
            drift = np.max(np.abs(self.P @ self.info - np.eye(self.d + 1)))
            if drift > self.refresh_tol:
                self.P = np.linalg.inv(self.info)
                self.refreshes += 1
        return self

    def _check_condition(self):
        c = np.linalg.cond(self.info)
        if not np.isfinite(c) or c > self.cond_limit:
            raise EstimationError(f"normal matrix condition number {c:.3e} exceeds {self.cond_limit:.0e}")

    # -- queries ---------------------------------------------------------
    @property
    def ready(self):
        return self.P is not None

    def _require(self):
        if self.P is None:
            raise EstimationError("least-squares state is not yet full rank")

    def _shift(self):
        """``S`` with ``z_raw = S z_shifted`` for ``z = [x, -1]``."""
        S = np.eye(self.d + 1)
        S[:self.d, self.d] = -self.origin
        return S

    def beta_shifted(self):
        self._require()
        B = self.P @ self.XtY
        # one step of iterative refinement against the exact normal matrix
        B += self.P @ (self.XtY - self.info @ B)
        return B

    def beta(self):
        """``[A_hat, b_hat]^T`` in the original coordinates, shape ``(d+1, m)``."""
        B = self.beta_shifted()
        out = B.copy()
        out[self.d] = B[self.d] + self.origin @ B[:self.d]
        return out

    def estimate(self):
        B = self.beta()
        return EstimatedPolytope(B[:self.d].T.copy(), B[self.d].copy(), self.N)

    @property
    def xbar(self):
        self._require()
        return self.origin - self.info[:self.d, self.d] / self.N

    def Q(self):
        """Inverse of the centred scatter matrix of all query points."""
        self._require()
        Q = self.P[:self.d, :self.d]
        return 0.5 * (Q + Q.T)

    def normal_matrix(self):
        """``Xbar^T Xbar`` in the original coordinates."""
        S = self._shift()
        return S @ self.info @ S.T

    def normal_inverse(self):
        self._require()
        Si = np.linalg.inv(self._shift())
        return Si.T @ self.P @ Si

    def quadratic_forms(self, beta_true):
        """``(beta_hat_i - beta_i)^T Xbar^T Xbar (beta_hat_i - beta_i)`` per column."""
        beta_true = np.asarray(beta_true, dtype=float)
        S = self._shift()
        diff = self.beta_shifted() - S.T @ beta_true
        return np.einsum("ji,jk,ki->i", diff, self.info, diff)


def beta_of(P):
    """``[A, b]^T`` for a polytope, shape ``(d+1, m)``."""
    return np.vstack([P.A.T, P.b[None, :]])


def psi_inverse(N, zeta, d):
    """Radius multiplier of the least-squares confidence ellipsoid."""
    if N < 2:
        raise ValueError("psi_inverse needs N >= 2")
    if not (0 < zeta < 1):
        raise ValueError("confidence level must lie in (0, 1)")
    lg = math.log(N ** 2 / zeta) if N < 1e150 else 2 * math.log(N) - math.log(zeta)
    return max(math.sqrt(128.0 * d * math.log(N) * lg), (8.0 / 3.0) * lg)


def safety_margin(state, est, x, kappa):
    """Signed margin of ``x`` in the safety set.

    Equals ``min_i r_i^2 - kappa^2 (1/N + (x - xbar)^T Q (x - xbar))`` where
    ``r`` are the estimated residuals; when some residual is negative the
    square is taken with a negative sign, so ``margin >= 0`` iff ``x`` is a
    member.
    """
    if not state.ready:
        raise EstimationError("safety margin requested before the state is full rank")
    x = np.asarray(x, dtype=float)
    r = float(np.min(est.residuals(x)))
    dx = x - state.xbar
    width = 1.0 / state.N + float(dx @ state.Q() @ dx)
    return math.copysign(r * r, r) - kappa * kappa * width


def ellipsoid_contains(state, beta_true, psi_inv, sigma_bar):
    """True iff every column of ``beta_true`` lies in its marginal ellipsoid."""
    q = state.quadratic_forms(beta_true)
    if sigma_bar == 0:
        return bool(np.all(q <= 1e-18 * max(1.0, float(np.max(np.abs(state.info))))))
    return bool(np.all(q <= (psi_inv * sigma_bar) ** 2))


# --------------------------------------------------------------------------
# confidence bookkeeping and constants
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ConfidenceParams:
    """Confidence split: ``zeta`` per iteration and ``zeta / m`` per constraint.

    ``mode="horizon"`` uses ``zeta = delta / T``; ``mode="definition"`` uses
    ``zeta = delta`` so that the per-constraint level is ``delta / m``.
    """

    delta: float
    T: int
    m: int
    d: int
    sigma_bar: float
    mode: str = "horizon"

    def __post_init__(self):
        if self.mode not in ("horizon", "definition"):
            raise ValueError("mode must be 'horizon' or 'definition'")
        if not (0 < self.delta < 1):
            raise ValueError("delta must lie in (0, 1)")

    @property
    def zeta(self):
        return self.delta / self.T if self.mode == "horizon" else self.delta

    @property
    def level(self):
        return self.zeta / self.m

    def psi(self, N):
        return psi_inverse(N, self.level, self.d)

    def kappa(self, N):
        return self.sigma_bar * self.psi(N)


@dataclass(frozen=True)
class ScheduleConstants:
    eps0: float
    L_A: float
    tau: float
    kappa: float
    psi: float
    n_ref: float
    C0: float
    C1: float
    C2: float
    C3: float
    C4: float
    C5: float
    C6: float
    C7: float
    C8: float
    C9: float
    d: int
    m: int
    r0: float
    delta: float
    zeta: float
    diameter: float
    radius: float
    f_gap0: float = None

    def as_dict(self):
        return asdict(self)

    def report(self):
        """``key=value`` lines, one constant per line."""
        lines = []
        for k, v in self.as_dict().items():
            if isinstance(v, float):
                lines.append(f"{k}={v:.17g}")
            else:
                lines.append(f"{k}={v}")
        return "\n".join(lines)


def _c2(kappa, C0, C1, L_A, tau, d, diameter, r0):
    return max((4.0 * C1 * L_A / tau) ** 2,
               (8.0 * kappa * C0 / tau) ** 2,
               (64.0 * kappa ** 2 / tau ** 2) * (1.0 + d * diameter ** 2 / r0 ** 2),
               C1 ** 2)


def compute_constants(geom, polytope, x0, sigma_bar, delta, T, r0, tau, L, M, L0=None,
                      sigma0=0.0, f_gap0=None, zeta_mode="horizon", n_ref=None):
    """Evaluate the constant ledger.

    Parameters
    ----------
    geom : GeometrySummary
        Summary of the polytope in its original scaling (supplies ``alpha``,
        the diameter and the radius).
    polytope : Polytope
        The normalised polytope (supplies ``eps0``).
    n_ref : float, optional
        Sample count at which ``psi_inverse`` is evaluated for ``kappa``.  By
        default the fixed point ``n_ref = C2(n_ref) T^2`` is used, which
        dominates the final cumulative count of every variant.
    """
    x0 = np.asarray(x0, dtype=float)
    eps0 = float(np.min(polytope.b - polytope.A @ x0))
    if eps0 <= 0:
        raise EstimationError(f"x0 is not strictly feasible (eps0={eps0:.3e})")
    if tau <= 0:
        raise EstimationError("tau must be positive")
    if geometry.is_empty(geometry.shrink(polytope, tau)):
        raise EstimationError("the tau-shrunk polytope is empty")
    d, m = polytope.d, polytope.m
    L0 = L if L0 is None else L0
    Lam, Gam = geom.diameter, geom.radius
    L_A = geom.rho_min / (2.0 * math.sqrt(d))
    conf = ConfidenceParams(delta, T, m, d, sigma_bar, zeta_mode)
    C0 = math.sqrt(d * ((1.0 + Gam ** 2) / r0 ** 2 + 1.0))

    def at(N):
        kappa = conf.kappa(N)
        C1 = kappa * (1.0 + Gam) * C0 / L_A
        return kappa, C1, _c2(kappa, C0, C1, L_A, tau, d, Lam, r0)

    if n_ref is None:
        N = 2.0
        for _ in range(200):
            _, _, C2 = at(N)
            N_new = max(2.0, C2 * float(T) ** 2)
            if abs(N_new - N) <= 1e-12 * N_new:
                break
            N = N_new
        n_ref = N_new
    kappa, C1, C2 = at(n_ref)
    lg = math.log(4.0 / delta)
    C3 = (18.0 * math.sqrt(2.0) * (2.0 * Lam + 1.0) * (sigma0 + L0 * Lam) * math.sqrt(lg)) ** 3
    C4 = (9.0 * (M + sigma0) + 6.0 * L * (1.0 + Lam) ** 2) ** 1.5
    C5 = (4.0 * M + 2.0 * L * (1.0 + Lam ** 2)) ** 2
    C6 = (2.0 * max(16.0 * math.sqrt(2.0) * (1.0 + Lam) * (L0 * Lam + sigma0) * math.sqrt(lg),
                    4.0 * math.sqrt(2.0) * (M + sigma0),
                    L ** 2 * (Lam + 2.0))) ** 2
    C7 = 4.0 * (L0 * Lam + sigma0) * math.sqrt(2.0 * lg)
    gap = 0.0 if f_gap0 is None else float(f_gap0)
    C8 = max(gap, 4.0 * C7 * (1.0 + Lam), 4.0 * math.sqrt(2.0) * (M + sigma0), L ** 2 * (Lam + 2.0))
    C9 = max(gap, 4.0 * M, 2.0 * L ** 2 * (Lam + 2.0))
    return ScheduleConstants(
        eps0=eps0, L_A=L_A, tau=float(tau), kappa=kappa, psi=conf.psi(n_ref), n_ref=float(n_ref),
        C0=C0, C1=C1, C2=C2, C3=C3, C4=C4, C5=C5, C6=C6, C7=C7, C8=C8, C9=C9,
        d=d, m=m, r0=float(r0), delta=float(delta), zeta=conf.zeta,
        diameter=Lam, radius=Gam, f_gap0=f_gap0,
    )


def h_value(etas, Ns, t, consts):
    """Lower bound on the smallest estimated residual of ``x_t``.

    ``etas`` holds ``eta_0 .. eta_{t-1}`` (or more) and ``Ns`` holds
    ``N_0 .. N_t`` (or more).
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    etas = np.asarray(etas, dtype=float)[:t]
    Ns = np.asarray(Ns, dtype=float)[:t + 1]
    if np.any(Ns <= 0):
        raise ValueError("sample counts must be positive")
    one_minus = 1.0 - etas
    # tail[k] = prod_{j=k+1}^{t-1} (1 - eta_j)
    tail = np.ones(t + 1)
    for k in range(t - 1, -1, -1):
        tail[k] = tail[k + 1] * (one_minus[k + 1] if k + 1 < t else 1.0)
    head = float(np.prod(one_minus))
    gain = sum((consts.tau / 2.0 - consts.C1 * consts.L_A / math.sqrt(Ns[k])) * etas[k] * tail[k]
               for k in range(t))
    return consts.eps0 * head + gain - consts.kappa * consts.C0 / math.sqrt(Ns[t])


class HTracker:
    """Incremental form of :func:`h_value` along a run."""

    def __init__(self, consts):
        self.c = consts
        self.H = consts.eps0

    def value(self, N_t):
        return self.H - self.c.kappa * self.c.C0 / math.sqrt(N_t)

    def advance(self, eta, N_prev):
        c = self.c
        self.H = (1.0 - eta) * self.H + (c.tau / 2.0 - c.C1 * c.L_A / math.sqrt(N_prev)) * eta


def sample_count_lhs(N_t, consts):
    """Left side of the safe-sampling inequality: ``kappa^2/N (1 + d Lam^2 / r0^2)``."""
    c = consts
    return c.kappa ** 2 / N_t * (1.0 + c.d * c.diameter ** 2 / c.r0 ** 2)


def min_samples(variant, t, C2, d, scale=1.0):
    """Queries at iteration ``t``, rounded up to a multiple of ``2 d``."""
    variant = Variant.parse(variant)
    if not (0 < scale <= 1):
        raise ValueError("scale must lie in (0, 1]")
    if variant is Variant.NONCONVEX_STOCHASTIC:
        n = 2.0 * C2 * (t + 1) ** (1.0 / 3.0)
    elif variant is Variant.NONCONVEX_DETERMINISTIC:
        n = C2
    else:
        n = 2.0 * C2 * (t + 1)
    return round_samples(n * scale, d)


def theory_cumulative(variant, t, C2):
    """The cumulative count ``N_t`` each convergence statement asks for."""
    variant = Variant.parse(variant)
    if variant is Variant.NONCONVEX_STOCHASTIC:
        return C2 * (t + 1) ** (4.0 / 3.0)
    if variant is Variant.NONCONVEX_DETERMINISTIC:
        return C2 * (t + 1)
    return C2 * (t + 1) ** 2
