"""Linear minimisation oracle, schedules and the Reliable Frank-Wolfe loop."""
import csv
import io
import logging
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import geometry, kernels
from .estimation import (
    ConfidenceParams,
    EstimatedPolytope,
    EstimationError,
    HTracker,
    LeastSquaresState,
    Variant,
    beta_of,
    collect_data_points,
    compute_constants,
    ellipsoid_contains,
    min_samples,
    sample_count_lhs,
    probe_points,
    safety_margin,
)
from .gradient import storm_init, storm_update
from .oracles import NoisyFeasibilityOracle, StochasticGradientOracle, VicinityError

logger = logging.getLogger(__name__)

SAFE_TOL = 1e-9


class EmptyEstimateError(EstimationError):
    """The estimated polytope (intersected with the box) has no points."""


class UnboundedLMOError(EstimationError):
    """Linear minimisation over an unbounded set without a box."""


# --------------------------------------------------------------------------
# LMO and friends
# --------------------------------------------------------------------------

def _rows(P):
    return np.asarray(P.A, dtype=float), np.asarray(P.b, dtype=float)


def box_rows(center, half_width):
    center = np.asarray(center, dtype=float)
    d = center.shape[0]
    eye = np.eye(d)
    return np.vstack([eye, -eye]), np.concatenate([center + half_width, half_width - center])


def lmo(P, c, box=None):
    """Vertex of ``P`` (optionally intersected with a box) minimising ``<c, v>``.

    ``box`` is ``(center, half_width)``.  Ties are broken lexicographically.
    """
    A, b = _rows(P)
    if box is not None:
        Ab, bb = box_rows(*box)
        A, b = np.vstack([A, Ab]), np.concatenate([b, bb])
    status, v = kernels.lp_min(A, b, np.asarray(c, dtype=float))
    if status == kernels.LP_INFEASIBLE:
        raise EmptyEstimateError("linear minimisation over an empty set")
    if status == kernels.LP_UNBOUNDED:
        raise UnboundedLMOError("linear minimisation over an unbounded set")
    return v


def on_box_face(v, center, half_width, tol=1e-9):
    off = np.abs(np.asarray(v) - np.asarray(center))
    return bool(np.any(off >= half_width * (1.0 - tol)))


def fw_gap(P, grad, x, box=None):
    """``max_{v in P} <grad, x - v>``."""
    grad = np.asarray(grad, dtype=float)
    v = lmo(P, grad, box)
    return float(grad @ np.asarray(x, dtype=float) - grad @ v)


def schedule(variant, t):
    """Step size ``eta_t`` and momentum weight ``rho_t``."""
    variant = Variant.parse(variant)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if variant is Variant.NONCONVEX_STOCHASTIC:
        eta = (t + 2.0) ** (-2.0 / 3.0)
        return eta, eta
    if variant is Variant.NONCONVEX_DETERMINISTIC:
        return (t + 2.0) ** -0.5, 1.0
    if variant is Variant.CONVEX_STOCHASTIC:
        eta = 1.0 / (t + 2.0)
        return eta, eta
    return 2.0 / (t + 2.0), 1.0


def horizon(variant, eps, consts, f_gap0):
    """Iteration count the convergence statements require for accuracy ``eps``."""
    variant = Variant.parse(variant)
    if eps <= 0:
        raise ValueError("eps must be positive")
    gap = max(0.0, float(f_gap0))
    if variant is Variant.NONCONVEX_STOCHASTIC:
        T = max(216.0 * gap ** 3 / eps ** 3, consts.C3 / eps ** 3, consts.C4 / eps ** 1.5)
    elif variant is Variant.NONCONVEX_DETERMINISTIC:
        T = max(8.0 * gap ** 2, consts.C5) / eps ** 2
    elif variant is Variant.CONVEX_STOCHASTIC:
        T = max(4.0 * gap ** 2, consts.C6) / eps ** 2
    else:
        T = 2.0 / eps * max(gap, consts.C9)
    return max(1, int(math.ceil(T)))


def step(x, v, eta):
    """``x + eta (v - x)``."""
    if not (0 <= eta <= 1):
        raise ValueError("eta must lie in [0, 1]")
    x = np.asarray(x, dtype=float)
    return x + eta * (np.asarray(v, dtype=float) - x)


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

@dataclass
class RunConfig:
    """Everything a run needs besides the problem itself.

    ``tau=None`` means half the normalised start margin.  ``scale`` multiplies
    every ``n_t`` (``scale < 1`` forfeits the guarantees).  ``horizon``
    overrides the iteration count from the convergence statements.

    ``lmo_shrink`` is an opt-in departure from the plain method: the linear
    minimisation runs over the estimate tightened by ``lmo_shrink * tau``
    instead of the estimate itself.  The default 0 keeps the method as
    published, where an iterate that equals an estimated vertex (``eta = 1``)
    can leave the feasible set by the estimation error.
    """

    variant: Variant = Variant.NONCONVEX_STOCHASTIC
    eps: float = 0.1
    delta: float = 0.05
    tau: float = None
    r0: float = 0.01
    sigma: float = 0.01
    sigma0: float = 0.001
    seed: int = 0
    scale: float = 1.0
    horizon: int = None
    box_half_width: float = None
    strict_vicinity: bool = False
    zeta_mode: str = "horizon"
    aggregate_above: int = 16
    f_gap0: float = None
    record_measurements: bool = False
    lmo_shrink: float = 0.0

    def __post_init__(self):
        self.variant = Variant.parse(self.variant)

    def validate(self):
        problems = []
        for name in ("eps", "delta", "r0"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be positive")
        if self.tau is not None and not self.tau > 0:
            problems.append("tau must be positive")
        if not (0 < self.delta < 1):
            problems.append("delta must lie in (0, 1)")
        if not (0 <= self.lmo_shrink < 2):
            problems.append("lmo_shrink must lie in [0, 2)")
        if not (0 < self.scale <= 1):
            problems.append("scale must lie in (0, 1]")
        if self.sigma < 0 or self.sigma0 < 0:
            problems.append("noise levels must be nonnegative")
        if self.horizon is not None and self.horizon < 1:
            problems.append("horizon must be >= 1")
        if self.zeta_mode not in ("horizon", "definition"):
            problems.append("zeta_mode must be 'horizon' or 'definition'")
        if problems:
            raise ValueError("; ".join(problems))
        return self

    def replace(self, **kw):
        return replace(self, **kw)

    def as_dict(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.value if isinstance(v, Variant) else v
        return out


@dataclass
class Setup:
    """Derived quantities shared by every trial of an experiment."""

    problem: object
    config: RunConfig
    geom: object
    polytope: object
    sigma_bar: float
    tau: float
    constants: object
    T: int
    T_formula: int
    f_gap0: float
    f_gap0_source: str
    box_half_width: float


def prepare(problem, config):
    """Normalise the polytope, pick ``tau`` and evaluate the constants."""
    config.validate()
    raw = problem.polytope
    if not raw.contains(problem.x0, tol=0.0) or np.min(raw.residuals(problem.x0)) <= 0:
        raise EstimationError("x0 must be strictly feasible")
    geom = geometry.geometry_summary(raw)
    P, sigma_bar = geometry.normalize(raw, config.sigma, geom)
    eps0 = float(np.min(P.residuals(problem.x0)))
    tau = eps0 / 2.0 if config.tau is None else float(config.tau)
    if geometry.is_empty(geometry.shrink(P, tau)):
        raise EstimationError("the tau-shrunk polytope is empty; lower tau")
    if config.f_gap0 is not None:
        f_gap0, source = float(config.f_gap0), "user"
    elif problem.fstar is not None:
        f_gap0 = float(problem.objective.value(problem.x0) - problem.fstar)
        source = "exact" if problem.fstar_exact else "grid-estimate"
    else:
        fv = min(problem.objective.value(v) for v in geom.vertices)
        f_gap0, source = max(0.0, float(problem.objective.value(problem.x0) - fv)), "vertex-heuristic"
    obj = problem.objective
    T_guess = config.horizon if config.horizon is not None else 1000
    for _ in range(3):
        consts = compute_constants(geom, P, problem.x0, sigma_bar, config.delta, T_guess, config.r0, tau,
                                   obj.L, obj.M, obj.L, config.sigma0, f_gap0, config.zeta_mode)
        T_formula = horizon(config.variant, config.eps, consts, f_gap0)
        if config.horizon is not None:
            break
        if T_formula == T_guess:
            break
        T_guess = T_formula
    T = config.horizon if config.horizon is not None else T_formula
    if config.horizon is not None and config.horizon != T_formula:
        logger.warning("horizon override T=%d (formula gives %d)", config.horizon, T_formula)
    hw = config.box_half_width if config.box_half_width is not None else 10.0 * geom.radius
    return Setup(problem, config, geom, P, sigma_bar, tau, consts, int(T), int(T_formula), f_gap0, source, hw)


# --------------------------------------------------------------------------
# trace
# --------------------------------------------------------------------------

TRACE_COLUMNS = ("t", "eta", "rho", "n_t", "N_t", "f", "fw_gap_true", "min_true_residual",
                 "safety_margin", "grad_err", "sfo_count", "nfo_count")
DIAG_COLUMNS = ("t", "kappa", "h", "sample_count_lhs", "sample_count_ok", "ellipsoid_ok", "q_norm", "q_bound",
                "box_active", "grad_norm", "C1_over_sqrtN")


class IterateTrace:
    """Per-iteration record of a run."""

    def __init__(self, d):
        self.d = d
        self.rows = []
        self.x, self.g, self.v, self.grad_true = [], [], [], []

    def append(self, x, g, v, grad_true, **row):
        self.rows.append(row)
        self.x.append(np.array(x))
        self.g.append(np.array(g))
        self.v.append(np.array(v))
        self.grad_true.append(np.array(grad_true))

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        return np.array([r[name] for r in self.rows])

    @property
    def X(self):
        return np.array(self.x).reshape(-1, self.d)

    @property
    def V(self):
        return np.array(self.v).reshape(-1, self.d)

    @property
    def G(self):
        return np.array(self.g).reshape(-1, self.d)

    def _csv(self, columns, extra_xyz=False):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = list(columns)
        if extra_xyz:
            head += [f"x_{j + 1}" for j in range(self.d)] + [f"v_{j + 1}" for j in range(self.d)]
        w.writerow(head)
        for i, r in enumerate(self.rows):
            vals = [_fmt(r[c]) for c in columns]
            if extra_xyz:
                vals += [_fmt(float(u)) for u in self.x[i]] + [_fmt(float(u)) for u in self.v[i]]
            w.writerow(vals)
        return buf.getvalue()

    def to_csv(self):
        return self._csv(TRACE_COLUMNS)

    def diagnostics_csv(self):
        return self._csv(DIAG_COLUMNS, extra_xyz=True)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


@dataclass
class RunResult:
    x_out: np.ndarray
    t_out: int
    trace: IterateTrace
    T: int
    safe: bool
    aborted: str = ""
    abort_t: int = -1
    abort_residual: float = float("nan")
    guard_trips: int = 0
    max_query_distance: float = 0.0
    sfo_count: int = 0
    nfo_count: int = 0
    measurements: list = field(default_factory=list)
    final_estimate: object = None

    @property
    def f_out(self):
        return float(self.trace.rows[self.t_out]["f"]) if self.trace.rows else float("nan")

    def summary(self, variant):
        return {
            "variant": Variant.parse(variant).value,
            "T": self.T,
            "iterations": len(self.trace),
            "t_out": self.t_out,
            "x_out": [float(u) for u in self.x_out],
            "f_out": self.f_out,
            "safe": bool(self.safe),
            "aborted": self.aborted,
            "abort_t": self.abort_t,
            "guard_trips": self.guard_trips,
            "sfo_count": self.sfo_count,
            "nfo_count": self.nfo_count,
        }


def _signed_distance(P, x):
    return float(np.min((P.b - P.A @ x) / P.row_norms))


# --------------------------------------------------------------------------
# main loop
# --------------------------------------------------------------------------

def reliable_fw(config, objective, nfo, sfo, x0, constants, T, *, box_half_width, truth=None,
                rng=None, sigma_bar=None):
    """Run the safe Frank-Wolfe method.

    Parameters
    ----------
    config : RunConfig
    objective : Objective
        Used only for diagnostics (true value, true gradient).
    nfo, sfo : oracles
    x0 : array_like
        Strictly feasible start.
    constants : ScheduleConstants
        Supplies ``C2`` for the sample counts and the terms of the safety bound.
    T : int
        Number of iterations.
    box_half_width : float
        Half-width of the box intersected with every estimated polytope.
    truth : Polytope, optional
        The hidden normalised polytope, for simulation diagnostics only.
    rng : numpy.random.Generator
        Draws the returned iterate in the non-convex variants.
    """
    variant = Variant.parse(config.variant)
    x = np.array(x0, dtype=float)
    d = x.shape[0]
    m = nfo.m
    r0 = config.r0
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    sigma_bar = nfo.sigma if sigma_bar is None else sigma_bar
    conf = ConfidenceParams(config.delta, T, m, d, sigma_bar, config.zeta_mode)
    state = LeastSquaresState(d, m)
    trace = IterateTrace(d)
    htrack = HTracker(constants)
    verts = geometry.enumerate_vertices(truth) if truth is not None else None
    beta_true = beta_of(truth) if truth is not None else None
    storm = None
    x_prev = None
    result = RunResult(x.copy(), 0, trace, T, True)

    for t in range(T):
        eta, rho = schedule(variant, t)
        n_t = min_samples(variant, t, constants.C2, d, config.scale)
        reps = n_t // (2 * d)
        true_res = _signed_distance(truth, x) if truth is not None else float("nan")
        try:
            if reps > config.aggregate_above:
                probes = probe_points(x, r0)
                Y = nfo.query_repeated(probes, reps)
                state.update(probes, Y, np.full(2 * d, float(reps)))
            else:
                Xq = collect_data_points(x, n_t, r0)
                state.update(Xq, nfo.query(Xq))
        except VicinityError:
            result.aborted, result.abort_t, result.abort_residual = "vicinity", t, true_res
            result.safe = False
            logger.info("vicinity guard tripped at t=%d (true residual %.3e)", t, true_res)
            break
        except EstimationError as exc:
            result.aborted, result.abort_t = "estimation", t
            logger.warning("estimation failure at t=%d: %s", t, exc)
            break
        est = state.estimate()
        result.final_estimate = est
        N_t = state.N

        token = sfo.mint(d)
        G_x = sfo.query(x, token)
        if t == 0:
            g, storm = storm_init(G_x, x)
        elif rho < 1.0:
            G_prev = sfo.query(x_prev, token)
            g = storm_update(storm, G_x, G_prev, rho, x, token.id, token.id)
        else:
            g = storm_update(storm, G_x, None, 1.0, x)

        center = state.xbar
        target = est
        if config.lmo_shrink > 0:
            target = EstimatedPolytope(est.A, est.b - config.lmo_shrink * constants.tau, est.N)
        try:
            v = lmo(target, g, (center, box_half_width))
        except EstimationError as exc:
            result.aborted, result.abort_t = "empty-estimate", t
            logger.warning("LMO failed at t=%d: %s", t, exc)
            break

        grad_true = np.asarray(objective.gradient(x), dtype=float)
        kappa_t = conf.kappa(N_t)
        h_t = htrack.value(N_t)
        lhs = sample_count_lhs(N_t, constants)
        Q = state.Q()
        row = dict(
            t=t, eta=eta, rho=rho, n_t=n_t, N_t=N_t,
            f=float(objective.value(x)),
            fw_gap_true=float(np.max(grad_true @ (x[None, :] - verts).T)) if verts is not None else float("nan"),
            min_true_residual=true_res,
            safety_margin=safety_margin(state, est, x, kappa_t),
            grad_err=float(np.linalg.norm(g - grad_true)),
            sfo_count=sfo.count, nfo_count=nfo.count,
            kappa=kappa_t, h=h_t, sample_count_lhs=lhs, sample_count_ok=bool(h_t >= 0 and lhs <= h_t * h_t),
            ellipsoid_ok=(ellipsoid_contains(state, beta_true, conf.psi(N_t), sigma_bar)
                          if beta_true is not None else False),
            q_norm=float(np.linalg.norm(Q, 2)), q_bound=d / (N_t * r0 * r0),
            box_active=on_box_face(v, center, box_half_width),
            grad_norm=float(np.linalg.norm(g)),
            C1_over_sqrtN=constants.C1 / math.sqrt(N_t),
        )
        trace.append(x, g, v, grad_true, **row)
        if truth is not None and true_res < -SAFE_TOL:
            result.safe = False
        htrack.advance(eta, N_t)
        x_prev = x
        x = step(x, v, eta)

    result.sfo_count = sfo.count
    result.nfo_count = nfo.count
    result.guard_trips = getattr(nfo, "guard_trips", 0)
    result.max_query_distance = getattr(nfo, "max_distance", 0.0)
    n_done = len(trace)
    if n_done:
        if variant.convex or result.aborted:
            result.t_out = n_done - 1
        else:
            result.t_out = int(rng.integers(0, n_done))
        result.x_out = trace.x[result.t_out].copy()
    if getattr(nfo, "record", False):
        result.measurements = nfo.log
    return result


def trial_streams(seed, trial):
    """Independent generators for one trial: NFO noise, SFO noise, output draw."""
    ss = np.random.SeedSequence([int(seed), int(trial)])
    return [np.random.default_rng(s) for s in ss.spawn(3)]


def run_trial(setup, trial=0):
    """One seeded run of a prepared experiment."""
    cfg = setup.config
    nfo_rng, sfo_rng, draw_rng = trial_streams(cfg.seed, trial)
    nfo = NoisyFeasibilityOracle(setup.polytope, setup.sigma_bar, nfo_rng,
                                 strict_vicinity=cfg.strict_vicinity, r0=cfg.r0,
                                 record=cfg.record_measurements)
    sfo = StochasticGradientOracle(setup.problem.objective, cfg.sigma0, sfo_rng, d=setup.polytope.d)
    return reliable_fw(cfg, setup.problem.objective, nfo, sfo, setup.problem.x0, setup.constants, setup.T,
                       box_half_width=setup.box_half_width, truth=setup.polytope, rng=draw_rng,
                       sigma_bar=setup.sigma_bar)
