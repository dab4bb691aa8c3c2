"""Batch numerical checks of the bounds the safety and convergence analysis rests on.

Every suite returns a plain dict: ``{"suite", "passed", "margin", ...}`` where
``margin`` is the worst slack observed (negative means a violation).
"""
import math
import time

import numpy as np

from .. import geometry, solver
from ..estimation import (
    LeastSquaresState,
    beta_of,
    collect_data_points,
    ellipsoid_contains,
    psi_inverse,
)
from ..gradient import storm_error_bound, storm_init, storm_update
from ..oracles import (
    NoisyFeasibilityOracle,
    StochasticGradientOracle,
    cutting_machine_problem,
    random_polytope,
    synthetic_problem,
)


def binomial_se(p, n):
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


def wilson_interval(k, n, z=1.96):
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        return (0.0, 1.0)
    p = k / n
    den = 1.0 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return (max(0.0, mid - half), min(1.0, mid + half))


def _timed(fn):
    def wrapper(*args, **kw):
        t0 = time.perf_counter()
        out = fn(*args, **kw)
        out["seconds"] = round(time.perf_counter() - t0, 3)
        return out
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _dirichlet_points(V, k, rng):
    W = rng.dirichlet(np.ones(len(V)), size=k)
    return W @ V


# --------------------------------------------------------------------------

@_timed
def shrinkage(n_polytopes=200, n_points=100, seed=0):
    """Distance from feasible points to the shrunk polytope is at most ``alpha * tau``."""
    rng = np.random.default_rng(seed)
    worst = np.inf
    violations = 0
    checked = 0
    for k in range(n_polytopes):
        d = 2 + (k % 2)
        m = int(rng.integers(d + 2, 2 * d + 4))
        P = random_polytope(d, m, rng)
        geom = geometry.geometry_summary(P)
        x0, _ = geometry.chebyshev_center(P)
        tau = float(np.min(P.residuals(x0))) / 2.0
        Pt = geometry.shrink(P, tau)
        bound = geom.alpha * tau + 1e-9
        for x in _dirichlet_points(geom.vertices, n_points, rng):
            dist = float(np.linalg.norm(x - geometry.project(Pt, x)))
            worst = min(worst, bound - dist)
            violations += dist > bound
            checked += 1
    return {"suite": "shrinkage", "passed": violations == 0, "margin": float(worst),
            "violations": int(violations), "checked": checked}


def qnorm_margin(trace):
    q, bound = trace.column("q_norm"), trace.column("q_bound")
    if len(q) == 0:
        return np.inf, 0
    slack = bound + 1e-12 - q
    return float(np.min(slack)), int(np.sum(slack < 0))


@_timed
def qnorm(problem="cutting-machine", variant="nonconvex-stochastic", T=200, trials=3, seed=0):
    """Spectral norm of the inverse scatter matrix along solver runs."""
    from ..oracles import get_problem
    P = get_problem(problem)
    setup = solver.prepare(P, solver.RunConfig(variant=variant, horizon=T, seed=seed))
    worst, bad, rows = np.inf, 0, 0
    for k in range(trials):
        tr = solver.run_trial(setup, k).trace
        w, b = qnorm_margin(tr)
        worst, bad, rows = min(worst, w), bad + b, rows + len(tr)
    return {"suite": "qnorm", "passed": bad == 0, "margin": worst, "violations": bad, "checked": rows}


@_timed
def estimate_error(trials=200, seed=0, sigma=0.02, r0=0.1, reps=20, zeta=0.1):
    """Vertices of the estimate lie within ``C1 / sqrt(N)`` of the true polytope.

    Checked only on trials where the confidence ellipsoid covers the truth.
    ``C1`` is evaluated with ``L_A = rho_min / (2 sqrt(d))`` of the original
    polytope.
    """
    rng = np.random.default_rng(seed)
    worst, bad, checked, covered = np.inf, 0, 0, 0
    for _ in range(trials):
        d = 2
        m = int(rng.integers(3, 6))
        raw = random_polytope(d, m, rng)
        geom = geometry.geometry_summary(raw)
        P, sbar = geometry.normalize(raw, sigma, geom)
        x0, _ = geometry.chebyshev_center(P)
        nfo = NoisyFeasibilityOracle(P, sbar, rng)
        state = LeastSquaresState(d, m)
        for x in (x0, _dirichlet_points(geom.vertices, 1, rng)[0]):
            X = collect_data_points(x, 2 * d * reps, r0)
            state.update(X, nfo.query(X))
        N = state.N
        psi = psi_inverse(N, zeta / m, d)
        if not ellipsoid_contains(state, beta_of(P), psi, sbar):
            continue
        covered += 1
        Gam = geom.radius
        C0 = math.sqrt(d * ((1.0 + Gam ** 2) / r0 ** 2 + 1.0))
        L_A = geom.rho_min / (2.0 * math.sqrt(d))
        C1 = sbar * psi * (1.0 + Gam) * C0 / L_A
        bound = C1 / math.sqrt(N)
        est = state.estimate().polytope()
        try:
            V = geometry.enumerate_vertices(est)
        except geometry.GeometryError:
            continue
        for v in V:
            dist = float(np.linalg.norm(v - geometry.project(P, v)))
            worst = min(worst, bound - dist)
            bad += dist > bound
            checked += 1
    return {"suite": "estimate_error", "passed": bad == 0, "margin": float(worst), "violations": int(bad),
            "checked": checked, "covered_trials": covered}


def storm_trajectories(trials, T, alpha=2.0 / 3.0, sigma0=0.1, seed=0, problem=None):
    """STORM errors ``|g_t - grad f(x_t)|`` along Frank-Wolfe runs on a known polytope."""
    problem = problem or synthetic_problem("trig-quad", d=2, seed=seed)
    P, obj = problem.polytope, problem.objective
    errs = np.empty((trials, T))
    for k in range(trials):
        rng = np.random.default_rng([seed, k])
        sfo = StochasticGradientOracle(obj, sigma0, rng, d=P.d)
        x = problem.x0.copy()
        x_prev = None
        state = None
        for t in range(T):
            rho = eta = (t + 2.0) ** (-alpha)
            tok = sfo.mint()
            G = sfo.query(x, tok)
            if t == 0:
                g, state = storm_init(G, x)
            else:
                g = storm_update(state, G, sfo.query(x_prev, tok), rho, x, tok.id, tok.id)
            errs[k, t] = np.linalg.norm(g - obj.gradient(x))
            v = solver.lmo(P, g)
            x_prev, x = x, solver.step(x, v, eta)
    geom = geometry.geometry_summary(P)
    return errs, obj.L, geom.diameter


@_timed
def storm_bound(trials=500, ts=(10, 50, 200), alpha=2.0 / 3.0, delta=0.1, sigma0=0.1, seed=0):
    """High-probability STORM error bound, violation frequency per checkpoint."""
    errs, L0, Lam = storm_trajectories(trials, max(ts) + 1, alpha, sigma0, seed)
    out = {"suite": "storm_bound", "checkpoints": {}}
    ok = True
    for t in ts:
        bound = storm_error_bound(t, alpha, L0, Lam, sigma0, delta)
        freq = float(np.mean(errs[:, t] > bound))
        limit = delta + 3.0 * binomial_se(delta, trials)
        out["checkpoints"][str(t)] = {"bound": bound, "max_error": float(errs[:, t].max()),
                                      "violation_freq": freq, "limit": limit}
        ok &= freq <= limit
    out["passed"] = bool(ok)
    out["margin"] = min(c["limit"] - c["violation_freq"] for c in out["checkpoints"].values())
    return out


def descent_slack(trace, consts, L):
    """Per-iterate slack of the descent inequality (only where the ellipsoid covers)."""
    f = trace.column("f")
    eta = trace.column("eta")
    N = trace.column("N_t").astype(float)
    gap = trace.column("fw_gap_true")
    ok = trace.column("ellipsoid_ok")
    G, Gt = trace.G, np.array(trace.grad_true)
    Lam = consts.diameter
    slack = []
    for t in range(len(f) - 1):
        if not ok[t]:
            continue
        c = consts.C1 / math.sqrt(N[t])
        err = float(np.linalg.norm(Gt[t] - G[t]))
        rhs = ((f[t] - f[t + 1]) / eta[t] + err * (c + 2 * Lam) + np.linalg.norm(G[t]) * c
               + 0.5 * L * eta[t] * (c + Lam) ** 2 + 1e-6)
        slack.append(rhs - gap[t])
    return np.array(slack)


@_timed
def descent(T=300, seed=0):
    """Per-iterate descent inequality along deterministic cutting-machine runs."""
    problem = cutting_machine_problem(150)
    cfg = solver.RunConfig(variant="nonconvex-deterministic", horizon=T, sigma0=0.0, seed=seed)
    setup = solver.prepare(problem, cfg)
    tr = solver.run_trial(setup, 0).trace
    s = descent_slack(tr, setup.constants, problem.objective.L)
    worst = float(s.min()) if len(s) else np.inf
    return {"suite": "descent", "passed": bool(len(s) > 0 and worst >= 0), "margin": worst,
            "checked": int(len(s))}


def coverage_trials(trials=2000, zeta=0.1, sigma=0.05, r0=0.05, reps=5, batches=3, seed=0):
    """Ellipsoid coverage indicators on one random triangle (``d=2, m=3``)."""
    rng = np.random.default_rng(seed)
    raw = random_polytope(2, 3, rng)
    geom = geometry.geometry_summary(raw)
    P, sbar = geometry.normalize(raw, sigma, geom)
    beta = beta_of(P)
    hits = np.zeros(trials, dtype=bool)
    slack = np.empty(trials)
    pts = _dirichlet_points(geom.vertices, batches, rng)
    for k in range(trials):
        nfo = NoisyFeasibilityOracle(P, sbar, np.random.default_rng([seed, k]))
        state = LeastSquaresState(2, 3)
        for x in pts:
            X = collect_data_points(x, 4 * reps, r0)
            state.update(X, nfo.query(X))
        psi = psi_inverse(state.N, zeta / 3, 2)
        q = state.quadratic_forms(beta)
        slack[k] = (psi * sbar) ** 2 - float(np.max(q))
        hits[k] = ellipsoid_contains(state, beta, psi, sbar)
    return hits, slack


@_timed
def coverage(trials=2000, zeta=0.1, seed=0):
    """Empirical frequency with which the joint confidence ellipsoid covers the truth."""
    hits, slack = coverage_trials(trials, zeta, seed=seed)
    freq = float(hits.mean())
    limit = 1.0 - zeta - 3.0 * binomial_se(1.0 - zeta, trials)
    return {"suite": "coverage", "passed": freq >= limit, "margin": freq - limit, "frequency": freq,
            "limit": limit, "ci95": wilson_interval(int(hits.sum()), trials),
            "median_radius_slack": float(np.median(slack))}


def _rel(a, b):
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def _spd(rng, n):
    G = rng.normal(size=(n, n))
    return G @ G.T + n * np.eye(n)


def _sqrtm(S):
    w, U = np.linalg.eigh(S)
    return (U * np.sqrt(w)) @ U.T


@_timed
def matrix_identities(instances=1000, tol=1e-10, seed=0):
    """Matrix identities: SMW, block inverse, ``|[I, x]|`` and ellipsoid re-parametrisation."""
    rng = np.random.default_rng(seed)
    errs = {"smw": 0.0, "block_inverse": 0.0, "stacked_norm": 0.0, "ellipsoid": 0.0, "sigma_blocks": 0.0}
    for _ in range(instances):
        n, k = int(rng.integers(2, 6)), int(rng.integers(1, 4))
        A = _spd(rng, n)
        B = rng.normal(size=(n, k))
        C = _spd(rng, k)
        D = B.T.copy()
        lhs = np.linalg.inv(A + B @ C @ D)
        Ai = np.linalg.inv(A)
        rhs = Ai - Ai @ B @ np.linalg.inv(np.linalg.inv(C) + D @ Ai @ B) @ D @ Ai
        errs["smw"] = max(errs["smw"], _rel(lhs, rhs))

        M = _spd(rng, n + k)
        A11, A12, A21, A22 = M[:n, :n], M[:n, n:], M[n:, :n], M[n:, n:]
        S1 = np.linalg.inv(A11 - A12 @ np.linalg.inv(A22) @ A21)
        D2 = np.linalg.inv(A22)
        blk = np.block([[S1, -S1 @ A12 @ D2],
                        [-D2 @ A21 @ S1, np.linalg.inv(A22 - A21 @ np.linalg.inv(A11) @ A12)]])
        errs["block_inverse"] = max(errs["block_inverse"], _rel(blk, np.linalg.inv(M)))

        x = rng.normal(size=n) * rng.uniform(0.1, 10)
        IX = np.hstack([np.eye(n), x[:, None]])
        errs["stacked_norm"] = max(errs["stacked_norm"],
                                   abs(geometry.spectral_norm(IX) - math.sqrt(1 + x @ x)) / math.sqrt(1 + x @ x))

        S = _spd(rng, n)
        x0 = rng.normal(size=n)
        r = rng.uniform(0.1, 3.0)
        u = rng.normal(size=n)
        u *= rng.uniform() ** (1.0 / n) / np.linalg.norm(u)
        pt = x0 - r * _sqrtm(S) @ u
        q = (x0 - pt) @ np.linalg.solve(S, x0 - pt)
        # membership, and the inverse map recovers u
        u_back = np.linalg.solve(_sqrtm(S), x0 - pt) / r
        e = max(max(0.0, q - r * r) / (r * r), float(np.max(np.abs(u_back - u))))
        errs["ellipsoid"] = max(errs["ellipsoid"], e)

        # inverse of the design normal matrix in block form
        X = rng.normal(size=(int(rng.integers(n + 2, 4 * n)), n))
        Xb = np.hstack([X, -np.ones((X.shape[0], 1))])
        Nn = X.shape[0]
        xbar = X.mean(axis=0)
        Q = np.linalg.inv((X - xbar).T @ (X - xbar))
        Sig = np.block([[Q, (Q @ xbar)[:, None]], [(xbar @ Q)[None, :], np.array([[1.0 / Nn + xbar @ Q @ xbar]])]])
        errs["sigma_blocks"] = max(errs["sigma_blocks"], _rel(Sig, np.linalg.inv(Xb.T @ Xb)))
    worst = max(errs.values())
    return {"suite": "identities", "passed": worst <= tol, "margin": tol - worst, "errors": errs,
            "instances": instances}


SUITES = {
    "shrinkage": shrinkage,
    "qnorm": qnorm,
    "estimate_error": estimate_error,
    "storm_bound": storm_bound,
    "descent": descent,
    "coverage": coverage,
    "identities": matrix_identities,
}


def run_suite(name, **kw):
    if name == "all":
        return [SUITES[k](**kw) for k in SUITES]
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; have {sorted(SUITES) + ['all']}")
    return SUITES[name](**kw)
