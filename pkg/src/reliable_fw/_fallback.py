"""Pure-Python reference kernels.

These are picked up at import time when the compiled ``_kernels`` extension
is missing (or when ``RELIABLE_FW_PURE=1`` is set).  The compiled module
implements the same three entry points with the same pivoting and
tie-breaking rules, so both backends return the same points on
non-degenerate input.
"""
from itertools import combinations

import numpy as np

LP_OPTIMAL = 0
LP_INFEASIBLE = 1
LP_UNBOUNDED = 2

_PIVOT_TOL = 1e-11
_COST_TOL = 1e-10


def _normalized_rows(A, b):
    norms = np.sqrt(np.einsum("ij,ij->i", A, A))
    keep = norms > 0.0
    if np.any(~keep) and np.any(b[~keep] < 0.0):
        return None, None
    return A[keep] / norms[keep, None], b[keep] / norms[keep]


def _lex_negative(col, tol):
    for v in col:
        if v < -tol:
            return True
        if v > tol:
            return False
    return False


def _pivot(T, R, basis, row, col):
    T[row] /= T[row, col]
    for i in range(T.shape[0]):
        if i != row and T[i, col] != 0.0:
            T[i] -= T[i, col] * T[row]
    for k in range(R.shape[0]):
        if R[k, col] != 0.0:
            R[k] -= R[k, col] * T[row]
    basis[row] = col


def _leaving_row(T, basis, col):
    rows = np.flatnonzero(T[:, col] > _PIVOT_TOL)
    if rows.size == 0:
        return -1
    ratios = T[rows, -1] / T[rows, col]
    best = ratios.min()
    ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
    # Bland: smallest basic variable index among the tied rows
    return int(ties[np.argmin(basis[ties])])


def _run_simplex(T, R, basis, ncols, max_iter):
    """Bland-rule primal simplex on tableau ``T`` with lexicographic cost rows ``R``."""
    for _ in range(max_iter):
        col = -1
        for j in range(ncols):
            if _lex_negative(R[:, j], _COST_TOL):
                col = j
                break
        if col < 0:
            return LP_OPTIMAL
        row = _leaving_row(T, basis, col)
        if row < 0:
            return LP_UNBOUNDED
        _pivot(T, R, basis, row, col)
    raise RuntimeError("simplex iteration limit reached")


def _snap_to_vertex(A, b, x):
    """Re-solve the d tightest independent constraints exactly."""
    d = A.shape[1]
    norms = np.sqrt(np.einsum("ij,ij->i", A, A))
    slack = (b - A @ x) / norms
    scale = max(1.0, float(np.max(np.abs(x))))
    order = np.argsort(np.abs(slack), kind="stable")
    chosen, basis = [], []
    for i in order:
        if abs(slack[i]) > 1e-7 * scale:
            break
        # Gram-Schmidt residual of the candidate normal against those kept
        r = A[i] / norms[i]
        for q in basis:
            r = r - (q @ r) * q
        rn = np.linalg.norm(r)
        if rn > 1e-9:
            chosen.append(int(i))
            basis.append(r / rn)
            if len(chosen) == d:
                break
    if len(chosen) < d:
        return x
    y = np.linalg.solve(A[chosen], b[chosen])
    if np.max(A @ y - b) <= max(np.max(A @ x - b), 0.0) + 1e-12 * scale * norms.max():
        return y
    return x


def lp_min(A, b, c):
    """Minimise ``c @ x`` over ``{x : A x <= b}`` with ``x`` free.

    Ties between optimal vertices are broken lexicographically, i.e. the
    returned point minimises ``(c @ x, x[0], x[1], ...)`` in order.

    Returns
    -------
    status : int
        ``LP_OPTIMAL``, ``LP_INFEASIBLE`` or ``LP_UNBOUNDED``.
    x : ndarray or None
    """
    A = np.ascontiguousarray(A, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    c = np.ascontiguousarray(c, dtype=float)
    An, bn = _normalized_rows(A, b)
    if An is None:
        return LP_INFEASIBLE, None
    m, d = An.shape
    neg = bn < 0.0
    n_art = int(neg.sum())
    nvar = 2 * d + m
    ncols = nvar + n_art
    T = np.zeros((m, ncols + 1))
    T[:, :d] = An
    T[:, d:2 * d] = -An
    T[np.arange(m), 2 * d + np.arange(m)] = 1.0
    T[:, -1] = bn
    T[neg] *= -1.0
    basis = 2 * d + np.arange(m)
    art_rows = np.flatnonzero(neg)
    T[art_rows, nvar + np.arange(n_art)] = 1.0
    basis[art_rows] = nvar + np.arange(n_art)
    max_iter = 200 * (ncols + m + 10)

    if n_art:
        cost = np.zeros(ncols + 1)
        cost[nvar:ncols] = 1.0
        R = cost[None, :] - T[art_rows].sum(axis=0)[None, :]
        R[0, nvar:ncols] = 0.0
        _run_simplex(T, R, basis, ncols, max_iter)
        if -R[0, -1] > 1e-9:
            return LP_INFEASIBLE, None
        # drive remaining artificials out of the basis
        keep = np.ones(m, dtype=bool)
        for i in range(m):
            if basis[i] >= nvar:
                cand = np.flatnonzero(np.abs(T[i, :nvar]) > _PIVOT_TOL)
                if cand.size:
                    _pivot(T, R, basis, i, int(cand[0]))
                else:
                    keep[i] = False
        T = np.delete(T[keep], np.s_[nvar:ncols], axis=1)
        basis = basis[keep]
        ncols = nvar

    cnorm = float(np.max(np.abs(c))) if c.size else 0.0
    C = np.zeros((d + 1, ncols + 1))
    if cnorm > 0.0:
        C[0, :d] = c / cnorm
        C[0, d:2 * d] = -c / cnorm
    C[1 + np.arange(d), np.arange(d)] = 1.0
    C[1 + np.arange(d), d + np.arange(d)] = -1.0
    R = C - C[:, basis] @ T
    status = _run_simplex(T, R, basis, ncols, max_iter)
    if status != LP_OPTIMAL:
        return status, None
    z = np.zeros(ncols)
    z[basis] = T[:, -1]
    x = z[:d] - z[d:2 * d]
    return LP_OPTIMAL, _snap_to_vertex(A, b, x) + 0.0


def phase_one_feasible(A, b):
    status, _ = lp_min(A, b, np.zeros(A.shape[1]))
    return status != LP_INFEASIBLE


def feasible_intersections(A, b, tol=1e-9, cap=10 ** 6):
    """Feasible intersections of ``d`` independent constraint boundaries.

    Duplicates (degenerate vertices) are kept; see ``dedupe``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, d = A.shape
    if m < d:
        return np.empty((0, d))
    combos = np.array(list(combinations(range(m), d)), dtype=np.intp)
    if combos.shape[0] > cap:
        raise ValueError("vertex enumeration cap exceeded")
    norms = np.sqrt(np.einsum("ij,ij->i", A, A))
    sub = A[combos] / norms[combos][:, :, None]
    sv = np.linalg.svd(sub, compute_uv=False)
    ok = sv[:, -1] > 1e-12 * sv[:, 0]
    combos = combos[ok]
    if combos.shape[0] == 0:
        return np.empty((0, d))
    pts = np.linalg.solve(A[combos], b[combos][:, :, None])[:, :, 0]
    scale = np.maximum(1.0, np.max(np.abs(pts), axis=1))
    slack = (b[None, :] - pts @ A.T) / norms[None, :]
    feas = np.all(slack >= -tol * scale[:, None], axis=1)
    return pts[feas]


def dedupe(pts, tol=1e-9):
    """Lexicographically sorted points with near-duplicates merged."""
    if pts.shape[0] == 0:
        return pts
    # sort on rounded keys so last-bit noise does not reorder equal coordinates
    keys = np.round(pts, 9)
    order = np.lexsort(keys.T[::-1])
    pts = pts[order]
    out = []
    for p in pts:
        if not any(np.linalg.norm(p - q) <= tol * max(1.0, np.max(np.abs(p))) for q in out):
            out.append(p)
    return np.array(out)


def project(A, b, x, tol=1e-10):
    """Euclidean projection of ``x`` onto ``{y : A y <= b}`` by active-set search.

    Candidate active sets are scanned by size and then in lexicographic
    order; the first one whose KKT conditions hold is returned.  If rounding
    rejects every candidate the closest feasible candidate is used.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    x = np.asarray(x, dtype=float)
    m, d = A.shape
    norms = np.sqrt(np.einsum("ij,ij->i", A, A))
    An = A / norms[:, None]
    bn = b / norms
    scale = max(1.0, float(np.max(np.abs(x))))
    ftol = tol * scale
    if np.all(bn - An @ x >= -ftol):
        return x.copy()
    best, best_dist = None, np.inf
    for k in range(1, min(d, m) + 1):
        combos = np.array(list(combinations(range(m), k)), dtype=np.intp)
        S = An[combos]
        G = S @ np.swapaxes(S, 1, 2)
        sv = np.linalg.svd(G, compute_uv=False)
        ok = sv[:, -1] > 1e-12 * sv[:, 0]
        if not np.any(ok):
            continue
        combos, S, G = combos[ok], S[ok], G[ok]
        rhs = S @ x - bn[combos]
        lam = np.linalg.solve(G, rhs[:, :, None])[:, :, 0]
        ys = x[None, :] - np.einsum("kij,ki->kj", S, lam)
        feas = np.all(bn[None, :] - ys @ An.T >= -ftol, axis=1)
        kkt = feas & np.all(lam >= -tol, axis=1)
        if np.any(kkt):
            return ys[int(np.argmax(kkt))]
        if np.any(feas):
            dist = np.linalg.norm(ys[feas] - x, axis=1)
            j = int(np.argmin(dist))
            if dist[j] < best_dist:
                best, best_dist = ys[feas][j], dist[j]
    if best is None:
        raise ValueError("projection onto an empty polytope")
    return best
