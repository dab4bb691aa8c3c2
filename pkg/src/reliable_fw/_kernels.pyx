# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: dense simplex LMO, vertex enumeration, active-set projection.

Same entry points, pivot rules and tolerances as ``_fallback``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()

cdef double PIVOT_TOL = 1e-11
cdef double COST_TOL = 1e-10

LP_OPTIMAL = 0
LP_INFEASIBLE = 1
LP_UNBOUNDED = 2


cdef void _pivot(double[:, ::1] T, double[:, ::1] R, Py_ssize_t[::1] basis,
                 Py_ssize_t nrows, Py_ssize_t width, Py_ssize_t row, Py_ssize_t col) nogil:
    cdef Py_ssize_t i, j, k
    cdef double p = T[row, col], f
    for j in range(width):
        T[row, j] /= p
    for i in range(nrows):
        if i != row:
            f = T[i, col]
            if f != 0.0:
                for j in range(width):
                    T[i, j] -= f * T[row, j]
    for k in range(R.shape[0]):
        f = R[k, col]
        if f != 0.0:
            for j in range(width):
                R[k, j] -= f * T[row, j]
    basis[row] = col


cdef int _run_simplex(double[:, ::1] T, double[:, ::1] R, Py_ssize_t[::1] basis,
                      Py_ssize_t nrows, Py_ssize_t ncols, Py_ssize_t width,
                      Py_ssize_t max_iter) nogil:
    cdef Py_ssize_t it, j, k, i, col, row
    cdef double v, best, ratio, lim
    for it in range(max_iter):
        col = -1
        for j in range(ncols):
            for k in range(R.shape[0]):
                v = R[k, j]
                if v < -COST_TOL:
                    col = j
                    break
                if v > COST_TOL:
                    break
            if col >= 0:
                break
        if col < 0:
            return 0
        best = 1e308
        for i in range(nrows):
            if T[i, col] > PIVOT_TOL:
                ratio = T[i, width - 1] / T[i, col]
                if ratio < best:
                    best = ratio
        if best == 1e308:
            return 2
        lim = best + 1e-12 * (fabs(best) if fabs(best) > 1.0 else 1.0)
        row = -1
        for i in range(nrows):
            if T[i, col] > PIVOT_TOL:
                ratio = T[i, width - 1] / T[i, col]
                if ratio <= lim and (row < 0 or basis[i] < basis[row]):
                    row = i
        _pivot(T, R, basis, nrows, width, row, col)
    return -1


cdef object _snap_to_vertex(const double[:, ::1] A, const double[::1] b, double[::1] x):
    cdef Py_ssize_t m = A.shape[0], d = A.shape[1]
    cdef Py_ssize_t i, j, k, q, nchosen = 0
    cdef double scale = 1.0, s, rn, dot, vx, vy, tol_add, amax = 0.0
    cdef double[::1] norms = np.empty(m)
    cdef double[::1] slack = np.empty(m)
    cdef double[:, ::1] Q = np.empty((d, d))
    cdef double[::1] r = np.empty(d)
    cdef Py_ssize_t[::1] order = np.empty(m, dtype=np.intp)
    cdef Py_ssize_t[::1] chosen = np.empty(d, dtype=np.intp)
    for j in range(d):
        if fabs(x[j]) > scale:
            scale = fabs(x[j])
    for i in range(m):
        s = 0.0
        for j in range(d):
            s += A[i, j] * A[i, j]
        norms[i] = sqrt(s)
        if norms[i] > amax:
            amax = norms[i]
        s = b[i]
        for j in range(d):
            s -= A[i, j] * x[j]
        slack[i] = fabs(s / norms[i])
        order[i] = i
    # stable insertion sort by |slack|
    for i in range(1, m):
        k = order[i]
        j = i - 1
        while j >= 0 and slack[order[j]] > slack[k]:
            order[j + 1] = order[j]
            j -= 1
        order[j + 1] = k
    for q in range(m):
        i = order[q]
        if slack[i] > 1e-7 * scale:
            break
        for j in range(d):
            r[j] = A[i, j] / norms[i]
        for k in range(nchosen):
            dot = 0.0
            for j in range(d):
                dot += Q[k, j] * r[j]
            for j in range(d):
                r[j] -= dot * Q[k, j]
        rn = 0.0
        for j in range(d):
            rn += r[j] * r[j]
        rn = sqrt(rn)
        if rn > 1e-9:
            for j in range(d):
                Q[nchosen, j] = r[j] / rn
            chosen[nchosen] = i
            nchosen += 1
            if nchosen == d:
                break
    xa = np.asarray(x).copy()
    if nchosen < d:
        return xa
    idx = np.asarray(chosen)
    Aa = np.asarray(A)
    ba = np.asarray(b)
    y = np.linalg.solve(Aa[idx], ba[idx])
    vx = float(np.max(Aa @ xa - ba))
    vy = float(np.max(Aa @ y - ba))
    tol_add = 1e-12 * scale * amax
    if vy <= (vx if vx > 0.0 else 0.0) + tol_add:
        return y
    return xa


def lp_min(A, b, c):
    """Minimise ``c @ x`` over ``{x : A x <= b}``; lexicographic tie-break."""
    cdef const double[:, ::1] Ac = np.ascontiguousarray(A, dtype=np.float64)
    cdef const double[::1] bc = np.ascontiguousarray(b, dtype=np.float64)
    cdef const double[::1] cc = np.ascontiguousarray(c, dtype=np.float64)
    cdef Py_ssize_t m0 = Ac.shape[0], d = Ac.shape[1]
    cdef Py_ssize_t i, j, k, m = 0, n_art = 0, nvar, ncols, width, a, row
    cdef double s, cnorm = 0.0
    cdef int status
    norms = np.empty(m0)
    for i in range(m0):
        s = 0.0
        for j in range(d):
            s += Ac[i, j] * Ac[i, j]
        norms[i] = sqrt(s)
        if norms[i] > 0.0:
            m += 1
            if bc[i] < 0.0:
                n_art += 1
        elif bc[i] < 0.0:
            return LP_INFEASIBLE, None
    nvar = 2 * d + m
    ncols = nvar + n_art
    width = ncols + 1
    cdef double[:, ::1] T = np.zeros((m, width))
    cdef Py_ssize_t[::1] basis = np.empty(m, dtype=np.intp)
    cdef double[:, ::1] R
    cdef double sign, nb
    row = 0
    a = 0
    for i in range(m0):
        if norms[i] == 0.0:
            continue
        nb = bc[i] / norms[i]
        sign = -1.0 if nb < 0.0 else 1.0
        for j in range(d):
            T[row, j] = sign * Ac[i, j] / norms[i]
            T[row, d + j] = -sign * Ac[i, j] / norms[i]
        T[row, 2 * d + row] = sign
        T[row, width - 1] = sign * nb
        if nb < 0.0:
            T[row, nvar + a] = 1.0
            basis[row] = nvar + a
            a += 1
        else:
            basis[row] = 2 * d + row
        row += 1
    cdef Py_ssize_t max_iter = 200 * (ncols + m + 10)

    if n_art > 0:
        R = np.zeros((1, width))
        for j in range(nvar, ncols):
            R[0, j] = 1.0
        for i in range(m):
            if basis[i] >= nvar:
                for j in range(width):
                    R[0, j] -= T[i, j]
        for j in range(nvar, ncols):
            R[0, j] = 0.0
        status = _run_simplex(T, R, basis, m, ncols, width, max_iter)
        if status < 0:
            raise RuntimeError("simplex iteration limit reached")
        if -R[0, width - 1] > 1e-9:
            return LP_INFEASIBLE, None
        keep = np.ones(m, dtype=bool)
        for i in range(m):
            if basis[i] >= nvar:
                k = -1
                for j in range(nvar):
                    if fabs(T[i, j]) > PIVOT_TOL:
                        k = j
                        break
                if k >= 0:
                    _pivot(T, R, basis, m, width, i, k)
                else:
                    keep[i] = False
        Tn = np.delete(np.asarray(T)[keep], np.s_[nvar:ncols], axis=1)
        T = np.ascontiguousarray(Tn)
        basis = np.ascontiguousarray(np.asarray(basis)[keep])
        m = T.shape[0]
        ncols = nvar
        width = ncols + 1

    for j in range(d):
        if fabs(cc[j]) > cnorm:
            cnorm = fabs(cc[j])
    cdef double[:, ::1] C = np.zeros((d + 1, width))
    if cnorm > 0.0:
        for j in range(d):
            C[0, j] = cc[j] / cnorm
            C[0, d + j] = -cc[j] / cnorm
    for j in range(d):
        C[1 + j, j] = 1.0
        C[1 + j, d + j] = -1.0
    R = np.array(C)
    for k in range(d + 1):
        for i in range(m):
            s = C[k, basis[i]]
            if s != 0.0:
                for j in range(width):
                    R[k, j] -= s * T[i, j]
    status = _run_simplex(T, R, basis, m, ncols, width, max_iter)
    if status < 0:
        raise RuntimeError("simplex iteration limit reached")
    if status == 2:
        return LP_UNBOUNDED, None
    cdef double[::1] x = np.zeros(d)
    for i in range(m):
        if basis[i] < d:
            x[basis[i]] += T[i, width - 1]
        elif basis[i] < 2 * d:
            x[basis[i] - d] -= T[i, width - 1]
    return LP_OPTIMAL, _snap_to_vertex(Ac, bc, x) + 0.0


def phase_one_feasible(A, b):
    status, _ = lp_min(A, b, np.zeros(np.asarray(A).shape[1]))
    return status != LP_INFEASIBLE


cdef bint _next_combo(Py_ssize_t[::1] idx, Py_ssize_t k, Py_ssize_t n) nogil:
    cdef Py_ssize_t i = k - 1, j
    while i >= 0 and idx[i] == n - k + i:
        i -= 1
    if i < 0:
        return False
    idx[i] += 1
    for j in range(i + 1, k):
        idx[j] = idx[j - 1] + 1
    return True


cdef bint _solve_small(double[:, ::1] M, double[::1] rhs, double[::1] out,
                       Py_ssize_t n, double sing_tol) nogil:
    """Gaussian elimination with partial pivoting; destroys ``M`` and ``rhs``."""
    cdef Py_ssize_t i, j, k, p
    cdef double f, t
    for k in range(n):
        p = k
        for i in range(k + 1, n):
            if fabs(M[i, k]) > fabs(M[p, k]):
                p = i
        if fabs(M[p, k]) <= sing_tol:
            return False
        if p != k:
            for j in range(n):
                t = M[k, j]
                M[k, j] = M[p, j]
                M[p, j] = t
            t = rhs[k]
            rhs[k] = rhs[p]
            rhs[p] = t
        for i in range(k + 1, n):
            f = M[i, k] / M[k, k]
            if f != 0.0:
                for j in range(k, n):
                    M[i, j] -= f * M[k, j]
                rhs[i] -= f * rhs[k]
    for i in range(n - 1, -1, -1):
        t = rhs[i]
        for j in range(i + 1, n):
            t -= M[i, j] * out[j]
        out[i] = t / M[i, i]
    return True


def feasible_intersections(A, b, double tol=1e-9, cap=10 ** 6):
    """Feasible intersections of ``d`` independent constraint boundaries."""
    from math import comb
    cdef const double[:, ::1] Ac = np.ascontiguousarray(A, dtype=np.float64)
    cdef const double[::1] bc = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t m = Ac.shape[0], d = Ac.shape[1]
    cdef Py_ssize_t i, j, k, r
    cdef double s, scale, ok
    if m < d:
        return np.empty((0, d))
    if comb(m, d) > cap:
        raise ValueError("vertex enumeration cap exceeded")
    cdef double[::1] norms = np.empty(m)
    for i in range(m):
        s = 0.0
        for j in range(d):
            s += Ac[i, j] * Ac[i, j]
        norms[i] = sqrt(s)
    cdef Py_ssize_t[::1] idx = np.arange(d, dtype=np.intp)
    cdef double[:, ::1] M = np.empty((d, d))
    cdef double[::1] rhs = np.empty(d)
    cdef double[::1] v = np.empty(d)
    out = []
    while True:
        for k in range(d):
            r = idx[k]
            for j in range(d):
                M[k, j] = Ac[r, j] / norms[r]
            rhs[k] = bc[r] / norms[r]
        if _solve_small(M, rhs, v, d, 1e-12):
            scale = 1.0
            for j in range(d):
                if fabs(v[j]) > scale:
                    scale = fabs(v[j])
            ok = 1.0
            for i in range(m):
                s = bc[i]
                for j in range(d):
                    s -= Ac[i, j] * v[j]
                if s / norms[i] < -tol * scale:
                    ok = 0.0
                    break
            if ok > 0.0:
                out.append(np.asarray(v).copy())
        if not _next_combo(idx, d, m):
            break
    if not out:
        return np.empty((0, d))
    return np.array(out)


def project(A, b, x, double tol=1e-10):
    """Euclidean projection onto ``{y : A y <= b}`` by active-set search."""
    cdef const double[:, ::1] Ac = np.ascontiguousarray(A, dtype=np.float64)
    cdef const double[::1] bc = np.ascontiguousarray(b, dtype=np.float64)
    cdef const double[::1] xc = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t m = Ac.shape[0], d = Ac.shape[1]
    cdef Py_ssize_t i, j, k, p, q, kk
    cdef double s, scale = 1.0, ftol, dist, best_dist = 1e308
    cdef bint feas, kkt
    cdef double[:, ::1] An = np.empty((m, d))
    cdef double[::1] bn = np.empty(m)
    for i in range(m):
        s = 0.0
        for j in range(d):
            s += Ac[i, j] * Ac[i, j]
        s = sqrt(s)
        for j in range(d):
            An[i, j] = Ac[i, j] / s
        bn[i] = bc[i] / s
    for j in range(d):
        if fabs(xc[j]) > scale:
            scale = fabs(xc[j])
    ftol = tol * scale
    feas = True
    for i in range(m):
        s = bn[i]
        for j in range(d):
            s -= An[i, j] * xc[j]
        if s < -ftol:
            feas = False
            break
    if feas:
        return np.asarray(xc).copy()
    cdef Py_ssize_t kmax = d if d < m else m
    cdef Py_ssize_t[::1] idx = np.empty(kmax, dtype=np.intp)
    cdef double[:, ::1] G = np.empty((kmax, kmax))
    cdef double[::1] rhs = np.empty(kmax)
    cdef double[::1] lam = np.empty(kmax)
    cdef double[::1] y = np.empty(d)
    cdef double[::1] best = np.empty(d)
    cdef bint have_best = False
    cdef double gmax
    for k in range(1, kmax + 1):
        for j in range(k):
            idx[j] = j
        while True:
            gmax = 0.0
            for p in range(k):
                for q in range(k):
                    s = 0.0
                    for j in range(d):
                        s += An[idx[p], j] * An[idx[q], j]
                    G[p, q] = s
                s = -bn[idx[p]]
                for j in range(d):
                    s += An[idx[p], j] * xc[j]
                rhs[p] = s
            if _solve_small(G, rhs, lam, k, 1e-12):
                for j in range(d):
                    s = xc[j]
                    for p in range(k):
                        s -= An[idx[p], j] * lam[p]
                    y[j] = s
                feas = True
                for i in range(m):
                    s = bn[i]
                    for j in range(d):
                        s -= An[i, j] * y[j]
                    if s < -ftol:
                        feas = False
                        break
                if feas:
                    kkt = True
                    for p in range(k):
                        if lam[p] < -tol:
                            kkt = False
                            break
                    if kkt:
                        return np.asarray(y).copy()
                    dist = 0.0
                    for j in range(d):
                        dist += (y[j] - xc[j]) * (y[j] - xc[j])
                    dist = sqrt(dist)
                    if dist < best_dist:
                        best_dist = dist
                        have_best = True
                        for j in range(d):
                            best[j] = y[j]
            if not _next_combo(idx, k, m):
                break
    if not have_best:
        raise ValueError("projection onto an empty polytope")
    return np.asarray(best).copy()
