# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops in ``_fallback``; same conventions."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, pow, sqrt, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef int _path_cmp(const long long[:] last, long a, long b, long n):
    """Lexicographic comparison of the position paths ending at a and b (equal length)."""
    cdef long *pa = <long *> malloc((n + 1) * sizeof(long))
    cdef long *pb = <long *> malloc((n + 1) * sizeof(long))
    cdef long la = 0, lb = 0, i, res = 0
    while a > 0:
        pa[la] = a
        la += 1
        a = last[a]
    while b > 0:
        pb[lb] = b
        lb += 1
        b = last[b]
    i = 0
    while i < la and i < lb:
        if pa[la - 1 - i] != pb[lb - 1 - i]:
            res = -1 if pa[la - 1 - i] < pb[lb - 1 - i] else 1
            break
        i += 1
    if res == 0 and la != lb:
        res = -1 if la < lb else 1
    free(pa)
    free(pb)
    return res


def pelt_table(double[:, :] cost, double beta, long min_size, double K=INFINITY):
    cdef long n = cost.shape[0] - 1
    F_arr = np.full(n + 1, np.inf)
    last_arr = np.full(n + 1, -1, dtype=np.int64)
    count_arr = np.zeros(n + 1, dtype=np.int64)
    cdef double[:] F = F_arr
    cdef long long[:] last = last_arr
    cdef long long[:] count = count_arr
    cdef long *R = <long *> malloc((n + 2) * sizeof(long))
    cdef long nR = 1, b, i, a, best_a, nkeep, nready
    cdef long long evaluated = 0, pruned = 0, max_cand = 0
    cdef double v, best_v, c
    cdef bint prune = K != INFINITY
    cdef long ca, cb
    F[0] = -beta
    R[0] = 0
    try:
        for b in range(min_size, n + 1):
            best_a = -1
            best_v = INFINITY
            nready = 0
            for i in range(nR):
                a = R[i]
                if b - a < min_size:
                    continue
                nready += 1
                v = (F[a] + cost[a, b]) + beta
                if v < best_v:
                    best_a = a
                    best_v = v
                elif v == best_v and best_a >= 0 and v != INFINITY:
                    ca = count[a] + (1 if a > 0 else 0)
                    cb = count[best_a] + (1 if best_a > 0 else 0)
                    if ca < cb or (ca == cb and _path_cmp(last, a, best_a, n) < 0):
                        best_a = a
            if nready == 0:
                continue
            evaluated += nready
            if nready > max_cand:
                max_cand = nready
            if best_a < 0:
                continue
            F[b] = best_v
            last[b] = best_a
            count[b] = count[best_a] + (1 if best_a > 0 else 0)
            if prune:
                nkeep = 0
                for i in range(nR):
                    a = R[i]
                    if b - a < min_size or (F[a] + cost[a, b]) - K <= F[b]:
                        R[nkeep] = a
                        nkeep += 1
                    else:
                        pruned += 1
                nR = nkeep
            R[nR] = b
            nR += 1
    finally:
        free(R)
    stats = {"evaluated": int(evaluated), "pruned": int(pruned), "max_candidates": int(max_cand)}
    return F_arr, last_arr, count_arr, stats


cdef int _known_cmp(const long long[:, :] back, long j, long a, long b):
    # walk both paths backwards; the first difference from the start decides,
    # so remember the earliest (deepest) difference seen
    cdef int res = 0
    while j >= 0:
        if a != b:
            res = -1 if a < b else 1
        a = back[j, a]
        b = back[j, b]
        j -= 1
    return res


def known_k_table(double[:, :] cost, long k, long min_size):
    cdef long n = cost.shape[0] - 1
    G_arr = np.full((k + 1, n + 1), np.inf)
    back_arr = np.full((k + 1, n + 1), -1, dtype=np.int64)
    cdef double[:, :] G = G_arr
    cdef long long[:, :] back = back_arr
    cdef long j, a, b, best_a
    cdef double v, best_v
    for b in range(min_size, n + 1):
        G[0, b] = cost[0, b]
        back[0, b] = 0
    for j in range(1, k + 1):
        for b in range((j + 1) * min_size, n + 1):
            best_a = -1
            best_v = INFINITY
            for a in range(j * min_size, b - min_size + 1):
                if G[j - 1, a] == INFINITY:
                    continue
                v = G[j - 1, a] + cost[a, b]
                if v < best_v:
                    best_a = a
                    best_v = v
                elif v == best_v and best_a >= 0 and _known_cmp(back, j - 1, a, best_a) < 0:
                    best_a = a
            G[j, b] = best_v
            back[j, b] = best_a
    return G_arr, back_arr


def rbf_cost_matrix(double[:, :] x, double gamma):
    cdef long n = x.shape[0], d = x.shape[1]
    cdef long a, b, s, k
    cdef double acc, diff, block, inner
    gram_arr = np.empty((n, n))
    out_arr = np.full((n + 1, n + 1), np.nan)
    cdef double[:, :] gram = gram_arr
    cdef double[:, :] out = out_arr
    for a in range(n):
        for b in range(a, n):
            acc = 0.0
            for k in range(d):
                diff = x[a, k] - x[b, k]
                acc = acc + diff * diff
            gram[a, b] = exp(-gamma * acc)
            gram[b, a] = gram[a, b]
    for a in range(n):
        block = 0.0
        for b in range(a, n):
            inner = 0.0
            for s in range(a, b):
                inner = inner + gram[s, b]
            block = block + (2.0 * inner + gram[b, b])
            acc = (b - a + 1) - block / (b - a + 1)
            out[a, b + 1] = acc if acc > 0.0 else 0.0
    return out_arr


# Dormand-Prince 5(4) for the Lotka-Volterra field, mirroring ``ode._solve_dopri5``

cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176
cdef double A65 = -5103.0 / 18656
cdef double A71 = 35.0 / 384, A73 = 500.0 / 1113, A74 = 125.0 / 192, A75 = -2187.0 / 6784
cdef double A76 = 11.0 / 84
cdef double E1 = 35.0 / 384 - 5179.0 / 57600, E3 = 500.0 / 1113 - 7571.0 / 16695
cdef double E4 = 125.0 / 192 - 393.0 / 640, E5 = -2187.0 / 6784 + 92097.0 / 339200
cdef double E6 = 11.0 / 84 - 187.0 / 2100, E7 = -1.0 / 40
cdef double D1 = -12715105075.0 / 11282082432, D3 = 87487479700.0 / 32700410799
cdef double D4 = -10690763975.0 / 1880347072, D5 = 701980252875.0 / 199316789632
cdef double D6 = -1453857185.0 / 822651844, D7 = 69997945.0 / 29380423


cdef inline void _lv(double al, double be, double de, double ga, double *y, double *out) noexcept nogil:
    out[0] = al * y[0] - be * y[0] * y[1]
    out[1] = de * y[0] * y[1] - ga * y[1]


def lv_solve(params, y0, times, double rtol=1e-8, double atol=1e-8, long max_steps=100000):
    """Returns ``(states, n_steps)``; raises RuntimeError(status, t) on failure.

    Status 1: step budget exhausted, 2: non-finite state, 3: step underflow.
    """
    cdef double al = params[0], be = params[1], de = params[2], ga = params[3]
    cdef double[:] tq = np.ascontiguousarray(times, dtype=np.float64)
    cdef long m = tq.shape[0], qi = 1, hi, j, i
    out_arr = np.empty((m, 2))
    cdef double[:, :] out = out_arr
    cdef double y[2]
    cdef double yn[2]
    cdef double tmp[2]
    cdef double k[7][2]
    cdef double err[2]
    cdef double t = tq[0], t_end = tq[m - 1], h, t_new, norm, sc, e, theta, th1
    cdef double r2, r3, r4, r5
    cdef long steps = 0
    cdef bint last
    y[0] = y0[0]
    y[1] = y0[1]
    out[0, 0] = y[0]
    out[0, 1] = y[1]
    if m == 1:
        return out_arr, 0
    h = (t_end - t) / 100.0
    _lv(al, be, de, ga, y, k[0])
    while qi < m:
        if steps >= max_steps:
            raise RuntimeError(1, t)
        last = h >= t_end - t
        if last:
            h = t_end - t
        for i in range(2):
            tmp[i] = y[i] + h * A21 * k[0][i]
        _lv(al, be, de, ga, tmp, k[1])
        for i in range(2):
            tmp[i] = y[i] + (k[0][i] * (h * A31) + k[1][i] * (h * A32))
        _lv(al, be, de, ga, tmp, k[2])
        for i in range(2):
            tmp[i] = y[i] + (k[0][i] * (h * A41) + k[1][i] * (h * A42) + k[2][i] * (h * A43))
        _lv(al, be, de, ga, tmp, k[3])
        for i in range(2):
            tmp[i] = y[i] + (k[0][i] * (h * A51) + k[1][i] * (h * A52) + k[2][i] * (h * A53)
                             + k[3][i] * (h * A54))
        _lv(al, be, de, ga, tmp, k[4])
        for i in range(2):
            tmp[i] = y[i] + (k[0][i] * (h * A61) + k[1][i] * (h * A62) + k[2][i] * (h * A63)
                             + k[3][i] * (h * A64) + k[4][i] * (h * A65))
        _lv(al, be, de, ga, tmp, k[5])
        for i in range(2):
            yn[i] = y[i] + (k[0][i] * (h * A71) + k[2][i] * (h * A73) + k[3][i] * (h * A74)
                            + k[4][i] * (h * A75) + k[5][i] * (h * A76))
        _lv(al, be, de, ga, yn, k[6])
        norm = 0.0
        for i in range(2):
            err[i] = (k[0][i] * (h * E1) + k[2][i] * (h * E3) + k[3][i] * (h * E4)
                      + k[4][i] * (h * E5) + k[5][i] * (h * E6) + k[6][i] * (h * E7))
            sc = atol + rtol * max(fabs(y[i]), fabs(yn[i]))
            e = err[i] / sc
            norm += e * e
        norm = sqrt(norm / 2.0)
        if norm != norm or norm == INFINITY:
            raise RuntimeError(2, t)
        steps += 1
        if norm <= 1.0:
            t_new = t_end if last else t + h
            if not (yn[0] == yn[0] and yn[1] == yn[1]) or fabs(yn[0]) == INFINITY \
                    or fabs(yn[1]) == INFINITY:
                raise RuntimeError(2, t_new)
            hi = qi
            while hi < m and tq[hi] <= t_new:
                hi += 1
            for j in range(qi, hi):
                if tq[j] == t_new:
                    out[j, 0] = yn[0]
                    out[j, 1] = yn[1]
                    continue
                theta = (tq[j] - t) / h
                th1 = 1.0 - theta
                for i in range(2):
                    r2 = yn[i] - y[i]
                    r3 = k[0][i] * h - r2
                    r4 = r2 - k[6][i] * h - r3
                    r5 = (k[0][i] * (h * D1) + k[2][i] * (h * D3) + k[3][i] * (h * D4)
                          + k[4][i] * (h * D5) + k[5][i] * (h * D6) + k[6][i] * (h * D7))
                    out[j, i] = y[i] + (r2 + (r3 + (r4 + r5 * th1) * theta) * th1) * theta
            qi = hi
            t = t_new
            y[0] = yn[0]
            y[1] = yn[1]
            k[0][0] = k[6][0]
            k[0][1] = k[6][1]
        if norm == 0.0:
            h = h * 5.0
        else:
            h = h * min(5.0, max(0.2, 0.9 * pow(norm, -0.2)))
        if h <= 1e-14 * max(1.0, fabs(t)):
            raise RuntimeError(3, t)
    return out_arr, steps
