# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: the relaxed multiple-choice knapsack LMO and batched
prefix sums used for discrete latency and score evaluation.

Mirrors ``_kernels_py`` exactly, including tie-breaking.
"""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free, qsort

cnp.import_array()

cdef double FEAS_TOL = 1e-9


cdef struct Upgrade:
    double neg_eff
    int g
    int k
    double dc


cdef int _cmp_upgrade(const void* pa, const void* pb) noexcept nogil:
    cdef const Upgrade* a = <const Upgrade*> pa
    cdef const Upgrade* b = <const Upgrade*> pb
    if a.neg_eff < b.neg_eff:
        return -1
    if a.neg_eff > b.neg_eff:
        return 1
    if a.g != b.g:
        return -1 if a.g < b.g else 1
    if a.k != b.k:
        return -1 if a.k < b.k else 1
    return 0


cdef inline bint _item_before(double ca, double va, int ja, double cb, double vb, int jb) noexcept nogil:
    # cost ascending, value descending, index ascending
    if ca != cb:
        return ca < cb
    if va != vb:
        return va > vb
    return ja < jb


cdef int _group_hull(const double[:] values, const double[:] costs, const unsigned char[:] mask,
                     int* order, int* hull) noexcept nogil:
    cdef int n = values.shape[0]
    cdef int m = 0
    cdef int i, j, key, h
    cdef double best, cross
    cdef int a, b
    for j in range(n):
        if mask[j]:
            key = j
            i = m - 1
            while i >= 0 and _item_before(costs[key], values[key], key,
                                          costs[order[i]], values[order[i]], order[i]):
                order[i + 1] = order[i]
                i -= 1
            order[i + 1] = key
            m += 1
    # Pareto filter in place
    cdef int kept = 0
    best = -1e308
    for i in range(m):
        j = order[i]
        if kept == 0 or values[j] > best:
            order[kept] = j
            kept += 1
            best = values[j]
    h = 0
    for i in range(kept):
        j = order[i]
        while h >= 2:
            a = hull[h - 2]
            b = hull[h - 1]
            cross = (costs[b] - costs[a]) * (values[j] - values[a]) - (values[b] - values[a]) * (costs[j] - costs[a])
            if cross >= 0.0:
                h -= 1
            else:
                break
        hull[h] = j
        h += 1
    return h


def relaxed_mckp(values, costs, mask, double budget):
    """Maximize sum(values * w) over per-group simplices with one knapsack row.

    Returns ``(weights, status, min_cost)``; ``status`` is 0 on success and 1
    when even the cheapest item of every group exceeds the budget.
    """
    cdef double[:, ::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef double[:, ::1] c = np.ascontiguousarray(costs, dtype=np.float64)
    cdef unsigned char[:, ::1] mk = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef int G = v.shape[0]
    cdef int n = v.shape[1]
    out = np.zeros((G, n), dtype=np.float64)
    cdef double[:, ::1] w = out

    cdef int g, j, k, best_j, h, a, b, t
    cdef double min_cost = 0.0, max_cost = 0.0, lo, hi, base, remaining, frac
    for g in range(G):
        lo = 1e308
        hi = -1e308
        for j in range(n):
            if mk[g, j]:
                if c[g, j] < lo:
                    lo = c[g, j]
                if c[g, j] > hi:
                    hi = c[g, j]
        min_cost += lo
        max_cost += hi
    if min_cost > budget + FEAS_TOL:
        return out, 1, min_cost

    if budget >= max_cost:
        for g in range(G):
            best_j = -1
            for j in range(n):
                if mk[g, j] and (best_j < 0 or v[g, j] > v[g, best_j]):
                    best_j = j
            w[g, best_j] = 1.0
        return out, 0, min_cost

    cdef int* order = <int*> malloc(n * sizeof(int))
    cdef int* hulls = <int*> malloc(G * n * sizeof(int))
    cdef int* hull_len = <int*> malloc(G * sizeof(int))
    cdef int* current = <int*> malloc(G * sizeof(int))
    cdef Upgrade* ups = <Upgrade*> malloc(G * n * sizeof(Upgrade))
    cdef int n_up = 0
    cdef int frac_group = -1
    try:
        base = 0.0
        for g in range(G):
            h = _group_hull(v[g], c[g], mk[g], order, &hulls[g * n])
            hull_len[g] = h
            current[g] = 0
            base += c[g, hulls[g * n]]
            for k in range(h - 1):
                a = hulls[g * n + k]
                b = hulls[g * n + k + 1]
                ups[n_up].dc = c[g, b] - c[g, a]
                ups[n_up].neg_eff = -((v[g, b] - v[g, a]) / ups[n_up].dc)
                ups[n_up].g = g
                ups[n_up].k = k
                n_up += 1
        qsort(ups, n_up, sizeof(Upgrade), _cmp_upgrade)

        remaining = budget - base
        frac = 0.0
        for t in range(n_up):
            if ups[t].dc <= remaining:
                current[ups[t].g] = ups[t].k + 1
                remaining -= ups[t].dc
            else:
                if remaining > 0.0:
                    frac_group = ups[t].g
                    frac = remaining / ups[t].dc
                break

        for g in range(G):
            j = hulls[g * n + current[g]]
            if g == frac_group:
                w[g, j] = 1.0 - frac
                w[g, hulls[g * n + current[g] + 1]] = frac
            else:
                w[g, j] = 1.0
    finally:
        free(order)
        free(hulls)
        free(hull_len)
        free(current)
        free(ups)
    return out, 0, min_cost


def prefix_gather_sum(depth, config, table):
    """Per-row sum of ``table[s, b, config[n, s, b]]`` over the first ``depth[n, s]`` blocks."""
    cdef cnp.int64_t[:, ::1] dp = np.ascontiguousarray(depth, dtype=np.int64)
    cdef cnp.int64_t[:, :, ::1] cf = np.ascontiguousarray(config, dtype=np.int64)
    cdef double[:, :, ::1] tb = np.ascontiguousarray(table, dtype=np.float64)
    cdef Py_ssize_t N = dp.shape[0]
    cdef Py_ssize_t S = dp.shape[1]
    out = np.zeros(N, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i, s, b
    cdef double acc, stage
    with nogil:
        for i in range(N):
            acc = 0.0
            for s in range(S):
                stage = 0.0
                for b in range(dp[i, s]):
                    stage = stage + tb[s, b, cf[i, s, b]]
                acc = acc + stage
            o[i] = acc
    return out
