# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the two hot kernels.

Semantics mirror loomspect._scan_np exactly (same gating comparisons, same
lowest-index tie-breaking); see that module for the contract. The scoring
kernel adds early abandoning: a candidate row is dropped as soon as its
partial distance exceeds the best seen, which cannot change the result
because Manhattan partial sums only grow.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, fabs, sqrt

cnp.import_array()


def grow_bank(double[:, ::1] patches, double theta):
    cdef Py_ssize_t n = patches.shape[0]
    cdef Py_ssize_t d = patches.shape[1]
    cdef Py_ssize_t cap = 64
    weights_arr = np.zeros((cap, d), dtype=np.float64)
    norms_arr = np.zeros(cap, dtype=np.float64)
    counts_arr = np.zeros(cap, dtype=np.int64)
    assign_arr = np.empty(n, dtype=np.int64)
    cdef double[:, ::1] weights = weights_arr
    cdef double[::1] norms = norms_arr
    cdef cnp.int64_t[::1] counts = counts_arr
    cdef cnp.int64_t[::1] assign = assign_arr

    cdef Py_ssize_t m = 0, i, j, k, best_j
    cdef double pn, acc, s, best_s, denom, step

    for i in range(n):
        acc = 0.0
        for k in range(d):
            acc += patches[i, k] * patches[i, k]
        pn = sqrt(acc)

        best_j = -1
        best_s = -1.0
        for j in range(m):
            acc = 0.0
            for k in range(d):
                acc += weights[j, k] * patches[i, k]
            denom = norms[j] * pn
            if denom > 0.0:
                s = acc / denom
            else:
                s = 0.0
            if s < 0.0:
                s = 0.0
            if s > best_s:
                best_s = s
                best_j = j

        if m > 0 and best_s >= theta:
            step = <double> (counts[best_j] + 1)
            acc = 0.0
            for k in range(d):
                weights[best_j, k] += (patches[i, k] - weights[best_j, k]) / step
                acc += weights[best_j, k] * weights[best_j, k]
            norms[best_j] = sqrt(acc)
            counts[best_j] += 1
            assign[i] = best_j
        else:
            if m == cap:
                cap *= 2
                weights_arr = np.concatenate([weights_arr, np.zeros_like(weights_arr)])
                norms_arr = np.concatenate([norms_arr, np.zeros_like(norms_arr)])
                counts_arr = np.concatenate([counts_arr, np.zeros_like(counts_arr)])
                weights = weights_arr
                norms = norms_arr
                counts = counts_arr
            for k in range(d):
                weights[m, k] = patches[i, k]
            norms[m] = pn
            counts[m] = 1
            assign[i] = m
            m += 1

    return weights_arr[:m].copy(), counts_arr[:m].copy(), assign_arr


def nearest_l1(double[:, ::1] queries, double[:, ::1] bank):
    cdef Py_ssize_t n = queries.shape[0]
    cdef Py_ssize_t d = queries.shape[1]
    cdef Py_ssize_t m = bank.shape[0]
    if m == 0:
        raise ValueError("bank must contain at least one row")
    if bank.shape[1] != d:
        raise ValueError("queries and bank disagree on vector length")
    sums_arr = np.empty(n, dtype=np.float64)
    idx_arr = np.empty(n, dtype=np.int64)
    cdef double[::1] sums = sums_arr
    cdef cnp.int64_t[::1] idx = idx_arr

    cdef Py_ssize_t i, j, k, best_j
    cdef double best, acc
    cdef bint abandoned

    for i in range(n):
        best = INFINITY
        best_j = 0
        for j in range(m):
            acc = 0.0
            abandoned = False
            for k in range(d):
                acc += fabs(queries[i, k] - bank[j, k])
                if acc > best:
                    abandoned = True
                    break
            if not abandoned and acc < best:
                best = acc
                best_j = j
        sums[i] = best
        idx[i] = best_j
    return sums_arr, idx_arr
