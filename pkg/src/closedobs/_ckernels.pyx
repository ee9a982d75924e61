# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled distance and Shepard-evaluation kernels."""

import numpy as np

cimport numpy as cnp
from libc.math cimport pow, sqrt

cnp.import_array()


def pairwise_distances(const double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t p = x.shape[1]
    out_arr = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, l
    cdef double acc, diff
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.0
            for l in range(p):
                diff = x[i, l] - x[j, l]
                acc += diff * diff
            acc = sqrt(acc)
            out[i, j] = acc
            out[j, i] = acc
    return out_arr


def cross_distances(const double[:, ::1] q, const double[:, ::1] x):
    cdef Py_ssize_t nq = q.shape[0]
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t p = x.shape[1]
    out_arr = np.empty((nq, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, l
    cdef double acc, diff
    for i in range(nq):
        for j in range(n):
            acc = 0.0
            for l in range(p):
                diff = q[i, l] - x[j, l]
                acc += diff * diff
            out[i, j] = sqrt(acc)
    return out_arr


def shepard_eval(const double[:, ::1] queries, const double[:, ::1] nodes,
                 const double[:, ::1] values, Py_ssize_t k, double power,
                 double exact_tol):
    cdef Py_ssize_t nq = queries.shape[0]
    cdef Py_ssize_t n = nodes.shape[0]
    cdef Py_ssize_t p = nodes.shape[1]
    cdef Py_ssize_t m = values.shape[1]
    if k > n:
        k = n
    out_arr = np.zeros((nq, m), dtype=np.float64)
    near_arr = np.empty(nq, dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] near = near_arr
    best_d_arr = np.empty(k, dtype=np.float64)
    best_i_arr = np.empty(k, dtype=np.intp)
    cdef double[::1] best_d = best_d_arr
    cdef Py_ssize_t[::1] best_i = best_i_arr
    cdef Py_ssize_t q, i, j, l, pos, cnt
    cdef double acc, diff, d, w, wsum

    for q in range(nq):
        cnt = 0
        for i in range(n):
            acc = 0.0
            for l in range(p):
                diff = queries[q, l] - nodes[i, l]
                acc += diff * diff
            d = sqrt(acc)
            if cnt < k:
                pos = cnt
                while pos > 0 and best_d[pos - 1] > d:
                    best_d[pos] = best_d[pos - 1]
                    best_i[pos] = best_i[pos - 1]
                    pos -= 1
                best_d[pos] = d
                best_i[pos] = i
                cnt += 1
            elif d < best_d[k - 1]:
                pos = k - 1
                while pos > 0 and best_d[pos - 1] > d:
                    best_d[pos] = best_d[pos - 1]
                    best_i[pos] = best_i[pos - 1]
                    pos -= 1
                best_d[pos] = d
                best_i[pos] = i
        near[q] = best_d[0]
        if best_d[0] <= exact_tol:
            for l in range(m):
                out[q, l] = values[best_i[0], l]
            continue
        wsum = 0.0
        for j in range(cnt):
            w = pow(best_d[j], -power)
            wsum += w
            for l in range(m):
                out[q, l] += w * values[best_i[j], l]
        for l in range(m):
            out[q, l] /= wsum
    return out_arr, near_arr
