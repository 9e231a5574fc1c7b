# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_fallback.py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport expm1, log1p, pow

cnp.import_array()


cpdef double installment_sum(double growth, long d, double eps) nogil:
    cdef double q = growth - 1.0
    if q == 0.0:
        return <double>d
    return pow(growth, 1.0 - eps) * expm1(d * log1p(q)) / q


cpdef double outcome_total(double lam, double pi_r, double p0, double eps,
                           long d, double growth) nogil:
    if lam == 1.0:
        return p0
    return lam * p0 + pi_r + installment_sum(growth, d, eps) * p0 * (1.0 - lam) / d


cdef double _income(double k, double sigma, double eps, const double[:] counts,
                    double bonus) nogil:
    cdef double total = 0.0
    cdef double factor = 1.0
    cdef double inv = 1.0 / sigma
    cdef Py_ssize_t j
    for j in range(counts.shape[0]):
        factor *= inv
        total += factor * counts[j]
    return eps * k * total + bonus


def income_total(double k, double sigma, double eps, counts, double bonus):
    cdef const double[:] c = np.ascontiguousarray(counts, dtype=np.float64)
    return _income(k, sigma, eps, c, bonus)


def payoff_sigma_q(sigmas, qs, double k, double eps, double lam, double pi_r,
                   double p0, long d, counts, double bonus):
    cdef const double[:] s = np.ascontiguousarray(sigmas, dtype=np.float64)
    cdef const double[:] q = np.ascontiguousarray(qs, dtype=np.float64)
    cdef const double[:] c = np.ascontiguousarray(counts, dtype=np.float64)
    cdef Py_ssize_t n = s.shape[0], i
    out = np.empty(n)
    cdef double[:] o = out
    with nogil:
        for i in range(n):
            o[i] = _income(k, s[i], eps, c, bonus) - outcome_total(
                lam, pi_r, p0, eps, d, 1.0 + q[i])
    return out


def game_payoff_table(gain, cost, eps, psi, sizes, double fixed_reward):
    cdef const double[:] g = np.ascontiguousarray(gain, dtype=np.float64)
    cdef const double[:] c = np.ascontiguousarray(cost, dtype=np.float64)
    cdef const double[:] e = np.ascontiguousarray(eps, dtype=np.float64)
    cdef const double[:] s = np.ascontiguousarray(psi, dtype=np.float64)
    cdef const long[:] sz = np.ascontiguousarray(sizes, dtype=np.int64)
    cdef Py_ssize_t n = sz.shape[0]
    cdef Py_ssize_t total = 1, p, q, flat, rem
    for p in range(n):
        total *= sz[p]
    offsets_arr = np.zeros(n, dtype=np.int64)
    cdef long[:] off = offsets_arr
    for p in range(1, n):
        off[p] = off[p - 1] + sz[p - 1]
    cur_arr = np.zeros(n, dtype=np.int64)
    cdef long[:] cur = cur_arr
    out = np.empty((n, total))
    cdef double[:, :] o = out
    cdef long rank
    cdef bint beats
    with nogil:
        for flat in range(total):
            rem = flat
            for p in range(n - 1, -1, -1):
                cur[p] = off[p] + rem % sz[p]
                rem = rem // sz[p]
            for p in range(n):
                rank = 0
                beats = True
                for q in range(n):
                    if q == p:
                        continue
                    if s[cur[q]] < s[cur[p]]:
                        rank += 1
                    if not (e[cur[p]] > e[cur[q]]):
                        beats = False
                o[p, flat] = g[cur[p]] * (n - rank) - c[cur[p]]
                if beats:
                    o[p, flat] += fixed_reward
    return out
