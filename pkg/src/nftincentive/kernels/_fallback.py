"""Pure-Python implementations of the numeric kernels.

Every function here has a twin with the same signature in ``_ckernels.pyx``.
"""
import math

import numpy as np


def installment_sum(growth, d, eps):
    # sum_{j=1..d} growth**(j - eps), via expm1/log1p so growth ~ 1 stays accurate
    q = growth - 1.0
    if q == 0.0:
        return float(d)
    return growth ** (1.0 - eps) * math.expm1(d * math.log1p(q)) / q


def outcome_total(lam, pi_r, p0, eps, d, growth):
    if lam == 1.0:
        return p0
    return lam * p0 + pi_r + installment_sum(growth, d, eps) * p0 * (1.0 - lam) / d


def income_total(k, sigma, eps, counts, bonus):
    total = 0.0
    factor = 1.0
    inv = 1.0 / sigma
    for c in counts:
        factor *= inv
        total += factor * c
    return eps * k * total + bonus


def payoff_sigma_q(sigmas, qs, k, eps, lam, pi_r, p0, d, counts, bonus):
    sigmas = np.asarray(sigmas, dtype=np.float64)
    qs = np.asarray(qs, dtype=np.float64)
    out = np.empty(sigmas.shape[0])
    for i in range(sigmas.shape[0]):
        income = income_total(k, sigmas[i], eps, counts, bonus)
        out[i] = income - outcome_total(lam, pi_r, p0, eps, d, 1.0 + qs[i])
    return out


def game_payoff_table(gain, cost, eps, psi, sizes, fixed_reward):
    n = len(sizes)
    offsets = np.concatenate(([0], np.cumsum(sizes)[:-1])).astype(np.int64)
    shape = tuple(int(s) for s in sizes)
    idx = np.indices(shape).reshape(n, -1)
    g = np.stack([gain[offsets[p] + idx[p]] for p in range(n)])
    c = np.stack([cost[offsets[p] + idx[p]] for p in range(n)])
    e = np.stack([eps[offsets[p] + idx[p]] for p in range(n)])
    s = np.stack([psi[offsets[p] + idx[p]] for p in range(n)])
    out = np.empty_like(g)
    for p in range(n):
        others = [q for q in range(n) if q != p]
        rank = np.zeros(g.shape[1])
        beats_all = np.ones(g.shape[1], dtype=bool)
        for q in others:
            rank += s[q] < s[p]
            beats_all &= e[p] > e[q]
        out[p] = g[p] * (n - rank) + fixed_reward * beats_all - c[p]
    return out
