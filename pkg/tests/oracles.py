"""Independent reference computations used by the tests.

Written as plain per-round loops on purpose: they share no code with the
package's closed forms.
"""
import math


def outcome_loop(lam, pi_r, p0, eps, d, growth):
    if lam == 1.0:
        return p0
    total = lam * p0 + pi_r
    for j in range(1, d + 1):
        total += growth ** (j - eps) * p0 * (1.0 - lam) / d
    return total


def income_loop(k, sigma, eps, counts, bonus=0.0):
    total = 0.0
    for j, c in enumerate(counts, start=1):
        total += k * sigma ** (-j) * c * eps
    return total + bonus


def derived_terms(q_hat, sigma_hat, d_hat, kappa_d, kappa_q, kappa_sigma, sigma_floor, pi_r):
    return (
        d_hat + math.floor(kappa_d * pi_r),
        1.0 + q_hat * math.exp(-kappa_q * pi_r),
        max(sigma_floor, sigma_hat * math.exp(-kappa_sigma * pi_r)),
    )
