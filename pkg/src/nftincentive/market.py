"""Closed-form pricing formulas: parameter maps, cost, income, quality, payoff.

Everything here is pure. Currency and rates are plain floats.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

from . import kernels
from .errors import DomainError, InconsistentActionError, ShapeError, SimplexError

SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class MarketParams:
    """Global constants of the mechanism.

    ``phi_mode`` selects how the base decay length responds to the down
    payment: ``"constant"`` uses ``d_hat`` as is, ``"linear"`` scales it by
    ``(1 - lambda)`` (never below one round).
    """

    q_hat: float = 0.01
    sigma_hat: float = 0.9
    d_hat: int = 10
    fixed_reward: float = 2.0
    fixed_expense: float = 0.1
    k: float = 0.3
    w0: float = 0.2
    psi_max: float = 1.0
    pi_max: float = 1.0
    kappa_d: float = 5.0
    kappa_q: float = 2.0
    kappa_sigma: float = 0.3
    sigma_floor: float = 0.5
    candidate_size: int = 10
    n_publishers: int = 10
    phi_mode: str = "constant"

    def __post_init__(self):
        checks = [
            ("sigma_hat", 0 < self.sigma_hat <= 1, "must lie in (0, 1]"),
            ("q_hat", self.q_hat >= 0, "must be >= 0"),
            ("d_hat", int(self.d_hat) == self.d_hat and self.d_hat >= 1, "must be an integer >= 1"),
            ("w0", 0 <= self.w0 < 1, "must lie in [0, 1)"),
            ("psi_max", self.psi_max > 0, "must be > 0"),
            ("pi_max", self.pi_max >= 0, "must be >= 0"),
            ("fixed_expense", self.fixed_expense > 0, "must be > 0"),
            ("fixed_reward", self.fixed_reward > 0, "must be > 0"),
            ("sigma_floor", 0 < self.sigma_floor <= self.sigma_hat, "must lie in (0, sigma_hat]"),
            ("k", self.k >= 0, "must be >= 0"),
            ("kappa_d", self.kappa_d >= 0, "must be >= 0"),
            ("kappa_q", self.kappa_q >= 0, "must be >= 0"),
            ("kappa_sigma", self.kappa_sigma >= 0, "must be >= 0"),
            ("candidate_size", self.candidate_size >= 1, "must be >= 1"),
            ("n_publishers", self.n_publishers >= 1, "must be >= 1"),
            ("phi_mode", self.phi_mode in ("constant", "linear"), "must be 'constant' or 'linear'"),
        ]
        for name, ok, msg in checks:
            if not ok:
                raise DomainError(f"{name}={getattr(self, name)!r} {msg}")

    def with_(self, **changes) -> "MarketParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class DerivedTerms:
    d: int
    growth: float
    sigma: float

    @property
    def q(self) -> float:
        return self.growth - 1.0


@dataclass(frozen=True)
class WeightVector:
    """Profit-sharing weights: ``w0`` for the self-reference, ``refs`` per entry of the reference list."""

    w0: float
    refs: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "refs", tuple(float(r) for r in self.refs))
        values = (self.w0, *self.refs)
        if any(not math.isfinite(v) or v < 0 for v in values):
            raise SimplexError(f"weights must be finite and non-negative, got {values}")
        if abs(sum(values) - 1.0) > SIMPLEX_TOL:
            raise SimplexError(f"weights must sum to 1, got {sum(values)!r}")

    @classmethod
    def normalized(cls, w0: float, raw_refs: Sequence[float]) -> "WeightVector":
        """Scale non-negative ``raw_refs`` so that they sum to ``1 - w0``.

        All-zero raw weights split evenly; no references puts all weight on ``w0``.
        """
        raw = [float(r) for r in raw_refs]
        if not raw:
            return cls(1.0, ())
        if any(not math.isfinite(r) or r < 0 for r in raw):
            raise SimplexError(f"raw reference weights must be non-negative, got {raw}")
        total = sum(raw)
        share = 1.0 - w0
        refs = [share / len(raw)] * len(raw) if total == 0 else [share * r / total for r in raw]
        # absorb rounding into the last entry so the simplex holds exactly enough
        refs[-1] = max(0.0, 1.0 - w0 - sum(refs[:-1]))
        return cls(w0, tuple(refs))

    def as_list(self) -> list[float]:
        return [self.w0, *self.refs]


@dataclass(frozen=True)
class CostBreakdown:
    p0_total: float
    down_payment: float
    pi_r: float
    installments: tuple[tuple[int, float], ...]
    total: float


@dataclass(frozen=True)
class IncomeBreakdown:
    per_round: tuple[tuple[int, float, float], ...]
    bonus: float
    total: float


def _check_pi(params: MarketParams, pi_r: float):
    if not (0.0 <= pi_r <= params.pi_max) or math.isnan(pi_r):
        raise DomainError(f"pi_r={pi_r!r} outside [0, pi_max={params.pi_max}]")


def _check_unit(name: str, value: float):
    if not (0.0 <= value <= 1.0):
        raise DomainError(f"{name}={value!r} outside [0, 1]")


def base_decay(params: MarketParams, lam: float | None = None) -> int:
    if params.phi_mode == "linear" and lam is not None:
        return max(1, math.ceil(params.d_hat * (1.0 - lam)))
    return int(params.d_hat)


def map_params(params: MarketParams, pi_r: float, lam: float | None = None) -> DerivedTerms:
    """Map an optional payment to (decay length, interest growth factor, descending rate)."""
    _check_pi(params, pi_r)
    d = base_decay(params, lam) + math.floor(params.kappa_d * pi_r)
    growth = 1.0 + params.q_hat * math.exp(-params.kappa_q * pi_r)
    sigma = max(params.sigma_floor, params.sigma_hat * math.exp(-params.kappa_sigma * pi_r))
    return DerivedTerms(d=d, growth=growth, sigma=sigma)


def base_price(params: MarketParams, topup: float, weights: WeightVector) -> tuple[float, list[float]]:
    if topup < 0 or not math.isfinite(topup):
        raise DomainError(f"topup={topup!r} must be finite and >= 0")
    p0_total = params.fixed_expense + topup
    return p0_total, [p0_total * w for w in weights.as_list()]


def outcome(
    params: MarketParams,
    lam: float,
    pi_r: float,
    p0_total: float,
    epsilon: float,
    derived: DerivedTerms | None = None,
) -> CostBreakdown:
    """Cost of minting: down payment, optional payment, compounding installments.

    ``derived`` defaults to ``map_params(params, pi_r, lam)``.
    """
    _check_unit("lambda", lam)
    _check_unit("epsilon", epsilon)
    _check_pi(params, pi_r)
    if lam == 1.0:
        if pi_r > 0:
            raise InconsistentActionError("lambda = 1 pays exactly p0; pi_r must be 0")
        return CostBreakdown(p0_total, p0_total, 0.0, (), p0_total)
    if derived is None:
        derived = map_params(params, pi_r, lam)
    d, growth = derived.d, derived.growth
    per = p0_total * (1.0 - lam) / d
    installments = tuple((j, growth ** (j - epsilon) * per) for j in range(1, d + 1))
    total = kernels.outcome_total(lam, pi_r, p0_total, epsilon, d, growth)
    return CostBreakdown(p0_total, lam * p0_total, pi_r, installments, total)


def installment_amount(p0_total: float, lam: float, epsilon: float, derived: DerivedTerms, j: int) -> float:
    return derived.growth ** (j - epsilon) * p0_total * (1.0 - lam) / derived.d


def income_amount(params: MarketParams, sigma: float, epsilon: float, j: int, count: float) -> float:
    return params.k * sigma ** (-j) * count * epsilon


def income(
    params: MarketParams,
    sigma: float,
    d: int,
    epsilon: float,
    referral_counts: Sequence[float],
    bonus_awarded: bool,
) -> IncomeBreakdown:
    if len(referral_counts) != d:
        raise ShapeError(f"expected {d} referral counts, got {len(referral_counts)}")
    _check_unit("epsilon", epsilon)
    per_round = tuple(
        (j, c, income_amount(params, sigma, epsilon, j, c))
        for j, c in enumerate(referral_counts, start=1)
    )
    bonus = params.fixed_reward if bonus_awarded else 0.0
    total = kernels.income_total(params.k, sigma, epsilon, referral_counts, bonus)
    return IncomeBreakdown(per_round, bonus, total)


def payoff(income_total: float, outcome_total: float) -> float:
    return income_total - outcome_total


def quality(weights: WeightVector, ref_qualities: Sequence[float], base_quality: float) -> float:
    """Quality of a new NFT as the weight-averaged quality of its own resource and references."""
    if len(ref_qualities) != len(weights.refs):
        raise ShapeError(f"{len(ref_qualities)} qualities for {len(weights.refs)} references")
    _check_unit("base_quality", base_quality)
    for q in ref_qualities:
        _check_unit("ref_quality", q)
    eps = weights.w0 * base_quality + sum(w * q for w, q in zip(weights.refs, ref_qualities))
    # clamp rounding spill past the unit interval
    return min(1.0, max(0.0, eps))


@dataclass(frozen=True)
class NftTerms:
    """Everything needed to price one NFT in closed form."""

    lam: float
    pi_r: float
    p0_total: float
    epsilon: float
    derived: DerivedTerms
    bonus_awarded: bool = False
    referral_counts: tuple[float, ...] = field(default=())


def closed_form_payoff(params: MarketParams, terms: NftTerms) -> float:
    counts = terms.referral_counts or (0.0,) * terms.derived.d
    inc = income(params, terms.derived.sigma, terms.derived.d, terms.epsilon, counts, terms.bonus_awarded)
    out = outcome(params, terms.lam, terms.pi_r, terms.p0_total, terms.epsilon, terms.derived)
    return payoff(inc.total, out.total)
