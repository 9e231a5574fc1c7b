"""Append-only reference DAG of minted NFTs with per-round accounting.

Heights follow a seal-after-mint convention: ``ledger.height`` is the last
sealed block, new NFTs are minted into block ``height + 1`` and
``advance_round(height + 1)`` seals it. Sealing a block books, for every live
NFT, the installment and income of the round that block represents (using
the referrals minted into it) and settles NFTs whose decay window ends there.
"""
from __future__ import annotations

import enum
import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

from . import market
from .errors import (
    DomainError,
    ExpiredReferenceError,
    IntegrityError,
    SequencingError,
    UnknownNftError,
)
from .market import CostBreakdown, DerivedTerms, IncomeBreakdown, MarketParams, WeightVector

GENESIS_PUBLISHER = -1

# field order of one line in the ledger dump
DUMP_FIELDS = (
    "id", "publisher", "height", "theta", "weights", "quality", "price",
    "pi_r", "lambda", "d", "payoff",
)


class Kind(str, enum.Enum):
    DATASET = "dataset"
    MODEL = "model"
    COMPOSITE = "composite"


@dataclass
class RNft:
    publisher: int
    theta: tuple[tuple[int, Kind], ...]
    weights: WeightVector
    quality: float
    price: float
    pi_r: float
    lam: float
    kind: Kind
    p0_total: float
    derived: DerivedTerms | None = None
    id: int = -1
    height: int = -1
    shares: tuple[float, ...] = ()
    upfront: float = 0.0
    installments: list[tuple[int, float]] = field(default_factory=list)
    income_rounds: list[tuple[int, int, float]] = field(default_factory=list)
    entry_heights: list[int] = field(default_factory=list)
    bonus_awarded: bool = False
    bonus: float = 0.0
    settled: bool = False
    payoff: float | None = None

    @property
    def expiry(self) -> int:
        return self.height + self.derived.d

    @property
    def outcome_total(self) -> float:
        return self.upfront + sum(a for _, a in self.installments)

    @property
    def income_total(self) -> float:
        return self.bonus + sum(a for _, _, a in self.income_rounds)

    @property
    def outcome_ledger(self) -> CostBreakdown:
        down = self.upfront - self.pi_r
        return CostBreakdown(self.p0_total, down, self.pi_r, tuple(self.installments), self.outcome_total)

    @property
    def income_ledger(self) -> IncomeBreakdown:
        return IncomeBreakdown(tuple(self.income_rounds), self.bonus, self.income_total)


@dataclass(frozen=True)
class CandidateEntry:
    id: int
    quality: float
    price: float
    pi_r: float
    weights: WeightVector
    age: int
    kind: Kind


@dataclass(frozen=True)
class CandidateSet:
    entries: tuple[CandidateEntry, ...] = ()

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def max_quality(self) -> float | None:
        return max((e.quality for e in self.entries), default=None)


@dataclass(frozen=True)
class SettlementEvent:
    nft_id: int
    publisher: int
    mint_height: int
    height: int
    income_total: float
    outcome_total: float
    payoff: float


class DagLedger:
    def __init__(self, params: MarketParams):
        self.params = params
        self.height = -1
        self.nfts: dict[int, RNft] = {}
        self._live: dict[int, RNft] = {}
        self._refs_in: dict[int, Counter] = defaultdict(Counter)
        self._next_id = 0
        # currency received per recipient publisher from shares and installments
        self.flows: dict[int, float] = defaultdict(float)

    def __len__(self):
        return len(self.nfts)

    def get(self, nft_id: int) -> RNft:
        try:
            return self.nfts[nft_id]
        except KeyError:
            raise UnknownNftError(nft_id) from None

    def live_ids(self) -> list[int]:
        return list(self._live)

    def mint(self, nft: RNft, height: int | None = None, candidates: CandidateSet | None = None) -> int:
        """Append ``nft`` to the pending block and charge its up-front cost.

        The bonus flag is decided against ``candidates`` (strictly better than
        every entry); with ``candidates=None`` no bonus is possible.
        """
        target = self.height + 1
        if height is not None and height != target:
            raise SequencingError(f"mint at height {height}, but the pending block is {target}")
        for ref_id, _ in nft.theta:
            if ref_id not in self.nfts:
                raise IntegrityError(f"reference to unknown NFT {ref_id}")
            ref = self.nfts[ref_id]
            if ref.settled:
                raise ExpiredReferenceError(f"reference to settled NFT {ref_id}")
            if ref.height >= target:
                raise IntegrityError(f"reference to NFT {ref_id} at height {ref.height} >= {target}")
        if len(nft.weights.refs) != len(nft.theta):
            raise IntegrityError(f"{len(nft.weights.refs)} weights for {len(nft.theta)} references")
        if not (0.0 <= nft.quality <= 1.0):
            raise DomainError(f"quality={nft.quality!r} outside [0, 1]")
        if not (0.0 < nft.price <= self.params.psi_max):
            raise DomainError(f"price={nft.price!r} outside (0, psi_max={self.params.psi_max}]")
        expected = market.map_params(self.params, nft.pi_r, nft.lam)
        if nft.derived is None:
            nft.derived = expected
        elif nft.derived != expected:
            raise IntegrityError(f"derived terms {nft.derived} inconsistent with pi_r={nft.pi_r}")
        cost = market.outcome(self.params, nft.lam, nft.pi_r, nft.p0_total, nft.quality, nft.derived)

        nft.id = self._next_id
        nft.height = target
        self._next_id += 1
        nft.upfront = cost.down_payment + cost.pi_r
        nft.shares = tuple(nft.p0_total * w for w in nft.weights.as_list())
        nft.entry_heights.append(target)
        if candidates is not None:
            best = candidates.max_quality()
            nft.bonus_awarded = best is None or nft.quality > best
        self._route(nft, cost.down_payment)
        for ref_id, _ in nft.theta:
            self._refs_in[ref_id][target] += 1
        self.nfts[nft.id] = nft
        self._live[nft.id] = nft
        return nft.id

    def _route(self, nft: RNft, amount: float):
        # reference owners receive their weight's share; the self share stays home
        for (ref_id, _), w in zip(nft.theta, nft.weights.refs):
            self.flows[self.nfts[ref_id].publisher] += amount * w

    def advance_round(self, new_height: int) -> list[SettlementEvent]:
        if new_height != self.height + 1:
            raise SequencingError(f"advance to {new_height} from {self.height}")
        self.height = new_height
        events = []
        params = self.params
        for nft in list(self._live.values()):
            if nft.height >= new_height:
                continue
            j = new_height - nft.height
            if nft.lam < 1.0:
                amount = market.installment_amount(nft.p0_total, nft.lam, nft.quality, nft.derived, j)
                nft.installments.append((j, amount))
                self._route(nft, amount)
            count = self._refs_in[nft.id][new_height]
            nft.income_rounds.append(
                (j, count, market.income_amount(params, nft.derived.sigma, nft.quality, j, count))
            )
            nft.entry_heights.append(new_height)
            if j == nft.derived.d:
                events.append(self._settle(nft))
        return events

    def _settle(self, nft: RNft) -> SettlementEvent:
        if nft.bonus_awarded:
            nft.bonus = self.params.fixed_reward
        nft.settled = True
        nft.payoff = market.payoff(nft.income_total, nft.outcome_total)
        del self._live[nft.id]
        return SettlementEvent(
            nft.id, nft.publisher, nft.height, self.height,
            nft.income_total, nft.outcome_total, nft.payoff,
        )

    def referral_count(self, nft_id: int, j: int) -> int:
        nft = self.get(nft_id)
        if not (1 <= j <= nft.derived.d):
            raise DomainError(f"round {j} outside [1, d={nft.derived.d}]")
        return self._refs_in[nft_id][nft.height + j]

    def window(self, height: int | None = None, window: int | None = None) -> list[RNft]:
        height = self.height if height is None else height
        window = self.params.d_hat if window is None else window
        return [n for n in self._live.values() if height - window < n.height <= height]

    def candidate_set(
        self,
        rng: np.random.Generator,
        height: int | None = None,
        window: int | None = None,
        size: int | None = None,
    ) -> CandidateSet:
        """Quality-weighted sample without replacement from live NFTs in the window."""
        size = self.params.candidate_size if size is None else size
        if size < 1:
            raise DomainError(f"candidate size {size} must be >= 1")
        height = self.height if height is None else height
        pool = self.window(height, window)
        if not pool:
            return CandidateSet()
        chosen = _weighted_sample(rng, np.array([n.quality for n in pool]), min(size, len(pool)))
        chosen.sort()
        entries = tuple(
            CandidateEntry(n.id, n.quality, n.price, n.pi_r, n.weights, height - n.height, n.kind)
            for n in (pool[i] for i in chosen)
        )
        return CandidateSet(entries)

    def dump(self, fp: IO[str]):
        """Write one JSON object per NFT, keys in ``DUMP_FIELDS`` order."""
        for nft in self.nfts.values():
            record = dict(zip(DUMP_FIELDS, (
                nft.id, nft.publisher, nft.height,
                [[ref, kind.value] for ref, kind in nft.theta],
                nft.weights.as_list(), nft.quality, nft.price, nft.pi_r, nft.lam,
                nft.derived.d, nft.payoff,
            )))
            fp.write(json.dumps(record) + "\n")


def _weighted_sample(rng: np.random.Generator, weights: np.ndarray, size: int) -> list[int]:
    positive = np.flatnonzero(weights > 0)
    if positive.size == 0:
        return rng.choice(weights.size, size=size, replace=False).tolist()
    take = min(size, positive.size)
    p = weights[positive] / weights[positive].sum()
    picked = positive[rng.choice(positive.size, size=take, replace=False, p=p)].tolist()
    if take < size:
        rest = np.flatnonzero(weights <= 0)
        picked += rest[rng.choice(rest.size, size=size - take, replace=False)].tolist()
    return picked


def topological_order(nfts: Iterable[RNft]) -> list[int]:
    """Ids sorted by height; raises if any reference is not strictly older."""
    items = {n.id: n for n in nfts}
    for n in items.values():
        for ref_id, _ in n.theta:
            if ref_id not in items or items[ref_id].height >= n.height:
                raise IntegrityError(f"NFT {n.id} breaks height order via {ref_id}")
    return sorted(items, key=lambda i: (items[i].height, i))
