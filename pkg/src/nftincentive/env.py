"""Repeated pricing game among publishers on top of the reference ledger."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import market
from .distributions import QualitySampler
from .ledger import (
    GENESIS_PUBLISHER,
    CandidateSet,
    DagLedger,
    Kind,
    RNft,
    SettlementEvent,
)
from .market import MarketParams, WeightVector

# per-candidate feature columns of an observation, in order
FEATURES = ("price", "quality", "pi_r", "w0", "w_ref1", "w_ref2", "age")
N_FEATURES = len(FEATURES)
N_SCALARS = 2  # pending NFTs, current height

SLOT_KINDS = (
    (Kind.DATASET, frozenset({Kind.DATASET, Kind.COMPOSITE})),
    (Kind.MODEL, frozenset({Kind.MODEL, Kind.COMPOSITE})),
)


class _Pending:
    def __repr__(self):
        return "PENDING"


PENDING = _Pending()


@dataclass(frozen=True)
class ActionTuple:
    trigger: bool
    lam: float = 1.0
    pi_r: float = 0.0
    ref_weights: tuple[float, float] = (0.5, 0.5)
    price: float = 0.5

    @classmethod
    def idle(cls) -> "ActionTuple":
        return cls(trigger=False)


@dataclass(frozen=True)
class Observation:
    features: np.ndarray  # (candidate_size, N_FEATURES), rows beyond the mask are zero
    mask: np.ndarray  # (candidate_size,), 1.0 for real candidates
    scalars: np.ndarray  # (N_SCALARS,)
    candidate_ids: tuple[int, ...] = ()

    def vector(self) -> np.ndarray:
        return np.concatenate([self.features.ravel(), self.mask, self.scalars])

    @classmethod
    def from_vector(cls, vec: np.ndarray, candidate_size: int) -> "Observation":
        n = candidate_size * N_FEATURES
        if vec.shape != (observation_size(candidate_size),):
            raise ValueError(f"vector of shape {vec.shape} does not fit candidate_size={candidate_size}")
        return cls(
            vec[:n].reshape(candidate_size, N_FEATURES).copy(),
            vec[n:n + candidate_size].copy(),
            vec[n + candidate_size:].copy(),
        )


def observation_size(candidate_size: int) -> int:
    return candidate_size * (N_FEATURES + 1) + N_SCALARS


@dataclass(frozen=True)
class MintEvent:
    publisher: int
    nft_id: int
    height: int


@dataclass(frozen=True)
class RejectionEvent:
    publisher: int
    reason: str


@dataclass
class StepResult:
    height: int
    mints: list[MintEvent] = field(default_factory=list)
    rejections: list[RejectionEvent] = field(default_factory=list)
    settlements: list[SettlementEvent] = field(default_factory=list)
    observations: list[Observation] = field(default_factory=list)

    @property
    def events(self) -> list:
        return [*self.rejections, *self.mints, *self.settlements]

    def rewards(self) -> dict[int, float]:
        """Sum of rewards realized this step, per publisher that had any."""
        out: dict[int, float] = {}
        for ev in self.settlements:
            out[ev.publisher] = out.get(ev.publisher, 0.0) + reward(ev)
        return out


def reward(event: SettlementEvent) -> float:
    return market.payoff(event.income_total, event.outcome_total)


def validate_action(params: MarketParams, action: ActionTuple) -> str | None:
    """Reason the action cannot be executed, or None when it is well formed."""
    values = (action.lam, action.pi_r, action.price, *action.ref_weights)
    if len(action.ref_weights) != 2:
        return "ref_weights must hold (w_dataset, w_model)"
    if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in values):
        return "non-finite field"
    if not 0.0 <= action.lam <= 1.0:
        return f"lambda={action.lam} outside [0, 1]"
    if not 0.0 <= action.pi_r <= params.pi_max:
        return f"pi_r={action.pi_r} outside [0, {params.pi_max}]"
    if not 0.0 < action.price <= params.psi_max:
        return f"price={action.price} outside (0, {params.psi_max}]"
    if min(action.ref_weights) < 0:
        return "negative reference weight"
    if action.lam == 1.0 and action.pi_r > 0:
        return "lambda = 1 excludes an optional payment"
    return None


class NftMarketEnv:
    """N publishers acting simultaneously once per block.

    ``observe`` samples and caches each publisher's candidate set; ``step``
    mints from those cached sets, seals one block, and returns settlements
    plus fresh observations for the next block.
    """

    def __init__(
        self,
        params: MarketParams,
        seed: int | np.random.SeedSequence | None = 0,
        quality_sampler: QualitySampler | None = None,
        window: int | None = None,
        price_sensitivity: float = 1.0,
        horizon: int = 100,
    ):
        self.params = params
        self._seed = seed
        self.quality_sampler = quality_sampler or QualitySampler()
        self.window = params.d_hat if window is None else window
        self.price_sensitivity = price_sensitivity
        self.horizon = horizon
        self.reset()

    @property
    def n_publishers(self) -> int:
        return self.params.n_publishers

    @property
    def obs_size(self) -> int:
        return observation_size(self.params.candidate_size)

    def reset(self):
        self.rng = np.random.default_rng(self._seed)
        self.ledger = DagLedger(self.params)
        self._candidates: dict[int, CandidateSet] = {}
        self._rewards: dict[int, float] = {}
        self._bootstrap()
        return [self.observe(p) for p in range(self.n_publishers)]

    def _bootstrap(self):
        params = self.params
        n = 2 * params.candidate_size
        for i in range(n):
            kind = Kind.DATASET if i < n // 2 else Kind.MODEL
            q = self.quality_sampler(self.rng)
            price = params.psi_max * (1.0 - self.rng.random())
            nft = RNft(
                publisher=GENESIS_PUBLISHER, theta=(), weights=WeightVector(1.0), quality=q,
                price=price, pi_r=0.0, lam=1.0, kind=kind, p0_total=params.fixed_expense,
            )
            self.ledger.mint(nft)
        self.ledger.advance_round(0)

    @property
    def height(self) -> int:
        return self.ledger.height

    def pending_count(self, publisher: int) -> int:
        return sum(1 for i in self.ledger.live_ids() if self.ledger.nfts[i].publisher == publisher)

    def observe(self, publisher: int) -> Observation:
        cands = self.ledger.candidate_set(self.rng, window=self.window)
        self._candidates[publisher] = cands
        return self.encode(cands, publisher)

    def encode(self, cands: CandidateSet, publisher: int) -> Observation:
        params = self.params
        size = params.candidate_size
        feats = np.zeros((size, N_FEATURES))
        mask = np.zeros(size)
        for row, e in enumerate(cands.entries[:size]):
            refs = list(e.weights.refs[:2]) + [0.0] * (2 - min(2, len(e.weights.refs)))
            feats[row] = (
                e.price / params.psi_max,
                e.quality,
                e.pi_r / params.pi_max if params.pi_max > 0 else 0.0,
                e.weights.w0,
                refs[0],
                refs[1],
                min(1.0, e.age / max(1, self.window)),
            )
            mask[row] = 1.0
        scalars = np.array([
            min(1.0, self.pending_count(publisher) / max(1, self.window)),
            min(1.0, max(0, self.height) / max(1, self.horizon)),
        ])
        return Observation(feats, mask, scalars, tuple(e.id for e in cands.entries))

    def _choose_refs(self, cands: CandidateSet):
        chosen = []
        taken = set()
        for slot, eligible in SLOT_KINDS:
            best = None
            for e in cands.entries:
                if e.kind not in eligible or e.id in taken:
                    continue
                score = e.quality - self.price_sensitivity * e.price
                if best is None or score > best[0] or (score == best[0] and e.id < best[1].id):
                    best = (score, e)
            if best is not None:
                taken.add(best[1].id)
                chosen.append((slot, best[1]))
        return chosen

    def _execute(self, publisher: int, action: ActionTuple) -> int:
        params = self.params
        cands = self._candidates.get(publisher)
        if cands is None:
            self.observe(publisher)
            cands = self._candidates[publisher]
        chosen = self._choose_refs(cands)
        raw = [action.ref_weights[0 if slot is Kind.DATASET else 1] for slot, _ in chosen]
        weights = market.WeightVector.normalized(params.w0, raw)
        topup = sum(w * e.price for w, (_, e) in zip(weights.refs, chosen))
        p0_total, _ = market.base_price(params, topup, weights)
        base_quality = self.quality_sampler(self.rng)
        eps = market.quality(weights, [e.quality for _, e in chosen], base_quality)
        nft = RNft(
            publisher=publisher,
            theta=tuple((e.id, e.kind) for _, e in chosen),
            weights=weights,
            quality=eps,
            price=action.price,
            pi_r=action.pi_r,
            lam=action.lam,
            kind=Kind.COMPOSITE,
            p0_total=p0_total,
        )
        return self.ledger.mint(nft, candidates=cands)

    def step(self, actions: list[ActionTuple]) -> StepResult:
        if len(actions) != self.n_publishers:
            raise ValueError(f"expected {self.n_publishers} actions, got {len(actions)}")
        result = StepResult(height=self.height + 1)
        ready = []
        for p, action in enumerate(actions):
            if not action.trigger:
                continue
            reason = validate_action(self.params, action)
            if reason is None:
                ready.append(p)
            else:
                result.rejections.append(RejectionEvent(p, reason))
        for p in self.rng.permutation(ready).tolist() if ready else []:
            nft_id = self._execute(p, actions[p])
            result.mints.append(MintEvent(p, nft_id, result.height))
        result.settlements = self.ledger.advance_round(result.height)
        for ev in result.settlements:
            self._rewards[ev.nft_id] = reward(ev)
        self._candidates.clear()
        result.observations = [self.observe(p) for p in range(self.n_publishers)]
        return result

    def reward_for(self, nft_id: int):
        """Settled reward, ``PENDING`` while the NFT is live, None once past the horizon unsettled."""
        if nft_id in self._rewards:
            return self._rewards[nft_id]
        nft = self.ledger.get(nft_id)
        if not nft.settled and self.height >= self.horizon:
            return None
        return PENDING

    def unsettled_publisher_nfts(self) -> list[int]:
        return [i for i in self.ledger.live_ids() if self.ledger.nfts[i].publisher != GENESIS_PUBLISHER]
