"""Executable checks of the model's structural claims.

* finality: every NFT's accounting stops at its expiry height, and the
  geometric partial sums that bound income are finite;
* non-convexity: a finite-difference Hessian of the payoff in (sigma, q)
  with a negative determinant somewhere on the grid;
* equilibrium machinery on discretized games: best responses,
  exploitability and fictitious play.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from . import kernels, market
from .errors import FinalityError, GuardError, SimplexError
from .ledger import DagLedger, Kind, RNft
from .market import MarketParams, WeightVector

MAX_JOINT_EVALUATIONS = 10 ** 7


# ---------------------------------------------------------------- finality

@dataclass
class FinalityReport:
    lifecycles: int
    pairs: int
    max_overrun: int  # largest (entry height - expiry); <= 0 when finality holds
    max_sum_error: float
    counterexamples: list[dict[str, Any]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.counterexamples


def geometric_partial_sum(sigma: float, d: int) -> float:
    """Sum of ``sigma**i`` for ``i = 0..d`` by direct accumulation."""
    total, term = 0.0, 1.0
    for _ in range(d + 1):
        total += term
        term *= sigma
    return total


def geometric_closed_form(sigma: float, d: int) -> float:
    return (1.0 - sigma ** (d + 1)) / (1.0 - sigma)


def random_lifecycles(params: MarketParams, rng: np.random.Generator, n_nfts: int, extra_rounds: int = 5) -> DagLedger:
    """Mint ``n_nfts`` random NFTs over time on a fresh ledger and run past every expiry."""
    ledger = DagLedger(params)
    minted = 0
    height = 0
    max_expiry = 0
    while minted < n_nfts or ledger.height < max_expiry + extra_rounds:
        if minted < n_nfts:
            for _ in range(int(rng.integers(1, 4))):
                if minted >= n_nfts:
                    break
                live = [i for i in ledger.live_ids() if ledger.nfts[i].height < height]
                refs = sorted(rng.choice(live, size=min(len(live), int(rng.integers(0, 3))), replace=False).tolist()) if live else []
                lam = float(rng.choice([rng.random(), 1.0]))
                pi_r = 0.0 if lam == 1.0 else float(rng.random() * params.pi_max)
                weights = WeightVector.normalized(params.w0, rng.random(len(refs)).tolist())
                nft = RNft(
                    publisher=int(rng.integers(params.n_publishers)),
                    theta=tuple((r, Kind.COMPOSITE) for r in refs), weights=weights,
                    quality=float(rng.random()), price=params.psi_max * (1 - rng.random()),
                    pi_r=pi_r, lam=lam, kind=Kind.COMPOSITE,
                    p0_total=params.fixed_expense + float(rng.random()),
                )
                ledger.mint(nft, height)
                max_expiry = max(max_expiry, nft.expiry)
                minted += 1
        ledger.advance_round(height)
        height += 1
    return ledger


def verify_finality(
    params: MarketParams,
    seed: int = 0,
    n_lifecycles: int = 100,
    n_pairs: int = 100,
    tol: float = 1e-12,
    raise_on_failure: bool = False,
) -> FinalityReport:
    rng = np.random.default_rng(seed)
    ledger = random_lifecycles(params, rng, n_lifecycles)
    counterexamples = []
    max_overrun = -math.inf
    for nft in ledger.nfts.values():
        overrun = max(nft.entry_heights) - nft.expiry
        max_overrun = max(max_overrun, overrun)
        rounds = [j for j, *_ in nft.income_rounds] + [j for j, _ in nft.installments]
        if overrun > 0 or not nft.settled or any(j > nft.derived.d for j in rounds):
            counterexamples.append({"sigma": nft.derived.sigma, "d": nft.derived.d, "nft": nft.id,
                                    "reason": "ledger activity after expiry or unsettled"})
    max_err = 0.0
    for _ in range(n_pairs):
        sigma = float(rng.uniform(1e-6, 1.0 - 1e-6))
        d = int(rng.integers(1, 200))
        direct, closed = geometric_partial_sum(sigma, d), geometric_closed_form(sigma, d)
        err = abs(direct - closed)
        max_err = max(max_err, err / max(1.0, abs(closed)))
        if not math.isclose(direct, closed, rel_tol=tol, abs_tol=tol):
            counterexamples.append({"sigma": sigma, "d": d, "reason": f"partial sum {direct!r} != {closed!r}"})
    report = FinalityReport(len(ledger), n_pairs, int(max_overrun), max_err, counterexamples)
    if raise_on_failure and counterexamples:
        c = counterexamples[0]
        raise FinalityError(c["sigma"], c["d"], c["reason"])
    return report


# ---------------------------------------------------------------- Hessian / non-convexity

def hessian(f: Callable[[np.ndarray], float], x: Sequence[float], step: float = 1e-4) -> np.ndarray:
    """Central-difference Hessian of a scalar function of a vector."""
    x = np.asarray(x, dtype=float)
    n = x.size
    H = np.empty((n, n))
    e = np.eye(n) * step
    for i, j in itertools.product(range(n), repeat=2):
        if j < i:
            H[i, j] = H[j, i]
            continue
        H[i, j] = (f(x + e[i] + e[j]) - f(x + e[i] - e[j]) - f(x - e[i] + e[j]) + f(x - e[i] - e[j])) / (4 * step ** 2)
    return H


def hessian_terms(evaluator, sigma, q, step=1e-4):
    """Second derivatives ``(A, B, C) = (U_ss, U_sq, U_qq)`` at broadcast points."""
    sigma = np.asarray(sigma, dtype=float)
    q = np.asarray(q, dtype=float)
    f0 = evaluator(sigma, q)
    A = (evaluator(sigma + step, q) - 2 * f0 + evaluator(sigma - step, q)) / step ** 2
    C = (evaluator(sigma, q + step) - 2 * f0 + evaluator(sigma, q - step)) / step ** 2
    B = (evaluator(sigma + step, q + step) - evaluator(sigma + step, q - step)
         - evaluator(sigma - step, q + step) + evaluator(sigma - step, q - step)) / (4 * step ** 2)
    return A, B, C


@dataclass
class WitnessResult:
    point: tuple[float, float] | None
    determinant: float | None
    hessian: tuple[float, float, float] | None
    sigma_grid: np.ndarray
    q_grid: np.ndarray
    excluded: list[tuple[float, float]]
    n_negative: int

    @property
    def found(self) -> bool:
        return self.point is not None

    def to_dict(self) -> dict[str, Any]:
        return {
            "found": self.found,
            "point": self.point,
            "determinant": self.determinant,
            "hessian_terms": self.hessian,
            "n_negative": self.n_negative,
            "sigma_grid": [float(self.sigma_grid[0]), float(self.sigma_grid[-1]), len(self.sigma_grid)],
            "q_grid": [float(self.q_grid[0]), float(self.q_grid[-1]), len(self.q_grid)],
            "excluded": self.excluded,
        }


def nonconvexity_witness(
    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray],
    sigma_grid: Sequence[float],
    q_grid: Sequence[float],
    step: float = 1e-4,
    threshold: float = -1e-8,
) -> WitnessResult:
    """First grid point (sigma-major order) where ``A*C - B**2 < threshold``."""
    sg = np.asarray(sigma_grid, dtype=float)
    qg = np.asarray(q_grid, dtype=float)
    S, Q = np.meshgrid(sg, qg, indexing="ij")
    with np.errstate(all="ignore"):
        A, B, C = hessian_terms(evaluator, S, Q, step)
        det = A * C - B * B
    finite = np.isfinite(det)
    excluded = [(float(S[i]), float(Q[i])) for i in zip(*np.nonzero(~finite))]
    hits = np.flatnonzero(finite.ravel() & (det.ravel() < threshold))
    if hits.size == 0:
        return WitnessResult(None, None, None, sg, qg, excluded, 0)
    i = hits[0]
    return WitnessResult(
        (float(S.flat[i]), float(Q.flat[i])), float(det.flat[i]),
        (float(A.flat[i]), float(B.flat[i]), float(C.flat[i])), sg, qg, excluded, int(hits.size),
    )


@dataclass(frozen=True)
class PayoffSurface:
    """Payoff of one NFT as a function of (sigma, q) with everything else held fixed."""

    params: MarketParams
    epsilon: float = 0.5
    lam: float = 0.5
    pi_r: float = 0.0
    p0_total: float = 0.5
    d: int = 10
    referrals_per_round: float = 1.0
    bonus_awarded: bool = False

    def __call__(self, sigma, q):
        sigma, q = np.broadcast_arrays(np.asarray(sigma, dtype=float), np.asarray(q, dtype=float))
        counts = np.full(self.d, self.referrals_per_round)
        bonus = self.params.fixed_reward if self.bonus_awarded else 0.0
        flat = kernels.payoff_sigma_q(
            sigma.ravel(), q.ravel(), self.params.k, self.epsilon, self.lam, self.pi_r,
            self.p0_total, self.d, counts, bonus,
        )
        return np.asarray(flat).reshape(sigma.shape)


def default_surface(params: MarketParams | None = None) -> PayoffSurface:
    params = params or MarketParams()
    return PayoffSurface(params, p0_total=params.fixed_expense + 0.4, d=params.d_hat)


def default_grids(params: MarketParams, resolution: int = 101):
    return np.linspace(params.sigma_floor, 1.0, resolution), np.linspace(0.0, 1.0, resolution)


# ---------------------------------------------------------------- discretized games

@dataclass
class DiscretizedGame:
    """Finite N-player game given by its full payoff tensor.

    ``payoffs[p][a_0, ..., a_{N-1}]`` is player ``p``'s payoff; ``actions[p]``
    labels player ``p``'s grid points.
    """

    payoffs: np.ndarray
    actions: list[list[Any]]

    @property
    def n_players(self) -> int:
        return self.payoffs.shape[0]

    @property
    def sizes(self) -> tuple[int, ...]:
        return self.payoffs.shape[1:]

    @classmethod
    def from_tables(cls, tables: Sequence[np.ndarray]) -> "DiscretizedGame":
        payoffs = np.stack([np.asarray(t, dtype=float) for t in tables])
        if payoffs.ndim != len(tables) + 1:
            raise ValueError("each table needs one axis per player")
        return cls(payoffs, [list(range(n)) for n in payoffs.shape[1:]])

    @classmethod
    def from_evaluator(cls, grids: Sequence[Sequence[Any]], evaluator: Callable[[tuple], Sequence[float]],
                       max_evaluations: int = MAX_JOINT_EVALUATIONS) -> "DiscretizedGame":
        """Enumerate every joint profile and call ``evaluator(profile) -> per-player payoffs``."""
        sizes = [len(g) for g in grids]
        _guard(sizes, max_evaluations)
        payoffs = np.empty((len(grids), *sizes))
        for idx in itertools.product(*(range(n) for n in sizes)):
            payoffs[(slice(None), *idx)] = evaluator(tuple(g[i] for g, i in zip(grids, idx)))
        return cls(payoffs, [list(g) for g in grids])


def _guard(sizes, bound=MAX_JOINT_EVALUATIONS):
    total = math.prod(sizes)
    if total > bound:
        raise GuardError(f"{total} joint profiles exceed the enumeration bound of {bound}")


@dataclass(frozen=True)
class PricingAction:
    lam: float
    pi_r: float
    ref_share: float  # fraction of (1 - w0) routed to references, split evenly
    price: float


@dataclass(frozen=True)
class GameContext:
    """Fixed surroundings of the pricing game: what each player may reference."""

    dataset_quality: float = 0.6
    model_quality: float = 0.6
    dataset_price: float = 0.5
    model_price: float = 0.5
    base_quality: float = 0.5


def pricing_grid(params: MarketParams, lam_levels=(0.0, 0.5, 1.0), pi_levels=(0.0, 0.5),
                 share_levels=(0.0, 0.5, 1.0), price_levels=(0.25, 0.5, 0.75, 1.0)) -> list[PricingAction]:
    """Cartesian action grid; ``pi_levels`` and ``price_levels`` are fractions of their caps.

    Combinations of full down payment with a positive optional payment are dropped.
    """
    grid = []
    for lam, pi, share, price in itertools.product(lam_levels, pi_levels, share_levels, price_levels):
        if lam == 1.0 and pi > 0:
            continue
        grid.append(PricingAction(lam, pi * params.pi_max, share, price * params.psi_max))
    return grid


def _action_terms(params: MarketParams, ctx: GameContext, a: PricingAction):
    share = (1.0 - params.w0) * a.ref_share
    if share > 0:
        weights = WeightVector(1.0 - share, (share / 2, share / 2))
        eps = market.quality(weights, [ctx.dataset_quality, ctx.model_quality], ctx.base_quality)
        topup = weights.refs[0] * ctx.dataset_price + weights.refs[1] * ctx.model_price
    else:
        eps = ctx.base_quality
        topup = 0.0
    p0 = params.fixed_expense + topup
    derived = market.map_params(params, a.pi_r, a.lam)
    cost = market.outcome(params, a.lam, a.pi_r, p0, eps, derived).total
    # expected referral count per round is eps * (N - price rank); gain is the income per unit of that
    sigma_sum = sum(derived.sigma ** (-j) for j in range(1, derived.d + 1))
    gain = eps * eps * params.k * sigma_sum
    return gain, cost, eps, a.price


def pricing_game(params: MarketParams, grids: Sequence[Sequence[PricingAction]],
                 ctx: GameContext | None = None, impl=None) -> DiscretizedGame:
    """Closed-form pricing game with a deterministic demand model.

    Each player's per-round referral count is ``eps * (N - rank)``, where
    ``rank`` counts opponents with a strictly lower price; the fixed reward is
    paid when a player's quality strictly beats every opponent's.
    """
    ctx = ctx or GameContext()
    _guard([len(g) for g in grids])
    terms = [np.array([_action_terms(params, ctx, a) for a in g]) for g in grids]
    payoffs = kernels.game_payoff_table(
        [t[:, 0] for t in terms], [t[:, 1] for t in terms], [t[:, 2] for t in terms], [t[:, 3] for t in terms],
        params.fixed_reward, impl=impl,
    )
    return DiscretizedGame(payoffs, [list(g) for g in grids])


class MixedStrategy(np.ndarray):
    """Probability vector over one player's action grid."""

    def __new__(cls, probs, player: int | None = None):
        arr = np.array(probs, dtype=float)
        who = "" if player is None else f"player {player}: "
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError(f"{who}strategy must be a non-empty vector")
        if (arr < 0).any() or abs(arr.sum() - 1.0) > 1e-9:
            raise SimplexError(f"{who}strategy is not a probability vector (sum={arr.sum()!r})")
        return arr.view(cls)


def simulated_payoffs(params: MarketParams, seed: int = 0, rounds: int | None = None,
                      quality_dist: str = "uniform") -> Callable[[tuple], list[float]]:
    """Evaluator that plays a fixed action profile in the market for a short seeded run.

    Each player repeats its action every round; the value is its mean
    settled payoff per minted NFT. Slower than :func:`pricing_game` but uses
    the full ledger dynamics.
    """
    from .distributions import QualitySampler
    from .env import ActionTuple, NftMarketEnv

    def evaluate(profile: tuple) -> list[float]:
        n = len(profile)
        d_max = max(market.map_params(params, a.pi_r, a.lam).d for a in profile)
        total_rounds = rounds if rounds is not None else 2 * d_max + 2
        # minting stops early enough that every NFT settles inside the run
        mint_rounds = max(1, total_rounds - d_max - 1)
        env = NftMarketEnv(params.with_(n_publishers=n), seed=seed, quality_sampler=QualitySampler(quality_dist),
                           horizon=total_rounds)
        actions = [ActionTuple(True, a.lam, a.pi_r, (a.ref_share / 2, a.ref_share / 2) if a.ref_share > 0
                               else (0.0, 0.0), a.price) for a in profile]
        totals = np.zeros(n)
        settled = np.zeros(n)
        idle = [ActionTuple.idle()] * n
        for r in range(max(total_rounds, mint_rounds + d_max + 1)):
            result = env.step(actions if r < mint_rounds else idle)
            for ev in result.settlements:
                if ev.publisher >= 0:
                    totals[ev.publisher] += ev.payoff
                    settled[ev.publisher] += 1
        return list(np.where(settled > 0, totals / np.maximum(settled, 1), 0.0))

    return evaluate


def validate_profile(game: DiscretizedGame, profile: Sequence[np.ndarray]) -> list[np.ndarray]:
    if len(profile) != game.n_players:
        raise ValueError(f"profile has {len(profile)} strategies for {game.n_players} players")
    out = []
    for p, (s, n) in enumerate(zip(profile, game.sizes)):
        s = MixedStrategy(s, p)
        if s.shape != (n,):
            raise ValueError(f"player {p}: strategy of shape {s.shape}, expected ({n},)")
        out.append(np.asarray(s))
    return out


def uniform_profile(game: DiscretizedGame) -> list[np.ndarray]:
    return [np.full(n, 1.0 / n) for n in game.sizes]


def pure_profile(game: DiscretizedGame, indices: Sequence[int]) -> list[np.ndarray]:
    return [np.eye(n)[i] for n, i in zip(game.sizes, indices)]


def action_values(game: DiscretizedGame, player: int, profile: Sequence[np.ndarray]) -> np.ndarray:
    """Expected payoff of each of ``player``'s grid actions against the others' mixtures."""
    profile = validate_profile(game, profile)
    table = game.payoffs[player]
    # contract opponents from the last axis down so earlier axis numbers stay valid
    for q in reversed(range(game.n_players)):
        if q != player:
            table = np.tensordot(table, profile[q], axes=([q], [0]))
    return table


def expected_value(game: DiscretizedGame, player: int, profile: Sequence[np.ndarray]) -> float:
    return float(action_values(game, player, profile) @ np.asarray(profile[player], dtype=float))


def best_response(game: DiscretizedGame, player: int, profile: Sequence[np.ndarray]) -> tuple[int, float]:
    values = action_values(game, player, profile)
    i = int(np.argmax(values))  # first maximum = lowest grid index
    return i, float(values[i])


def exploitability(game: DiscretizedGame, profile: Sequence[np.ndarray]) -> float:
    gaps = [best_response(game, p, profile)[1] - expected_value(game, p, profile) for p in range(game.n_players)]
    return max(0.0, max(gaps))


@dataclass
class FictitiousPlayResult:
    profile: list[np.ndarray]
    exploitability: list[float]


def fictitious_play(game: DiscretizedGame, iterations: int = 1000, initial: Sequence[int] | None = None,
                    record_every: int = 1) -> FictitiousPlayResult:
    """Simultaneous fictitious play; returns the empirical mixtures and their exploitability trace."""
    counts = [np.zeros(n) for n in game.sizes]
    start = initial if initial is not None else [0] * game.n_players
    for c, i in zip(counts, start):
        c[i] += 1
    trace = []
    for t in range(1, iterations + 1):
        profile = [c / c.sum() for c in counts]
        responses = [best_response(game, p, profile)[0] for p in range(game.n_players)]
        for c, i in zip(counts, responses):
            c[i] += 1
        if t % record_every == 0:
            trace.append(exploitability(game, [c / c.sum() for c in counts]))
    return FictitiousPlayResult([c / c.sum() for c in counts], trace)


def write_report(fp, report: dict[str, Any]):
    json.dump(report, fp, indent=2, default=_json_default)
    fp.write("\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if hasattr(obj, "__dataclass_fields__"):
        return {k: getattr(obj, k) for k in obj.__dataclass_fields__}
    raise TypeError(f"cannot serialize {type(obj).__name__}")
