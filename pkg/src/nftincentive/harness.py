"""Seeded experiment campaigns: run the market with learning publishers, normalize, sweep, emit CSV.

Reward cells are indexed by (seed, publisher, epoch). A cell holds the summed
payoff of that publisher's NFTs settling in that epoch; when nothing settles it
is 0 if the publisher stayed idle that epoch and null (NaN) if it published.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import IO, Any, Sequence

import numpy as np

from .distributions import DISTRIBUTIONS, QualitySampler
from .env import NftMarketEnv
from .errors import ConfigError, DomainError
from .learner import Hyperparams, PPOAgent, Transition, to_action
from .market import MarketParams

CSV_COLUMNS = ("run_id", "axis_value", "seed", "epoch", "publisher", "reward_raw", "reward_norm")
FINAL_WINDOW = 10


@dataclass(frozen=True)
class ExperimentConfig:
    n_publishers: int = 10
    quality_dist: str = "uniform"
    q_hat: float = 0.01
    candidate_size: int = 10
    d_hat: int = 10
    fixed_reward: float = 2.0
    fixed_expense: float = 0.1
    epochs: int = 100
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    sigma_hat: float = 0.9
    k: float = 0.3
    w0: float = 0.2
    psi_max: float = 1.0
    pi_max: float = 1.0
    kappa_d: float = 5.0
    kappa_q: float = 2.0
    kappa_sigma: float = 0.3
    sigma_floor: float = 0.5
    phi_mode: str = "constant"
    window: int | None = None
    price_sensitivity: float = 1.0
    normal_mu: float = 0.5
    normal_sd: float = 0.15
    pareto_alpha: float = 1.16
    poisson_lam: float = 3.0
    hidden: int = 64
    batch_size: int = 64
    capacity: int = 4096
    clip: float = 0.2
    update_epochs: int = 4
    lr: float = 3e-4
    entropy_coef: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        self.validate()

    def validate(self):
        if self.epochs < 1:
            raise ConfigError("epochs", "must be >= 1")
        if not self.seeds:
            raise ConfigError("seeds", "need at least one seed")
        if self.quality_dist not in DISTRIBUTIONS:
            raise ConfigError("quality_dist", f"must be one of {DISTRIBUTIONS}")
        if self.window is not None and self.window < 1:
            raise ConfigError("window", "must be >= 1")
        if self.price_sensitivity < 0:
            raise ConfigError("price_sensitivity", "must be >= 0")
        for name in ("hidden", "batch_size", "capacity", "update_epochs"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be >= 1")
        if self.batch_size > self.capacity:
            raise ConfigError("batch_size", "cannot exceed capacity")
        if not 0 < self.clip < 1:
            raise ConfigError("clip", "must lie in (0, 1)")
        if self.lr <= 0:
            raise ConfigError("lr", "must be > 0")
        self.market_params()
        self.quality_sampler()

    def market_params(self) -> MarketParams:
        names = {f.name for f in fields(MarketParams)}
        try:
            return MarketParams(**{k: v for k, v in dataclasses.asdict(self).items() if k in names})
        except DomainError as exc:
            raise ConfigError(str(exc).split("=", 1)[0], str(exc)) from None

    def quality_sampler(self) -> QualitySampler:
        return QualitySampler(self.quality_dist, self.normal_mu, self.normal_sd, self.pareto_alpha, self.poisson_lam)

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(
            hidden=self.hidden, batch_size=self.batch_size, capacity=self.capacity, clip=self.clip,
            epochs=self.update_epochs, lr=self.lr, entropy_coef=self.entropy_coef,
        )

    def replace(self, **changes) -> "ExperimentConfig":
        unknown = set(changes) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown configuration key")
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_mapping(cls, mapping: dict[str, Any]) -> "ExperimentConfig":
        return cls().replace(**{k: _coerce(k, v) for k, v in mapping.items()}) if mapping else cls()

    def echo(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["seeds"] = list(self.seeds)
        return out


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(name: str, value: Any) -> Any:
    """Cast ``value`` (possibly a string from the command line) to the field's type."""
    if name not in _FIELD_TYPES:
        raise ConfigError(name, "unknown configuration key")
    kind = _FIELD_TYPES[name]
    try:
        if kind == "tuple[int, ...]":
            if isinstance(value, str):
                return tuple(int(v) for v in value.split(",") if v.strip())
            return tuple(int(v) for v in value)
        if kind == "int | None":
            return None if value in (None, "", "none", "None") else int(value)
        if kind == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if kind == "float":
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(name, f"cannot interpret {value!r} as {kind}") from None


@dataclass
class RewardSeries:
    """Reward cells of one configuration across its seeds."""

    config: ExperimentConfig
    raw: np.ndarray  # (n_seeds, n_publishers, epochs); NaN marks null
    active: np.ndarray  # same shape, True where the publisher minted
    unsettled: np.ndarray  # (n_seeds,) NFTs still live at the horizon
    run_id: str = "run"
    axis_value: Any = ""
    normalized: np.ndarray = field(init=False)

    def __post_init__(self):
        self.normalized = np.stack([normalize(r) for r in self.raw])

    @property
    def seeds(self) -> tuple[int, ...]:
        return self.config.seeds

    def final_window(self, width: int = FINAL_WINDOW) -> np.ndarray:
        return self.normalized[..., -width:]

    def write_csv(self, fp: IO[str], header: bool = True):
        writer = csv.writer(fp, lineterminator="\n")
        if header:
            writer.writerow(CSV_COLUMNS)
        n_seeds, n_pub, n_ep = self.raw.shape
        for s in range(n_seeds):
            for e in range(n_ep):
                for p in range(n_pub):
                    writer.writerow((
                        self.run_id, _fmt(self.axis_value), self.seeds[s], e + 1, p,
                        _fmt(self.raw[s, p, e]), _fmt(self.normalized[s, p, e]),
                    ))


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return "" if math.isnan(x) else repr(float(x))
    return str(x)


def read_csv(fp: IO[str]) -> list[dict[str, Any]]:
    rows = []
    for row in csv.DictReader(fp):
        for key in ("reward_raw", "reward_norm"):
            row[key] = None if row[key] == "" else float(row[key])
        for key in ("seed", "epoch", "publisher"):
            row[key] = int(row[key])
        rows.append(row)
    return rows


def normalize(values: np.ndarray) -> np.ndarray:
    """Divide by the largest absolute non-null value; nulls (NaN) pass through."""
    values = np.asarray(values, dtype=float)
    finite = values[~np.isnan(values)]
    scale = np.abs(finite).max() if finite.size else 0.0
    if scale == 0:
        return np.where(np.isnan(values), np.nan, 0.0)
    return values / scale


def run_seed(config: ExperimentConfig, seed: int) -> tuple[np.ndarray, np.ndarray, int]:
    """One seeded run; returns ``(raw, active, unsettled)`` for that seed."""
    params = config.market_params()
    env_seq, *agent_seqs = np.random.SeedSequence(seed).spawn(params.n_publishers + 1)
    env = NftMarketEnv(
        params, seed=env_seq, quality_sampler=config.quality_sampler(), window=config.window,
        price_sensitivity=config.price_sensitivity, horizon=config.epochs,
    )
    hp = config.hyperparams()
    agents = [PPOAgent(env.obs_size, np.random.default_rng(s), hp) for s in agent_seqs]
    n = params.n_publishers
    raw = np.full((n, config.epochs), np.nan)
    active = np.zeros((n, config.epochs), dtype=bool)
    pending: dict[int, tuple] = {}
    obs = env.reset()
    for e in range(config.epochs):
        vectors = [o.vector() for o in obs]
        choices = [agent.choose(v) for agent, v in zip(agents, vectors)]
        actions = [to_action(a, params) for _, a, _ in choices]
        result = env.step(actions)
        next_vectors = [o.vector() for o in result.observations]
        minted = {m.publisher: m.nft_id for m in result.mints}
        for p in range(n):
            u, _, logp = choices[p]
            if p in minted:
                active[p, e] = True
                pending[minted[p]] = (vectors[p], u, logp)
            else:
                raw[p, e] = 0.0
                agents[p].remember(Transition(-1, vectors[p], next_vectors[p], u, logp))
        for ev in result.settlements:
            if ev.publisher < 0:
                continue
            state, u, logp = pending.pop(ev.nft_id)
            p = ev.publisher
            agents[p].remember(Transition(ev.nft_id, state, next_vectors[p], u, logp, ev.outcome_total, ev.income_total))
            raw[p, e] = (0.0 if np.isnan(raw[p, e]) else raw[p, e]) + ev.payoff
        for agent in agents:
            agent.update()
        obs = result.observations
    return raw, active, len(env.unsettled_publisher_nfts())


def _run_seed_job(args):
    return run_seed(*args)


def run(config: ExperimentConfig, run_id: str = "run", axis_value: Any = "", jobs: int = 1) -> RewardSeries:
    tasks = [(config, s) for s in config.seeds]
    results = _map(_run_seed_job, tasks, jobs)
    raw, active, unsettled = zip(*results)
    return RewardSeries(config, np.stack(raw), np.stack(active), np.array(unsettled), run_id, axis_value)


def _map(fn, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def window_stats(values: np.ndarray) -> dict[str, float]:
    """Median and interquartile range of the non-null entries."""
    v = values[~np.isnan(values)]
    if v.size == 0:
        return {"median": math.nan, "iqr": math.nan, "n": 0}
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return {"median": float(med), "iqr": float(q3 - q1), "n": int(v.size)}


def summarize(series: RewardSeries, width: int = FINAL_WINDOW) -> dict[str, Any]:
    window = series.final_window(width)
    out = {"axis_value": series.axis_value, **window_stats(window)}
    out["per_seed"] = [window_stats(w) for w in window]
    return out


@dataclass
class SweepResult:
    axis: str
    series: list[RewardSeries]
    summary: list[dict[str, Any]]


def sweep(base: ExperimentConfig, axis: str, values: Sequence[Any], jobs: int = 1) -> SweepResult:
    if axis not in _FIELD_TYPES or axis == "seeds":
        raise ConfigError(axis, "unknown sweep axis")
    configs = [base.replace(**{axis: _coerce(axis, v)}) for v in values]
    tasks = [(c, s) for c in configs for s in c.seeds]
    results = iter(_map(_run_seed_job, tasks, jobs))
    series = []
    for i, c in enumerate(configs):
        raw, active, unsettled = zip(*(next(results) for _ in c.seeds))
        value = getattr(c, axis)
        series.append(RewardSeries(c, np.stack(raw), np.stack(active), np.array(unsettled),
                                   f"{axis}-{i}", value))
    return SweepResult(axis, series, [summarize(s) for s in series])


def write_config_echo(fp: IO[str], config: ExperimentConfig, extra: dict | None = None):
    json.dump({**config.echo(), **(extra or {})}, fp, indent=2, sort_keys=True)
    fp.write("\n")
