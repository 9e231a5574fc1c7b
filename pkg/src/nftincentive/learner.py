"""Per-publisher policy learner: small numpy MLPs, squashed Gaussian policy, clipped updates.

Raw actions ``u`` are Gaussian in an unbounded space; the executed action is
``sigmoid(u)`` in ``(0, 1)^6``. Probability ratios are taken on ``u`` so the
squashing Jacobian cancels.
"""
from __future__ import annotations

import json
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass

import numpy as np

from .env import ActionTuple
from .market import MarketParams

log = logging.getLogger(__name__)

ACTION_DIM = 6  # trigger, lambda, pi_r, w_dataset, w_model, price
LOG_STD_MIN = math.log(1e-4)
LOG_STD_MAX = math.log(10.0)
_LOG_2PI = math.log(2.0 * math.pi)
CHECKPOINT_FORMAT = "nftinc-agent"
CHECKPOINT_VERSION = 1


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class Dense:
    def __init__(self, n_in, n_out, rng, gain=1.0):
        self.W = rng.normal(0.0, gain / math.sqrt(n_in), size=(n_in, n_out))
        self.b = np.zeros(n_out)
        self.gW = np.zeros_like(self.W)
        self.gb = np.zeros_like(self.b)

    def params(self):
        return [self.W, self.b]

    def grads(self):
        return [self.gW, self.gb]

    def forward(self, x):
        self._x = x
        return x @ self.W + self.b

    def backward(self, dy):
        self.gW += self._x.T @ dy
        self.gb += dy.sum(axis=0)
        return dy @ self.W.T


class Tanh:
    def params(self):
        return []

    def grads(self):
        return []

    def forward(self, x):
        self._y = np.tanh(x)
        return self._y

    def backward(self, dy):
        return dy * (1.0 - self._y ** 2)


class MLP:
    """Two tanh hidden layers and a linear head."""

    def __init__(self, n_in, hidden, n_out, rng, out_gain=1.0):
        self.layers = [
            Dense(n_in, hidden, rng), Tanh(),
            Dense(hidden, hidden, rng), Tanh(),
            Dense(hidden, n_out, rng, gain=out_gain),
        ]

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def grads(self):
        return [g for layer in self.layers for g in layer.grads()]

    def zero_grad(self):
        for g in self.grads():
            g[...] = 0.0

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy


def gaussian_log_prob(u, mu, log_std):
    z = (u - mu) * np.exp(-log_std)
    return np.sum(-0.5 * z ** 2 - log_std - 0.5 * _LOG_2PI, axis=-1)


def gaussian_log_prob_grads(u, mu, log_std):
    """Derivatives of the per-sample log-probability with respect to ``mu`` and ``log_std``."""
    inv_var = np.exp(-2.0 * log_std)
    d_mu = (u - mu) * inv_var
    d_log_std = (u - mu) ** 2 * inv_var - 1.0
    return d_mu, d_log_std


def gaussian_entropy(log_std):
    return float(np.sum(log_std + 0.5 * (1.0 + _LOG_2PI)))


def clipped_surrogate(logp_new, logp_old, adv, clip):
    """Negated clipped objective averaged over the batch.

    Returns ``(loss, dloss/dlogp_new, clip_fraction)``.
    """
    ratio = np.exp(logp_new - logp_old)
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip)
    unclipped_obj = ratio * adv
    clipped_obj = clipped * adv
    use_unclipped = unclipped_obj <= clipped_obj
    n = len(adv)
    loss = -np.mean(np.minimum(unclipped_obj, clipped_obj))
    grad = np.where(use_unclipped, -unclipped_obj / n, 0.0)
    clip_frac = float(np.mean(np.abs(ratio - 1.0) > clip))
    return loss, grad, clip_frac


class Adam:
    def __init__(self, params, lr=3e-4, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class Hyperparams:
    hidden: int = 64
    batch_size: int = 64
    capacity: int = 4096
    clip: float = 0.2
    epochs: int = 4
    lr: float = 3e-4
    entropy_coef: float = 1e-3
    init_log_std: float = 0.0
    normalize_advantage: bool = False


@dataclass
class Transition:
    tx_id: int
    state: np.ndarray
    next_state: np.ndarray | None
    action: np.ndarray  # raw pre-squash sample
    log_prob: float
    outcome_total: float = 0.0
    income_total: float = 0.0

    @property
    def reward(self) -> float:
        return self.income_total - self.outcome_total


class RolloutBuffer:
    """Ring buffer of transitions; sampling only touches the filled region."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._items: list[Transition] = []
        self._next = 0

    def __len__(self):
        return len(self._items)

    def add(self, t: Transition):
        if len(self._items) < self.capacity:
            self._items.append(t)
        else:
            self._items[self._next] = t
        self._next = (self._next + 1) % self.capacity

    def sample(self, rng: np.random.Generator, n: int) -> list[Transition]:
        idx = rng.choice(len(self._items), size=min(n, len(self._items)), replace=False)
        return [self._items[i] for i in idx]


@dataclass
class UpdateStats:
    policy_loss: float
    value_loss: float
    clip_fraction: float
    entropy: float


class Agent(ABC):
    """What the experiment loop needs from a learner."""

    @abstractmethod
    def choose(self, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
        """Return ``(raw, squashed, log_prob)`` for one observation vector."""

    @abstractmethod
    def remember(self, transition: Transition): ...

    @abstractmethod
    def update(self) -> UpdateStats | None: ...


def to_action(a: np.ndarray, params: MarketParams, psi_min: float | None = None) -> ActionTuple:
    """Map a squashed vector in ``(0, 1)^6`` onto an action tuple."""
    psi_min = 1e-3 * params.psi_max if psi_min is None else psi_min
    wd, wm = float(a[3]), float(a[4])
    total = wd + wm
    share = 1.0 - params.w0
    refs = (share / 2, share / 2) if total <= 0 else (share * wd / total, share * wm / total)
    return ActionTuple(
        trigger=bool(a[0] > 0.5),
        lam=float(a[1]),
        pi_r=float(a[2]) * params.pi_max,
        ref_weights=refs,
        price=min(params.psi_max, max(psi_min, float(a[5]) * params.psi_max)),
    )


class PPOAgent(Agent):
    def __init__(self, obs_dim: int, rng: np.random.Generator, hp: Hyperparams | None = None,
                 act_dim: int = ACTION_DIM):
        self.hp = hp or Hyperparams()
        self.rng = rng
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.actor = MLP(obs_dim, self.hp.hidden, act_dim, rng, out_gain=0.01)
        self.critic = MLP(obs_dim, self.hp.hidden, 1, rng, out_gain=0.0)
        self.log_std = np.full(act_dim, float(self.hp.init_log_std))
        self.g_log_std = np.zeros(act_dim)
        self.actor_opt = Adam(self.actor.params() + [self.log_std], lr=self.hp.lr)
        self.critic_opt = Adam(self.critic.params(), lr=self.hp.lr)
        self.buffer = RolloutBuffer(self.hp.capacity)

    def mean_action(self, obs: np.ndarray) -> np.ndarray:
        return sigmoid(self.actor.forward(np.atleast_2d(obs))[0])

    def choose(self, obs):
        mu = self.actor.forward(np.atleast_2d(obs))[0]
        u = mu + np.exp(self.log_std) * self.rng.standard_normal(self.act_dim)
        logp = float(gaussian_log_prob(u, mu, self.log_std))
        return u, sigmoid(u), logp

    def remember(self, transition: Transition):
        self.buffer.add(transition)

    def update(self) -> UpdateStats | None:
        hp = self.hp
        if len(self.buffer) < hp.batch_size:
            log.debug("update skipped: %d < %d transitions", len(self.buffer), hp.batch_size)
            return None
        stats = []
        for _ in range(hp.epochs):
            batch = self.buffer.sample(self.rng, hp.batch_size)
            states = np.stack([t.state for t in batch])
            raw = np.stack([t.action for t in batch])
            old = np.array([t.log_prob for t in batch])
            rewards = np.array([t.reward for t in batch])
            stats.append(self._step(states, raw, old, rewards))
        rows = [(s.policy_loss, s.value_loss, s.clip_fraction, s.entropy) for s in stats]
        return UpdateStats(*(float(x) for x in np.mean(rows, axis=0)))

    def _step(self, states, raw, old_logp, rewards) -> UpdateStats:
        hp = self.hp
        values = self.critic.forward(states)[:, 0]
        adv = rewards - values
        if hp.normalize_advantage:
            adv = (adv - adv.mean()) / (adv.std() + 1e-8)

        self.actor.zero_grad()
        mu = self.actor.forward(states)
        logp = gaussian_log_prob(raw, mu, self.log_std)
        loss, d_logp, clip_frac = clipped_surrogate(logp, old_logp, adv, hp.clip)
        d_mu, d_ls = gaussian_log_prob_grads(raw, mu, self.log_std)
        self.actor.backward(d_logp[:, None] * d_mu)
        # entropy bonus: d(-coef * H)/d log_std = -coef per dimension
        self.g_log_std[...] = (d_logp[:, None] * d_ls).sum(axis=0) - hp.entropy_coef
        self.actor_opt.step(self.actor.grads() + [self.g_log_std])
        np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX, out=self.log_std)

        self.critic.zero_grad()
        v = self.critic.forward(states)[:, 0]
        diff = v - rewards
        self.critic.backward((diff / len(diff))[:, None])
        self.critic_opt.step(self.critic.grads())

        entropy = gaussian_entropy(self.log_std)
        return UpdateStats(loss - hp.entropy_coef * entropy, 0.5 * float(np.mean(diff ** 2)), clip_frac, entropy)

    # checkpoint layout: one .npz archive holding
    #   format, version            scalar strings / ints
    #   hyperparams, rng_state     JSON strings
    #   actor_<i>, critic_<i>      parameter arrays in MLP.params() order
    #   log_std                    (act_dim,)
    def save(self, path):
        arrays = {f"actor_{i}": p for i, p in enumerate(self.actor.params())}
        arrays.update({f"critic_{i}": p for i, p in enumerate(self.critic.params())})
        np.savez(
            path,
            format=np.array(CHECKPOINT_FORMAT),
            version=np.array(CHECKPOINT_VERSION),
            hyperparams=np.array(json.dumps(asdict(self.hp))),
            rng_state=np.array(json.dumps(self.rng.bit_generator.state)),
            obs_dim=np.array(self.obs_dim),
            act_dim=np.array(self.act_dim),
            log_std=self.log_std,
            **arrays,
        )

    @classmethod
    def load(cls, path) -> "PPOAgent":
        with np.load(path) as data:
            if str(data["format"]) != CHECKPOINT_FORMAT or int(data["version"]) != CHECKPOINT_VERSION:
                raise ValueError(f"{path}: not a version {CHECKPOINT_VERSION} agent checkpoint")
            rng = np.random.default_rng()
            agent = cls(int(data["obs_dim"]), rng, Hyperparams(**json.loads(str(data["hyperparams"]))),
                        act_dim=int(data["act_dim"]))
            # restore after construction, which draws initial weights from rng
            rng.bit_generator.state = json.loads(str(data["rng_state"]))
            for i, p in enumerate(agent.actor.params()):
                p[...] = data[f"actor_{i}"]
            for i, p in enumerate(agent.critic.params()):
                p[...] = data[f"critic_{i}"]
            agent.log_std[...] = data["log_std"]
        return agent
