"""Samplers for the quality of freshly published resources, all in [0, 1]."""
from __future__ import annotations

import numpy as np

from .errors import ConfigError

DISTRIBUTIONS = ("uniform", "normal", "pareto", "poisson")


class QualitySampler:
    """Draws qualities from one named family.

    ``pareto`` and ``poisson`` divide each draw by the largest value seen so
    far by this sampler, so early draws are relative to a short history.
    """

    def __init__(self, name="uniform", normal_mu=0.5, normal_sd=0.15, pareto_alpha=1.16, poisson_lam=3.0):
        if name not in DISTRIBUTIONS:
            raise ConfigError("quality_dist", f"unknown distribution {name!r}; expected one of {DISTRIBUTIONS}")
        if normal_sd <= 0:
            raise ConfigError("normal_sd", "must be > 0")
        if pareto_alpha <= 0:
            raise ConfigError("pareto_alpha", "must be > 0")
        if poisson_lam <= 0:
            raise ConfigError("poisson_lam", "must be > 0")
        self.name = name
        self.normal_mu = normal_mu
        self.normal_sd = normal_sd
        self.pareto_alpha = pareto_alpha
        self.poisson_lam = poisson_lam
        self._max_seen = 0.0

    def _relative(self, x):
        self._max_seen = max(self._max_seen, x)
        return x / self._max_seen if self._max_seen > 0 else 0.0

    def __call__(self, rng: np.random.Generator) -> float:
        if self.name == "uniform":
            x = rng.random()
        elif self.name == "normal":
            x = rng.normal(self.normal_mu, self.normal_sd)
        elif self.name == "pareto":
            x = self._relative(rng.pareto(self.pareto_alpha))
        else:
            x = self._relative(float(rng.poisson(self.poisson_lam)))
        return float(min(1.0, max(0.0, x)))
