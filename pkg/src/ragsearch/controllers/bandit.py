"""Factored bandits: one arm per (dimension, value), chosen independently per dimension."""
from __future__ import annotations

import math

import numpy as np

from ..space import MAX_SAMPLE_RETRIES, PipelineConfig
from .base import Controller


class ThompsonSampling(Controller):
    """Beta posterior per arm with fractional updates ``a += r, b += 1 - r``."""

    id = "ts"
    defaults = {"prior_alpha": 1.0, "prior_beta": 1.0}

    def __init__(self, space, seed, budget=None, **params):
        super().__init__(space, seed, budget, **params)
        self.alpha = [np.full(n, float(self.params["prior_alpha"])) for n in space.sizes]
        self.beta = [np.full(n, float(self.params["prior_beta"])) for n in space.sizes]

    def _propose(self):
        for _ in range(MAX_SAMPLE_RETRIES):
            idx = tuple(int(np.argmax(self.rng.beta(a, b))) for a, b in zip(self.alpha, self.beta))
            if self.space.is_valid(idx):
                return PipelineConfig(self.space, idx)
        return self.random_config()

    def _observe(self, config, reward):
        r = min(1.0, max(0.0, reward))
        for d, j in enumerate(config.indices):
            self.alpha[d][j] += r
            self.beta[d][j] += 1.0 - r


def ucb_scores(sums, counts, total: int, c: float) -> np.ndarray:
    """``mean + c * sqrt(ln N / n)``; unvisited arms score +inf."""
    sums = np.asarray(sums, dtype=float)
    counts = np.asarray(counts, dtype=float)
    out = np.full(len(counts), np.inf)
    seen = counts > 0
    if total > 0:
        out[seen] = sums[seen] / counts[seen] + c * np.sqrt(math.log(total) / counts[seen])
    return out


class UCB(Controller):
    """Deterministic optimism: per-dimension argmax of UCB scores, lowest index on ties."""

    id = "ucb"
    defaults = {"c": math.sqrt(2.0)}

    def __init__(self, space, seed, budget=None, **params):
        super().__init__(space, seed, budget, **params)
        self.sums = [np.zeros(n) for n in space.sizes]
        self.counts = [np.zeros(n) for n in space.sizes]
        self.total = 0

    def _propose(self):
        idx = tuple(int(np.argmax(ucb_scores(s, n, self.total, self.params["c"])))
                    for s, n in zip(self.sums, self.counts))
        return self.valid_or_random(idx)

    def _observe(self, config, reward):
        self.total += 1
        for d, j in enumerate(config.indices):
            self.sums[d][j] += reward
            self.counts[d][j] += 1
