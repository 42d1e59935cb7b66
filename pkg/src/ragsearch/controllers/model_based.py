"""Density-guided search: a categorical TPE and the cross-entropy method."""
from __future__ import annotations

import math

import numpy as np

from ..space import PipelineConfig
from .base import Controller, sample_categorical


def tpe_split(rewards, gamma: float) -> tuple[list[int], list[int]]:
    """Indices of the good (top ``gamma`` quantile) and bad trials.

    Trials are ranked by reward descending, earlier trials first on ties;
    the good set holds ``max(1, ceil(gamma * n))`` trials.
    """
    order = sorted(range(len(rewards)), key=lambda i: (-rewards[i], i))
    n_good = max(1, math.ceil(gamma * len(rewards)))
    return order[:n_good], order[n_good:]


def categorical_density(counts, prior: float = 1.0) -> np.ndarray:
    """Add-``prior`` smoothed categorical distribution from value counts."""
    counts = np.asarray(counts, dtype=float) + prior
    return counts / counts.sum()


class TPE(Controller):
    """Tree-structured Parzen estimator with independent categorical densities per dimension.

    After ``n_startup`` random trials the history is split into good and bad
    sets; ``n_candidates`` draws from the good densities ``l`` are scored by
    ``prod_d l_d / g_d`` and the best is proposed.
    """

    id = "tpe"
    defaults = {"gamma": 0.25, "n_startup": 5, "n_candidates": 10, "prior": 1.0}

    def densities(self):
        rewards = [o.reward for o in self.history]
        good, bad = tpe_split(rewards, self.params["gamma"])
        sizes = self.space.sizes
        good_counts = [np.zeros(n) for n in sizes]
        bad_counts = [np.zeros(n) for n in sizes]
        for i in good:
            for d, j in enumerate(self.history[i].config.indices):
                good_counts[d][j] += 1
        for i in bad:
            for d, j in enumerate(self.history[i].config.indices):
                bad_counts[d][j] += 1
        prior = self.params["prior"]
        return ([categorical_density(c, prior) for c in good_counts],
                [categorical_density(c, prior) for c in bad_counts])

    def _propose(self):
        if len(self.history) < self.params["n_startup"]:
            return self.random_config()
        l, g = self.densities()
        log_ratio = [np.log(a) - np.log(b) for a, b in zip(l, g)]
        best, best_score = None, -math.inf
        for _ in range(self.params["n_candidates"]):
            cand = sample_categorical(self.space, l, self.rng)
            score = sum(r[j] for r, j in zip(log_ratio, cand.indices))
            if score > best_score:
                best, best_score = cand, score
        return best


def cem_update(probs, elite_configs, smoothing: float):
    """``p <- (1 - smoothing) * p + smoothing * elite_frequency`` per dimension."""
    out = []
    for d, p in enumerate(probs):
        freq = np.zeros(len(p))
        for cfg in elite_configs:
            idx = cfg.indices[d] if isinstance(cfg, PipelineConfig) else cfg[d]
            freq[idx] += 1
        freq /= len(elite_configs)
        out.append((1.0 - smoothing) * np.asarray(p, dtype=float) + smoothing * freq)
    return out


class CrossEntropyMethod(Controller):
    """Per-dimension categorical sampling distribution refit to the elite of each batch."""

    id = "cem"
    defaults = {"batch_size": 5, "n_elite": 2, "smoothing": 0.3}

    def __init__(self, space, seed, budget=None, **params):
        super().__init__(space, seed, budget, **params)
        self.probs = [np.full(n, 1.0 / n) for n in space.sizes]
        self.batch = []

    def _propose(self):
        return sample_categorical(self.space, self.probs, self.rng)

    def _observe(self, config, reward):
        self.batch.append((config, reward))
        if len(self.batch) >= self.params["batch_size"]:
            ranked = sorted(range(len(self.batch)), key=lambda i: (-self.batch[i][1], i))
            elite = [self.batch[i][0] for i in ranked[:self.params["n_elite"]]]
            self.probs = cem_update(self.probs, elite, self.params["smoothing"])
            self.batch = []
