"""Random sampling and single-trajectory local search."""
from __future__ import annotations

import math

from ..space import MAX_SAMPLE_RETRIES, PipelineConfig
from .base import Controller


class RandomSearch(Controller):
    """Independent uniform samples; observations are ignored."""

    id = "random"

    def _propose(self):
        return self.random_config()


class GreedySearch(Controller):
    """First-improvement hill climbing over Hamming-1 moves.

    Moves are scanned in (dimension, value) order around the current
    incumbent; a neighbour that beats the incumbent becomes the new
    incumbent and the scan starts over around it. Neighbours already
    evaluated are not proposed again. When a full cycle passes without
    improvement the search restarts from a random configuration.
    """

    id = "greedy"

    def __init__(self, space, seed, budget=None, **params):
        super().__init__(space, seed, budget, **params)
        self.moves = [(pos, j) for pos, n in enumerate(space.sizes) for j in range(n)]
        self.n_neighbors = sum(n - 1 for n in space.sizes)
        self.cursor = 0
        self.incumbent: PipelineConfig | None = None
        self.incumbent_reward = -math.inf
        self.stale = 0  # moves examined since the incumbent last changed
        self.seen: dict[tuple, float] = {}

    def _restart_config(self):
        return self.random_config()

    def _next_move(self):
        """Next unevaluated neighbour, or None when the neighbourhood is exhausted."""
        while self.stale < self.n_neighbors:
            pos, j = self.moves[self.cursor]
            self.cursor = (self.cursor + 1) % len(self.moves)
            inc = self.incumbent.indices
            if j == inc[pos]:
                continue
            self.stale += 1
            idx = inc[:pos] + (j,) + inc[pos + 1:]
            if not self.space.is_valid(idx):
                continue
            if idx in self.seen:
                if self.seen[idx] > self.incumbent_reward:
                    self._move_to(PipelineConfig(self.space, idx), self.seen[idx])
                continue
            return PipelineConfig(self.space, idx)
        return None

    def _move_to(self, config, reward):
        self.incumbent = config
        self.incumbent_reward = reward
        self.stale = 0
        self.cursor = 0

    def _propose(self):
        if self.incumbent is not None:
            cand = self._next_move()
            if cand is not None:
                return cand
            self.incumbent = None
        return self._restart_config()

    def _observe(self, config, reward):
        self.seen[config.indices] = reward
        if self.incumbent is None:
            self._move_to(config, reward)
        elif reward > self.incumbent_reward:
            self._move_to(config, reward)


class IteratedLocalSearch(GreedySearch):
    """Greedy refinement with perturbation of the best-so-far after ``patience`` stalled trials.

    The perturbation resamples ``perturb_dims`` distinct, uniformly chosen
    dimensions of the best configuration found so far; local search
    continues from the perturbed point.
    """

    id = "ils"
    defaults = {"patience": 3, "perturb_dims": 2}

    def __init__(self, space, seed, budget=None, **params):
        super().__init__(space, seed, budget, **params)
        self.stalled_trials = 0
        self.perturbations = 0

    def perturb(self, config: PipelineConfig) -> PipelineConfig:
        n_dims = min(self.params["perturb_dims"], len(self.space))
        for _ in range(MAX_SAMPLE_RETRIES):
            dims = self.rng.choice(len(self.space), size=n_dims, replace=False)
            idx = list(config.indices)
            for pos in dims:
                idx[pos] = int(self.rng.integers(self.space.sizes[pos]))
            if self.space.is_valid(idx):
                return PipelineConfig(self.space, tuple(idx))
        return self.random_config()

    def _restart_config(self):
        self.stalled_trials = 0
        if not self.history:
            return self.random_config()
        self.perturbations += 1
        return self.perturb(self.best.config)

    def _propose(self):
        if self.incumbent is not None and self.stalled_trials >= self.params["patience"]:
            self.incumbent = None
        return super()._propose()

    def _observe(self, config, reward):
        restarting = self.incumbent is None
        improved = self.incumbent is not None and reward > self.incumbent_reward
        super()._observe(config, reward)
        if restarting or improved:
            self.stalled_trials = 0
        else:
            self.stalled_trials += 1


class CoordinateDescent(Controller):
    """Sweep one dimension at a time, fix its best value, advance cyclically.

    Each sweep proposes every non-current value of the active dimension
    once (skipping configurations already evaluated), then fixes the
    argmax; ties go to the lower value index. If a whole cycle over the
    dimensions yields nothing new, the base restarts at random.
    """

    id = "coordinate"

    def __init__(self, space, seed, budget=None, **params):
        super().__init__(space, seed, budget, **params)
        self.base: PipelineConfig | None = None
        self.base_reward = -math.inf
        self.dim = 0
        self.queue: list[int] | None = None
        self.results: dict[int, float] = {}
        self.current_value: int | None = None
        self.idle_dims = 0
        self.proposed_in_sweep = False
        self.seen: dict[tuple, float] = {}

    def _start_sweep(self):
        cur = self.base.indices[self.dim]
        self.queue = [j for j in range(self.space.sizes[self.dim]) if j != cur]
        self.results = {cur: self.base_reward}
        self.proposed_in_sweep = False

    def _finish_sweep(self):
        best_j = min(self.results, key=lambda j: (-self.results[j], j))
        self.base = self.base.with_index(self.space.names[self.dim], best_j)
        self.base_reward = self.results[best_j]
        self.idle_dims = 0 if self.proposed_in_sweep else self.idle_dims + 1
        self.dim = (self.dim + 1) % len(self.space)
        self.queue = None

    def _propose(self):
        while self.base is not None:
            if self.idle_dims >= len(self.space):
                self.base, self.idle_dims, self.queue = None, 0, None
                break
            if self.queue is None:
                self._start_sweep()
            while self.queue:
                j = self.queue.pop(0)
                idx = self.base.indices[:self.dim] + (j,) + self.base.indices[self.dim + 1:]
                if not self.space.is_valid(idx):
                    continue
                if idx in self.seen:
                    self.results[j] = self.seen[idx]
                    continue
                self.current_value = j
                self.proposed_in_sweep = True
                return PipelineConfig(self.space, idx)
            self._finish_sweep()
        self.current_value = None
        return self.random_config()

    def _observe(self, config, reward):
        self.seen[config.indices] = reward
        if self.base is None:
            self.base, self.base_reward = config, reward
            self.dim = 0
            self.queue = None
        elif self.current_value is not None:
            self.results[self.current_value] = reward


def acceptance_probability(delta: float, temperature: float) -> float:
    """Metropolis rule: 1 for non-negative ``delta``, else ``exp(delta / T)``."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if delta >= 0:
        return 1.0
    return math.exp(delta / temperature)


def sa_accept(delta: float, temperature: float, rng) -> bool:
    if delta >= 0:
        return True
    return bool(rng.random() < acceptance_probability(delta, temperature))


class SimulatedAnnealing(Controller):
    """Single-dimension random moves accepted by the Metropolis rule; geometric cooling per trial."""

    id = "sa"
    defaults = {"t0": 0.1, "cooling": 0.95}

    def __init__(self, space, seed, budget=None, **params):
        super().__init__(space, seed, budget, **params)
        self.temperature = float(self.params["t0"])
        self.current: PipelineConfig | None = None
        self.current_reward = -math.inf

    def _propose(self):
        if self.current is None:
            return self.random_config()
        return self.mutate_one(self.current)

    def _observe(self, config, reward):
        if self.current is None:
            self.current, self.current_reward = config, reward
        elif sa_accept(reward - self.current_reward, self.temperature, self.rng):
            self.current, self.current_reward = config, reward
        self.temperature *= self.params["cooling"]
