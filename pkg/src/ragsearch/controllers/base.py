from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..space import MAX_SAMPLE_RETRIES, PipelineConfig, SearchSpace, SpaceError, sample_uniform


class ProtocolError(RuntimeError):
    """propose/observe called out of order, or with a config that was not proposed."""


class BudgetExhausted(ProtocolError):
    pass


class Observation(NamedTuple):
    index: int
    config: PipelineConfig
    reward: float
    failed: bool


class Controller:
    """Propose/observe search loop over a :class:`SearchSpace`.

    Subclasses implement ``_propose`` and ``_observe``. Every tunable
    constant is listed in ``defaults`` and may be overridden through
    keyword arguments. Given the same space, seed and observation
    sequence a controller always proposes the same configurations.
    """

    id = "base"
    defaults: dict = {}

    def __init__(self, space: SearchSpace, seed: int, budget: int | None = None, **params):
        unknown = set(params) - set(self.defaults)
        if unknown:
            raise ValueError(f"{self.id}: unknown parameters {sorted(unknown)}")
        self.space = space
        self.seed = seed
        self.budget = budget
        self.params = {**self.defaults, **params}
        self.rng = np.random.default_rng(seed)
        self.history: list[Observation] = []
        self._pending: PipelineConfig | None = None
        self.n_proposed = 0

    def propose(self) -> PipelineConfig:
        if self._pending is not None:
            raise ProtocolError("propose() called again before observe()")
        if self.budget is not None and self.n_proposed >= self.budget:
            raise BudgetExhausted(f"budget of {self.budget} proposals exhausted")
        config = self._propose()
        self._pending = config
        self.n_proposed += 1
        return config

    def observe(self, config: PipelineConfig, reward: float, failed: bool = False) -> None:
        if self._pending is None:
            raise ProtocolError("observe() without a pending proposal")
        if config != self._pending:
            raise ProtocolError("observed config differs from the pending proposal")
        self._pending = None
        reward = 0.0 if failed else float(reward)
        self.history.append(Observation(len(self.history), config, reward, failed))
        self._observe(config, reward)

    # -- helpers -------------------------------------------------------
    @property
    def best(self) -> Observation | None:
        if not self.history:
            return None
        return max(self.history, key=lambda o: (o.reward, -o.index))

    def random_config(self) -> PipelineConfig:
        return sample_uniform(self.space, self.rng)

    def valid_or_random(self, indices) -> PipelineConfig:
        if self.space.is_valid(indices):
            return PipelineConfig(self.space, tuple(indices))
        return self.random_config()

    def mutable_positions(self) -> list[int]:
        return [i for i, n in enumerate(self.space.sizes) if n > 1]

    def mutate_one(self, config: PipelineConfig) -> PipelineConfig:
        """Change exactly one uniformly chosen dimension to a different uniformly chosen value."""
        positions = self.mutable_positions()
        if not positions:
            return config
        for _ in range(MAX_SAMPLE_RETRIES):
            pos = positions[self.rng.integers(len(positions))]
            n = self.space.sizes[pos]
            j = int(self.rng.integers(n - 1))
            if j >= config.indices[pos]:
                j += 1
            idx = config.indices[:pos] + (j,) + config.indices[pos + 1:]
            if self.space.is_valid(idx):
                return PipelineConfig(self.space, idx)
        raise SpaceError("no valid single-dimension mutation found")

    def _propose(self) -> PipelineConfig:
        raise NotImplementedError

    def _observe(self, config: PipelineConfig, reward: float) -> None:
        pass


def sample_categorical(space: SearchSpace, probs, rng) -> PipelineConfig:
    """Draw each dimension independently from ``probs[d]``; rejection-sample constraints."""
    for _ in range(MAX_SAMPLE_RETRIES):
        idx = tuple(int(rng.choice(len(p), p=p)) for p in probs)
        if space.is_valid(idx):
            return PipelineConfig(space, idx)
    raise SpaceError("no valid configuration drawn from the sampling distribution")
