"""The thirteen search controllers and the registry used to build them by id."""
from __future__ import annotations

from .bandit import UCB, ThompsonSampling, ucb_scores
from .base import BudgetExhausted, Controller, Observation, ProtocolError
from .evolution import RegularizedEvolution
from .local import (CoordinateDescent, GreedySearch, IteratedLocalSearch, RandomSearch,
                    SimulatedAnnealing, acceptance_probability, sa_accept)
from .model_based import TPE, CrossEntropyMethod, categorical_density, cem_update, tpe_split
from .policy import (GRPO, DrGRPO, ReinforcePP, entropy_gradient, group_advantages,
                     policy_gradient_step, softmax)

REGISTRY: dict[str, type[Controller]] = {}

# display names used in reports
DISPLAY_NAMES = {
    "random": "Random", "greedy": "Greedy", "coordinate": "Coord.", "sa": "SA", "ils": "ILS",
    "tpe": "TPE", "cem": "CEM", "regevo": "Reg-Evo", "ts": "TS", "ucb": "UCB",
    "grpo": "GRPO", "drgrpo": "Dr. GRPO", "reinforcepp": "Reinforce++",
}


def register(cls: type[Controller]) -> type[Controller]:
    """Class decorator adding a controller to the registry under ``cls.id``."""
    if cls.id in REGISTRY and REGISTRY[cls.id] is not cls:
        raise ValueError(f"controller id {cls.id!r} already registered")
    REGISTRY[cls.id] = cls
    return cls


for _cls in (RandomSearch, GreedySearch, CoordinateDescent, SimulatedAnnealing, IteratedLocalSearch,
             TPE, CrossEntropyMethod, RegularizedEvolution, ThompsonSampling, UCB,
             GRPO, DrGRPO, ReinforcePP):
    register(_cls)

ALGORITHMS = tuple(REGISTRY)


def make_controller(algorithm: str, space, seed: int, budget: int | None = None,
                    params: dict | None = None) -> Controller:
    try:
        cls = REGISTRY[algorithm]
    except KeyError:
        raise ValueError(f"unknown algorithm {algorithm!r}; known: {', '.join(REGISTRY)}") from None
    return cls(space, seed, budget, **(params or {}))


__all__ = [
    "ALGORITHMS", "BudgetExhausted", "Controller", "CoordinateDescent", "CrossEntropyMethod",
    "DISPLAY_NAMES", "DrGRPO", "GRPO", "GreedySearch", "IteratedLocalSearch", "Observation",
    "ProtocolError", "REGISTRY", "RandomSearch", "RegularizedEvolution", "ReinforcePP",
    "SimulatedAnnealing", "TPE", "ThompsonSampling", "UCB", "acceptance_probability",
    "categorical_density", "cem_update", "entropy_gradient", "group_advantages", "make_controller",
    "policy_gradient_step", "register", "sa_accept", "softmax", "tpe_split", "ucb_scores",
]
