from __future__ import annotations

from collections import deque

from .base import Controller


class RegularizedEvolution(Controller):
    """Aging evolution: tournament-selected parent, one-dimension mutation, oldest member evicted.

    Until the population reaches ``population_size`` members, proposals are
    uniform random.
    """

    id = "regevo"
    defaults = {"population_size": 8, "tournament_size": 3}

    def __init__(self, space, seed, budget=None, **params):
        super().__init__(space, seed, budget, **params)
        self.population = deque()
        self.last_parent = None

    def select_parent(self):
        members = list(self.population)
        k = min(self.params["tournament_size"], len(members))
        picks = sorted(int(i) for i in self.rng.choice(len(members), size=k, replace=False))
        # oldest member wins ties
        winner = max(picks, key=lambda i: (members[i][1], -i))
        return members[winner][0]

    def _propose(self):
        if len(self.population) < self.params["population_size"]:
            self.last_parent = None
            return self.random_config()
        self.last_parent = self.select_parent()
        return self.mutate_one(self.last_parent)

    def _observe(self, config, reward):
        self.population.append((config, reward))
        while len(self.population) > self.params["population_size"]:
            self.population.popleft()
