"""Policy-gradient controllers over a factored softmax policy (one logit vector per dimension)."""
from __future__ import annotations

import numpy as np

from .base import Controller, sample_categorical

ADV_EPS = 1e-8


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    e = np.exp(z - z.max())
    return e / e.sum()


def entropy_gradient(probs) -> np.ndarray:
    """Gradient of the softmax entropy with respect to the logits: ``-p (log p + H)``."""
    p = np.asarray(probs, dtype=float)
    logp = np.log(np.clip(p, 1e-300, None))
    h = -(p * logp).sum()
    return -p * (logp + h)


def group_advantages(rewards, normalize: bool = True) -> np.ndarray:
    """Group-relative advantages; population std when ``normalize``."""
    r = np.asarray(rewards, dtype=float)
    centered = r - r.mean()
    if not normalize:
        return centered
    return centered / (r.std() + ADV_EPS)


def policy_gradient_step(logits, chosen_indices, advantages, lr: float):
    """``logits[d] += lr * sum_i A_i * (onehot(chosen_i[d]) - softmax(logits[d]))``.

    The softmax is taken once, before the update, for every sample.
    """
    out = []
    for d, z in enumerate(logits):
        p = softmax(z)
        grad = np.zeros(len(z))
        for idx, a in zip(chosen_indices, advantages):
            onehot = np.zeros(len(z))
            onehot[idx[d]] = 1.0
            grad += a * (onehot - p)
        out.append(np.asarray(z, dtype=float) + lr * grad)
    return out


class _SoftmaxPolicy(Controller):
    def __init__(self, space, seed, budget=None, **params):
        super().__init__(space, seed, budget, **params)
        self.logits = [np.zeros(n) for n in space.sizes]

    def probs(self):
        return [softmax(z) for z in self.logits]

    def _propose(self):
        return sample_categorical(self.space, self.probs(), self.rng)


class GRPO(_SoftmaxPolicy):
    """Groups of ``group_size`` samples, advantages standardized within the group."""

    id = "grpo"
    defaults = {"group_size": 5, "lr": 0.5}
    normalize = True

    def __init__(self, space, seed, budget=None, **params):
        super().__init__(space, seed, budget, **params)
        self.group = []

    def _observe(self, config, reward):
        self.group.append((config.indices, reward))
        if len(self.group) >= self.params["group_size"]:
            adv = group_advantages([r for _, r in self.group], self.normalize)
            self.logits = policy_gradient_step(self.logits, [i for i, _ in self.group], adv, self.params["lr"])
            self.group = []


class DrGRPO(GRPO):
    """GRPO with mean-centred advantages only (no division by the group std)."""

    id = "drgrpo"
    normalize = False


class ReinforcePP(_SoftmaxPolicy):
    """Per-trial REINFORCE with globally normalized advantages and an entropy bonus."""

    id = "reinforcepp"
    defaults = {"lr": 0.5, "entropy_coef": 0.01}

    def __init__(self, space, seed, budget=None, **params):
        super().__init__(space, seed, budget, **params)
        self.rewards = []

    def advantage(self, reward) -> float:
        self.rewards.append(reward)
        if len(self.rewards) == 1:
            return 0.0
        r = np.asarray(self.rewards)
        return float((reward - r.mean()) / (r.std() + ADV_EPS))

    def _observe(self, config, reward):
        a = self.advantage(reward)
        lr, coef = self.params["lr"], self.params["entropy_coef"]
        new = []
        for d, z in enumerate(self.logits):
            p = softmax(z)
            onehot = np.zeros(len(z))
            onehot[config.indices[d]] = 1.0
            new.append(z + lr * (a * (onehot - p) + coef * entropy_gradient(p)))
        self.logits = new
