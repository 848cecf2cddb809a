"""Sequential decision engines over finite sets of payoff vectors.

Each round an engine is shown a finite list of vectors and must return one
of them (the chosen list element itself, recorded by index); afterwards it
observes a noisy payoff for its choice.  The optimism-based engine assumes
payoffs are linear in the chosen vector with stochastic noise; the scaled
wrapper adapts a loss-based engine for adversarially chosen payoffs by
normalizing vectors into the unit ball.
"""

from __future__ import annotations

import abc
from typing import Sequence

import numpy as np

ENTRY_TOL = 1e-12


class RegretMinimizer(abc.ABC):
    """Alternates recommend/observe over per-round finite action sets.

    ``recommend`` must return an element of the list it was given (the same
    object, with its position stored in ``last_index``); ``observe_utility``
    must be called exactly once with the chosen vector before the next
    recommendation.
    """

    last_index: int = -1

    @abc.abstractmethod
    def recommend(self, actions: Sequence[np.ndarray]) -> np.ndarray:
        raise NotImplementedError

    @abc.abstractmethod
    def observe_utility(self, chosen: np.ndarray, utility: float) -> None:
        raise NotImplementedError


def _check_actions(actions: Sequence[np.ndarray], dim: int) -> np.ndarray:
    if len(actions) == 0:
        raise ValueError("empty action set")
    stacked = np.asarray(actions, dtype=float)
    if stacked.ndim != 2 or stacked.shape[1] != dim:
        raise ValueError(f"action vectors must have dimension {dim}")
    if not np.isfinite(stacked).all():
        raise ValueError("action vectors must be finite")
    return stacked


def _check_payoff(value: float) -> float:
    value = float(value)
    if not np.isfinite(value):
        raise ValueError("observed payoff must be finite")
    return value


class Oful(RegretMinimizer):
    """Optimistic linear bandit over per-round action sets.

    Maintains the regularized Gram matrix ``V = reg * I + sum v v^T`` and the
    payoff accumulator ``b = sum u v``; the ridge estimate is
    ``theta_hat = V^{-1} b``.  Recommendation maximizes

        <v, theta_hat> + radius_t * ||v||_{V^{-1}}

    with the confidence radius

        radius_t = noise_scale * sqrt(2 log(1/confidence)
                                      + dim * log(1 + t / (reg * dim)))
                   + sqrt(reg) * param_bound

    where ``t`` counts observed rounds.  Ties break toward the smallest list
    index.  The default noise scale 4 covers the worst-case two-part noise
    of menu play (type draw plus action sampling, each in [-2, 2]).
    """

    def __init__(
        self,
        dim: int,
        regularization: float = 1.0,
        noise_scale: float = 4.0,
        confidence: float = 0.1,
        param_bound: float = 1.0,
    ):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        if regularization <= 0 or noise_scale < 0 or param_bound < 0:
            raise ValueError("regularization must be positive, scales nonnegative")
        if not 0 < confidence < 1:
            raise ValueError("confidence must be in (0, 1)")
        self.dim = dim
        self.regularization = float(regularization)
        self.noise_scale = float(noise_scale)
        self.confidence = float(confidence)
        self.param_bound = float(param_bound)
        self.gram = regularization * np.eye(dim)
        self.payoff_sum = np.zeros(dim)
        self.theta_hat = np.zeros(dim)
        self.rounds_observed = 0
        self.last_index = -1

    def confidence_radius(self) -> float:
        reg, dim = self.regularization, self.dim
        breadth = 2.0 * np.log(1.0 / self.confidence) + dim * np.log(
            1.0 + self.rounds_observed / (reg * dim)
        )
        return self.noise_scale * float(np.sqrt(breadth)) + np.sqrt(reg) * self.param_bound

    def recommend(self, actions: Sequence[np.ndarray]) -> np.ndarray:
        stacked = _check_actions(actions, self.dim)
        radius = self.confidence_radius()
        solved = np.linalg.solve(self.gram, stacked.T)  # V^{-1} v per column
        widths = np.sqrt(np.maximum(np.einsum("nd,dn->n", stacked, solved), 0.0))
        scores = stacked @ self.theta_hat + radius * widths
        self.last_index = int(np.argmax(scores))
        return actions[self.last_index]

    def observe_utility(self, chosen: np.ndarray, utility: float) -> None:
        chosen = np.asarray(chosen, dtype=float)
        if chosen.shape != (self.dim,) or not np.isfinite(chosen).all():
            raise ValueError("chosen vector has wrong shape or non-finite entries")
        utility = _check_payoff(utility)
        self.gram = self.gram + np.outer(chosen, chosen)
        self.payoff_sum = self.payoff_sum + utility * chosen
        self.theta_hat = np.linalg.solve(self.gram, self.payoff_sum)
        self.rounds_observed += 1

    def snapshot(self) -> dict:
        """Per-round state for verbose logs: estimate, information, radius."""
        return {
            "theta_hat": self.theta_hat.tolist(),
            "gram_diagonal": np.diag(self.gram).tolist(),
            "confidence_radius": self.confidence_radius(),
        }


class AdversarialLinearEngine(abc.ABC):
    """Loss-based engine over vectors in the unit ball."""

    last_index: int = -1

    @abc.abstractmethod
    def recommend(self, actions: Sequence[np.ndarray]) -> np.ndarray:
        raise NotImplementedError

    @abc.abstractmethod
    def observe_loss(self, chosen: np.ndarray, loss: float) -> None:
        raise NotImplementedError


class ForcedExplorationLinear(AdversarialLinearEngine):
    """Exploration-smoothed least-squares stand-in for a no-regret engine.

    With probability ``min(1, t^(-1/3))`` it plays uniformly at random,
    otherwise greedily against a ridge estimate of the loss vector.  This is
    a pragmatic inner engine for the scaled wrapper; it does NOT carry the
    adversarial regret guarantee of a log-det barrier method, and was chosen
    because the barrier method's tuning constants are not pinned down
    anywhere usable.
    """

    def __init__(self, dim: int, rng: np.random.Generator, regularization: float = 1.0):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.rng = rng
        self.gram = regularization * np.eye(dim)
        self.loss_sum = np.zeros(dim)
        self.loss_estimate = np.zeros(dim)
        self.round = 0
        self.last_index = -1

    def recommend(self, actions: Sequence[np.ndarray]) -> np.ndarray:
        stacked = _check_actions(actions, self.dim)
        self.round += 1
        explore_probability = min(1.0, self.round ** (-1.0 / 3.0))
        if self.rng.random() < explore_probability:
            self.last_index = int(self.rng.integers(len(actions)))
        else:
            self.last_index = int(np.argmin(stacked @ self.loss_estimate))
        return actions[self.last_index]

    def observe_loss(self, chosen: np.ndarray, loss: float) -> None:
        chosen = np.asarray(chosen, dtype=float)
        loss = _check_payoff(loss)
        self.gram = self.gram + np.outer(chosen, chosen)
        self.loss_sum = self.loss_sum + loss * chosen
        self.loss_estimate = np.linalg.solve(self.gram, self.loss_sum)


class ScaledAdversarialWrapper(RegretMinimizer):
    """Adapts a loss-based unit-ball engine to utility vectors in [-1, 1]^dim.

    Vectors are scaled by ``1/sqrt(dim)`` (the cube of side 2 fits in the
    ball of radius sqrt(dim)), recommendations are matched back by index,
    and observed utilities are forwarded as losses ``-u / sqrt(dim)``.
    """

    def __init__(self, inner: AdversarialLinearEngine, dim: int):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.inner = inner
        self.dim = dim
        self.scale = float(np.sqrt(dim))
        self.last_index = -1
        self._last_scaled_choice: np.ndarray | None = None

    def recommend(self, actions: Sequence[np.ndarray]) -> np.ndarray:
        stacked = _check_actions(actions, self.dim)
        if np.abs(stacked).max() > 1.0 + ENTRY_TOL:
            raise ValueError("utility vectors must have entries in [-1, 1]")
        scaled = [row / self.scale for row in stacked]
        self.inner.recommend(scaled)
        index = self.inner.last_index
        if not 0 <= index < len(actions):
            raise RuntimeError(f"inner engine returned invalid index {index}")
        self.last_index = index
        self._last_scaled_choice = scaled[index]
        return actions[index]

    def observe_utility(self, chosen: np.ndarray, utility: float) -> None:
        utility = _check_payoff(utility)
        if self._last_scaled_choice is None:
            raise RuntimeError("observe_utility called before recommend")
        self.inner.observe_loss(self._last_scaled_choice, -utility / self.scale)
        self._last_scaled_choice = None
