"""Game model: finite leader/follower action sets, payoffs linear in a context.

The leader has ``n_leader_actions`` pure actions and commits to a mixed
strategy; a follower of one of ``n_types`` types observes the commitment and
plays a pure best response among ``n_follower_actions`` actions.  Every payoff
is linear in a shared context vector ``z``: the payoff of a pair
``(a_l, a_f)`` is ``<z, coeffs[a_l, a_f]>``.  Coefficient vectors are the
canonical storage for both "known payoff" and "learned payoff" execution
modes; plain payoff matrices are embedded as one-dimensional contexts fixed
at ``z = (1,)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

# Follower argmax tie tolerance: actions scoring within this of the maximum
# are tied, and the smallest action index wins.
TIE_TOL = 1e-9

# Tolerance accepted when validating payoff bounds and strategy normalization.
NORM_TOL = 1e-9


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GameSpec:
    """Immutable description of one contextual leader/follower game.

    leader_coeffs: shape (n_leader_actions, n_follower_actions, context_dim).
    follower_coeffs: shape (n_types, n_leader_actions, n_follower_actions,
    context_dim).  Every coefficient vector must satisfy ``||c||_1 <= 1`` so
    that payoffs stay in [-1, 1] whenever ``||z||_inf <= 1`` (the sup of
    ``|<z, c>|`` over that context domain is exactly ``||c||_1``).
    """

    leader_coeffs: np.ndarray
    follower_coeffs: np.ndarray

    def __post_init__(self):
        leader = _frozen_array(self.leader_coeffs)
        follower = _frozen_array(self.follower_coeffs)
        object.__setattr__(self, "leader_coeffs", leader)
        object.__setattr__(self, "follower_coeffs", follower)
        if leader.ndim != 3:
            raise ValueError("leader_coeffs must have shape (a_l, a_f, dim)")
        if follower.ndim != 4:
            raise ValueError("follower_coeffs must have shape (k, a_l, a_f, dim)")
        if follower.shape[1:] != leader.shape:
            raise ValueError(
                f"follower_coeffs shape {follower.shape} does not extend "
                f"leader_coeffs shape {leader.shape}"
            )
        n_leader, n_follower, dim = leader.shape
        if n_leader < 2:
            raise ValueError("need at least two leader actions")
        if n_follower < 1 or follower.shape[0] < 1 or dim < 1:
            raise ValueError("empty action set, type set, or context")
        if not (np.isfinite(leader).all() and np.isfinite(follower).all()):
            raise ValueError("payoff coefficients must be finite")
        for name, coeffs in (("leader", leader), ("follower", follower)):
            worst = np.abs(coeffs).sum(axis=-1).max()
            if worst > 1.0 + NORM_TOL:
                raise ValueError(
                    f"{name} payoffs exceed [-1, 1] on the context domain "
                    f"(max coefficient 1-norm {worst:.6g})"
                )

    @property
    def context_dim(self) -> int:
        return self.leader_coeffs.shape[2]

    @property
    def n_leader_actions(self) -> int:
        return self.leader_coeffs.shape[0]

    @property
    def n_follower_actions(self) -> int:
        return self.leader_coeffs.shape[1]

    @property
    def n_types(self) -> int:
        return self.follower_coeffs.shape[0]

    @classmethod
    def from_payoff_matrices(cls, leader, followers) -> "GameSpec":
        """Build a context-free game from plain payoff matrices.

        ``leader`` is (a_l, a_f); ``followers`` is (k, a_l, a_f).  Matrices
        become coefficient vectors over a one-dimensional context, so the
        matrices are recovered exactly at ``z = (1,)``.
        """
        leader = np.asarray(leader, dtype=float)
        followers = np.asarray(followers, dtype=float)
        return cls(leader[..., None], followers[..., None])

    def to_json(self) -> str:
        doc = {
            "context_dim": self.context_dim,
            "n_leader_actions": self.n_leader_actions,
            "n_follower_actions": self.n_follower_actions,
            "n_types": self.n_types,
            "leader_coeffs": self.leader_coeffs.tolist(),
            "follower_coeffs": self.follower_coeffs.tolist(),
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GameSpec":
        doc = json.loads(text)
        spec = cls(
            np.array(doc["leader_coeffs"], dtype=float),
            np.array(doc["follower_coeffs"], dtype=float),
        )
        declared = (
            doc["n_leader_actions"],
            doc["n_follower_actions"],
            doc["context_dim"],
        )
        if spec.leader_coeffs.shape != declared or spec.n_types != doc["n_types"]:
            raise ValueError("declared dimensions disagree with tensors")
        return spec


def validate_context(game: GameSpec, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape != (game.context_dim,):
        raise ValueError(f"context must have shape ({game.context_dim},)")
    if not np.isfinite(z).all():
        raise ValueError("context entries must be finite")
    return z


def as_mixed_strategy(x, n_actions: int) -> np.ndarray:
    """Validate and renormalize a mixed strategy over ``n_actions`` actions.

    Entries must be >= -1e-9 (tiny negatives are clamped) and sum to 1
    within 1e-9; the result sums to 1 exactly up to float division.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (n_actions,):
        raise ValueError(f"strategy must have shape ({n_actions},)")
    if not np.isfinite(x).all():
        raise ValueError("strategy entries must be finite")
    if x.min() < -NORM_TOL:
        raise ValueError(f"negative strategy entry {x.min():.3g}")
    total = x.sum()
    if abs(total - 1.0) > NORM_TOL:
        raise ValueError(f"strategy sums to {total!r}, not 1")
    clipped = np.clip(x, 0.0, None)
    return clipped / clipped.sum()


def leader_payoff_table(game: GameSpec, z) -> np.ndarray:
    """Leader payoffs at context z, shape (n_leader_actions, n_follower_actions)."""
    z = validate_context(game, z)
    return game.leader_coeffs @ z


def follower_payoff_tables(game: GameSpec, z) -> np.ndarray:
    """Per-type follower payoffs at z, shape (n_types, n_leader_actions, n_follower_actions)."""
    z = validate_context(game, z)
    return game.follower_coeffs @ z


def best_response_from_scores(scores: np.ndarray) -> int:
    """Smallest action index whose score is within TIE_TOL of the maximum."""
    return int(np.argmax(scores >= scores.max() - TIE_TOL))


def batched_best_responses(tables: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Best responses for many strategies at once.

    ``tables`` is (n_types, n_leader_actions, n_follower_actions), ``points``
    is (n, n_leader_actions).  Returns an (n, n_types) int array using the
    same tie rule as :func:`follower_best_response`.
    """
    scores = np.einsum("xa,kaf->xkf", points, tables)
    top = scores.max(axis=2, keepdims=True)
    return np.argmax(scores >= top - TIE_TOL, axis=2)


def follower_best_response(game: GameSpec, z, x, follower_type: int) -> int:
    """Pure best response of one follower type to the committed mix.

    The follower weighs its payoffs by the leader's mixed strategy; among
    actions within 1e-9 of the best score the smallest index is returned.
    """
    x = as_mixed_strategy(x, game.n_leader_actions)
    table = follower_payoff_tables(game, z)[follower_type]
    return best_response_from_scores(x @ table)


def follower_best_responses(game: GameSpec, z, x) -> np.ndarray:
    """Best responses of all types to the same commitment, shape (n_types,)."""
    x = as_mixed_strategy(x, game.n_leader_actions)
    tables = follower_payoff_tables(game, z)
    return batched_best_responses(tables, x[None, :])[0]


def leader_expected_utility(game: GameSpec, z, x, follower_action: int) -> float:
    """Leader's expected payoff when the follower plays ``follower_action``."""
    x = as_mixed_strategy(x, game.n_leader_actions)
    table = leader_payoff_table(game, z)
    return float(x @ table[:, follower_action])


def utility_vector(game: GameSpec, z, x) -> np.ndarray:
    """Leader's expected payoff against each type's best response, shape (n_types,).

    This is the linearization that turns commitment selection into a linear
    bandit: the payoff against a realized type ``k`` is the ``k``-th entry.
    """
    x = as_mixed_strategy(x, game.n_leader_actions)
    table = leader_payoff_table(game, z)
    responses = follower_best_responses(game, z, x)
    vec = x @ table[:, responses]
    if np.abs(vec).max() > 1.0 + NORM_TOL:
        raise ValueError("utility vector escapes [-1, 1]; invalid game scale")
    return vec


def realized_round_utility(game: GameSpec, z, leader_action: int, follower_action: int) -> float:
    """Leader payoff of the realized pure action pair at context z."""
    table = leader_payoff_table(game, z)
    return float(table[leader_action, follower_action])
