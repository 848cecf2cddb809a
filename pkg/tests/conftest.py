"""Shared fixtures: small hand-checkable games and random game sampling."""

import numpy as np
import pytest

from stackelberg_bandits.game import GameSpec


@pytest.fixture
def two_by_two():
    """Leader/follower 2x2 game with one follower type.

    Follower payoffs are the identity matrix (it wants to match the
    leader's likeliest action); leader payoffs reward coordination on the
    first action and punish mismatches.
    """
    return GameSpec.from_payoff_matrices(
        leader=[[1.0, -1.0], [-1.0, 0.0]],
        followers=[[[1.0, 0.0], [0.0, 1.0]]],
    )


def random_game(rng, dim=3, n_types=2, n_leader=3, n_follower=3,
                context_dependent_followers=True):
    """Sample a game with iid uniform[-1,1] coefficients, rescaled to bound payoffs.

    With context_dependent_followers=False the follower coefficients load
    only on coordinate 0, so follower payoffs are constant whenever the
    context process pins z[0] = 1.
    """
    leader = rng.uniform(-1.0, 1.0, size=(n_leader, n_follower, dim))
    leader /= dim * np.abs(leader).max()
    if context_dependent_followers:
        follower = rng.uniform(-1.0, 1.0, size=(n_types, n_leader, n_follower, dim))
        follower /= dim * np.abs(follower).max()
    else:
        follower = np.zeros((n_types, n_leader, n_follower, dim))
        follower[..., 0] = rng.uniform(-1.0, 1.0, size=(n_types, n_leader, n_follower))
        follower[..., 0] /= np.abs(follower[..., 0]).max()
    return GameSpec(leader, follower)


def random_context(rng, dim=3):
    return rng.uniform(-1.0, 1.0, size=dim)
