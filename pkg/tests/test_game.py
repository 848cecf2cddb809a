"""Game model: payoff evaluation, best responses, bounds, serialization."""

import numpy as np
import pytest

from stackelberg_bandits.game import (
    GameSpec,
    as_mixed_strategy,
    follower_best_response,
    follower_best_responses,
    leader_expected_utility,
    realized_round_utility,
    utility_vector,
)
from tests.conftest import random_context, random_game


def test_worked_two_by_two_example(two_by_two):
    z = np.array([1.0])
    x = np.array([0.7, 0.3])
    # follower scores: 0.7 for action 0, 0.3 for action 1
    assert follower_best_response(two_by_two, z, x, 0) == 0
    assert leader_expected_utility(two_by_two, z, x, 0) == pytest.approx(0.4, abs=1e-12)
    vec = utility_vector(two_by_two, z, x)
    assert vec.shape == (1,)
    assert vec[0] == pytest.approx(0.4, abs=1e-12)


def test_tie_breaks_to_smallest_index(two_by_two):
    z = np.array([1.0])
    # exact tie between both follower actions
    assert follower_best_response(two_by_two, z, [0.5, 0.5], 0) == 0
    # a gap below the tolerance still counts as a tie
    eps = 4e-10
    assert follower_best_response(two_by_two, z, [0.5 - eps, 0.5 + eps], 0) == 0
    # a gap above the tolerance does not
    assert follower_best_response(two_by_two, z, [0.4, 0.6], 0) == 1


def test_realized_utility_reads_the_payoff_table(two_by_two):
    z = np.array([1.0])
    assert realized_round_utility(two_by_two, z, 0, 0) == 1.0
    assert realized_round_utility(two_by_two, z, 0, 1) == -1.0
    assert realized_round_utility(two_by_two, z, 1, 1) == 0.0


def test_utility_vector_matches_per_type_play():
    rng = np.random.default_rng(7)
    for _ in range(50):
        game = random_game(rng, dim=2, n_types=3, n_leader=3, n_follower=2)
        z = random_context(rng, 2)
        x = rng.dirichlet(np.ones(3))
        vec = utility_vector(game, z, x)
        for k in range(3):
            response = follower_best_response(game, z, x, k)
            assert vec[k] == pytest.approx(
                leader_expected_utility(game, z, x, response), abs=1e-12
            )
        assert np.abs(vec).max() <= 1 + 1e-9


def test_all_operations_stay_bounded():
    rng = np.random.default_rng(11)
    for _ in range(20):
        game = random_game(rng, dim=4, n_types=2, n_leader=4, n_follower=3)
        z = random_context(rng, 4)
        x = rng.dirichlet(np.ones(4))
        for a_f in range(3):
            assert abs(leader_expected_utility(game, z, x, a_f)) <= 1 + 1e-9
        for a_l in range(4):
            for a_f in range(3):
                assert abs(realized_round_utility(game, z, a_l, a_f)) <= 1 + 1e-9


def test_mixed_strategy_normalization():
    x = as_mixed_strategy([0.5, 0.5 + 4e-10], 2)
    assert x.sum() == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        as_mixed_strategy([0.6, 0.6], 2)
    with pytest.raises(ValueError):
        as_mixed_strategy([-0.1, 1.1], 2)
    with pytest.raises(ValueError):
        as_mixed_strategy([np.nan, 1.0], 2)


def test_spec_validation_rejects_out_of_range_payoffs():
    with pytest.raises(ValueError):
        GameSpec.from_payoff_matrices(
            leader=[[1.5, 0.0], [0.0, 0.0]],
            followers=[[[1.0, 0.0], [0.0, 1.0]]],
        )
    # a multi-coordinate coefficient vector whose 1-norm exceeds 1 can
    # produce out-of-range payoffs at a corner context
    bad = np.zeros((2, 1, 2))
    bad[0, 0] = [0.8, 0.8]
    with pytest.raises(ValueError):
        GameSpec(bad, np.zeros((1, 2, 1, 2)))


def test_spec_validation_rejects_bad_shapes():
    with pytest.raises(ValueError):
        GameSpec(np.zeros((1, 2, 2)), np.zeros((1, 1, 2, 2)))  # one leader action
    with pytest.raises(ValueError):
        GameSpec(np.zeros((2, 2, 2)), np.zeros((1, 2, 2, 3)))  # dim mismatch


def test_json_round_trip_is_value_exact():
    rng = np.random.default_rng(3)
    game = random_game(rng, dim=3, n_types=2, n_leader=3, n_follower=2)
    back = GameSpec.from_json(game.to_json())
    assert np.array_equal(back.leader_coeffs, game.leader_coeffs)
    assert np.array_equal(back.follower_coeffs, game.follower_coeffs)
    # a second trip is byte-identical
    assert back.to_json() == game.to_json()


def test_batched_and_single_best_responses_agree():
    rng = np.random.default_rng(5)
    game = random_game(rng, dim=3, n_types=4, n_leader=3, n_follower=4)
    z = random_context(rng, 3)
    points = rng.dirichlet(np.ones(3), size=64)
    for x in points:
        per_type = follower_best_responses(game, z, x)
        for k in range(4):
            assert per_type[k] == follower_best_response(game, z, x, k)
