"""Round-loop tests: embeddings against hand oracles, engine plumbing,
episode logging, and determinism."""

import numpy as np
import pytest

from stackelberg_bandits.engines import Oful, RegretMinimizer
from stackelberg_bandits.game import (
    follower_best_response,
    leader_expected_utility,
    utility_vector,
)
from stackelberg_bandits.geometry import ExtremePointSet, approximate_extreme_points
from stackelberg_bandits.reduction import (
    CSV_COLUMNS,
    EnvironmentTrace,
    EpisodeLog,
    KNOWN_MODE,
    UNKNOWN_MODE,
    build_action_set,
    embedding_dim,
    embedding_parameter,
    flat_index,
    h_embedding,
    play_round,
    run_episode,
)
from tests.conftest import random_context, random_game


class FixedIndexEngine(RegretMinimizer):
    """Always picks the same list position; records observed feedback."""

    def __init__(self, index: int):
        self.index = index
        self.last_index = -1
        self.observed = []

    def recommend(self, actions):
        self.last_index = self.index
        return actions[self.index]

    def observe_utility(self, chosen, utility):
        self.observed.append(float(utility))


class RogueEngine(RegretMinimizer):
    """Claims index 0 but returns a vector that is not in the set."""

    def recommend(self, actions):
        self.last_index = 0
        return np.asarray(actions[0]) + 1.0

    def observe_utility(self, chosen, utility):
        raise AssertionError("must not be reached")


def embedding_oracle(game, z, x):
    """Rebuild the commitment pattern cell by cell via flat_index."""
    from stackelberg_bandits.game import as_mixed_strategy

    z = np.asarray(z, dtype=float)
    x = as_mixed_strategy(x, game.n_leader_actions)
    dims = dict(
        n_types=game.n_types,
        n_leader_actions=game.n_leader_actions,
        n_follower_actions=game.n_follower_actions,
        context_dim=game.context_dim,
    )
    out = np.zeros(embedding_dim(game))
    for k in range(game.n_types):
        response = follower_best_response(game, z, x, k)
        for a in range(game.n_leader_actions):
            for j in range(game.context_dim):
                pos = flat_index(k + 1, a + 1, response + 1, j + 1, **dims)
                out[pos - 1] = z[j] * x[a]
    return out


def test_flat_index_base_case():
    for dims in ((1, 2, 2, 1), (2, 2, 2, 3), (4, 3, 5, 2)):
        k, a_l, a_f, d = dims
        assert (
            flat_index(
                1, 1, 1, 1,
                n_types=k, n_leader_actions=a_l, n_follower_actions=a_f, context_dim=d,
            )
            == 1
        )


def test_flat_index_worked_value():
    assert (
        flat_index(
            2, 1, 1, 1,
            n_types=2, n_leader_actions=2, n_follower_actions=2, context_dim=3,
        )
        == 13
    )


def test_flat_index_bijective_over_box():
    dims = dict(n_types=2, n_leader_actions=2, n_follower_actions=2, context_dim=3)
    values = [
        flat_index(k, a, b, j, **dims)
        for k in range(1, 3)
        for a in range(1, 3)
        for b in range(1, 3)
        for j in range(1, 4)
    ]
    assert sorted(values) == list(range(1, 25))


def test_flat_index_rejects_out_of_range():
    dims = dict(n_types=2, n_leader_actions=3, n_follower_actions=2, context_dim=2)
    with pytest.raises(ValueError):
        flat_index(0, 1, 1, 1, **dims)
    with pytest.raises(ValueError):
        flat_index(3, 1, 1, 1, **dims)
    with pytest.raises(ValueError):
        flat_index(1, 4, 1, 1, **dims)
    with pytest.raises(ValueError):
        flat_index(1, 1, 1, 3, **dims)


def test_embedding_worked_two_by_two(two_by_two):
    h = h_embedding(two_by_two, [1.0], [0.7, 0.3])
    assert np.array_equal(h, [0.7, 0.0, 0.3, 0.0])


def test_embedding_matches_flat_index_oracle():
    rng = np.random.default_rng(5)
    for _ in range(20):
        game = random_game(rng, dim=2, n_types=3, n_leader=3, n_follower=2)
        z = random_context(rng, dim=2)
        x = rng.dirichlet(np.ones(3))
        assert np.array_equal(h_embedding(game, z, x), embedding_oracle(game, z, x))


def test_embedding_per_type_sums_recover_context():
    rng = np.random.default_rng(6)
    for _ in range(10):
        game = random_game(rng, dim=3, n_types=2, n_leader=3, n_follower=3)
        z = random_context(rng, dim=3)
        x = rng.dirichlet(np.ones(3))
        h = h_embedding(game, z, x).reshape(
            game.n_types, game.n_leader_actions, game.n_follower_actions, game.context_dim
        )
        for k in range(game.n_types):
            response = follower_best_response(game, z, x, k)
            np.testing.assert_allclose(h[:, :, response, :][k].sum(axis=0), z, atol=1e-12)


def test_embedding_identity_against_expectation_oracle():
    rng = np.random.default_rng(7)
    for _ in range(200):
        game = random_game(
            rng,
            dim=int(rng.integers(1, 4)),
            n_types=int(rng.integers(1, 4)),
            n_leader=int(rng.integers(2, 4)),
            n_follower=int(rng.integers(2, 4)),
        )
        z = random_context(rng, dim=game.context_dim)
        x = rng.dirichlet(np.ones(game.n_leader_actions))
        gamma = rng.dirichlet(np.ones(game.n_types))
        lhs = float(h_embedding(game, z, x) @ embedding_parameter(game, gamma))
        rhs = sum(
            gamma[k]
            * leader_expected_utility(game, z, x, follower_best_response(game, z, x, k))
            for k in range(game.n_types)
        )
        assert abs(lhs - rhs) <= 1e-9


def test_embedding_unit_type_matches_utility_vector():
    rng = np.random.default_rng(8)
    for _ in range(25):
        game = random_game(rng, dim=2, n_types=3, n_leader=3, n_follower=3)
        z = random_context(rng, dim=2)
        x = rng.dirichlet(np.ones(3))
        h = h_embedding(game, z, x)
        v = utility_vector(game, z, x)
        for k in range(game.n_types):
            unit = np.zeros(game.n_types)
            unit[k] = 1.0
            assert abs(float(h @ embedding_parameter(game, unit)) - v[k]) <= 1e-9


def test_action_set_known_mode_two_by_two(two_by_two):
    menu = approximate_extreme_points(two_by_two, [1.0], 0.01)
    actions = build_action_set(two_by_two, [1.0], menu, KNOWN_MODE)
    assert len(actions) == 4
    assert all(vec.shape == (1,) for vec in actions.vectors)
    pure_first = next(
        i for i, x in enumerate(actions.strategies) if np.allclose(x, [1.0, 0.0])
    )
    assert actions.vectors[pure_first] == pytest.approx([1.0])
    for vec, x in zip(actions.vectors, actions.strategies):
        assert np.array_equal(vec, utility_vector(two_by_two, [1.0], x))


def test_action_set_unknown_mode_dimension(two_by_two):
    menu = approximate_extreme_points(two_by_two, [1.0], 0.01)
    actions = build_action_set(two_by_two, [1.0], menu, UNKNOWN_MODE)
    assert embedding_dim(two_by_two) == 4
    assert all(vec.shape == (4,) for vec in actions.vectors)
    for vec, x in zip(actions.vectors, actions.strategies):
        assert np.array_equal(vec, h_embedding(two_by_two, [1.0], x))


def test_action_set_retains_duplicate_vectors():
    # Leader indifferent across everything: all menu strategies share one
    # utility vector, and the back-map must keep every slot.
    from stackelberg_bandits.game import GameSpec

    game = GameSpec.from_payoff_matrices(
        leader=[[0.5, 0.5], [0.5, 0.5]],
        followers=[[[1.0, 0.0], [0.0, 1.0]]],
    )
    menu = approximate_extreme_points(game, [1.0], 0.01)
    actions = build_action_set(game, [1.0], menu, KNOWN_MODE)
    assert len(actions) == len(menu)
    stacked = np.stack(actions.vectors)
    assert np.allclose(stacked, 0.5)


def test_action_set_rejects_empty_menu(two_by_two):
    empty = ExtremePointSet(
        points=np.zeros((0, 2)),
        assignments=np.zeros((0, 1), dtype=int),
        perturbed=np.zeros(0, dtype=bool),
        delta=0.1,
    )
    with pytest.raises(ValueError):
        build_action_set(two_by_two, [1.0], empty, KNOWN_MODE)


def test_play_round_pure_strategy_deterministic(two_by_two):
    menu = approximate_extreme_points(two_by_two, [1.0], 0.01)
    pure_first = next(
        i for i, x in enumerate(menu.points) if np.allclose(x, [1.0, 0.0])
    )
    engine = FixedIndexEngine(pure_first)
    record = play_round(
        two_by_two, [1.0], engine, menu, KNOWN_MODE, np.random.default_rng(0), 0
    )
    assert record.chosen_index == pure_first
    assert record.sampled_leader_action == 0
    assert record.follower_action == 0
    assert record.realized_utility == 1.0
    assert record.menu_best_utility == 1.0
    assert engine.observed == [1.0]


def test_play_round_rejects_vector_outside_set(two_by_two):
    menu = approximate_extreme_points(two_by_two, [1.0], 0.01)
    with pytest.raises(RuntimeError):
        play_round(
            two_by_two, [1.0], RogueEngine(), menu, KNOWN_MODE,
            np.random.default_rng(0), 0,
        )


def test_play_round_rejects_bad_follower_type(two_by_two):
    menu = approximate_extreme_points(two_by_two, [1.0], 0.01)
    with pytest.raises(ValueError):
        play_round(
            two_by_two, [1.0], FixedIndexEngine(0), menu, KNOWN_MODE,
            np.random.default_rng(0), 5,
        )


def test_play_round_feedback_matches_expectation():
    rng = np.random.default_rng(9)
    game = random_game(rng, dim=2, n_types=2, n_leader=3, n_follower=3)
    z = random_context(rng, dim=2)
    menu = approximate_extreme_points(game, z, 0.01)
    actions = build_action_set(game, z, menu, KNOWN_MODE)
    index = len(actions) // 2
    follower_type = 1
    expected = actions.vectors[index][follower_type]
    replays = 100_000
    total = 0.0
    play_rng = np.random.default_rng(10)
    for _ in range(replays):
        engine = FixedIndexEngine(index)
        record = play_round(game, z, engine, actions, KNOWN_MODE, play_rng, follower_type)
        total += record.realized_utility
    assert abs(total / replays - expected) <= 0.01


def test_run_episode_zero_rounds(two_by_two):
    trace = EnvironmentTrace(contexts=np.ones((0, 1)), follower_types=np.zeros(0, int))
    log = run_episode(
        two_by_two, trace, Oful(dim=1), 0, 0.01, KNOWN_MODE,
        np.random.default_rng(0), algorithm="oful", seed=3,
    )
    assert len(log) == 0
    assert log.to_csv_text() == ",".join(CSV_COLUMNS) + "\n"


def test_run_episode_rejects_short_trace(two_by_two):
    trace = EnvironmentTrace(contexts=np.ones((3, 1)), follower_types=np.zeros(3, int))
    with pytest.raises(ValueError):
        run_episode(
            two_by_two, trace, Oful(dim=1), 5, 0.01, KNOWN_MODE,
            np.random.default_rng(0),
        )


def test_run_episode_locks_onto_best_pure_commitment(two_by_two):
    horizon = 200
    trace = EnvironmentTrace(
        contexts=np.ones((horizon, 1)), follower_types=np.zeros(horizon, int)
    )
    log = run_episode(
        two_by_two, trace, Oful(dim=1), horizon, 0.01, KNOWN_MODE,
        np.random.default_rng(1), algorithm="oful", seed=0,
    )
    assert len(log) == horizon
    assert log.cumulative_utility()[-1] >= 0.95 * horizon * 1.0


def test_run_episode_byte_identical_reruns():
    rng = np.random.default_rng(12)
    game = random_game(rng, dim=2, n_types=2, n_leader=3, n_follower=3)
    contexts = rng.uniform(-1.0, 1.0, size=(30, 2))
    types = rng.integers(0, 2, size=30)
    trace = EnvironmentTrace(contexts=contexts, follower_types=types)

    def one_run():
        return run_episode(
            game, trace, Oful(dim=2), 30, 0.01, KNOWN_MODE,
            np.random.default_rng(99), algorithm="oful", seed=12,
        ).to_csv_text()

    assert one_run() == one_run()


def test_run_episode_memoizes_menus_on_follower_tables():
    rng = np.random.default_rng(13)
    game = random_game(
        rng, dim=3, n_types=2, n_leader=3, n_follower=3,
        context_dependent_followers=False,
    )
    horizon = 20
    contexts = rng.uniform(-1.0, 1.0, size=(horizon, 3))
    contexts[:, 0] = 1.0
    trace = EnvironmentTrace(
        contexts=contexts, follower_types=rng.integers(0, 2, size=horizon)
    )
    cache = {}
    run_episode(
        game, trace, Oful(dim=2), horizon, 0.01, KNOWN_MODE,
        np.random.default_rng(2), menu_cache=cache,
    )
    assert len(cache) == 1
    run_episode(
        game, trace, Oful(dim=2), horizon, 0.01, KNOWN_MODE,
        np.random.default_rng(3), menu_cache=cache,
    )
    assert len(cache) == 1


def test_run_episode_unknown_mode_runs(two_by_two):
    horizon = 50
    trace = EnvironmentTrace(
        contexts=np.ones((horizon, 1)), follower_types=np.zeros(horizon, int)
    )
    log = run_episode(
        two_by_two, trace, Oful(dim=embedding_dim(two_by_two)), horizon, 0.01,
        UNKNOWN_MODE, np.random.default_rng(4), algorithm="oful-unknown",
    )
    assert len(log) == horizon
    assert np.abs(log.realized_utilities).max() <= 1.0 + 1e-9


def test_episode_log_rejects_out_of_range_utilities():
    with pytest.raises(ValueError):
        EpisodeLog(
            algorithm="x", seed=0, mode=KNOWN_MODE, config_hash="",
            contexts=np.ones((1, 1)), chosen_indices=[0],
            sampled_leader_actions=[0], follower_types=[0],
            follower_actions=[0], realized_utilities=[1.5],
            menu_best_utilities=[1.0],
        )


def test_episode_log_csv_schema(two_by_two):
    horizon = 5
    trace = EnvironmentTrace(
        contexts=np.ones((horizon, 1)), follower_types=np.zeros(horizon, int)
    )
    log = run_episode(
        two_by_two, trace, Oful(dim=1), horizon, 0.01, KNOWN_MODE,
        np.random.default_rng(5), algorithm="oful", seed=7,
    )
    lines = log.to_csv_text().strip().split("\n")
    assert lines[0] == "t,seed,algorithm,mode,chosen_index,sampled_leader_action,follower_type,realized_utility,menu_best_utility"
    assert len(lines) == horizon + 1
    first = lines[1].split(",")
    assert first[0] == "1" and first[1] == "7" and first[2] == "oful"
    assert [row.split(",")[0] for row in lines[1:]] == [str(t + 1) for t in range(horizon)]
    for row in lines[1:]:
        realized = float(row.split(",")[7])
        assert -1.0 - 1e-9 <= realized <= 1.0 + 1e-9
