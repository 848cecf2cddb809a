"""Round loop connecting strategy menus to sequential decision engines.

Each round the leader sees a context, turns the finite strategy menu for
that context into a list of payoff vectors, asks an engine to pick one,
commits to the menu strategy at the picked index, samples a pure action
from it, and feeds the realized payoff back to the engine.

Two vector encodings are supported.  In ``known`` mode a strategy maps to
its per-type expected-utility vector, so the engine's hidden parameter is
the type distribution.  In ``unknown`` mode the leader's payoff
coefficients are not used by the encoder at all: a strategy maps to a
sparse context/commitment pattern whose inner product with
:func:`embedding_parameter` reproduces the expected round utility, so the
engine can learn payoffs and type frequencies jointly.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from stackelberg_bandits.engines import RegretMinimizer
from stackelberg_bandits.game import (
    GameSpec,
    as_mixed_strategy,
    follower_best_response,
    follower_best_responses,
    follower_payoff_tables,
    leader_payoff_table,
    realized_round_utility,
    utility_vector,
    validate_context,
)
from stackelberg_bandits.geometry import ExtremePointSet, approximate_extreme_points

KNOWN_MODE = "known"
UNKNOWN_MODE = "unknown"
UTILITY_BOUND_TOL = 1e-6

CSV_COLUMNS = (
    "t",
    "seed",
    "algorithm",
    "mode",
    "chosen_index",
    "sampled_leader_action",
    "follower_type",
    "realized_utility",
    "menu_best_utility",
)


def embedding_dim(game: GameSpec) -> int:
    """Length of the unknown-mode vectors: one slot per (type, leader
    action, follower action, context coordinate) cell."""
    return (
        game.n_types
        * game.n_leader_actions
        * game.n_follower_actions
        * game.context_dim
    )


def flat_index(
    type_index: int,
    leader_action: int,
    follower_action: int,
    coordinate: int,
    *,
    n_types: int,
    n_leader_actions: int,
    n_follower_actions: int,
    context_dim: int,
) -> int:
    """Position of one embedding cell in the flattened vector, 1-based.

    The layout is row-major over (type, leader action, follower action,
    context coordinate); both the arguments and the returned position are
    1-based, matching the published indexing convention.  Internally arrays
    are 0-based, so callers subtract one when indexing.
    """
    bounds = (
        ("type_index", type_index, n_types),
        ("leader_action", leader_action, n_leader_actions),
        ("follower_action", follower_action, n_follower_actions),
        ("coordinate", coordinate, context_dim),
    )
    for name, value, bound in bounds:
        if not 1 <= value <= bound:
            raise ValueError(f"{name}={value} outside [1, {bound}]")
    return (
        (type_index - 1) * (n_leader_actions * n_follower_actions * context_dim)
        + (leader_action - 1) * (n_follower_actions * context_dim)
        + (follower_action - 1) * context_dim
        + coordinate
    )


def h_embedding(game: GameSpec, z, x) -> np.ndarray:
    """Sparse commitment pattern of a strategy at a context.

    The cell for (type k, leader action a, follower action b, coordinate j)
    holds ``z[j] * x[a]`` when ``b`` is type k's best response to ``x`` at
    ``z``, and zero otherwise.  Together with :func:`embedding_parameter`
    this linearizes the expected round utility without touching the
    leader's payoff coefficients.
    """
    z = validate_context(game, z)
    x = as_mixed_strategy(x, game.n_leader_actions)
    responses = follower_best_responses(game, z, x)
    cells = np.zeros(
        (game.n_types, game.n_leader_actions, game.n_follower_actions, game.context_dim)
    )
    cells[np.arange(game.n_types), :, responses, :] = np.outer(x, z)
    return cells.reshape(-1)


def embedding_parameter(game: GameSpec, type_distribution) -> np.ndarray:
    """Hidden linear parameter realizing expected utility under a type mix.

    The cell for (type k, leader action a, follower action b) holds the
    leader's coefficient vector for (a, b) weighted by the probability of
    type k, so ``<h_embedding(z, x), embedding_parameter(gamma)>`` equals
    the expected utility of committing to ``x`` when the follower type is
    drawn from ``gamma``.
    """
    gamma = as_mixed_strategy(type_distribution, game.n_types)
    cells = gamma[:, None, None, None] * game.leader_coeffs[None, :, :, :]
    return cells.reshape(-1)


@dataclass(frozen=True)
class RoundActionSet:
    """Engine-facing vectors paired with the strategies that induce them.

    The two lists are parallel and may contain duplicate vectors (distinct
    strategies with identical payoff profiles); keeping them preserves the
    index back-map from any engine choice to a strategy.
    """

    vectors: list
    strategies: list
    mode: str

    def __post_init__(self):
        if self.mode not in (KNOWN_MODE, UNKNOWN_MODE):
            raise ValueError(f"mode must be {KNOWN_MODE!r} or {UNKNOWN_MODE!r}")
        if len(self.vectors) != len(self.strategies):
            raise ValueError("vectors and strategies must be parallel lists")
        if len(self.vectors) == 0:
            raise ValueError("action set must be nonempty")

    def __len__(self) -> int:
        return len(self.vectors)


def build_action_set(game: GameSpec, z, menu: ExtremePointSet, mode: str) -> RoundActionSet:
    """Encode every menu strategy as an engine-facing vector.

    ``known`` mode produces per-type expected-utility vectors; ``unknown``
    mode produces commitment patterns (:func:`h_embedding`).  Menu order is
    preserved and duplicates are retained.
    """
    if mode not in (KNOWN_MODE, UNKNOWN_MODE):
        raise ValueError(f"mode must be {KNOWN_MODE!r} or {UNKNOWN_MODE!r}")
    if len(menu) == 0:
        raise ValueError("empty strategy menu: geometry produced no points")
    encode = utility_vector if mode == KNOWN_MODE else h_embedding
    strategies = [np.array(point) for point in menu.points]
    vectors = [encode(game, z, x) for x in strategies]
    return RoundActionSet(vectors=vectors, strategies=strategies, mode=mode)


@dataclass(frozen=True)
class RoundRecord:
    """Everything one round produced, before log assembly stamps its index."""

    context: np.ndarray
    chosen_index: int
    sampled_leader_action: int
    follower_type: int
    follower_action: int
    realized_utility: float
    menu_best_utility: float


def _menu_utilities_vs_type(
    game: GameSpec, z, actions: RoundActionSet, follower_type: int
) -> np.ndarray:
    if actions.mode == KNOWN_MODE:
        return np.array([vec[follower_type] for vec in actions.vectors])
    return np.array(
        [utility_vector(game, z, x)[follower_type] for x in actions.strategies]
    )


def play_round(
    game: GameSpec,
    z,
    engine: RegretMinimizer,
    menu,
    mode: str,
    rng: np.random.Generator,
    follower_type: int,
) -> RoundRecord:
    """Run one commit/respond/sample/observe cycle.

    ``menu`` is an :class:`ExtremePointSet` or a prebuilt
    :class:`RoundActionSet` (for replaying one round many times).  The
    engine's pick is mapped back to a strategy by index, never by value
    inversion.  The follower best-responds to the committed mixed strategy,
    not to the sampled pure action, and the engine is fed the realized
    payoff of the sampled action, not the expected one.
    """
    if not 0 <= follower_type < game.n_types:
        raise ValueError(f"follower_type {follower_type} outside [0, {game.n_types})")
    if isinstance(menu, RoundActionSet):
        actions = menu
        if actions.mode != mode:
            raise ValueError(f"action set mode {actions.mode!r} does not match {mode!r}")
    else:
        actions = build_action_set(game, z, menu, mode)

    chosen = engine.recommend(actions.vectors)
    index = engine.last_index
    if not 0 <= index < len(actions):
        raise RuntimeError(f"engine reported out-of-range choice index {index}")
    if not np.array_equal(np.asarray(chosen), np.asarray(actions.vectors[index])):
        raise RuntimeError("engine returned a vector that is not the indexed set element")

    strategy = as_mixed_strategy(actions.strategies[index], game.n_leader_actions)
    response = follower_best_response(game, z, strategy, follower_type)
    sampled = int(rng.choice(game.n_leader_actions, p=strategy))
    realized = realized_round_utility(game, z, sampled, response)
    engine.observe_utility(chosen, realized)

    best = float(_menu_utilities_vs_type(game, z, actions, follower_type).max())
    return RoundRecord(
        context=np.array(z, dtype=float),
        chosen_index=index,
        sampled_leader_action=sampled,
        follower_type=int(follower_type),
        follower_action=int(response),
        realized_utility=float(realized),
        menu_best_utility=best,
    )


@dataclass(frozen=True)
class EnvironmentTrace:
    """Pregenerated per-round inputs: a context and a follower type draw.

    Freezing the trace up front lets several algorithms replay identical
    environments, and covers scripted adversarial sequences as well as
    pre-sampled stochastic ones.
    """

    contexts: np.ndarray
    follower_types: np.ndarray

    def __post_init__(self):
        contexts = np.asarray(self.contexts, dtype=float)
        types = np.asarray(self.follower_types, dtype=int)
        if contexts.ndim != 2:
            raise ValueError("contexts must be a (rounds, context_dim) array")
        if types.ndim != 1 or len(types) != len(contexts):
            raise ValueError("follower_types must parallel contexts")
        contexts.setflags(write=False)
        types.setflags(write=False)
        object.__setattr__(self, "contexts", contexts)
        object.__setattr__(self, "follower_types", types)

    def __len__(self) -> int:
        return len(self.contexts)

    def round_inputs(self, t: int):
        return self.contexts[t], int(self.follower_types[t])


@dataclass(frozen=True)
class EpisodeLog:
    """Per-round records of one episode plus identifying metadata.

    Realized utilities must stay inside [-1, 1] (up to float slack); that
    bound is a consequence of the game's coefficient validation, so a
    violation indicates a bug rather than an unlucky draw.
    """

    algorithm: str
    seed: int
    mode: str
    config_hash: str
    contexts: np.ndarray
    chosen_indices: np.ndarray
    sampled_leader_actions: np.ndarray
    follower_types: np.ndarray
    follower_actions: np.ndarray
    realized_utilities: np.ndarray
    menu_best_utilities: np.ndarray

    def __post_init__(self):
        arrays = {
            "contexts": np.asarray(self.contexts, dtype=float),
            "chosen_indices": np.asarray(self.chosen_indices, dtype=int),
            "sampled_leader_actions": np.asarray(self.sampled_leader_actions, dtype=int),
            "follower_types": np.asarray(self.follower_types, dtype=int),
            "follower_actions": np.asarray(self.follower_actions, dtype=int),
            "realized_utilities": np.asarray(self.realized_utilities, dtype=float),
            "menu_best_utilities": np.asarray(self.menu_best_utilities, dtype=float),
        }
        rounds = len(arrays["chosen_indices"])
        for name, arr in arrays.items():
            if len(arr) != rounds:
                raise ValueError(f"{name} has {len(arr)} rows, expected {rounds}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if rounds and np.abs(arrays["realized_utilities"]).max() > 1.0 + UTILITY_BOUND_TOL:
            raise ValueError("realized utilities escape [-1, 1]")

    def __len__(self) -> int:
        return len(self.chosen_indices)

    def cumulative_utility(self) -> np.ndarray:
        return np.cumsum(self.realized_utilities)

    def to_csv_text(self) -> str:
        """Serialize with the fixed column schema, one row per round."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for t in range(len(self)):
            writer.writerow(
                [
                    t + 1,
                    self.seed,
                    self.algorithm,
                    self.mode,
                    int(self.chosen_indices[t]),
                    int(self.sampled_leader_actions[t]),
                    int(self.follower_types[t]),
                    repr(float(self.realized_utilities[t])),
                    repr(float(self.menu_best_utilities[t])),
                ]
            )
        return buffer.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as handle:
            handle.write(self.to_csv_text())


def run_episode(
    game: GameSpec,
    environment,
    engine: RegretMinimizer,
    horizon: int,
    delta: float,
    mode: str,
    rng: np.random.Generator,
    *,
    algorithm: str = "",
    seed: int = 0,
    config_hash: str = "",
    menu_cache: dict | None = None,
    action_cache: dict | None = None,
) -> EpisodeLog:
    """Play ``horizon`` sequential rounds against a fixed environment.

    ``environment.round_inputs(t)`` supplies the round-t context and
    follower type.  Menus are memoized on the byte-exact follower payoff
    tables at the context; since the menu construction reads nothing else,
    this is exact, and it subsumes memoization on exact context repeats.
    Passing a shared ``menu_cache`` lets several episodes on the same game
    reuse menus; entries are keyed on the tolerance too, so a cache must
    not be shared across different ``delta`` values.  ``action_cache``
    additionally memoizes the encoded action sets, keyed on the byte-exact
    context (encodings read the context, not just the payoff tables); like
    the menu cache it must stay within one game.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    if hasattr(environment, "__len__") and len(environment) < horizon:
        raise ValueError(f"environment supplies {len(environment)} rounds, need {horizon}")
    cache = menu_cache if menu_cache is not None else {}
    encoded = action_cache if action_cache is not None else {}
    records = []
    for t in range(horizon):
        z, follower_type = environment.round_inputs(t)
        z = validate_context(game, z)
        tables = follower_payoff_tables(game, z)
        if mode == KNOWN_MODE:
            # Known-mode encodings read z only through the payoff tables.
            action_key = (float(delta), mode, leader_payoff_table(game, z).tobytes(), tables.tobytes())
        else:
            action_key = (float(delta), mode, z.tobytes())
        actions = encoded.get(action_key)
        if actions is None:
            key = (float(delta), tables.tobytes())
            menu = cache.get(key)
            if menu is None:
                menu = approximate_extreme_points(game, z, delta)
                cache[key] = menu
            actions = build_action_set(game, z, menu, mode)
            encoded[action_key] = actions
        records.append(play_round(game, z, engine, actions, mode, rng, follower_type))
    contexts = (
        np.array([r.context for r in records])
        if records
        else np.zeros((0, game.context_dim))
    )
    return EpisodeLog(
        algorithm=algorithm,
        seed=seed,
        mode=mode,
        config_hash=config_hash,
        contexts=contexts,
        chosen_indices=[r.chosen_index for r in records],
        sampled_leader_actions=[r.sampled_leader_action for r in records],
        follower_types=[r.follower_type for r in records],
        follower_actions=[r.follower_action for r in records],
        realized_utilities=[r.realized_utility for r in records],
        menu_best_utilities=[r.menu_best_utility for r in records],
    )
