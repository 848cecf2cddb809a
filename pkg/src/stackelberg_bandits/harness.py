"""Experiment harness: instance generation, environments, baselines,
hindsight regret, and experiment runners emitting CSV plus summary JSON.

An experiment is described by a JSON config naming one instance family
(random games, auctions, or persuasion polytopes), a horizon, algorithms,
environment processes, and seeds.  Per seed, every algorithm replays the
identical pregenerated environment trace; outputs are one CSV per
(algorithm, seed), one trace CSV and instance JSON per seed (enabling
offline regret reconstruction), and one cross-seed ``summary.json``.

The explore-then-commit baseline is a reimplementation from a one-sentence
description of prior work (cycle a strategy set, estimate the type
distribution from observed best responses, then play greedily); it is
flagged as such in summary metadata.
"""

from __future__ import annotations

import csv
import glob
import hashlib
import json
import os
import re
from dataclasses import dataclass, field, replace

import numpy as np

from stackelberg_bandits.applications import (
    AuctionSpec,
    PersuasionSpec,
    application_action_set,
    simplex_grid,
)
from stackelberg_bandits.engines import (
    ForcedExplorationLinear,
    Oful,
    ScaledAdversarialWrapper,
)
from stackelberg_bandits.game import (
    GameSpec,
    follower_best_response,
    follower_best_responses,
    follower_payoff_tables,
    leader_payoff_table,
    realized_round_utility,
    utility_vector,
)
from stackelberg_bandits.geometry import approximate_extreme_points
from stackelberg_bandits.reduction import (
    CSV_COLUMNS,
    EnvironmentTrace,
    EpisodeLog,
    KNOWN_MODE,
    UNKNOWN_MODE,
    build_action_set,
    embedding_dim,
    run_episode,
)

GAME_ALGORITHMS = ("alg1-oful", "alg1-adv", "random", "etc")
AUCTION_ALGORITHMS = ("auction-oful", "auction-adv")
PERSUASION_ALGORITHMS = ("persuasion-oful", "persuasion-adv")
ALL_ALGORITHMS = GAME_ALGORITHMS + AUCTION_ALGORITHMS + PERSUASION_ALGORITHMS
ALGORITHM_IDS = {tag: i for i, tag in enumerate(ALL_ALGORITHMS)}

STREAM_INSTANCE, STREAM_TYPE_DIST, STREAM_CONTEXTS, STREAM_FOLLOWERS, STREAM_ENGINE, STREAM_PLAY = range(6)

ENGINE_DEFAULTS = {
    "noise_scale": 4.0,
    "regularization": 1.0,
    "confidence": 0.1,
    "param_bound": 1.0,
}

REGRET_FLUCTUATION_BOUND = 2.0
ETC_NOTE = (
    "explore-then-commit baseline reimplemented from a one-sentence "
    "description: exploration cycles the per-context menu, follower "
    "responses feed an EM maximum-likelihood estimate of the type "
    "distribution, then play is greedy against the frozen estimate"
)


def _rng(*parts) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(p) for p in parts]))


# ---------------------------------------------------------------------------
# Instance generation


def generate_game(
    seed: int,
    context_dim: int,
    n_types: int,
    n_leader_actions: int,
    n_follower_actions: int,
    context_dependent_followers: bool = True,
) -> GameSpec:
    """Random game with iid uniform[-1,1] payoff forms, rescaled in range.

    Dividing by (dim * max |entry|) caps every coefficient vector's 1-norm
    at 1, the game validator's exact requirement.  When follower forms are
    context-independent they load only coordinate 0; the matching
    environment pins z[0] = 1 so follower payoffs are context-constant
    while leader payoffs still vary with the remaining coordinates.
    """
    rng = _rng(seed, STREAM_INSTANCE)
    leader = rng.uniform(-1.0, 1.0, size=(n_leader_actions, n_follower_actions, context_dim))
    leader /= context_dim * np.abs(leader).max()
    if context_dependent_followers:
        follower = rng.uniform(
            -1.0, 1.0, size=(n_types, n_leader_actions, n_follower_actions, context_dim)
        )
        follower /= context_dim * np.abs(follower).max()
    else:
        follower = np.zeros((n_types, n_leader_actions, n_follower_actions, context_dim))
        follower[..., 0] = rng.uniform(
            -1.0, 1.0, size=(n_types, n_leader_actions, n_follower_actions)
        )
        follower[..., 0] /= np.abs(follower[..., 0]).max()
    return GameSpec(leader, follower)


def generate_auction_spec(seed: int, n_items: int, n_types: int, context_dim: int) -> AuctionSpec:
    """Random auction, jointly rescaled so worst-case |utility| is at most 1."""
    rng = _rng(seed, STREAM_INSTANCE)
    thresholds = rng.uniform(0.0, 1.0, size=(n_types, n_items))
    coeffs = rng.uniform(-1.0, 1.0, size=(n_items, context_dim))
    worst = AuctionSpec(thresholds, coeffs).worst_case_utility()
    if worst > 1.0:
        thresholds = thresholds / worst
        coeffs = coeffs / worst
    return AuctionSpec(thresholds, coeffs)


def generate_persuasion_spec(
    seed: int, signal_dim: int, n_types: int, context_dim: int, n_cuts: int = 2
) -> PersuasionSpec:
    """Random cut box polytope with type utilities rescaled via its vertices."""
    from stackelberg_bandits.applications import polytope_vertices

    rng = _rng(seed, STREAM_INSTANCE)
    center = np.full(signal_dim, 0.5)
    cut_rows = rng.normal(size=(n_cuts, signal_dim))
    cut_bounds = cut_rows @ center + rng.uniform(0.1, 0.5, size=n_cuts)
    rows = np.vstack([np.eye(signal_dim), -np.eye(signal_dim), cut_rows])
    bounds = np.concatenate([np.ones(signal_dim), np.zeros(signal_dim), cut_bounds])
    types = rng.uniform(-1.0, 1.0, size=(n_types, context_dim, signal_dim))
    vertices = polytope_vertices(rows, bounds)
    worst = np.abs(np.einsum("idp,vp->ivd", types, vertices)).sum(axis=2).max()
    return PersuasionSpec(rows, bounds, types / max(float(worst), 1e-9))


def random_baseline(rng: np.random.Generator, n_leader_actions: int) -> np.ndarray:
    """Uniform sample from the strategy simplex (unit-concentration Dirichlet)."""
    if n_leader_actions == 1:
        return np.ones(1)
    return rng.dirichlet(np.ones(n_leader_actions))


# ---------------------------------------------------------------------------
# Environment processes


def load_scripted_contexts(path: str) -> np.ndarray:
    rows = np.loadtxt(path, delimiter=",", ndmin=2)
    if not np.isfinite(rows).all():
        raise ValueError(f"scripted contexts in {path} contain non-finite values")
    return rows


def load_scripted_followers(path: str) -> np.ndarray:
    values = np.loadtxt(path, dtype=int, ndmin=1)
    if (values < 0).any():
        raise ValueError(f"scripted follower types in {path} must be nonnegative")
    return values


def build_trace(config: "ExperimentConfig", seed: int, n_opponent_types: int, context_dim: int):
    """Pregenerate the full (contexts, opponent types) trace for one seed.

    Returns the trace and the sampled type distribution (None when the
    follower sequence is scripted).  The same trace is replayed by every
    algorithm of the experiment.
    """
    if config.context_process == "iid-uniform":
        contexts = _rng(seed, STREAM_CONTEXTS).uniform(
            -1.0, 1.0, size=(config.horizon, context_dim)
        )
        if config.kind == "game" and not config.game_params.get(
            "context_dependent_followers", True
        ):
            contexts[:, 0] = 1.0
    else:
        contexts = load_scripted_contexts(config.context_process)
        if len(contexts) < config.horizon:
            raise ValueError(
                f"scripted contexts supply {len(contexts)} rounds, need {config.horizon}"
            )
        contexts = contexts[: config.horizon]
    type_distribution = None
    if config.follower_process == "iid":
        type_distribution = _rng(seed, STREAM_TYPE_DIST).dirichlet(np.ones(n_opponent_types))
        types = _rng(seed, STREAM_FOLLOWERS).choice(
            n_opponent_types, size=config.horizon, p=type_distribution
        )
    else:
        types = load_scripted_followers(config.follower_process)
        if len(types) < config.horizon:
            raise ValueError(
                f"scripted follower types supply {len(types)} rounds, need {config.horizon}"
            )
        types = types[: config.horizon]
        if types.max(initial=0) >= n_opponent_types:
            raise ValueError("scripted follower type outside the instance's type range")
    return EnvironmentTrace(contexts=contexts, follower_types=types), type_distribution


# ---------------------------------------------------------------------------
# Config


@dataclass(frozen=True)
class ExperimentConfig:
    """One algorithm on one instance family; loaders expand algorithm lists.

    ``context_process`` is "iid-uniform" or a path to a CSV of context
    rows; ``follower_process`` is "iid" (Dirichlet-sampled distribution per
    seed) or a path to a file of type indices.
    """

    name: str
    kind: str
    algorithm: str
    horizon: int
    seeds: tuple
    mode: str = KNOWN_MODE
    context_process: str = "iid-uniform"
    follower_process: str = "iid"
    menu_tolerance: float = 0.0
    grid_granularity: int = 20
    engine: dict = field(default_factory=dict)
    etc_exploration_rounds: tuple = (250,)
    game_params: dict = field(default_factory=dict)
    auction_params: dict = field(default_factory=dict)
    persuasion_params: dict = field(default_factory=dict)
    spec_path: str = ""
    output_dir: str = "results"

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.kind not in ("game", "auction", "persuasion"):
            raise ValueError(f"unknown instance kind {self.kind!r}")
        if self.algorithm not in ALL_ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {ALL_ALGORITHMS}")
        if self.mode not in (KNOWN_MODE, UNKNOWN_MODE):
            raise ValueError("mode must be 'known' or 'unknown'")
        object.__setattr__(
            self,
            "menu_tolerance",
            float(self.menu_tolerance) if self.menu_tolerance else 1.0 / self.horizon,
        )
        if self.menu_tolerance <= 0:
            raise ValueError("menu_tolerance must be positive")
        merged = dict(ENGINE_DEFAULTS)
        merged.update(self.engine)
        object.__setattr__(self, "engine", merged)
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(
            self, "etc_exploration_rounds", tuple(int(v) for v in self.etc_exploration_rounds)
        )
        self._validate_pairings()

    def _validate_pairings(self) -> None:
        alg = self.algorithm
        if alg in GAME_ALGORITHMS and self.kind != "game":
            raise ValueError(f"{alg} requires kind 'game', got {self.kind!r}")
        if alg in AUCTION_ALGORITHMS and self.kind != "auction":
            raise ValueError(f"{alg} requires kind 'auction', got {self.kind!r}")
        if alg in PERSUASION_ALGORITHMS and self.kind != "persuasion":
            raise ValueError(f"{alg} requires kind 'persuasion', got {self.kind!r}")
        if self.kind == "game" and not self.spec_path and not self.game_params:
            raise ValueError("kind 'game' needs game_params or spec_path")
        if self.kind != "game" and self.mode == UNKNOWN_MODE:
            raise ValueError("unknown-utility mode is only supported for games")
        if alg == "etc":
            if self.kind == "game" and self.game_params.get("context_dependent_followers", True):
                raise ValueError(
                    "etc is not applicable when follower utilities depend on the "
                    "context: its estimate is a context-free type distribution; "
                    "set context_dependent_followers=false or drop etc"
                )
            if not self.etc_exploration_rounds:
                raise ValueError("etc needs at least one exploration budget")
            if any(t0 < 1 or t0 > self.horizon for t0 in self.etc_exploration_rounds):
                raise ValueError("etc exploration budgets must lie in [1, horizon]")
        if alg.endswith("-oful") or alg == "etc":
            if self.follower_process != "iid":
                raise ValueError(
                    f"{alg} assumes stochastic opponents; follower_process must be 'iid'"
                )
        if alg.endswith("-adv") and self.context_process != "iid-uniform":
            raise ValueError(
                f"{alg} assumes stochastic contexts; context_process must be 'iid-uniform'"
            )
        if self.kind != "game" and self.grid_granularity < 1:
            raise ValueError("grid_granularity must be >= 1")

    def config_hash(self) -> str:
        doc = {k: v for k, v in self.__dict__.items() if k != "output_dir"}
        doc["seeds"] = list(doc["seeds"])
        doc["etc_exploration_rounds"] = list(doc["etc_exploration_rounds"])
        text = json.dumps(doc, sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def load_configs(source) -> list:
    """Parse a config JSON (path, text, or dict) into per-algorithm configs.

    The JSON lists ``algorithms``; each entry becomes one ExperimentConfig
    with every other field shared, so the type-level "exactly one
    algorithm" invariant holds while one file drives a whole figure.
    """
    if isinstance(source, dict):
        doc = dict(source)
    else:
        text = source
        if os.path.exists(str(source)):
            with open(source) as handle:
                text = handle.read()
        doc = json.loads(text)
    algorithms = doc.pop("algorithms", None)
    if not algorithms:
        raise ValueError("config must list at least one algorithm under 'algorithms'")
    shared = {
        "name": doc.get("name", "experiment"),
        "kind": doc.get("kind", "game"),
        "horizon": int(doc.get("horizon", 0)),
        "seeds": tuple(doc.get("seeds", ())),
        "mode": doc.get("mode", KNOWN_MODE),
        "context_process": doc.get("context_process", "iid-uniform"),
        "follower_process": doc.get("follower_process", "iid"),
        "menu_tolerance": doc.get("menu_tolerance", 0.0),
        "grid_granularity": int(doc.get("grid_granularity", 20)),
        "engine": doc.get("engine", {}),
        "etc_exploration_rounds": tuple(
            doc.get("etc_exploration_rounds", (250,))
            if isinstance(doc.get("etc_exploration_rounds", (250,)), (list, tuple))
            else (doc.get("etc_exploration_rounds"),)
        ),
        "game_params": doc.get("game", {}),
        "auction_params": doc.get("auction", {}),
        "persuasion_params": doc.get("persuasion", {}),
        "spec_path": doc.get("spec_path", ""),
        "output_dir": doc.get("output_dir", "results"),
    }
    return [ExperimentConfig(algorithm=alg, **shared) for alg in algorithms]


# ---------------------------------------------------------------------------
# Per-round analysis helpers


def _encoded_menu_actions(game, z, delta, menu_cache, action_cache=None, mode=KNOWN_MODE):
    """Cached engine-facing action set at a context, building the menu on
    demand.  Known-mode encodings read the context only through the two
    payoff tables, so their cache key is the table bytes; unknown-mode
    patterns read the raw context.  Caches are valid within one game."""
    tables = follower_payoff_tables(game, z)
    if action_cache is not None:
        if mode == KNOWN_MODE:
            action_key = (float(delta), mode, leader_payoff_table(game, z).tobytes(), tables.tobytes())
        else:
            action_key = (float(delta), mode, np.asarray(z, dtype=float).tobytes())
        actions = action_cache.get(action_key)
        if actions is not None:
            return actions
    key = (float(delta), tables.tobytes())
    menu = menu_cache.get(key)
    if menu is None:
        menu = approximate_extreme_points(game, z, delta)
        menu_cache[key] = menu
    actions = build_action_set(game, z, menu, mode)
    if action_cache is not None:
        action_cache[action_key] = actions
    return actions


def round_utility_matrices(
    game: GameSpec, trace, horizon: int, delta: float, menu_cache: dict, action_cache=None
):
    """Per-round (menu size, n_types) expected-utility matrices.

    Matrices are rebuilt from the cached menus, so rounds with bitwise
    equal contexts get bitwise equal matrices (required by the grouped
    comparator).
    """
    matrices = []
    for t in range(horizon):
        z, _ = trace.round_inputs(t)
        actions = _encoded_menu_actions(game, z, delta, menu_cache, action_cache)
        matrices.append(np.stack(actions.vectors))
    return matrices


def regret_series(matrices, contexts, follower_types, chosen_indices, fallback_expected=None):
    """Cumulative comparator and algorithm expected-utility series.

    The comparator commits to one menu row per distinct context (grouping
    rounds by bitwise context equality) maximizing the group-summed
    utility against the realized types; this is hindsight at the full
    horizon.  The algorithm series takes the chosen row's expected utility
    against the realized type; rounds with negative chosen index (off-menu
    play) take ``fallback_expected``.
    """
    horizon = len(matrices)
    contexts = np.asarray(contexts, dtype=float)
    groups: dict[bytes, list] = {}
    for t in range(horizon):
        groups.setdefault(contexts[t].tobytes(), []).append(t)
    optimal = np.zeros(horizon)
    expected = np.zeros(horizon)
    for rounds in groups.values():
        matrix = matrices[rounds[0]]
        counts = np.zeros(matrix.shape[1])
        for t in rounds:
            counts[follower_types[t]] += 1
        best_row = int(np.argmax(matrix @ counts))
        for t in rounds:
            optimal[t] = matrix[best_row, follower_types[t]]
            chosen = chosen_indices[t]
            if chosen >= 0:
                expected[t] = matrices[t][chosen, follower_types[t]]
            elif fallback_expected is not None:
                expected[t] = fallback_expected[t]
            else:
                raise ValueError("off-menu round without a fallback expected utility")
    return np.cumsum(optimal), np.cumsum(expected)


@dataclass(frozen=True)
class RegretReport:
    """Cross-seed cumulative series for one algorithm.

    ``cum_regret = cum_optimal - cum_expected`` uses the per-round
    conditional mean of the algorithm's utility (not the sampled value),
    so with all-distinct contexts the comparator dominates menu play
    pointwise and regret cannot go negative; realized series are kept for
    utility curves.  Per-round regret increments stay within the [-1,1]
    utility range's fluctuation bound of 2.
    """

    algorithm: str
    cum_realized: np.ndarray
    cum_expected: np.ndarray
    cum_optimal: np.ndarray

    def __post_init__(self):
        for name in ("cum_realized", "cum_expected", "cum_optimal"):
            arr = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.cum_realized.shape == self.cum_expected.shape == self.cum_optimal.shape):
            raise ValueError("per-seed series must share one shape")
        increments = np.diff(self.cum_regret, axis=1)
        if increments.size and np.abs(increments).max() > REGRET_FLUCTUATION_BOUND + 1e-9:
            raise ValueError("regret increment outside the utility fluctuation bound")

    @property
    def cum_regret(self) -> np.ndarray:
        return self.cum_optimal - self.cum_expected

    def summary(self) -> dict:
        return {
            "mean_cum_utility": self.cum_realized.mean(axis=0).tolist(),
            "std_cum_utility": self.cum_realized.std(axis=0).tolist(),
            "mean_cum_regret": self.cum_regret.mean(axis=0).tolist(),
        }


def hindsight_regret(
    log: EpisodeLog, game: GameSpec, trace, delta: float, menu_cache=None, action_cache=None
) -> RegretReport:
    """Offline comparator/expected/realized series for one episode log.

    Rebuilds menus and utility matrices from the game and trace.  Rounds
    played off-menu (negative chosen index) fall back to the realized
    utility, which is its unbiased sample; in-run reports use the exact
    expected value instead.
    """
    if len(log) != len(trace):
        raise ValueError(f"log has {len(log)} rounds, trace has {len(trace)}")
    cache = menu_cache if menu_cache is not None else {}
    matrices = round_utility_matrices(game, trace, len(log), delta, cache, action_cache)
    cum_optimal, cum_expected = regret_series(
        matrices,
        trace.contexts,
        trace.follower_types,
        log.chosen_indices,
        fallback_expected=log.realized_utilities,
    )
    return RegretReport(
        algorithm=log.algorithm,
        cum_realized=np.cumsum(log.realized_utilities),
        cum_expected=cum_expected,
        cum_optimal=cum_optimal,
    )


# ---------------------------------------------------------------------------
# Baseline runners (games)


def run_random_episode(
    game, trace, horizon, delta, rng, *, seed, config_hash, menu_cache, action_cache=None
):
    """Uniform-random mixed strategies; menus only annotate the log."""
    rows = []
    expected = np.zeros(horizon)
    for t in range(horizon):
        z, follower_type = trace.round_inputs(t)
        actions = _encoded_menu_actions(game, z, delta, menu_cache, action_cache)
        strategy = random_baseline(rng, game.n_leader_actions)
        response = follower_best_response(game, z, strategy, follower_type)
        sampled = int(rng.choice(game.n_leader_actions, p=strategy))
        realized = realized_round_utility(game, z, sampled, response)
        expected[t] = utility_vector(game, z, strategy)[follower_type]
        best = max(vec[follower_type] for vec in actions.vectors)
        rows.append((t, -1, sampled, follower_type, response, realized, best, z))
    return _assemble_log("random", seed, config_hash, game, rows), expected


def estimate_type_distribution(consistency: np.ndarray, iterations: int = 500) -> np.ndarray:
    """EM maximum-likelihood type mixture from best-response consistency.

    ``consistency[t, k]`` says whether type k's best response at round t's
    (context, strategy) matches the observed follower action.  The truth
    is always consistent, so every row is nonempty and the likelihood is
    well defined from the uniform start; symmetric ties (duplicated types)
    stay symmetric.
    """
    rounds, n_types = consistency.shape
    consistency = consistency.astype(float)
    estimate = np.full(n_types, 1.0 / n_types)
    if rounds == 0:
        return estimate
    for _ in range(iterations):
        mix = consistency @ estimate
        responsibilities = consistency * estimate / mix[:, None]
        refreshed = responsibilities.mean(axis=0)
        if np.abs(refreshed - estimate).max() < 1e-12:
            estimate = refreshed
            break
        estimate = refreshed
    return estimate


def run_etc_episode(
    game, trace, horizon, delta, exploration_rounds, rng, *,
    seed, config_hash, menu_cache, action_cache=None,
):
    """Cycle the menu for the exploration budget, then play the greedy
    strategy under the frozen EM type estimate."""
    rows = []
    consistency_rows = []
    estimate = None
    for t in range(horizon):
        z, follower_type = trace.round_inputs(t)
        actions = _encoded_menu_actions(game, z, delta, menu_cache, action_cache)
        matrix = np.stack(actions.vectors)
        if t < exploration_rounds:
            index = t % len(actions)
        else:
            if estimate is None:
                estimate = estimate_type_distribution(
                    np.array(consistency_rows).reshape(len(consistency_rows), game.n_types)
                )
            index = int(np.argmax(matrix @ estimate))
        strategy = actions.strategies[index]
        response = follower_best_response(game, z, strategy, follower_type)
        if t < exploration_rounds:
            consistency_rows.append(follower_best_responses(game, z, strategy) == response)
        sampled = int(rng.choice(game.n_leader_actions, p=strategy))
        realized = realized_round_utility(game, z, sampled, response)
        best = float(matrix[:, follower_type].max())
        rows.append((t, index, sampled, follower_type, response, realized, best, z))
    log = _assemble_log("etc", seed, config_hash, game, rows)
    return log


def _assemble_log(algorithm, seed, config_hash, game, rows) -> EpisodeLog:
    return EpisodeLog(
        algorithm=algorithm,
        seed=seed,
        mode=KNOWN_MODE,
        config_hash=config_hash,
        contexts=(
            np.array([row[7] for row in rows], dtype=float).reshape(len(rows), -1)
            if rows
            else np.zeros((0, game.context_dim))
        ),
        chosen_indices=[row[1] for row in rows],
        sampled_leader_actions=[row[2] for row in rows],
        follower_types=[row[3] for row in rows],
        follower_actions=[row[4] for row in rows],
        realized_utilities=[row[5] for row in rows],
        menu_best_utilities=[row[6] for row in rows],
    )


# ---------------------------------------------------------------------------
# Application episodes


def run_application_episode(spec, trace, engine, horizon, grid, *, algorithm, seed, config_hash):
    """Menu play for auctions/persuasion: deterministic policy actions.

    The policy action is committed deterministically (no strategy
    sampling), so the realized utility equals the expected utility against
    the drawn opponent type; the sampled-action CSV column repeats the
    chosen index to keep the schema shared with game episodes.
    """
    rows = []
    matrices = []
    for t in range(horizon):
        z, opponent_type = trace.round_inputs(t)
        menu = application_action_set(spec, z, grid)
        vectors = menu.vectors
        chosen = engine.recommend(vectors)
        index = engine.last_index
        if not 0 <= index < len(vectors):
            raise RuntimeError(f"engine reported out-of-range choice index {index}")
        if not np.array_equal(np.asarray(chosen), vectors[index]):
            raise RuntimeError("engine returned a vector that is not the indexed set element")
        realized = float(menu.utility_matrix[index, opponent_type])
        engine.observe_utility(chosen, realized)
        best = float(menu.utility_matrix[:, opponent_type].max())
        rows.append((t, index, index, opponent_type, opponent_type, realized, best, z))
        matrices.append(menu.utility_matrix)
    log = EpisodeLog(
        algorithm=algorithm,
        seed=seed,
        mode=KNOWN_MODE,
        config_hash=config_hash,
        contexts=(
            np.array([row[7] for row in rows], dtype=float).reshape(len(rows), -1)
            if rows
            else np.zeros((0, spec.context_dim))
        ),
        chosen_indices=[row[1] for row in rows],
        sampled_leader_actions=[row[2] for row in rows],
        follower_types=[row[3] for row in rows],
        follower_actions=[row[4] for row in rows],
        realized_utilities=[row[5] for row in rows],
        menu_best_utilities=[row[6] for row in rows],
    )
    return log, matrices


# ---------------------------------------------------------------------------
# Experiment driver


def _build_instance(config: ExperimentConfig, seed: int):
    if config.spec_path:
        with open(config.spec_path) as handle:
            text = handle.read()
        if config.kind == "game":
            return GameSpec.from_json(text)
        if config.kind == "auction":
            return AuctionSpec.from_json(text)
        return PersuasionSpec.from_json(text)
    if config.kind == "game":
        p = config.game_params
        return generate_game(
            seed,
            context_dim=int(p["context_dim"]),
            n_types=int(p["n_types"]),
            n_leader_actions=int(p["n_leader_actions"]),
            n_follower_actions=int(p["n_follower_actions"]),
            context_dependent_followers=bool(p.get("context_dependent_followers", True)),
        )
    if config.kind == "auction":
        p = config.auction_params
        return generate_auction_spec(
            seed,
            n_items=int(p["n_items"]),
            n_types=int(p["n_types"]),
            context_dim=int(p["context_dim"]),
        )
    p = config.persuasion_params
    return generate_persuasion_spec(
        seed,
        signal_dim=int(p["signal_dim"]),
        n_types=int(p["n_types"]),
        context_dim=int(p["context_dim"]),
        n_cuts=int(p.get("n_cuts", 2)),
    )


def _make_engine(config: ExperimentConfig, dim: int, seed: int, sweep_tag: int = 0):
    params = config.engine
    if config.algorithm.endswith("-adv"):
        inner_rng = _rng(seed, STREAM_ENGINE, ALGORITHM_IDS[config.algorithm], sweep_tag)
        inner = ForcedExplorationLinear(
            dim, inner_rng, regularization=float(params["regularization"])
        )
        return ScaledAdversarialWrapper(inner, dim)
    return Oful(
        dim,
        regularization=float(params["regularization"]),
        noise_scale=float(params["noise_scale"]),
        confidence=float(params["confidence"]),
        param_bound=float(params["param_bound"]),
    )


def _run_game_seed(config, seed, instance, trace, menu_cache, t0: int = 0, action_cache=None):
    config_hash = config.config_hash()
    play_rng = _rng(seed, STREAM_PLAY, ALGORITHM_IDS[config.algorithm], t0)
    if config.algorithm == "random":
        log, expected = run_random_episode(
            instance, trace, config.horizon, config.menu_tolerance, play_rng,
            seed=seed, config_hash=config_hash, menu_cache=menu_cache,
            action_cache=action_cache,
        )
    elif config.algorithm == "etc":
        log = run_etc_episode(
            instance, trace, config.horizon, config.menu_tolerance, t0, play_rng,
            seed=seed, config_hash=config_hash, menu_cache=menu_cache,
            action_cache=action_cache,
        )
        expected = None
    else:
        dim = instance.n_types if config.mode == KNOWN_MODE else embedding_dim(instance)
        engine = _make_engine(config, dim, seed)
        log = run_episode(
            instance, trace, engine, config.horizon, config.menu_tolerance,
            config.mode, play_rng,
            algorithm=config.algorithm, seed=seed, config_hash=config_hash,
            menu_cache=menu_cache, action_cache=action_cache,
        )
        expected = None
    matrices = round_utility_matrices(
        instance, trace, config.horizon, config.menu_tolerance, menu_cache, action_cache
    )
    cum_optimal, cum_expected = regret_series(
        matrices, trace.contexts, trace.follower_types, log.chosen_indices,
        fallback_expected=expected,
    )
    return log, np.cumsum(log.realized_utilities), cum_expected, cum_optimal


def _run_application_seed(config, seed, instance, trace):
    config_hash = config.config_hash()
    grid = simplex_grid(instance.n_types, config.grid_granularity)
    engine = _make_engine(config, instance.n_types, seed)
    log, matrices = run_application_episode(
        instance, trace, engine, config.horizon, grid,
        algorithm=config.algorithm, seed=seed, config_hash=config_hash,
    )
    cum_optimal, cum_expected = regret_series(
        matrices, trace.contexts, trace.follower_types, log.chosen_indices
    )
    return log, np.cumsum(log.realized_utilities), cum_expected, cum_optimal


def write_trace_csv(path, trace: EnvironmentTrace) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        dim = trace.contexts.shape[1]
        writer.writerow(["t", "follower_type"] + [f"z{j}" for j in range(dim)])
        for t in range(len(trace)):
            writer.writerow(
                [t + 1, int(trace.follower_types[t])]
                + [repr(float(v)) for v in trace.contexts[t]]
            )


def read_trace_csv(path) -> EnvironmentTrace:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        dim = len(header) - 2
        contexts, types = [], []
        for row in reader:
            types.append(int(row[1]))
            contexts.append([float(v) for v in row[2 : 2 + dim]])
    return EnvironmentTrace(
        contexts=np.array(contexts, dtype=float).reshape(len(types), dim),
        follower_types=np.array(types, dtype=int),
    )


def run_experiment(source, output_dir: str | None = None, seeds=None) -> dict:
    """Run every algorithm of a config and write CSVs plus summary.json.

    Per seed, every algorithm replays one pregenerated trace and shares
    one menu cache.  The explore-then-commit baseline sweeps its
    exploration budgets and reports the best by mean final cumulative
    utility (ties to the smallest budget); only the winner's episodes are
    written.  Outputs are deterministic functions of config and seeds.
    """
    configs = load_configs(source)
    if seeds is not None:
        configs = [replace(c, seeds=tuple(seeds)) for c in configs]
    base = configs[0]
    out_dir = output_dir or base.output_dir
    os.makedirs(out_dir, exist_ok=True)

    instances, traces, distributions, caches, action_caches = {}, {}, {}, {}, {}
    for seed in base.seeds:
        instance = _build_instance(base, seed)
        trace, distribution = build_trace(base, seed, instance.n_types, instance.context_dim)
        instances[seed] = instance
        traces[seed] = trace
        distributions[seed] = distribution
        caches[seed] = {}
        action_caches[seed] = {}
        write_trace_csv(os.path.join(out_dir, f"trace-seed{seed}.csv"), trace)
        spec_json = instance.to_json()
        with open(os.path.join(out_dir, f"instance-seed{seed}.json"), "w") as handle:
            handle.write(spec_json)

    summary_algorithms = {}
    metadata = {
        "etc_note": ETC_NOTE if any(c.algorithm == "etc" for c in configs) else "",
        "engine": dict(base.engine),
        "menu_tolerance": base.menu_tolerance,
        "grid_granularity": base.grid_granularity,
        "type_distributions": {
            str(seed): (distributions[seed].tolist() if distributions[seed] is not None else None)
            for seed in base.seeds
        },
    }
    per_seed_finals = {}

    for config in configs:
        if config.algorithm == "etc":
            candidates = []
            for t0 in config.etc_exploration_rounds:
                runs = [
                    _run_game_seed(
                        config, seed, instances[seed], traces[seed], caches[seed], t0,
                        action_caches[seed],
                    )
                    for seed in config.seeds
                ]
                mean_final = float(np.mean([r[1][-1] for r in runs]))
                candidates.append((mean_final, t0, runs))
            best_final, best_t0, runs = max(candidates, key=lambda c: (c[0], -c[1]))
            metadata["etc_sweep"] = {
                str(t0): final for final, t0, _ in candidates
            }
            metadata["etc_exploration_rounds"] = best_t0
        elif config.kind == "game":
            runs = [
                _run_game_seed(
                    config, seed, instances[seed], traces[seed], caches[seed],
                    action_cache=action_caches[seed],
                )
                for seed in config.seeds
            ]
        else:
            runs = [
                _run_application_seed(config, seed, instances[seed], traces[seed])
                for seed in config.seeds
            ]
        report = RegretReport(
            algorithm=config.algorithm,
            cum_realized=np.stack([r[1] for r in runs]),
            cum_expected=np.stack([r[2] for r in runs]),
            cum_optimal=np.stack([r[3] for r in runs]),
        )
        summary_algorithms[config.algorithm] = report.summary()
        per_seed_finals[config.algorithm] = {
            "final_cum_utility": report.cum_realized[:, -1].tolist(),
            "final_cum_regret": report.cum_regret[:, -1].tolist(),
        }
        for seed, run in zip(config.seeds, runs):
            run[0].write_csv(os.path.join(out_dir, f"{config.algorithm}-seed{seed}.csv"))

    summary = {
        "name": base.name,
        "kind": base.kind,
        "mode": base.mode,
        "horizon": base.horizon,
        "seeds": list(base.seeds),
        "algorithms": summary_algorithms,
        "per_seed": per_seed_finals,
        "metadata": metadata,
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as handle:
        json.dump(summary, handle, sort_keys=True, indent=1)
    return summary


# ---------------------------------------------------------------------------
# Offline regret from a results directory


def read_episode_csv(path) -> dict:
    """Parse one episode CSV back into column arrays (schema-checked)."""
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = tuple(next(reader))
        if header != CSV_COLUMNS:
            raise ValueError(f"{path} header {header} does not match {CSV_COLUMNS}")
        rows = list(reader)
    return {
        "algorithm": rows[0][2] if rows else "",
        "seed": int(rows[0][1]) if rows else 0,
        "mode": rows[0][3] if rows else KNOWN_MODE,
        "chosen_indices": np.array([int(r[4]) for r in rows], dtype=int),
        "sampled_leader_actions": np.array([int(r[5]) for r in rows], dtype=int),
        "follower_types": np.array([int(r[6]) for r in rows], dtype=int),
        "realized_utilities": np.array([float(r[7]) for r in rows], dtype=float),
        "menu_best_utilities": np.array([float(r[8]) for r in rows], dtype=float),
    }


def _load_instance_json(path):
    with open(path) as handle:
        doc = json.load(handle)
    if doc.get("kind") == "auction":
        return AuctionSpec.from_json(json.dumps(doc))
    if doc.get("kind") == "persuasion":
        return PersuasionSpec.from_json(json.dumps(doc))
    return GameSpec.from_json(json.dumps(doc))


def offline_regret(log_dir: str, delta: float | None = None) -> dict:
    """Recompute hindsight regret from a results directory.

    Reads instance JSONs, trace CSVs, and episode CSVs; the menu tolerance
    and grid granularity default to the values recorded in summary.json.
    Off-menu rounds (negative chosen index) use the realized utility as
    their unbiased expected-utility stand-in, so random-baseline numbers
    carry sampling noise here while in-run summaries do not.  Returns
    {algorithm: {"mean_final_regret", "final_regret_per_seed"}}.
    """
    summary_path = os.path.join(log_dir, "summary.json")
    grid_granularity = 20
    if delta is None and os.path.exists(summary_path):
        with open(summary_path) as handle:
            summary = json.load(handle)
        delta = summary["metadata"]["menu_tolerance"]
        grid_granularity = int(summary["metadata"].get("grid_granularity", 20))
    episode_paths = sorted(glob.glob(os.path.join(log_dir, "*-seed*.csv")))
    results: dict[str, dict] = {}
    for path in episode_paths:
        name = os.path.basename(path)
        match = re.fullmatch(r"(.+)-seed(\d+)\.csv", name)
        if not match or match.group(1) == "trace":
            continue
        algorithm, seed = match.group(1), int(match.group(2))
        episode = read_episode_csv(path)
        trace = read_trace_csv(os.path.join(log_dir, f"trace-seed{seed}.csv"))
        instance = _load_instance_json(os.path.join(log_dir, f"instance-seed{seed}.json"))
        horizon = len(episode["chosen_indices"])
        if delta is None:
            delta = 1.0 / max(horizon, 1)
        if isinstance(instance, GameSpec):
            matrices = round_utility_matrices(instance, trace, horizon, delta, {})
        else:
            grid = simplex_grid(instance.n_types, grid_granularity)
            matrices = [
                application_action_set(instance, trace.contexts[t], grid).utility_matrix
                for t in range(horizon)
            ]
        cum_optimal, cum_expected = regret_series(
            matrices,
            trace.contexts[:horizon],
            trace.follower_types[:horizon],
            episode["chosen_indices"],
            fallback_expected=episode["realized_utilities"],
        )
        final = float(cum_optimal[-1] - cum_expected[-1]) if horizon else 0.0
        entry = results.setdefault(algorithm, {"final_regret_per_seed": {}})
        entry["final_regret_per_seed"][str(seed)] = final
    for entry in results.values():
        finals = list(entry["final_regret_per_seed"].values())
        entry["mean_final_regret"] = float(np.mean(finals))
    return results
