"""Online learning of leader commitments in contextual Stackelberg games.

A leader repeatedly commits to a mixed strategy over its actions after
observing a context vector; a follower of unknown type best-responds to the
commitment.  This package provides the game model, the best-response
geometry that yields finite per-context strategy menus, linear bandit
engines that learn over those menus, reductions for known and unknown
leader payoffs, auction and persuasion instantiations, and an experiment
harness with regret reporting.
"""

from stackelberg_bandits.applications import (
    ApplicationActionSet,
    AuctionSpec,
    PersuasionSpec,
    application_action_set,
    auction_outcome,
    auction_policy_bid,
    persuasion_policy_signal,
    polytope_vertices,
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
    leader_expected_utility,
    realized_round_utility,
    utility_vector,
)
from stackelberg_bandits.geometry import (
    ExtremePointSet,
    approximate_extreme_points,
    exogenous_extreme_points,
)
from stackelberg_bandits.harness import (
    ExperimentConfig,
    RegretReport,
    generate_auction_spec,
    generate_game,
    generate_persuasion_spec,
    hindsight_regret,
    load_configs,
    run_experiment,
)
from stackelberg_bandits.reduction import (
    EnvironmentTrace,
    EpisodeLog,
    RoundActionSet,
    build_action_set,
    embedding_parameter,
    flat_index,
    h_embedding,
    play_round,
    run_episode,
)

__all__ = [
    "ApplicationActionSet",
    "AuctionSpec",
    "EnvironmentTrace",
    "EpisodeLog",
    "ExperimentConfig",
    "ExtremePointSet",
    "ForcedExplorationLinear",
    "GameSpec",
    "Oful",
    "PersuasionSpec",
    "RegretReport",
    "RoundActionSet",
    "ScaledAdversarialWrapper",
    "application_action_set",
    "approximate_extreme_points",
    "auction_outcome",
    "auction_policy_bid",
    "build_action_set",
    "embedding_parameter",
    "exogenous_extreme_points",
    "flat_index",
    "follower_best_response",
    "generate_auction_spec",
    "generate_game",
    "generate_persuasion_spec",
    "h_embedding",
    "hindsight_regret",
    "leader_expected_utility",
    "load_configs",
    "persuasion_policy_signal",
    "play_round",
    "polytope_vertices",
    "realized_round_utility",
    "run_episode",
    "run_experiment",
    "simplex_grid",
    "utility_vector",
]
