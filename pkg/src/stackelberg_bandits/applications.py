"""Marketplace instantiations of menu-based commitment learning.

Two settings share one pattern: a weight vector over opponent types defines
a deterministic policy (a bid vector, or a signaling scheme), the finite
menu is the image of a simplex grid of weight vectors, and each policy maps
to its per-type utility vector for a bandit engine.

The auction setting is repeated second-price bundle bidding: the opponent
type is a per-item threshold vector, an item is won when the bid meets its
threshold, and winning costs the threshold.  The persuasion setting
optimizes a linear objective over an explicit bounded polytope of signaling
schemes, one utility matrix per receiver type.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.sparse
from scipy.optimize import linprog

from stackelberg_bandits.game import as_mixed_strategy
from stackelberg_bandits.geometry import _dedupe_rows

GRID_CAP_DEFAULT = 100_000
FEAS_TOL = 1e-9
UTILITY_BOUND_TOL = 1e-9
DET_TOL = 1e-12


@dataclass(frozen=True)
class SimplexGrid:
    """All weight vectors with numerators summing to ``granularity``.

    Points are stored as integer numerators so each one sums to 1 exactly
    after division; enumeration order is lexicographic in the numerators.
    """

    granularity: int
    numerators: np.ndarray

    def __post_init__(self):
        numerators = np.asarray(self.numerators, dtype=int)
        if numerators.ndim != 2:
            raise ValueError("numerators must be a (points, weights) array")
        if (numerators < 0).any() or (numerators.sum(axis=1) != self.granularity).any():
            raise ValueError("each grid row must be nonnegative and sum to granularity")
        numerators.setflags(write=False)
        object.__setattr__(self, "numerators", numerators)

    def __len__(self) -> int:
        return len(self.numerators)

    @property
    def points(self) -> np.ndarray:
        return self.numerators / self.granularity


def simplex_grid(n_weights: int, granularity: int, cap: int = GRID_CAP_DEFAULT) -> SimplexGrid:
    """Enumerate the weight grid exactly (compositions of the granularity).

    Refuses to materialize grids larger than ``cap``, reporting the exact
    count, since the count grows binomially.
    """
    if n_weights < 1 or granularity < 1:
        raise ValueError("need n_weights >= 1 and granularity >= 1")
    count = math.comb(granularity + n_weights - 1, n_weights - 1)
    if count > cap:
        raise ValueError(
            f"grid would hold {count} points, above the cap {cap}; "
            "lower the granularity or raise the cap"
        )

    def compositions(total, parts):
        if parts == 1:
            yield (total,)
            return
        for head in range(total + 1):
            for tail in compositions(total - head, parts - 1):
                yield (head,) + tail

    numerators = np.array(list(compositions(granularity, n_weights)), dtype=int)
    assert len(numerators) == count
    return SimplexGrid(granularity=granularity, numerators=numerators)


@dataclass(frozen=True)
class AuctionSpec:
    """Second-price bundle bidding against one of several threshold vectors.

    ``thresholds[i]`` is opponent type i's per-item price floor in [0,1];
    ``valuation_coeffs[j]`` makes item j worth ``<valuation_coeffs[j], z>``
    at context z.  ``worst_case_utility`` bounds |utility| over every
    candidate-grid bid, threshold, and context in the unit cube; generators
    scale instances so it is at most 1, which keeps engine feedback in
    [-1, 1] (the scale guard).
    """

    thresholds: np.ndarray
    valuation_coeffs: np.ndarray

    def __post_init__(self):
        thresholds = np.asarray(self.thresholds, dtype=float)
        coeffs = np.asarray(self.valuation_coeffs, dtype=float)
        if thresholds.ndim != 2 or thresholds.shape[0] < 1 or thresholds.shape[1] < 1:
            raise ValueError("thresholds must be a (n_types, n_items) array")
        if coeffs.ndim != 2 or coeffs.shape[0] != thresholds.shape[1]:
            raise ValueError("valuation_coeffs must be a (n_items, context_dim) array")
        if not (np.isfinite(thresholds).all() and np.isfinite(coeffs).all()):
            raise ValueError("auction parameters must be finite")
        if thresholds.min() < 0.0 or thresholds.max() > 1.0:
            raise ValueError("thresholds must lie in [0, 1]")
        thresholds.setflags(write=False)
        coeffs.setflags(write=False)
        object.__setattr__(self, "thresholds", thresholds)
        object.__setattr__(self, "valuation_coeffs", coeffs)

    @property
    def n_types(self) -> int:
        return self.thresholds.shape[0]

    @property
    def n_items(self) -> int:
        return self.thresholds.shape[1]

    @property
    def context_dim(self) -> int:
        return self.valuation_coeffs.shape[1]

    def item_values(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.context_dim,):
            raise ValueError(f"context must have shape ({self.context_dim},)")
        return self.valuation_coeffs @ z

    def worst_case_utility(self) -> float:
        """Exact sup of |utility| over candidate bids, types, and ||z||_inf <= 1.

        A candidate-grid bid wins exactly the item sets containing every
        zero-threshold item, so the sup is a max over types and supersets
        of the forced set of ``||sum of won coeffs||_1 + sum of won
        thresholds`` (value and payment aligned adversarially).
        """
        worst = 0.0
        items = range(self.n_items)
        for i in range(self.n_types):
            forced = {j for j in items if self.thresholds[i, j] == 0.0}
            for r in range(self.n_items + 1):
                for subset in combinations(items, r):
                    if not forced.issubset(subset):
                        continue
                    chosen = list(subset)
                    value = np.abs(self.valuation_coeffs[chosen].sum(axis=0)).sum()
                    worst = max(worst, value + self.thresholds[i, chosen].sum())
        return float(worst)

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": "auction",
                "thresholds": self.thresholds.tolist(),
                "valuation_coeffs": self.valuation_coeffs.tolist(),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "AuctionSpec":
        doc = json.loads(text)
        return cls(
            np.array(doc["thresholds"], dtype=float),
            np.array(doc["valuation_coeffs"], dtype=float),
        )


def auction_outcome(spec: AuctionSpec, z, bid, threshold_vector):
    """Won items and realized utility of one bid against one threshold vector.

    An item is won when the bid meets its threshold (ties win); each won
    item pays its threshold, so the utility is the summed value minus the
    summed thresholds over the won set.
    """
    bid = np.asarray(bid, dtype=float)
    theta = np.asarray(threshold_vector, dtype=float)
    if bid.shape != (spec.n_items,) or theta.shape != (spec.n_items,):
        raise ValueError(f"bid and thresholds must have shape ({spec.n_items},)")
    won = np.flatnonzero(bid >= theta)
    values = spec.item_values(z)
    utility = float((values[won] - theta[won]).sum())
    return won, utility


def _item_candidates(spec: AuctionSpec, item: int) -> np.ndarray:
    """Ascending candidate bids for one item: zero plus every threshold."""
    return np.unique(np.concatenate(([0.0], spec.thresholds[:, item])))


def auction_policy_bid(spec: AuctionSpec, z, weights) -> np.ndarray:
    """Bid maximizing the weight-averaged utility over threshold types.

    Additive valuations make the objective separate per item, and between
    thresholds the won set (hence the utility) is constant in the bid, so
    per item only zero and the thresholds themselves need checking.  Ties
    go to the lowest candidate bid.
    """
    weights = as_mixed_strategy(weights, spec.n_types)
    values = spec.item_values(z)
    bid = np.zeros(spec.n_items)
    for j in range(spec.n_items):
        candidates = _item_candidates(spec, j)
        wins = candidates[:, None] >= spec.thresholds[None, :, j]
        gains = weights[None, :] * (values[j] - spec.thresholds[None, :, j])
        objective = (wins * gains).sum(axis=1)
        bid[j] = candidates[int(np.argmax(objective))]
    return bid


def polytope_vertices(constraint_matrix, constraint_bounds, feas_tol: float = FEAS_TOL) -> np.ndarray:
    """Vertices of a bounded polyhedron given as rows of ``A x <= c``.

    Enumerates every square active subsystem, solves the nondegenerate
    ones, and keeps feasible solutions, deduplicated at 1e-9.  Intended for
    low dimension; the subset count is binomial in the row count.
    """
    rows = np.asarray(constraint_matrix, dtype=float)
    bounds = np.asarray(constraint_bounds, dtype=float)
    if rows.ndim != 2 or bounds.shape != (rows.shape[0],):
        raise ValueError("need matching constraint rows and bounds")
    n_rows, dim = rows.shape
    if n_rows < dim:
        raise ValueError("fewer constraint rows than dimensions; polytope is unbounded")
    subsets = np.array(list(combinations(range(n_rows), dim)))
    mats = rows[subsets]
    rhs = bounds[subsets]
    dets = np.linalg.det(mats)
    solvable = np.abs(dets) > DET_TOL
    if not solvable.any():
        return np.zeros((0, dim))
    solutions = np.linalg.solve(mats[solvable], rhs[solvable][..., None])[..., 0]
    feasible = (rows @ solutions.T <= bounds[:, None] + feas_tol).all(axis=0)
    candidates = solutions[feasible]
    if len(candidates) == 0:
        return np.zeros((0, dim))
    order = np.lexsort(candidates.T[::-1])
    candidates = candidates[order]
    keep, _ = _dedupe_rows(candidates, 1e-9)
    return candidates[keep]


@dataclass(frozen=True)
class PersuasionSpec:
    """Linear persuasion over an explicit bounded polytope of schemes.

    The scheme set is ``{mu : constraint_matrix @ mu <= constraint_bounds}``
    and must be nonempty and bounded (checked by direction LPs at
    construction).  Receiver type i values scheme ``mu`` at context z as
    ``z @ type_matrices[i] @ mu``; construction verifies the exact utility
    bound max over vertices and types of ``||type_matrix @ vertex||_1 <= 1``
    so utilities stay in [-1, 1] on the unit context cube (the scale
    guard).
    """

    constraint_matrix: np.ndarray
    constraint_bounds: np.ndarray
    type_matrices: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.constraint_matrix, dtype=float)
        bounds = np.asarray(self.constraint_bounds, dtype=float)
        types = np.asarray(self.type_matrices, dtype=float)
        if rows.ndim != 2 or bounds.shape != (rows.shape[0],):
            raise ValueError("need matching constraint rows and bounds")
        if types.ndim != 3 or types.shape[2] != rows.shape[1]:
            raise ValueError("type_matrices must be (n_types, context_dim, signal_dim)")
        if not all(np.isfinite(a).all() for a in (rows, bounds, types)):
            raise ValueError("persuasion parameters must be finite")
        for arr, name in ((rows, "constraint_matrix"), (bounds, "constraint_bounds"), (types, "type_matrices")):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        self._check_bounded_nonempty()
        vertices = polytope_vertices(rows, bounds)
        if len(vertices) == 0:
            raise ValueError("polytope has no vertices; not a bounded nonempty region")
        vertices.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        worst = float(np.abs(np.einsum("idp,vp->ivd", types, vertices)).sum(axis=2).max())
        if worst > 1.0 + UTILITY_BOUND_TOL:
            raise ValueError(
                f"utilities reach {worst:.6g} on the context cube; rescale type_matrices"
            )

    def _check_bounded_nonempty(self) -> None:
        dim = self.constraint_matrix.shape[1]
        for j in range(dim):
            for sign in (1.0, -1.0):
                direction = np.zeros(dim)
                direction[j] = sign
                res = linprog(
                    direction,
                    A_ub=self.constraint_matrix,
                    b_ub=self.constraint_bounds,
                    bounds=(None, None),
                    method="highs",
                )
                if res.status == 2:
                    raise ValueError("polytope is empty")
                if res.status == 3:
                    raise ValueError(f"polytope is unbounded along coordinate {j}")
                if not res.success:
                    raise ValueError(f"boundedness check failed: {res.message}")

    @property
    def n_types(self) -> int:
        return self.type_matrices.shape[0]

    @property
    def context_dim(self) -> int:
        return self.type_matrices.shape[1]

    @property
    def signal_dim(self) -> int:
        return self.constraint_matrix.shape[1]

    def utility(self, z, scheme, type_index: int) -> float:
        z = np.asarray(z, dtype=float)
        return float(z @ self.type_matrices[type_index] @ np.asarray(scheme, dtype=float))

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": "persuasion",
                "constraint_matrix": self.constraint_matrix.tolist(),
                "constraint_bounds": self.constraint_bounds.tolist(),
                "type_matrices": self.type_matrices.tolist(),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "PersuasionSpec":
        doc = json.loads(text)
        return cls(
            np.array(doc["constraint_matrix"], dtype=float),
            np.array(doc["constraint_bounds"], dtype=float),
            np.array(doc["type_matrices"], dtype=float),
        )


def _weighted_objective(spec: PersuasionSpec, z, weights) -> np.ndarray:
    weights = as_mixed_strategy(weights, spec.n_types)
    z = np.asarray(z, dtype=float)
    if z.shape != (spec.context_dim,):
        raise ValueError(f"context must have shape ({spec.context_dim},)")
    return np.einsum("i,idp,d->p", weights, spec.type_matrices, z)


def persuasion_policy_signal(spec: PersuasionSpec, z, weights) -> np.ndarray:
    """Scheme maximizing the weight-averaged utility over receiver types.

    One LP over the scheme polytope, solved with HiGHS (deterministic
    pivoting for fixed inputs and library version); the returned optimum is
    a vertex.  Infeasibility or unboundedness cannot occur for a validated
    spec and raise immediately.
    """
    objective = _weighted_objective(spec, z, weights)
    res = linprog(
        -objective,
        A_ub=spec.constraint_matrix,
        b_ub=spec.constraint_bounds,
        bounds=(None, None),
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"persuasion LP failed on a validated polytope: {res.message}")
    return res.x


def _batched_persuasion_signals(spec: PersuasionSpec, z, weight_rows: np.ndarray) -> np.ndarray:
    """Solve one block-diagonal LP covering every weight row at once.

    The blocks are independent, so the stacked optimum restricted to block
    g solves block g's LP; one HiGHS call replaces hundreds.
    """
    objectives = np.stack([_weighted_objective(spec, z, w) for w in weight_rows])
    n, dim = objectives.shape
    block = scipy.sparse.block_diag([spec.constraint_matrix] * n, format="csc")
    rhs = np.tile(spec.constraint_bounds, n)
    res = linprog(
        -objectives.reshape(-1),
        A_ub=block,
        b_ub=rhs,
        bounds=(None, None),
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"batched persuasion LP failed: {res.message}")
    return res.x.reshape(n, dim)


@dataclass(frozen=True)
class ApplicationActionSet:
    """Deduplicated policy actions with per-type utility vectors.

    ``grid_to_action[g]`` maps grid point g to its action slot, so the
    back-map from engine choices to weight vectors stays total even when
    many weights induce one action.  ``kind`` is "auction" or "persuasion".
    """

    actions: list
    utility_matrix: np.ndarray
    grid_to_action: np.ndarray
    kind: str

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def vectors(self) -> list:
        return [self.utility_matrix[i] for i in range(len(self.actions))]


def application_action_set(spec, z, grid: SimplexGrid) -> ApplicationActionSet:
    """Menu of distinct policy actions induced by the weight grid.

    Computes each grid point's policy action and its utility against every
    opponent type, then deduplicates byte-identical actions (first
    occurrence wins, preserving grid order).  Entries outside [-1, 1]
    signal a mis-scaled spec and raise.
    """
    if len(grid) == 0:
        raise ValueError("empty weight grid")
    if isinstance(spec, AuctionSpec):
        kind = "auction"
        raw_actions = [auction_policy_bid(spec, z, w) for w in grid.points]
        stacked = np.stack(raw_actions)
        values = spec.item_values(z)
        won = stacked[:, None, :] >= spec.thresholds[None, :, :]
        utilities = (won * (values[None, None, :] - spec.thresholds[None, :, :])).sum(axis=2)
    elif isinstance(spec, PersuasionSpec):
        kind = "persuasion"
        stacked = _batched_persuasion_signals(spec, z, grid.points)
        raw_actions = [stacked[g] for g in range(len(stacked))]
        z_arr = np.asarray(z, dtype=float)
        utilities = np.einsum("d,idp,gp->gi", z_arr, spec.type_matrices, stacked)
    else:
        raise TypeError(f"unsupported spec type {type(spec).__name__}")

    if np.abs(utilities).max() > 1.0 + UTILITY_BOUND_TOL:
        raise ValueError(
            f"action utilities reach {np.abs(utilities).max():.6g}; spec is mis-scaled"
        )
    slots: dict[bytes, int] = {}
    actions: list = []
    rows: list = []
    grid_to_action = np.zeros(len(grid), dtype=int)
    for g, action in enumerate(raw_actions):
        key = action.tobytes()
        slot = slots.get(key)
        if slot is None:
            slot = len(actions)
            slots[key] = slot
            actions.append(action)
            rows.append(utilities[g])
        grid_to_action[g] = slot
    return ApplicationActionSet(
        actions=actions,
        utility_matrix=np.stack(rows),
        grid_to_action=grid_to_action,
        kind=kind,
    )
