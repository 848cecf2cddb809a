"""Best-response geometry over the leader's strategy simplex.

At a fixed context, each assignment of one follower action per type carves
out a polyhedral region of the simplex on which exactly those best responses
are played.  The leader's optimal commitment against any type mixture is
approached at extreme points of region closures, so a finite menu is built
from those vertices: vertices inside the strict region are kept as-is, the
rest are nudged a step of at most ``delta`` (in L1) toward a strict-interior
witness.  The menu's best entry is then within ``delta`` of the simplex-wide
optimum for every type mixture.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import linprog

from stackelberg_bandits.game import (
    GameSpec,
    TIE_TOL,
    batched_best_responses,
    follower_payoff_tables,
    validate_context,
)

# Closed-region feasibility and vertex dedup tolerance.
FEAS_TOL = 1e-9
# Minimum slack certifying a nonempty strict interior.
WITNESS_TOL = 1e-9
# Entrywise tolerance for merging follower types with equal payoffs at z.
EFFECTIVE_TYPE_TOL = 1e-12
# Tolerance for weak-domination comparisons between leader actions.
DOMINATION_TOL = 1e-12


class RegionWitnessError(RuntimeError):
    """Raised when the strict-interior witness LP fails numerically."""

    def __init__(self, assignment, message: str):
        super().__init__(f"{message} (assignment {tuple(int(a) for a in assignment)})")
        self.assignment = tuple(int(a) for a in assignment)


@dataclass(frozen=True)
class HalfspaceSystem:
    """Constraints ``normals @ x >= offsets`` over the simplex.

    ``strict`` flags inequalities that must hold strictly for a point to lie
    in the open (tie-free) region; the closure treats all rows as weak.  The
    simplex constraints ``x >= 0`` and ``sum(x) = 1`` are implicit.
    """

    normals: np.ndarray  # (n_rows, n_actions)
    offsets: np.ndarray  # (n_rows,)
    strict: np.ndarray   # (n_rows,) bool
    n_actions: int

    def __post_init__(self):
        normals = np.atleast_2d(np.asarray(self.normals, dtype=float))
        if normals.size == 0:
            normals = normals.reshape(0, self.n_actions)
        offsets = np.asarray(self.offsets, dtype=float).reshape(normals.shape[0])
        strict = np.asarray(self.strict, dtype=bool).reshape(normals.shape[0])
        if normals.shape[1] != self.n_actions:
            raise ValueError("normal length disagrees with n_actions")
        for arr in (normals, offsets):
            if not np.isfinite(arr).all():
                raise ValueError("halfspace coefficients must be finite")
        for name, arr in (("normals", normals), ("offsets", offsets), ("strict", strict)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def region_halfspaces(game: GameSpec, z, assignment) -> HalfspaceSystem:
    """Halfspace description of the strategies making ``assignment`` optimal.

    ``assignment`` maps each follower type to one action.  For type ``k``
    with assigned action ``a``, the constraint against competitor ``b`` is
    ``score_k(a) - score_k(b) >= 0``, strict when ``b < a`` so that the
    region matches the smallest-index tie rule of the best-response oracle.
    """
    z = validate_context(game, z)
    assignment = np.asarray(assignment, dtype=int)
    if assignment.shape != (game.n_types,):
        raise ValueError(f"assignment must have shape ({game.n_types},)")
    if assignment.min() < 0 or assignment.max() >= game.n_follower_actions:
        raise ValueError("assignment contains an out-of-range follower action")
    tables = follower_payoff_tables(game, z)
    normals, strict = [], []
    for k, a in enumerate(assignment):
        for b in range(game.n_follower_actions):
            if b == a:
                continue
            normals.append(tables[k, :, a] - tables[k, :, b])
            strict.append(b < a)
    normals = (
        np.array(normals)
        if normals
        else np.empty((0, game.n_leader_actions))
    )
    return HalfspaceSystem(
        normals=normals,
        offsets=np.zeros(len(normals)),
        strict=np.array(strict, dtype=bool),
        n_actions=game.n_leader_actions,
    )


@lru_cache(maxsize=128)
def _subset_indices(pool_size: int, subset_size: int) -> np.ndarray:
    combos = list(itertools.combinations(range(pool_size), subset_size))
    return np.array(combos, dtype=np.intp).reshape(len(combos), subset_size)


def _basic_solutions(pool: np.ndarray, pool_offsets: np.ndarray):
    """Candidate vertices from every (dim-1)-subset of rows plus ``sum(x)=1``.

    Returns ``(solutions, subsets)``.  Singular subsets are dropped by a
    determinant filter; surviving solutions are residual-checked so that an
    ill-conditioned solve cannot leak a spurious point.
    """
    n_rows, dim = pool.shape
    subsets = _subset_indices(n_rows, dim - 1)
    if len(subsets) == 0:
        return np.empty((0, dim)), subsets
    systems = np.empty((len(subsets), dim, dim))
    systems[:, : dim - 1, :] = pool[subsets]
    systems[:, dim - 1, :] = 1.0
    rhs = np.empty((len(subsets), dim, 1))
    rhs[:, : dim - 1, 0] = pool_offsets[subsets]
    rhs[:, dim - 1, 0] = 1.0
    dets = np.linalg.det(systems)
    keep = np.abs(dets) > 1e-12
    if not keep.any():
        return np.empty((0, dim)), subsets[:0]
    sols = np.linalg.solve(systems[keep], rhs[keep])[:, :, 0]
    residual = np.abs(
        np.einsum("nij,nj->ni", systems[keep], sols) - rhs[keep][:, :, 0]
    ).max(axis=1)
    good = np.isfinite(sols).all(axis=1) & (residual <= FEAS_TOL)
    return sols[good], subsets[keep][good]


def _clean_simplex_points(points: np.ndarray) -> np.ndarray:
    clipped = np.clip(points, 0.0, None)
    return clipped / clipped.sum(axis=1, keepdims=True)


def _dedupe_rows(points: np.ndarray, tol: float = FEAS_TOL):
    """First-occurrence row dedup under L-inf ``tol``.

    Returns ``(keep, owner)``: indices of kept rows and, for every input
    row, the position in ``keep`` of the kept row it collapsed onto (the
    nearest kept row, earliest on ties).  Each kept row updates the
    trailing rows' nearest-kept distance in one vectorized pass, so the
    quadratic work runs at array speed.
    """
    n = len(points)
    keep: list[int] = []
    owner = np.empty(n, dtype=np.intp)
    best = np.full(n, np.inf)
    nearest = np.zeros(n, dtype=np.intp)
    for i in range(n):
        if keep and best[i] <= tol:
            owner[i] = nearest[i]
            continue
        owner[i] = len(keep)
        keep.append(i)
        if i + 1 < n:
            dists = np.abs(points[i + 1 :] - points[i]).max(axis=1)
            closer = dists < best[i + 1 :]
            best[i + 1 :][closer] = dists[closer]
            nearest[i + 1 :][closer] = len(keep) - 1
    return np.array(keep, dtype=np.intp), owner


def region_vertices(system: HalfspaceSystem) -> np.ndarray:
    """All vertices of the closure polytope of ``system`` inside the simplex.

    Exhaustive active-set enumeration: every (n_actions - 1)-subset of the
    region rows and simplex facets is solved as equalities together with
    ``sum(x) = 1``; feasible solutions (all closed constraints within 1e-9)
    are deduplicated and returned sorted lexicographically.
    """
    dim = system.n_actions
    pool = np.vstack([system.normals, np.eye(dim)])
    pool_offsets = np.concatenate([system.offsets, np.zeros(dim)])
    sols, _ = _basic_solutions(pool, pool_offsets)
    if len(sols) == 0:
        return np.empty((0, dim))
    feasible = (sols.min(axis=1) >= -FEAS_TOL) & (
        (system.normals @ sols.T >= system.offsets[:, None] - FEAS_TOL).all(axis=0)
        if len(system.normals)
        else np.ones(len(sols), dtype=bool)
    )
    sols = sols[feasible]
    if len(sols) == 0:
        return np.empty((0, dim))
    sols = _clean_simplex_points(sols)
    order = np.lexsort(sols.T[::-1])
    sols = sols[order]
    return sols[_dedupe_rows(sols)[0]]


def reduce_effective_types(game: GameSpec, z, tol: float = EFFECTIVE_TYPE_TOL):
    """Group follower types whose payoff tables at z agree entrywise.

    Returns ``(representatives, group_of)``: the first member of each group
    in index order, and for every type the index of its group.  Assignments
    enumerated over representatives expand to all types via ``group_of``.
    """
    tables = follower_payoff_tables(game, z)
    representatives: list[int] = []
    group_of = np.empty(game.n_types, dtype=int)
    for k in range(game.n_types):
        for g, rep in enumerate(representatives):
            if np.abs(tables[k] - tables[rep]).max() <= tol:
                group_of[k] = g
                break
        else:
            group_of[k] = len(representatives)
            representatives.append(k)
    return representatives, group_of


def prune_dominated_actions(game: GameSpec, z, tol: float = DOMINATION_TOL) -> list[int]:
    """Leader actions surviving weak-domination sweeps (index order).

    Action ``a`` is removed when some surviving action is at least as good
    against every follower action (within tol) and strictly better (by more
    than tol) against one.  Off by default in menu construction.
    """
    z = validate_context(game, z)
    table = game.leader_coeffs @ z
    surviving = list(range(game.n_leader_actions))
    for a in range(game.n_leader_actions):
        if a not in surviving:
            continue
        for b in surviving:
            if b == a:
                continue
            if (table[a] <= table[b] + tol).all() and (table[a] < table[b] - tol).any():
                surviving.remove(a)
                break
    return surviving


@dataclass(frozen=True)
class ExtremePointSet:
    """Menu of leader strategies with best-response provenance.

    ``points[i]`` is a simplex point, ``assignments[i]`` the follower action
    per type that replaying the best-response oracle at that point yields,
    and ``perturbed[i]`` records whether the point was nudged off a closure
    vertex.  Points are deduplicated under L-inf distance 1e-9.
    """

    points: np.ndarray       # (n, n_leader_actions)
    assignments: np.ndarray  # (n, n_types)
    perturbed: np.ndarray    # (n,) bool
    delta: float

    def __post_init__(self):
        for name in ("points", "assignments", "perturbed"):
            arr = np.asarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.points)

    def to_json(self) -> str:
        """Debug dump grouping menu points by their assignment."""
        groups: dict[tuple, list] = {}
        for point, assignment, moved in zip(
            self.points, self.assignments, self.perturbed
        ):
            key = tuple(int(a) for a in assignment)
            groups.setdefault(key, []).append(
                {"strategy": point.tolist(), "perturbed": bool(moved)}
            )
        regions = [
            {"assignment": list(key), "points": pts}
            for key, pts in sorted(groups.items())
        ]
        return json.dumps({"delta": self.delta, "regions": regions}, sort_keys=True)


def _witness_lp(restricted_tables: np.ndarray, assignment) -> tuple[np.ndarray, float] | None:
    """Max-min-slack point for the strict rows of a region, or None if empty.

    Maximizes the smallest strict-constraint slack subject to all closed
    constraints and the simplex.  Returns ``(point, slack)``; ``None`` when
    the LP proves the strict interior empty (no positive-slack witness).
    """
    n_types, dim, n_follower = restricted_tables.shape
    rows, strict = [], []
    for k, a in enumerate(assignment):
        for b in range(n_follower):
            if b == a:
                continue
            rows.append(restricted_tables[k, :, a] - restricted_tables[k, :, b])
            strict.append(b < a)
    if not rows:
        raise ValueError("witness LP called for an unconstrained region")
    rows = np.array(rows)
    strict = np.array(strict, dtype=bool)
    # variables (x, s): minimize -s subject to -g.x + s <= 0 on strict rows,
    # -g.x <= 0 on the rest, sum(x) = 1, x >= 0.
    a_ub = np.hstack([-rows, strict.astype(float)[:, None]])
    objective = np.zeros(dim + 1)
    objective[-1] = -1.0
    result = linprog(
        objective,
        A_ub=a_ub,
        b_ub=np.zeros(len(rows)),
        A_eq=np.hstack([np.ones((1, dim)), np.zeros((1, 1))]),
        b_eq=np.ones(1),
        bounds=[(0.0, None)] * dim + [(None, 4.0)],
        method="highs",
    )
    if result.status == 2:
        return None
    if result.status != 0 or result.x is None:
        raise RegionWitnessError(assignment, f"witness LP failed: {result.message}")
    slack = float(result.x[-1]) if strict.any() else np.inf
    if slack < WITNESS_TOL:
        return None
    return result.x[:dim], slack


def _discover_regions(candidates, allowed_sets, subsets_by_candidate, line_meta, n_lines):
    """Map each feasible assignment to the candidate vertices of its closure.

    A candidate belongs to an assignment's closure when the assigned action
    of every type scores within tolerance of that type's best at the point;
    it is a *vertex* of that closure when one of its generating active sets
    uses only rows relevant to the assignment (facets always; a tie line
    only when it involves the assigned action of its type).
    """
    counts = allowed_sets.sum(axis=2)
    first_allowed = allowed_sets.argmax(axis=2)
    unambiguous = (counts == 1).all(axis=1)
    regions: dict[tuple, list[int]] = {}
    for idx in range(len(candidates)):
        if unambiguous[idx]:
            regions.setdefault(tuple(int(a) for a in first_allowed[idx]), []).append(idx)
            continue
        options = [np.flatnonzero(mask) for mask in allowed_sets[idx]]
        for combo in itertools.product(*options):
            regions.setdefault(tuple(int(c) for c in combo), []).append(idx)

    # Per candidate, the tie lines of each generating active set as plain
    # int triples; identical triples collapse (same vertexhood verdict).
    line_rows_by_candidate: list[list[tuple]] = []
    for subsets in subsets_by_candidate:
        variants: list[tuple] = []
        for subset in subsets:
            rows = tuple(line_meta[row] for row in subset.tolist() if row < n_lines)
            if rows not in variants:
                variants.append(rows)
        line_rows_by_candidate.append(variants)

    def is_vertex(idx: int, assignment: tuple) -> bool:
        for rows in line_rows_by_candidate[idx]:
            if all(assignment[k] == a or assignment[k] == b for k, a, b in rows):
                return True
        return False

    return {
        assignment: [idx for idx in sorted(set(members)) if is_vertex(idx, assignment)]
        for assignment, members in regions.items()
    }


def approximate_extreme_points(
    game: GameSpec,
    z,
    delta: float,
    *,
    reduce_types: bool = True,
    prune_dominated: bool = False,
) -> ExtremePointSet:
    """Finite strategy menu within ``delta`` of optimal for every type mixture.

    For every assignment of actions to (effective) follower types whose
    strict region is nonempty, the closure vertices are collected; vertices
    already replaying their assignment are kept, the others are moved
    ``min(delta, reachable)`` in L1 toward a strict-interior witness.  Every
    returned point exactly reproduces its assignment under the best-response
    oracle; points are deduplicated and merged in sorted assignment order.
    """
    z = validate_context(game, z)
    if not (delta > 0.0):
        raise ValueError("delta must be positive")
    tables = follower_payoff_tables(game, z)
    n_types = game.n_types
    n_follower = game.n_follower_actions
    n_leader = game.n_leader_actions

    if reduce_types:
        representatives, group_of = reduce_effective_types(game, z)
    else:
        representatives, group_of = list(range(n_types)), np.arange(n_types)
    active = prune_dominated_actions(game, z) if prune_dominated else list(range(n_leader))
    restricted = tables[np.ix_(representatives, active)]  # (n_groups, dim, n_follower)
    n_groups, dim = len(representatives), len(active)

    # Global candidate pool: every pairwise tie line of every effective type,
    # plus the simplex facets.  Region vertices of every assignment are basic
    # solutions of subsets of this one pool, so one batched solve serves all.
    lines, line_meta = [], []
    for k in range(n_groups):
        for a in range(n_follower):
            for b in range(a + 1, n_follower):
                lines.append(restricted[k, :, a] - restricted[k, :, b])
                line_meta.append((k, a, b))
    n_lines = len(lines)
    pool = np.vstack([np.array(lines).reshape(n_lines, dim), np.eye(dim)])
    solutions, subsets = _basic_solutions(pool, np.zeros(len(pool)))
    on_simplex = solutions.min(axis=1) >= -FEAS_TOL if len(solutions) else np.array([], bool)
    solutions, subsets = solutions[on_simplex], subsets[on_simplex]
    if len(solutions) == 0:
        raise RuntimeError("no simplex vertices found; degenerate pool")
    solutions = _clean_simplex_points(solutions)

    # Deduplicate candidates, merging the generating subsets of duplicates
    # (vertexhood checks need every active set that produces a point).
    order = np.lexsort(solutions.T[::-1])
    solutions, subsets = solutions[order], subsets[order]
    keep, owner = _dedupe_rows(solutions, 1e-12)
    candidates = solutions[keep]
    subsets_by_candidate: list[list] = [[] for _ in keep]
    for i in range(len(solutions)):
        subsets_by_candidate[owner[i]].append(subsets[i])

    scores = np.einsum("xa,kaf->xkf", candidates, restricted)
    allowed = scores >= scores.max(axis=2, keepdims=True) - TIE_TOL

    regions = _discover_regions(candidates, allowed, subsets_by_candidate, line_meta, n_lines)

    # Pairwise score differences at every candidate, for strict-slack checks:
    # margin[x, k, a, b] = score_k(a) - score_k(b) at candidate x.
    def strict_slack_at(point: np.ndarray, assignment) -> float:
        point_scores = np.einsum("a,kaf->kf", point, restricted)
        worst = np.inf
        for k, a in enumerate(assignment):
            if a > 0:
                worst = min(worst, (point_scores[k, a] - point_scores[k, :a]).min())
        return worst

    def embed(point: np.ndarray) -> np.ndarray:
        if dim == n_leader:
            return point
        full = np.zeros(n_leader)
        full[active] = point
        return full

    ordered_assignments = sorted(a for a, verts in regions.items() if verts)
    entries: list[tuple] = []  # (full_point, full_assignment, vertex_point, region_key)
    full_assignments = {}
    for assignment in ordered_assignments:
        full = np.array([assignment[group_of[k]] for k in range(n_types)], dtype=int)
        full_assignments[assignment] = full
        for idx in regions[assignment]:
            entries.append((embed(candidates[idx]), full, candidates[idx], assignment))
    if not entries:
        raise RuntimeError("no feasible best-response regions discovered")

    stacked = np.array([e[0] for e in entries])
    targets = np.array([e[1] for e in entries])
    replay = batched_best_responses(tables, stacked)
    passed = (replay == targets).all(axis=1)

    witnesses: dict[tuple, np.ndarray | None] = {}

    def witness_for(assignment) -> np.ndarray | None:
        if assignment not in witnesses:
            verts = candidates[regions[assignment]]
            centroid = verts.mean(axis=0)
            if strict_slack_at(centroid, assignment) >= WITNESS_TOL:
                witnesses[assignment] = centroid
            else:
                found = _witness_lp(restricted, assignment)
                witnesses[assignment] = None if found is None else found[0]
        return witnesses[assignment]

    moved_rows, moved_info = [], []
    for pos, ok in enumerate(passed):
        if ok:
            continue
        _, full, vertex, assignment = entries[pos]
        witness = witness_for(assignment)
        if witness is None:
            continue  # empty strict interior: region contributes nothing
        direction = witness - vertex
        length = np.abs(direction).sum()
        if length <= 1e-15:
            continue
        shifted = vertex + min(delta, length) * direction / length
        moved_rows.append(embed(_clean_simplex_points(shifted[None, :])[0]))
        moved_info.append(pos)
    if moved_rows:
        moved_points = np.array(moved_rows)
        moved_replay = batched_best_responses(tables, moved_points)
        moved_ok = (moved_replay == np.array([entries[p][1] for p in moved_info])).all(axis=1)
    else:
        moved_points = np.empty((0, n_leader))
        moved_ok = np.array([], dtype=bool)

    moved_at = {pos: i for i, pos in enumerate(moved_info)}
    survivors, survivor_assignments, survivor_perturbed = [], [], []
    for pos, (full_point, full, _, _) in enumerate(entries):
        if passed[pos]:
            survivors.append(full_point)
            survivor_assignments.append(full)
            survivor_perturbed.append(False)
        elif pos in moved_at and moved_ok[moved_at[pos]]:
            survivors.append(moved_points[moved_at[pos]])
            survivor_assignments.append(full)
            survivor_perturbed.append(True)
    if not survivors:
        raise RuntimeError("all candidate menu points failed replay; degenerate game")
    survivors = np.array(survivors)
    keep, _ = _dedupe_rows(survivors, FEAS_TOL)

    return ExtremePointSet(
        points=survivors[keep],
        assignments=np.array([survivor_assignments[i] for i in keep], dtype=int),
        perturbed=np.array([survivor_perturbed[i] for i in keep], dtype=bool),
        delta=float(delta),
    )


def exogenous_extreme_points(game: GameSpec, z, points, delta: float = 0.0) -> ExtremePointSet:
    """Wrap an externally supplied strategy list as a menu.

    Points are validated (shape, finiteness, simplex membership within 1e-9)
    and annotated with replayed best-response assignments; invalid points
    are rejected together, with per-point diagnostics.
    """
    z = validate_context(game, z)
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != game.n_leader_actions:
        raise ValueError(
            f"points must have shape (n, {game.n_leader_actions}), got {points.shape}"
        )
    problems = []
    for i, row in enumerate(points):
        if not np.isfinite(row).all():
            problems.append(f"point {i}: non-finite entries")
        elif row.min() < -FEAS_TOL:
            problems.append(f"point {i}: negative entry {row.min():.3g}")
        elif abs(row.sum() - 1.0) > FEAS_TOL:
            problems.append(f"point {i}: sums to {row.sum()!r}")
    if problems:
        raise ValueError("invalid exogenous strategies: " + "; ".join(problems))
    cleaned = _clean_simplex_points(points)
    cleaned = cleaned[_dedupe_rows(cleaned)[0]]
    tables = follower_payoff_tables(game, z)
    assignments = batched_best_responses(tables, cleaned)
    return ExtremePointSet(
        points=cleaned,
        assignments=assignments,
        perturbed=np.zeros(len(cleaned), dtype=bool),
        delta=float(delta),
    )
