"""Fairness filtering, multi-objective scoring, and Nash-social-welfare
exposure balancing.

The NSW objective is the log transform of the product welfare over
per-candidate exposures, shifted by one so unexposed candidates do not pin
the objective at -inf:

    objective(lists) = sum_v log(1 + x_v),   x_v = #lists containing v

All functions here operate on plain mappings ``user -> [(candidate, score)]``
so the recommender layer stays a thin adapter.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .dataset import InteractionGraph
from .similarity import reciprocal_score

ScoredCandidate = tuple[str, float, str]  # (candidate id, score, group label)
ScoredItem = tuple[str, float]


class InfeasibleConstraintError(ValueError):
    """No candidate is admissible under the fairness constraint."""


@dataclass(frozen=True)
class FairnessConstraint:
    """Tolerance band around the population group distribution.

    ``population`` maps group label -> probability over the candidate side.
    """

    epsilon: float
    population: Mapping[str, float]
    group_attr: str = "group"

    def __post_init__(self) -> None:
        if self.epsilon < 0:
            raise ValueError(f"epsilon {self.epsilon} must be >= 0")
        total = math.fsum(self.population.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"population probabilities sum to {total}, expected 1")


@dataclass(frozen=True)
class ObjectiveWeights:
    """Quality / diversity / fairness trade-off of the combined objective."""

    w1: float = 0.6
    w2: float = 0.2
    w3: float = 0.2

    def __post_init__(self) -> None:
        if min(self.w1, self.w2, self.w3) < 0:
            raise ValueError("weights must be non-negative")
        if self.w1 + self.w2 + self.w3 <= 0:
            raise ValueError("at least one weight must be positive")


def fairness_filter(
    candidates: Iterable[ScoredCandidate],
    constraint: FairnessConstraint,
    pool_size: int | None = None,
    assume_sorted: bool = False,
) -> list[ScoredCandidate]:
    """Greedy score-ordered admission under a group-distribution band.

    Scans candidates in descending score (ties by ascending id) and admits
    one when the running admitted-set distribution stays within
    ``epsilon + 1/(2t)`` of the population in L-infinity, where t is the size
    after admission.  The granularity term is what an integer composition of
    size t can achieve at best, so epsilon = 0 admits the most balanced
    prefix possible and epsilon = 1 admits everything.

    Candidates a strict pass would reject stay available: each step admits
    the best-scored candidate whose group is currently admissible, so an
    all-one-group prefix cannot starve the other groups and an even 50/50
    pool at epsilon = 0 comes out alternating and exactly balanced.

    ``assume_sorted`` skips the sort for callers that already rank their
    candidates; the scan consumes the input lazily and stops once
    ``pool_size`` candidates are admitted.

    Raises :class:`InfeasibleConstraintError` when not even a first candidate
    is admissible.
    """
    if assume_sorted:
        stream = iter(candidates)
    else:
        stream = iter(sorted(candidates, key=lambda c: (-c[1], c[0])))
    target = dict(constraint.population)
    counts: Counter[str] = Counter(dict.fromkeys(target, 0))
    queues: dict[str, list[ScoredCandidate]] = {}
    heads: dict[str, int] = {}  # per-group cursor into its queue
    pending: ScoredCandidate | None = None  # last pulled, not yet queued
    saw_any = False
    exhausted = False
    admitted: list[ScoredCandidate] = []

    def admissible(group: str) -> bool:
        t = len(admitted) + 1
        slack = constraint.epsilon + 1.0 / (2 * t)
        gap = abs((counts[group] + 1) / t - target.get(group, 0.0))
        for g in counts:
            if g != group:
                gap = max(gap, abs(counts[g] / t - target.get(g, 0.0)))
        return gap <= slack + 1e-12

    while pool_size is None or len(admitted) < pool_size:
        ok_groups = {g for g in counts if admissible(g)}
        best: ScoredCandidate | None = None
        for g in ok_groups:
            q = queues.get(g)
            h = heads.get(g, 0)
            if q is not None and h < len(q):
                cand = q[h]
                if best is None or (-cand[1], cand[0]) < (-best[1], best[0]):
                    best = cand
        # Pull from the stream while it can still beat the best queued head;
        # the stream is score-ordered, so the first pulled candidate of an
        # admissible group wins outright.
        while not exhausted:
            if pending is None:
                pending = next(stream, None)
                if pending is None:
                    exhausted = True
                    break
                saw_any = True
                if pending[2] not in counts:
                    counts[pending[2]] = 0
            if best is not None and (-best[1], best[0]) <= (-pending[1], pending[0]):
                break
            cand, pending = pending, None
            group = cand[2]
            if group in ok_groups or (group not in queues and admissible(group)):
                best = cand
                break
            queues.setdefault(group, []).append(cand)
        if best is None:
            break
        group = best[2]
        q = queues.get(group)
        h = heads.get(group, 0)
        if q is not None and h < len(q) and q[h] == best:
            heads[group] = h + 1
        counts[group] += 1
        admitted.append(best)
    if not admitted and (saw_any or pending is not None):
        raise InfeasibleConstraintError(
            f"no candidate admissible at epsilon={constraint.epsilon}"
        )
    return admitted


def fairness_filter_ranked(
    group_codes: np.ndarray,
    n_groups: int,
    target: np.ndarray,
    epsilon: float,
    pool_size: int | None = None,
) -> list[int]:
    """Array fast path of :func:`fairness_filter` for pre-ranked candidates.

    ``group_codes[i]`` is the integer group of the i-th candidate in
    (score desc, id asc) order; ``target`` holds the population probability
    per group code.  Returns the admitted candidate positions in admission
    order.  Applies exactly the reference admission policy (each step admits
    the best-ranked candidate of an admissible group); equivalence is pinned
    by test.  Returns an empty list where the reference raises
    :class:`InfeasibleConstraintError`.
    """
    total = len(group_codes)
    limit = min(pool_size if pool_size is not None else total, total)
    if limit == 0:
        return []
    codes = group_codes.tolist()
    by_group: list[list[int]] = [[] for _ in range(n_groups)]
    for pos, g in enumerate(codes):
        by_group[g].append(pos)
    sizes = [len(p) for p in by_group]
    cursors = [0] * n_groups
    counts = [0] * n_groups
    admitted: list[int] = []
    tgt = [float(x) for x in target]
    groups = range(n_groups)
    while len(admitted) < limit:
        t = len(admitted) + 1
        slack = epsilon + 0.5 / t + 1e-12
        best_pos = -1
        best_g = -1
        for g in groups:
            if cursors[g] >= sizes[g]:
                continue
            ok = True
            for j in groups:
                cj = counts[j] + 1 if j == g else counts[j]
                gap = cj / t - tgt[j]
                if gap > slack or -gap > slack:
                    ok = False
                    break
            if not ok:
                continue
            pos = by_group[g][cursors[g]]
            if best_pos < 0 or pos < best_pos:
                best_pos = pos
                best_g = g
        if best_pos < 0:
            break
        cursors[best_g] += 1
        counts[best_g] += 1
        admitted.append(best_pos)
    return admitted


def total_variation(group_counts: Mapping[str, int], population: Mapping[str, float]) -> float:
    """(1/2) sum_g |P(g|counts) - P(g|population)|; 1/2 for an empty set."""
    total = sum(group_counts.values())
    groups = set(population) | set(group_counts)
    if total == 0:
        return 0.5
    return 0.5 * math.fsum(
        abs(group_counts.get(g, 0) / total - population.get(g, 0.0)) for g in sorted(groups)
    )


def fairness_score(
    rec_groups: Iterable[Sequence[str]], population: Mapping[str, float]
) -> float:
    """Statistical-parity fairness of a batch of recommendation lists.

    Each element of ``rec_groups`` is the group-label sequence of one user's
    list.  Per-user score is 1 minus the total-variation distance between the
    list's group distribution and the population; the result is the mean over
    users.  Empty lists are skipped; an entirely empty batch is an error.
    """
    scores = []
    for labels in rec_groups:
        if not labels:
            continue
        counts = Counter(labels)
        scores.append(1.0 - total_variation(counts, population))
    if not scores:
        raise ValueError("no non-empty recommendation lists to score")
    return math.fsum(scores) / len(scores)


def _entropy(counts: Counter[str]) -> float:
    total = sum(counts.values())
    if total == 0:
        return 0.0
    h = 0.0
    for g in sorted(counts):
        p = counts[g] / total
        if p > 0:
            h -= p * math.log(p)
    return h


def multi_objective_score(
    u: str,
    v: str,
    current_items: Sequence[str],
    weights: ObjectiveWeights,
    constraint: FairnessConstraint,
    graph: InteractionGraph,
    group_of: Mapping[str, str],
) -> float:
    """Combined marginal value of adding candidate v to u's list.

    Quality is the reciprocal score; Diversity is the entropy gain of the
    list's group distribution normalized by log of the number of groups;
    Fairness is the decrease in total-variation distance to the population.
    With w2 = w3 = 0 this reduces to the reciprocal score exactly.
    """
    quality = reciprocal_score(u, v, graph)

    counts = Counter(group_of[c] for c in current_items)
    counts_after = counts.copy()
    counts_after[group_of[v]] += 1

    n_groups = len(constraint.population)
    if n_groups > 1:
        diversity = (_entropy(counts_after) - _entropy(counts)) / math.log(n_groups)
    else:
        diversity = 0.0

    fairness = total_variation(counts, constraint.population) - total_variation(
        counts_after, constraint.population
    )
    return weights.w1 * quality + weights.w2 * diversity + weights.w3 * fairness


# --------------------------------------------------------------------------
# Nash social welfare over exposures
# --------------------------------------------------------------------------

def exposure_counts(lists: Mapping[str, Sequence[ScoredItem]]) -> Counter[str]:
    """x_v = number of lists candidate v appears in."""
    counts: Counter[str] = Counter()
    for items in lists.values():
        for cand, _ in items:
            counts[cand] += 1
    return counts


def nsw_objective(lists: Mapping[str, Sequence[ScoredItem]]) -> float:
    """sum_v log(1 + x_v) over the exposure vector."""
    return math.fsum(math.log1p(c) for _, c in sorted(exposure_counts(lists).items()))


def nsw_greedy_balance(
    lists: Mapping[str, Sequence[ScoredItem]],
    pools: Mapping[str, Sequence[ScoredItem]],
    quality_floor: float = 0.8,
    max_iters: int | None = None,
) -> dict[str, list[ScoredItem]]:
    """Greedy local search on the exposure objective.

    Repeatedly replaces a list entry with a feasible non-member from that
    user's candidate pool when the swap strictly increases
    ``sum_v log(1 + x_v)``; a swap improves the objective iff the outgoing
    exposure exceeds the incoming one by at least two.  The incoming score
    must be at least ``quality_floor`` times the outgoing score AND at least
    ``quality_floor`` times the slot's original pre-balance score, so
    repeated swaps of one slot cannot decay its quality geometrically.

    Within a list, the lowest-scoring entries are offered for swap first and
    the least-exposed feasible replacement is taken (ties: higher score,
    then id).  Terminates at a local optimum or after ``max_iters`` swaps
    (default ``10 * len(lists)``).  The objective is non-decreasing by
    construction.
    """
    out = {u: list(items) for u, items in lists.items()}
    anchors = {u: [s for _, s in items] for u, items in out.items()}
    exposure = exposure_counts(out)
    if max_iters is None:
        max_iters = 10 * len(out)
    users = sorted(out)
    swaps = 0
    improved = True
    while improved and swaps < max_iters:
        improved = False
        for u in users:
            if swaps >= max_iters:
                break
            items = out[u]
            members = {c for c, _ in items}
            pool = pools.get(u, ())
            # Offer the weakest entries first; good entries go only if a
            # near-equal replacement still improves balance.
            slot_order = sorted(range(len(items)), key=lambda i: (items[i][1], items[i][0]))
            for slot in slot_order:
                v_out, s_out = items[slot]
                x_out = exposure[v_out]
                if x_out < 2:
                    continue
                threshold = quality_floor * max(s_out, anchors[u][slot])
                best_key: tuple[int, float, str] | None = None
                best_item: ScoredItem | None = None
                for v_in, s_in in pool:
                    if s_in < threshold:
                        break  # pool is sorted by descending score
                    if v_in in members:
                        continue
                    x_in = exposure[v_in]
                    if x_in > x_out - 2:
                        continue
                    key = (x_in, -s_in, v_in)
                    if best_key is None or key < best_key:
                        best_key = key
                        best_item = (v_in, s_in)
                if best_item is None:
                    continue
                v_in, s_in = best_item
                items[slot] = (v_in, s_in)
                members.discard(v_out)
                members.add(v_in)
                exposure[v_out] -= 1
                exposure[v_in] += 1
                swaps += 1
                improved = True
                if swaps >= max_iters:
                    break
    return out


def nsw_balance_indexed(
    list_items: list[np.ndarray],
    list_scores: list[np.ndarray],
    order_idx: list[np.ndarray],
    order_scores: list[np.ndarray],
    n_candidates: int,
    quality_floor: float,
    max_iters: int,
) -> None:
    """Array-backed twin of :func:`nsw_greedy_balance`, mutating in place.

    List owners are the positions of the outer lists; candidates are integers
    in ``range(n_candidates)``.  ``order_idx``/``order_scores`` rank each
    owner's full feasible swap-in universe by (score desc, id asc).  Applies
    exactly the same swap policy as the reference implementation (verified
    equivalent by test); exists because scanning tuple pools per swap is too
    slow for markets with thousands of users.
    """
    exposure = np.zeros(n_candidates, dtype=np.int64)
    for items in list_items:
        for v in items:
            exposure[v] += 1
    in_list = np.zeros(n_candidates, dtype=bool)
    anchor_scores = [s.copy() for s in list_scores]  # pre-balance quality anchors
    owners = range(len(list_items))
    swaps = 0
    improved = True
    big = np.iinfo(np.int64).max
    while improved and swaps < max_iters:
        improved = False
        for u in owners:
            if swaps >= max_iters:
                break
            items, scores = list_items[u], list_scores[u]
            if len(items) == 0:
                continue
            if int(exposure[items].max()) < 2:
                continue  # no slot can fund an improving swap
            cand_order, cand_scores = order_idx[u], order_scores[u]
            in_list[items] = True
            anchors = anchor_scores[u]
            # Each slot swaps at most once per visit, so its quality
            # threshold is fixed at visit entry; search all cutoffs at once.
            thresholds = quality_floor * np.maximum(scores, anchors)
            cutoffs = np.searchsorted(-cand_scores, -thresholds, side="right")
            slot_order = sorted(range(len(items)), key=lambda i: (scores[i], items[i]))
            for slot in slot_order:
                v_out = int(items[slot])
                x_out = int(exposure[v_out])
                if x_out < 2:
                    continue
                hi = int(cutoffs[slot])
                if hi == 0:
                    continue
                window = cand_order[:hi]
                expo = np.where(in_list[window], big, exposure[window])
                j = int(np.argmin(expo))
                x_in = int(expo[j])
                if x_in > x_out - 2:
                    continue
                v_in = int(window[j])
                items[slot] = v_in
                scores[slot] = cand_scores[j]
                in_list[v_out] = False
                in_list[v_in] = True
                exposure[v_out] -= 1
                exposure[v_in] += 1
                swaps += 1
                improved = True
                if swaps >= max_iters:
                    break
            in_list[items] = False


def nsw_brute_force(
    pools: Mapping[str, Sequence[ScoredItem]],
    slots: Mapping[str, int],
    max_slots: int = 10,
) -> float:
    """Exact maximum of sum_v log(1 + x_v) over all feasible assignments.

    Each user independently fills ``min(slots[u], |pool|)`` positions with
    distinct pool candidates; the exposure vector aggregates over users.
    Only viable for tiny instances; raises ValueError beyond ``max_slots``
    total positions.
    """
    users = sorted(pools)
    takes = [min(slots[u], len(pools[u])) for u in users]
    if sum(takes) > max_slots:
        raise ValueError(f"instance has {sum(takes)} slots, limit {max_slots}")
    per_user = [
        list(itertools.combinations([c for c, _ in pools[u]], k))
        for u, k in zip(users, takes)
    ]
    best = 0.0
    for assignment in itertools.product(*per_user):
        counts = Counter(itertools.chain.from_iterable(assignment))
        value = math.fsum(math.log1p(c) for c in counts.values())
        if value > best:
            best = value
    return best


# --------------------------------------------------------------------------
# Continuous relaxation: projected subgradient ascent
# --------------------------------------------------------------------------

@dataclass
class SubgradientProblem:
    """Concave maximization over a box, optionally with a sum budget."""

    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    x0: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    budget: float | None = None


def _project(y: np.ndarray, lower: np.ndarray, upper: np.ndarray, budget: float | None) -> np.ndarray:
    x = np.clip(y, lower, upper)
    if budget is None:
        return x
    # Project onto {sum x = budget} within the box: bisection on the shift.
    lo = float(np.min(y - upper))
    hi = float(np.max(y - lower))
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        x = np.clip(y - mid, lower, upper)
        s = float(x.sum())
        if s > budget:
            lo = mid
        else:
            hi = mid
    return np.clip(y - 0.5 * (lo + hi), lower, upper)


def nsw_subgradient(problem: SubgradientProblem, iterations: int) -> list[float]:
    """Projected subgradient ascent with step 1/sqrt(t).

    Returns the running-best objective value per iteration (element 0 is the
    initial point), so the trajectory is non-decreasing by construction.
    """
    x = _project(np.asarray(problem.x0, dtype=float),
                 problem.lower, problem.upper, problem.budget)
    best = float(problem.value(x))
    trajectory = [best]
    for t in range(1, iterations + 1):
        g = np.asarray(problem.grad(x), dtype=float)
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite subgradient at iteration {t}")
        x = _project(x + g / math.sqrt(t), problem.lower, problem.upper, problem.budget)
        best = max(best, float(problem.value(x)))
        trajectory.append(best)
    return trajectory


# --------------------------------------------------------------------------
# Submodularity oracle
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SubmodularityResult:
    holds: bool
    counterexample: tuple[frozenset, frozenset, object] | None = None


def submodularity_check(
    f: Callable[[frozenset], float], universe: Sequence, tol: float = 1e-12
) -> SubmodularityResult:
    """Exhaustively verify f(A + v) - f(A) >= f(B + v) - f(B) for all
    A subset of B and v outside B.  Universe capped at 12 elements.
    """
    elems = list(universe)
    n = len(elems)
    if n > 12:
        raise ValueError(f"universe of {n} elements is too large to enumerate")

    def members(mask: int) -> frozenset:
        return frozenset(elems[i] for i in range(n) if mask >> i & 1)

    values = [f(members(mask)) for mask in range(1 << n)]

    for b_mask in range(1 << n):
        for i in range(n):
            if b_mask >> i & 1:
                continue
            bit = 1 << i
            delta_b = values[b_mask | bit] - values[b_mask]
            # Enumerate submasks of b_mask, including the empty set.
            a_mask = b_mask
            while True:
                delta_a = values[a_mask | bit] - values[a_mask]
                if delta_a < delta_b - tol:
                    return SubmodularityResult(
                        holds=False,
                        counterexample=(members(a_mask), members(b_mask), elems[i]),
                    )
                if a_mask == 0:
                    break
                a_mask = (a_mask - 1) & b_mask
    return SubmodularityResult(holds=True)
