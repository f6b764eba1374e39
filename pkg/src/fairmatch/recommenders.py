"""Top-K recommendation under four algorithms: the fairness-constrained
reciprocal matcher, plain collaborative filtering, an attribute-preference
baseline, and k-round deferred acceptance.

All algorithms produce lists for users on BOTH sides, exclude candidates the
user already contacted in training, and are pure functions of
(graph, profiles, parameters): ties break on ascending candidate id
everywhere, so output is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .dataset import InteractionGraph, Side, UserProfile
from .fairness import (
    ObjectiveWeights,
    ScoredItem,
    fairness_filter_ranked,
    nsw_balance_indexed,
)
from .similarity import ScoreEngine

FLAG_FAIRNESS_FALLBACK = "fairness_fallback"
FLAG_COLD_START = "cold_start"


@dataclass(frozen=True)
class RecommendationList:
    """Ordered top-K candidates for one user.

    Scores are non-increasing with ties broken by ascending candidate id; no
    candidate shares the user's side and none repeats.
    """

    user: str
    items: tuple[ScoredItem, ...]
    flags: frozenset[str] = frozenset()

    def candidates(self) -> tuple[str, ...]:
        return tuple(c for c, _ in self.items)


@dataclass(frozen=True)
class StableMatching:
    """One-to-one partial matching; pairs are (A-side user, B-side user)."""

    pairs: frozenset[tuple[str, str]]

    def partner(self, user: str) -> str | None:
        for a, b in self.pairs:
            if a == user:
                return b
            if b == user:
                return a
        return None

    def as_dict(self) -> dict[str, str]:
        """Both directions, user -> partner."""
        out = {}
        for a, b in self.pairs:
            out[a] = b
            out[b] = a
        return out


@dataclass(frozen=True)
class FairMatchParams:
    """Knobs of the fairness-constrained reciprocal matcher."""

    k: int
    epsilon: float = 0.1
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    quality_floor: float = 0.8
    pool_factor: int = 5
    scorer: str = "reciprocal"
    nsw_enabled: bool = True
    nsw_max_iters: int | None = None
    group_attr: str = "group"

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"K must be >= 1, got {self.k}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon {self.epsilon} outside [0, 1]")


def group_label(profile: UserProfile, group_attr: str = "group") -> str:
    """Resolve which profile field defines the demographic group g."""
    if group_attr == "group":
        return profile.group
    if group_attr.startswith("attr"):
        idx = int(group_attr[4:]) - 1
        return profile.attributes[idx]
    raise ValueError(f"unknown group attribute {group_attr!r}")


def group_distribution(
    profiles: Mapping[str, UserProfile], users: Sequence[str], group_attr: str = "group"
) -> dict[str, float]:
    """Empirical P(g | user set)."""
    counts: dict[str, int] = {}
    for uid in users:
        g = group_label(profiles[uid], group_attr)
        counts[g] = counts.get(g, 0) + 1
    total = len(users)
    return {g: c / total for g, c in sorted(counts.items())}


def _ranked_candidates(
    scores: np.ndarray,
    candidate_ids: Sequence[str],
    candidate_groups: Sequence[str],
    excluded: frozenset[str],
) -> Iterator[tuple[str, float, str]]:
    """Yield (id, score, group) in (score desc, id asc) order, skipping the
    excluded candidates.  Scores must be non-negative."""
    masked = scores.copy()
    if excluded:
        for j, cid in enumerate(candidate_ids):
            if cid in excluded:
                masked[j] = -1.0
    order = np.argsort(-masked, kind="stable")
    for j in order:
        if masked[j] < 0.0:
            break
        yield candidate_ids[j], float(masked[j]), candidate_groups[j]


def recommend_fair_match(
    profiles: Mapping[str, UserProfile],
    graph: InteractionGraph,
    params: FairMatchParams,
    engine: ScoreEngine | None = None,
) -> dict[str, RecommendationList]:
    """Fairness-constrained reciprocal matching.

    Per user: score every feasible opposite-side candidate with the selected
    reciprocal scorer, admit a working pool through the greedy fairness
    filter, take the top K, then rebalance exposures across all lists with
    the NSW greedy local search.  A user whose filter admits no viable pool
    falls back to the unconstrained top K and is flagged
    ``fairness_fallback`` (short lists would corrupt @K metrics).

    The combined-objective weights ride along in ``params`` for config
    echo; the pipeline itself is filter + top-K + NSW balance.
    """
    engine = engine or ScoreEngine(graph)
    pool_size = params.pool_factor * params.k
    n, m = graph.n, graph.m
    global_ids = (*graph.users_a, *graph.users_b)  # A users 0..n-1, B users n..n+m-1

    owners: list[str] = []
    list_items: list[np.ndarray] = []
    list_scores: list[np.ndarray] = []
    order_idx: list[np.ndarray] = []
    order_scores: list[np.ndarray] = []
    flags: dict[str, set[str]] = {}

    for side in (Side.A, Side.B):
        users = graph.users(side)
        if not users:
            continue
        opposite = graph.users(Side.B if side is Side.A else Side.A)
        offset = n if side is Side.A else 0
        cand_index = {c: j for j, c in enumerate(opposite)}
        population = group_distribution(profiles, opposite, params.group_attr)
        group_names = sorted(
            set(population)
            | {group_label(profiles[c], params.group_attr) for c in opposite}
        )
        group_code = {g: i for i, g in enumerate(group_names)}
        target = np.array([population.get(g, 0.0) for g in group_names])
        cand_codes = np.array(
            [group_code[group_label(profiles[c], params.group_attr)] for c in opposite],
            dtype=np.int64,
        )
        score_matrix = engine.scores(side, params.scorer)
        for i, u in enumerate(users):
            masked = score_matrix[i].copy()
            excluded = graph.sent(u)
            for c in excluded:
                masked[cand_index[c]] = -1.0
            order = np.argsort(-masked, kind="stable")
            n_valid = int((masked >= 0.0).sum())
            order = order[:n_valid]
            ranked_scores = masked[order]

            user_flags: set[str] = set()
            admitted = fairness_filter_ranked(
                cand_codes[order], len(group_names), target,
                params.epsilon, pool_size,
            )
            if len(admitted) < min(params.k, n_valid):
                user_flags.add(FLAG_FAIRNESS_FALLBACK)
                top = list(range(min(params.k, n_valid)))
            else:
                top = admitted[: params.k]
            owners.append(u)
            list_items.append(
                np.array([offset + int(order[p]) for p in top], dtype=np.int64)
            )
            list_scores.append(
                np.array([float(ranked_scores[p]) for p in top], dtype=np.float64)
            )
            order_idx.append((order + offset).astype(np.int64))
            order_scores.append(ranked_scores.astype(np.float64))
            flags[u] = user_flags

    if params.nsw_enabled and owners:
        max_iters = (
            params.nsw_max_iters if params.nsw_max_iters is not None else 10 * len(owners)
        )
        nsw_balance_indexed(
            list_items, list_scores, order_idx, order_scores,
            n_candidates=n + m,
            quality_floor=params.quality_floor,
            max_iters=max_iters,
        )

    out: dict[str, RecommendationList] = {}
    for u, items, scores in zip(owners, list_items, list_scores):
        entries = sorted(
            ((global_ids[g], float(s)) for g, s in zip(items, scores)),
            key=lambda it: (-it[1], it[0]),
        )
        out[u] = RecommendationList(u, tuple(entries), frozenset(flags[u]))
    return {u: out[u] for u in sorted(out)}


def recommend_cf(
    graph: InteractionGraph,
    k: int,
    n_neighbors: int = 20,
    engine: ScoreEngine | None = None,
) -> dict[str, RecommendationList]:
    """Neighborhood collaborative filtering baseline.

    score(u, v) = sum of interest similarity over u's top-N same-side
    neighbors that contacted v.  Users with no usable neighborhood get a
    popularity-ordered fallback list (scores = scaled training in-degree)
    flagged ``cold_start``.
    """
    engine = engine or ScoreEngine(graph)
    out: dict[str, RecommendationList] = {}
    for side in (Side.A, Side.B):
        users = graph.users(side)
        if not users:
            continue
        opposite = graph.users(Side.B if side is Side.A else Side.A)
        sim = engine.interest_jaccard(side)
        adj = engine.adjacency(side).toarray()
        indegree = adj.sum(axis=0)
        max_in = float(indegree.max()) if len(opposite) else 0.0
        popularity = indegree / (max_in + 1.0)
        for i, u in enumerate(users):
            row = sim[i].copy()
            row[i] = 0.0  # u is not its own neighbor
            order = np.argsort(-row, kind="stable")
            neighbors = [int(z) for z in order[:n_neighbors] if row[z] > 0.0]
            flags: frozenset[str] = frozenset()
            if neighbors:
                scores = np.zeros(len(opposite))
                for z in sorted(neighbors):
                    scores += row[z] * adj[z]
            else:
                scores = popularity.copy()
                flags = frozenset({FLAG_COLD_START})
            items = []
            for cand, score, _ in _ranked_candidates(
                scores, opposite, [""] * len(opposite), graph.sent(u)
            ):
                items.append((cand, score))
                if len(items) >= k:
                    break
            out[u] = RecommendationList(u, tuple(items), flags)
    return {u: out[u] for u in sorted(out)}


def recommend_recon(
    profiles: Mapping[str, UserProfile],
    graph: InteractionGraph,
    k: int,
) -> dict[str, RecommendationList]:
    """Attribute-preference baseline.

    Learns each user's preference as the empirical frequency of attribute
    values among the users they contacted; directional compatibility is the
    mean learned frequency of the candidate's values, and the final score is
    the harmonic mean of the two directions.
    """
    n_attrs = min(
        (len(p.attributes) for p in profiles.values()), default=0
    )
    out: dict[str, RecommendationList] = {}
    for side in (Side.A, Side.B):
        users = graph.users(side)
        if not users:
            continue
        opposite = graph.users(Side.B if side is Side.A else Side.A)
        if n_attrs == 0:
            for u in users:
                out[u] = RecommendationList(u, ())
            continue

        # Integer-code each attribute position over the opposite side.
        comp_uv = _recon_compat(profiles, graph, users, opposite, n_attrs)
        comp_vu = _recon_compat(profiles, graph, opposite, users, n_attrs)
        scores = np.zeros((len(users), len(opposite)))
        a, b = comp_uv, comp_vu.T
        mask = (a > 0) & (b > 0)
        scores[mask] = 2.0 / (1.0 / a[mask] + 1.0 / b[mask])
        for i, u in enumerate(users):
            items = []
            for cand, score, _ in _ranked_candidates(
                scores[i], opposite, [""] * len(opposite), graph.sent(u)
            ):
                items.append((cand, score))
                if len(items) >= k:
                    break
            out[u] = RecommendationList(u, tuple(items))
    return {u: out[u] for u in sorted(out)}


def _recon_compat(
    profiles: Mapping[str, UserProfile],
    graph: InteractionGraph,
    raters: Sequence[str],
    candidates: Sequence[str],
    n_attrs: int,
) -> np.ndarray:
    """c(u -> v): mean over attribute positions of the frequency of v's value
    among the users u contacted."""
    cand_index = {c: j for j, c in enumerate(candidates)}
    compat = np.zeros((len(raters), len(candidates)))
    for p in range(n_attrs):
        values = sorted({profiles[c].attributes[p] for c in candidates})
        value_code = {val: i for i, val in enumerate(values)}
        codes = np.array([value_code[profiles[c].attributes[p]] for c in candidates])
        freq = np.zeros((len(raters), len(values)))
        for i, u in enumerate(raters):
            contacted = sorted(graph.sent(u))
            if not contacted:
                continue
            for c in contacted:
                freq[i, codes[cand_index[c]]] += 1
            freq[i] /= len(contacted)
        compat += freq[:, codes]
    return compat / n_attrs


# --------------------------------------------------------------------------
# Deferred acceptance
# --------------------------------------------------------------------------

def preference_orders(
    graph: InteractionGraph,
    excluded_pairs: frozenset[tuple[str, str]] = frozenset(),
    engine: ScoreEngine | None = None,
) -> dict[str, list[str]]:
    """Preference rankings from the directional score, ties by ascending id.

    ``excluded_pairs`` are unordered exclusions (pairs matched in earlier
    rounds); candidates a user already contacted in training never appear in
    that user's ranking.
    """
    engine = engine or ScoreEngine(graph)
    blocked: dict[str, set[str]] = {}
    for a, b in excluded_pairs:
        blocked.setdefault(a, set()).add(b)
        blocked.setdefault(b, set()).add(a)
    prefs: dict[str, list[str]] = {}
    for side in (Side.A, Side.B):
        users = graph.users(side)
        if not users:
            continue
        opposite = graph.users(Side.B if side is Side.A else Side.A)
        directional = engine.directional(side)
        for i, u in enumerate(users):
            skip = graph.sent(u) | blocked.get(u, set())
            order = np.argsort(-directional[i], kind="stable")
            prefs[u] = [opposite[j] for j in order if opposite[j] not in skip]
    return prefs


def _da_round(
    order_a: list[np.ndarray],
    rank_b: np.ndarray,
    blocked_a: list[set[int]],
    blocked_b: list[set[int]],
) -> dict[int, int]:
    """One A-proposing deferred-acceptance pass on integer indices.

    ``order_a[i]`` is proposer i's candidate indices in preference order
    (training contacts already dropped); ``rank_b[j, i]`` is i's rank in
    receiver j's order, or -1 when unacceptable.  ``blocked_*`` hold the
    pairs matched in earlier rounds.  Returns receiver -> proposer.

    The outcome is the proposer-optimal stable matching, which is unique, so
    the stack discipline below does not affect the result.
    """
    n = len(order_a)
    next_idx = [0] * n
    held: dict[int, int] = {}
    free = list(range(n - 1, -1, -1))
    while free:
        a = free.pop()
        ordering = order_a[a]
        while next_idx[a] < len(ordering):
            b = int(ordering[next_idx[a]])
            next_idx[a] += 1
            if b in blocked_a[a]:
                continue
            r = int(rank_b[b, a])
            if r < 0 or a in blocked_b[b]:
                continue
            current = held.get(b)
            if current is None:
                held[b] = a
                break
            if r < int(rank_b[b, current]):
                held[b] = a
                free.append(current)
                break
    return held


def recommend_gale_shapley(
    graph: InteractionGraph,
    k: int,
    engine: ScoreEngine | None = None,
) -> tuple[dict[str, RecommendationList], list[StableMatching]]:
    """k rounds of A-proposing deferred acceptance.

    Each round produces a stable matching under the round's preferences
    (directional scores, ties by id, prior-round partners removed); a user's
    list is its round partners in round order, scored 1/round so the ranking
    invariant (non-increasing scores) holds by construction.
    """
    engine = engine or ScoreEngine(graph)
    users_a, users_b = graph.users_a, graph.users_b
    n, m = len(users_a), len(users_b)

    d_a = engine.directional(Side.A)
    d_b = engine.directional(Side.B)
    order_a = []
    for i, a in enumerate(users_a):
        order = np.argsort(-d_a[i], kind="stable")
        contacted = graph.sent(a)
        order_a.append(np.array([j for j in order if users_b[j] not in contacted], dtype=int))
    rank_b = np.full((m, n), -1, dtype=np.int64)
    for j, b in enumerate(users_b):
        order = np.argsort(-d_b[j], kind="stable")
        contacted = graph.sent(b)
        keep = np.array([i for i in order if users_a[i] not in contacted], dtype=int)
        if keep.size:
            rank_b[j, keep] = np.arange(keep.size)

    partners: dict[str, list[ScoredItem]] = {u: [] for u in (*users_a, *users_b)}
    matchings: list[StableMatching] = []
    blocked_a: list[set[int]] = [set() for _ in range(n)]
    blocked_b: list[set[int]] = [set() for _ in range(m)]
    for round_no in range(1, k + 1):
        held = _da_round(order_a, rank_b, blocked_a, blocked_b)
        pairs = frozenset((users_a[i], users_b[j]) for j, i in held.items())
        matchings.append(StableMatching(pairs))
        if not pairs:
            break
        score = 1.0 / round_no
        for j, i in sorted(held.items()):
            partners[users_a[i]].append((users_b[j], score))
            partners[users_b[j]].append((users_a[i], score))
            blocked_a[i].add(j)
            blocked_b[j].add(i)
    lists = {
        u: RecommendationList(u, tuple(items)) for u, items in sorted(partners.items())
    }
    return lists, matchings


def check_stability(
    matching: StableMatching, prefs: Mapping[str, Sequence[str]]
) -> list[tuple[str, str]]:
    """Exhaustive blocking-pair scan; empty result means stable.

    A pair blocks when the two users are mutually acceptable, not matched
    together, and each strictly prefers the other to their assigned partner
    (being unmatched counts as least preferred).
    """
    assigned = matching.as_dict()
    rank = {u: {v: r for r, v in enumerate(ordering)} for u, ordering in prefs.items()}

    def prefers(u: str, v: str) -> bool:
        partner = assigned.get(u)
        if partner is None:
            return True
        return rank[u][v] < rank[u].get(partner, len(rank[u]))

    blocking = []
    for u in sorted(prefs):
        for v in prefs[u]:
            if v < u:
                continue  # visit each unordered pair once, from the smaller id
            if u not in rank.get(v, {}):
                continue  # not mutually acceptable
            if assigned.get(u) == v:
                continue
            if prefers(u, v) and prefers(v, u):
                blocking.append((u, v))
    return sorted(blocking)


# --------------------------------------------------------------------------
# Invariant helper shared by tests
# --------------------------------------------------------------------------

def assert_well_formed(
    lists: Mapping[str, RecommendationList], graph: InteractionGraph, k: int
) -> None:
    """Raise AssertionError if any list violates the structural invariants."""
    for u, rec in lists.items():
        assert rec.user == u
        assert len(rec.items) <= k, f"{u}: list longer than K"
        cands = rec.candidates()
        assert len(set(cands)) == len(cands), f"{u}: duplicate candidate"
        for c, _ in rec.items:
            assert graph.side(c) is not graph.side(u), f"{u}: same-side candidate {c}"
            assert c not in graph.sent(u), f"{u}: already-contacted candidate {c}"
        scores = [s for _, s in rec.items]
        assert all(s1 >= s2 for s1, s2 in zip(scores, scores[1:])), f"{u}: scores increase"
        for (c1, s1), (c2, s2) in zip(rec.items, rec.items[1:]):
            if s1 == s2:
                assert c1 < c2, f"{u}: tie not broken by id"
