"""Evaluation metrics for reciprocal recommendation: hit metrics,
coverage-adjusted variants that count each mutual match once, ranking
quality, allocation fairness, demographic parity, and the softmax exposure
bias estimator.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, asdict
from typing import Callable, Mapping, Sequence

import numpy as np

from .dataset import InteractionGraph, MatchSet, Side, UserProfile
from .fairness import fairness_score
from .recommenders import RecommendationList, group_label, group_distribution


@dataclass(frozen=True)
class EvaluationInput:
    """Everything needed to score one run: the lists for both sides, the
    held-out matches, and the dataset context."""

    lists: Mapping[str, RecommendationList]
    heldout: MatchSet
    k: int
    graph: InteractionGraph
    profiles: Mapping[str, UserProfile]
    group_attr: str = "group"
    eval_side: Side = Side.A


@dataclass(frozen=True)
class BiasModel:
    """Fitted coefficients of the softmax exposure model."""

    alpha: float
    beta: float
    log_likelihood: float
    degenerate: tuple[str, ...] = ()


@dataclass(frozen=True)
class MetricsReport:
    """All metric values for one algorithm on one split."""

    precision_at_k: float
    recall_at_k: float
    ndcg_at_k: float
    crecall: float
    cprecision: float
    jain_index: float
    demographic_parity: float
    fairness_score: float
    bias_alpha: float
    bias_beta: float

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, float]) -> "MetricsReport":
        return cls(**{f: float(data[f]) for f in cls.__dataclass_fields__})


def _topk(rec: RecommendationList, k: int) -> set[str]:
    return {c for c, _ in rec.items[:k]}


def _hits_via(
    lists: Mapping[str, RecommendationList],
    heldout: MatchSet,
    k: int,
    side_first: bool,
) -> set[tuple[str, str]]:
    """Held-out matches (a, b) recovered through the lists of their a (or b)
    member, depending on ``side_first``."""
    hits = set()
    for a, b in heldout.pairs:
        user, cand = (a, b) if side_first else (b, a)
        rec = lists.get(user)
        if rec is not None and cand in _topk(rec, k):
            hits.add((a, b))
    return hits


def precision_recall_at_k(inp: EvaluationInput) -> tuple[float, float]:
    """Hit-based precision and recall over one side's lists.

    A hit is a held-out match whose partner appears in the user's top K.
    Precision divides by (number of lists x K); recall divides by the number
    of held-out matches M.
    """
    if inp.heldout.size == 0:
        raise ValueError("recall undefined with no held-out matches")
    side_users = set(inp.graph.users(inp.eval_side))
    side_lists = {u: r for u, r in inp.lists.items() if u in side_users}
    hits = _hits_via(side_lists, inp.heldout, inp.k, side_first=inp.eval_side is Side.A)
    denom = len(side_lists) * inp.k
    precision = len(hits) / denom if denom else 0.0
    recall = len(hits) / inp.heldout.size
    return precision, recall


def coverage_adjusted(inp: EvaluationInput) -> tuple[float, float]:
    """Coverage-adjusted recall/precision that count a mutual match once even
    when both members' lists recover it.

    CRecall = (TP_A + TP_B - TP_both) / M
    CPrecision = (TP_A + TP_B - TP_both) / ((n + m) K)
    """
    if inp.heldout.size == 0:
        raise ValueError("coverage metrics undefined with no held-out matches")
    hits_a = _hits_via(inp.lists, inp.heldout, inp.k, side_first=True)
    hits_b = _hits_via(inp.lists, inp.heldout, inp.k, side_first=False)
    covered = len(hits_a) + len(hits_b) - len(hits_a & hits_b)
    crecall = covered / inp.heldout.size
    cprecision = covered / ((inp.graph.n + inp.graph.m) * inp.k)
    return crecall, cprecision


def ndcg_at_k(
    items: Sequence[str], relevance: Callable[[str], int], k: int, total_relevant: int
) -> float:
    """Binary-relevance NDCG@K of one ranked candidate list.

    ``total_relevant`` is the number of relevant candidates that exist
    globally; the ideal ranking places min(k, total_relevant) of them on top.
    Defined as 0 when nothing relevant exists.
    """
    if total_relevant <= 0:
        return 0.0
    dcg = 0.0
    for i, cand in enumerate(items[:k], start=1):
        rel = relevance(cand)
        if rel:
            dcg += (2.0 ** rel - 1.0) / math.log2(i + 1)
    idcg = sum(1.0 / math.log2(i + 1) for i in range(1, min(k, total_relevant) + 1))
    return dcg / idcg


def mean_ndcg(inp: EvaluationInput) -> float:
    """Average NDCG@K over the evaluation side, relevance = held-out partner.

    Users without any held-out partner contribute 0, keeping the aggregate
    total over all lists.
    """
    partners: dict[str, set[str]] = {}
    for a, b in inp.heldout.pairs:
        partners.setdefault(a, set()).add(b)
        partners.setdefault(b, set()).add(a)
    side_users = [u for u in inp.lists if inp.graph.side(u) is inp.eval_side]
    if not side_users:
        return 0.0
    total = 0.0
    for u in sorted(side_users):
        relevant = partners.get(u, set())
        rec = inp.lists[u]
        total += ndcg_at_k(
            rec.candidates(), lambda c: 1 if c in relevant else 0, inp.k, len(relevant)
        )
    return total / len(side_users)


def jain_index(allocations: Sequence[float]) -> float:
    """(sum x)^2 / (n sum x^2); 1 is perfectly even, 1/n maximally skewed."""
    if len(allocations) == 0:
        raise ValueError("empty allocation vector")
    x = np.asarray(allocations, dtype=float)
    if np.any(x < 0):
        raise ValueError("allocations must be non-negative")
    sq = float(np.dot(x, x))
    if sq == 0.0:
        raise ValueError("all-zero allocation vector")
    return float(x.sum()) ** 2 / (len(x) * sq)


def demographic_parity(
    predictions: Mapping[str, int], protected: Mapping[str, int]
) -> float:
    """|P(Y=1 | A=0) - P(Y=1 | A=1)| over the users in ``protected``."""
    rates = {}
    for cls in (0, 1):
        members = [u for u, a in protected.items() if a == cls]
        if not members:
            raise ValueError(f"protected class {cls} is empty")
        rates[cls] = sum(1 for u in members if predictions.get(u, 0) == 1) / len(members)
    return abs(rates[0] - rates[1])


def exposure_predictions(
    lists: Mapping[str, RecommendationList], all_users: Sequence[str]
) -> dict[str, int]:
    """Y(u) = 1 iff u appears in at least one recommendation list."""
    exposed = set()
    for rec in lists.values():
        exposed.update(rec.candidates())
    return {u: 1 if u in exposed else 0 for u in all_users}


# --------------------------------------------------------------------------
# Exposure bias estimator
# --------------------------------------------------------------------------

def estimate_bias_model(
    lists: Mapping[str, RecommendationList],
    profiles: Mapping[str, UserProfile],
    iterations: int = 500,
    step: float = 0.1,
) -> BiasModel:
    """Fit the softmax exposure model to the observed list selections.

    Every list entry is treated as a draw from the candidate pool (the
    owner's opposite side) with weight exp(alpha * attractiveness +
    beta * activity); the coefficients maximize the likelihood by gradient
    ascent on internally-standardized covariates (the MLE is invariant to
    the rescaling, which just conditions the fixed-step ascent).  A covariate
    with zero variance is unidentifiable: its coefficient is pinned at 0 and
    reported in ``degenerate``.
    """
    sides: dict[Side, list[str]] = {Side.A: [], Side.B: []}
    for uid in sorted(profiles):
        sides[profiles[uid].side].append(uid)

    pools = {}
    for side in (Side.A, Side.B):
        ids = sides[side]
        pools[side] = {
            "attr": np.array([profiles[u].attractiveness for u in ids]),
            "act": np.array([profiles[u].activity for u in ids]),
            "count": np.zeros(len(ids)),
            "index": {u: i for i, u in enumerate(ids)},
        }
    n_events = 0
    for u in sorted(lists):
        rec = lists[u]
        for cand, _ in rec.items:
            pool = pools[profiles[cand].side]
            pool["count"][pool["index"][cand]] += 1
            n_events += 1
    if n_events == 0:
        return BiasModel(0.0, 0.0, 0.0, ("alpha", "beta"))

    all_attr = np.concatenate([pools[Side.A]["attr"], pools[Side.B]["attr"]])
    all_act = np.concatenate([pools[Side.A]["act"], pools[Side.B]["act"]])
    scale_attr = float(all_attr.std())
    scale_act = float(all_act.std())
    degenerate = []
    if scale_attr == 0.0:
        degenerate.append("alpha")
        scale_attr = 1.0
    if scale_act == 0.0:
        degenerate.append("beta")
        scale_act = 1.0

    active = [p for p in pools.values() if p["count"].sum() > 0]
    for p in active:
        p["z_attr"] = p["attr"] / scale_attr
        p["z_act"] = p["act"] / scale_act
        p["n"] = float(p["count"].sum())
        p["sum_attr"] = float(p["count"] @ p["z_attr"])
        p["sum_act"] = float(p["count"] @ p["z_act"])

    theta = np.zeros(2)  # standardized (alpha, beta)
    fixed = np.array([1.0 if "alpha" not in degenerate else 0.0,
                      1.0 if "beta" not in degenerate else 0.0])
    for _ in range(iterations):
        g = np.zeros(2)
        for p in active:
            logits = theta[0] * p["z_attr"] + theta[1] * p["z_act"]
            logits -= logits.max()
            w = np.exp(logits)
            w /= w.sum()
            g[0] += p["sum_attr"] - p["n"] * float(w @ p["z_attr"])
            g[1] += p["sum_act"] - p["n"] * float(w @ p["z_act"])
        theta = theta + step * fixed * (g / n_events)

    ll = 0.0
    for p in active:
        logits = theta[0] * p["z_attr"] + theta[1] * p["z_act"]
        shift = logits.max()
        lse = shift + math.log(float(np.exp(logits - shift).sum()))
        ll += theta[0] * p["sum_attr"] + theta[1] * p["sum_act"] - p["n"] * lse

    alpha = 0.0 if "alpha" in degenerate else float(theta[0]) / scale_attr
    beta = 0.0 if "beta" in degenerate else float(theta[1]) / scale_act
    return BiasModel(alpha, beta, float(ll), tuple(degenerate))


def bias_reduction_report(
    baseline: MetricsReport, treated: MetricsReport
) -> dict[str, float | None]:
    """Fractional bias reduction per dimension; None where the baseline
    carries no bias to reduce."""
    dims = {
        "popularity_bias": (abs(baseline.bias_alpha), abs(treated.bias_alpha)),
        "demographic_parity": (baseline.demographic_parity, treated.demographic_parity),
        "group_representation": (1.0 - baseline.fairness_score, 1.0 - treated.fairness_score),
    }
    out: dict[str, float | None] = {}
    for name, (base, after) in dims.items():
        out[name] = None if base == 0.0 else (base - after) / base
    return out


# --------------------------------------------------------------------------
# Aggregation
# --------------------------------------------------------------------------

def majority_group(
    profiles: Mapping[str, UserProfile], group_attr: str = "group"
) -> str:
    counts = Counter(group_label(p, group_attr) for p in profiles.values())
    top = max(counts.values())
    return sorted(g for g, c in counts.items() if c == top)[0]


def evaluate_lists(inp: EvaluationInput) -> MetricsReport:
    """Compute the full report for one algorithm's output.

    Allocation fairness (Jain) runs over per-user exposure counts, the number
    of lists each user appears in; demographic parity compares the
    exposed-at-least-once rate of the largest group against everyone else.
    """
    precision, recall = precision_recall_at_k(inp)
    crecall, cprecision = coverage_adjusted(inp)
    ndcg = mean_ndcg(inp)

    all_users = sorted(inp.profiles)
    exposure: Counter[str] = Counter()
    for rec in inp.lists.values():
        for c in rec.candidates():
            exposure[c] += 1
    if exposure:
        jain = jain_index([exposure.get(u, 0) for u in all_users])
    else:
        jain = 1.0  # nothing recommended: the empty allocation is trivially even

    predictions = exposure_predictions(inp.lists, all_users)
    majority = majority_group(inp.profiles, inp.group_attr)
    protected = {
        u: 0 if group_label(inp.profiles[u], inp.group_attr) == majority else 1
        for u in all_users
    }
    parity = demographic_parity(predictions, protected)

    fair_scores = []
    for side in (Side.A, Side.B):
        side_lists = [
            inp.lists[u] for u in sorted(inp.lists) if inp.graph.side(u) is side
        ]
        opposite = inp.graph.users(Side.B if side is Side.A else Side.A)
        if not side_lists or not opposite:
            continue
        population = group_distribution(inp.profiles, opposite, inp.group_attr)
        groups_per_list = [
            [group_label(inp.profiles[c], inp.group_attr) for c in rec.candidates()]
            for rec in side_lists
        ]
        if any(groups_per_list):
            fair_scores.append(
                (fairness_score(groups_per_list, population), len(side_lists))
            )
    if fair_scores:
        total = sum(w for _, w in fair_scores)
        fairness = math.fsum(s * w for s, w in fair_scores) / total
    else:
        fairness = 1.0

    bias = estimate_bias_model(inp.lists, inp.profiles)
    return MetricsReport(
        precision_at_k=precision,
        recall_at_k=recall,
        ndcg_at_k=ndcg,
        crecall=crecall,
        cprecision=cprecision,
        jain_index=jain,
        demographic_parity=parity,
        fairness_score=fairness,
        bias_alpha=bias.alpha,
        bias_beta=bias.beta,
    )
