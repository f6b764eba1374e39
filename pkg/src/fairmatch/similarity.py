"""Scoring kernels: Jaccard interest/attractiveness similarity, directional
preference scores, and harmonic-mean reciprocal scores.

Two routes compute the same numbers.  The per-pair functions are the readable
reference contract; :class:`ScoreEngine` vectorizes whole score matrices for
the recommenders.  The engine accumulates sums in ascending-id order with the
same elementary operations, so both routes agree bit for bit (intersections
and unions are integer-exact, so the only float work is identical divisions
and identically-ordered additions).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .dataset import InteractionGraph, Side


class SideMismatchError(ValueError):
    """Raised when an operation receives users on the wrong sides."""


def _require_same_side(graph: InteractionGraph, x: str, y: str) -> None:
    if graph.side(x) is not graph.side(y):
        raise SideMismatchError(
            f"{x!r} (side {graph.side(x).value}) and {y!r} (side {graph.side(y).value}) "
            "must be on the same side"
        )


def _require_opposite_sides(graph: InteractionGraph, u: str, v: str) -> None:
    if graph.side(u) is graph.side(v):
        raise SideMismatchError(
            f"{u!r} and {v!r} are both on side {graph.side(u).value}; "
            "expected opposite sides"
        )


def _jaccard(s: frozenset[str], t: frozenset[str]) -> float:
    union = len(s | t)
    if union == 0:
        return 0.0
    return len(s & t) / union


def interest_similarity(x: str, y: str, graph: InteractionGraph) -> float:
    """Jaccard overlap of contacted sets: |Se(x) n Se(y)| / |Se(x) u Se(y)|.

    Defined between same-side users; 0 when both sets are empty (a user with
    no history carries no evidence of similarity).
    """
    _require_same_side(graph, x, y)
    return _jaccard(graph.sent(x), graph.sent(y))


def attractiveness_similarity(x: str, y: str, graph: InteractionGraph) -> float:
    """Jaccard overlap of contactor sets: |Re(x) n Re(y)| / |Re(x) u Re(y)|."""
    _require_same_side(graph, x, y)
    return _jaccard(graph.received(x), graph.received(y))


def directional_score(u: str, v: str, graph: InteractionGraph) -> float:
    """Predicted preference s(u -> v): mean interest similarity of u to the
    users who contacted v (neighborhood collaborative filtering).

    Everyone in Re(v) sits on u's side, so the same-side Jaccard is always
    well typed.  Returns 0 for cold-start targets with Re(v) empty.
    """
    _require_opposite_sides(graph, u, v)
    contactors = sorted(graph.received(v))
    if not contactors:
        return 0.0
    total = 0.0
    for z in contactors:
        total = total + interest_similarity(u, z, graph)
    return total / len(contactors)


def harmonic_mean(a: float, b: float) -> float:
    """2 / (a^-1 + b^-1), with the continuous-limit convention HM(0, x) = 0."""
    if a <= 0.0 or b <= 0.0:
        return 0.0
    return 2.0 / (1.0 / a + 1.0 / b)


def reciprocal_score(u: str, v: str, graph: InteractionGraph) -> float:
    """Harmonic mean of the two directional scores; both parties must score
    well for the pair to score well."""
    _require_opposite_sides(graph, u, v)
    return harmonic_mean(directional_score(u, v, graph), directional_score(v, u, graph))


def algorithmic_reciprocal_score(u: str, v: str, graph: InteractionGraph) -> float:
    """Alternative scorer: harmonic mean of an interest operand and an
    attractiveness operand, both aggregated over same-side users.

    The interest operand is the mean interest similarity of u to Re(v); the
    attractiveness operand is the mean attractiveness similarity of u to
    Se(v).  Unlike :func:`reciprocal_score` this is not symmetric in (u, v).
    """
    _require_opposite_sides(graph, u, v)
    contactors = sorted(graph.received(v))
    if contactors:
        s_int = 0.0
        for z in contactors:
            s_int = s_int + interest_similarity(u, z, graph)
        s_int /= len(contactors)
    else:
        s_int = 0.0
    contacted = sorted(graph.sent(v))
    if contacted:
        s_att = 0.0
        for z in contacted:
            s_att = s_att + attractiveness_similarity(u, z, graph)
        s_att /= len(contacted)
    else:
        s_att = 0.0
    return harmonic_mean(s_int, s_att)


# --------------------------------------------------------------------------
# Vectorized score matrices
# --------------------------------------------------------------------------

def _pairwise_jaccard(adj: sp.csr_matrix) -> np.ndarray:
    """Dense Jaccard matrix over the rows of a 0/1 adjacency.

    Intersection counts come from an integer-valued sparse product, so they
    are exact in float64; the division then matches the per-pair kernel bit
    for bit.
    """
    inter = (adj @ adj.T).toarray().astype(np.float64)
    deg = np.asarray(adj.sum(axis=1)).ravel().astype(np.float64)
    union = deg[:, None] + deg[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out


def _column_mean(sim: np.ndarray, adj_cols: sp.csc_matrix) -> np.ndarray:
    """For each column v of ``adj_cols``, the mean of ``sim[:, z]`` over the
    nonzero rows z, accumulated in ascending row order (bit-compatible with
    the per-pair sum).  Zero column where v has no contactors.
    """
    n_rows = sim.shape[0]
    n_cols = adj_cols.shape[1]
    out = np.zeros((n_rows, n_cols))
    indptr, indices = adj_cols.indptr, adj_cols.indices
    for v in range(n_cols):
        members = np.sort(indices[indptr[v]:indptr[v + 1]])
        if members.size == 0:
            continue
        acc = sim[:, members[0]].copy()
        for z in members[1:]:
            acc += sim[:, z]
        out[:, v] = acc / members.size
    return out


def _harmonic_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros_like(a)
    mask = (a > 0) & (b > 0)
    out[mask] = 2.0 / (1.0 / a[mask] + 1.0 / b[mask])
    return out


class ScoreEngine:
    """Caches the dense score matrices for one immutable graph.

    Rows/columns are indexed by the graph's sorted user tuples; all cached
    matrices are computed lazily on first use.
    """

    def __init__(self, graph: InteractionGraph):
        self.graph = graph
        self.users_a = graph.users_a
        self.users_b = graph.users_b
        self.index_a = {u: i for i, u in enumerate(self.users_a)}
        self.index_b = {u: i for i, u in enumerate(self.users_b)}
        self._adj: dict[Side, sp.csr_matrix] = {}
        self._interest_jac: dict[Side, np.ndarray] = {}
        self._attract_jac: dict[Side, np.ndarray] = {}
        self._directional: dict[Side, np.ndarray] = {}
        self._att_directional: dict[Side, np.ndarray] = {}
        self._reciprocal: np.ndarray | None = None

    def index(self, side: Side) -> dict[str, int]:
        return self.index_a if side is Side.A else self.index_b

    def adjacency(self, side: Side) -> sp.csr_matrix:
        """0/1 matrix, rows = this side's users, cols = opposite side; entry
        (u, v) set iff u contacted v."""
        if side not in self._adj:
            rows_users = self.graph.users(side)
            col_index = self.index_b if side is Side.A else self.index_a
            rows, cols = [], []
            for i, u in enumerate(rows_users):
                for v in sorted(self.graph.sent(u)):
                    rows.append(i)
                    cols.append(col_index[v])
            shape = (len(rows_users), len(col_index))
            self._adj[side] = sp.csr_matrix(
                (np.ones(len(rows)), (rows, cols)), shape=shape
            )
        return self._adj[side]

    def interest_jaccard(self, side: Side) -> np.ndarray:
        """Pairwise interest Jaccard among one side's users (over Se)."""
        if side not in self._interest_jac:
            self._interest_jac[side] = _pairwise_jaccard(self.adjacency(side))
        return self._interest_jac[side]

    def attractiveness_jaccard(self, side: Side) -> np.ndarray:
        """Pairwise Jaccard among one side's users over Re (contactor sets)."""
        if side not in self._attract_jac:
            other = Side.B if side is Side.A else Side.A
            received = sp.csr_matrix(self.adjacency(other).T)
            self._attract_jac[side] = _pairwise_jaccard(received)
        return self._attract_jac[side]

    def directional(self, side: Side) -> np.ndarray:
        """Matrix of s(u -> v): rows = ``side`` users u, cols = opposite v."""
        if side not in self._directional:
            # Re(v) for opposite-side v = column v of this side's adjacency.
            contactors = sp.csc_matrix(self.adjacency(side))
            self._directional[side] = _column_mean(self.interest_jaccard(side), contactors)
        return self._directional[side]

    def _attract_directional(self, side: Side) -> np.ndarray:
        """Attractiveness operand of the algorithmic scorer: mean
        attractiveness similarity of u (on ``side``) to Se(v)."""
        if side not in self._att_directional:
            other = Side.B if side is Side.A else Side.A
            # adjacency(other) has rows = opposite users v, cols = this side's
            # users z, set iff z in Se(v); transpose so columns enumerate v.
            contacted = sp.csc_matrix(self.adjacency(other).T)
            self._att_directional[side] = _column_mean(
                self.attractiveness_jaccard(side), contacted
            )
        return self._att_directional[side]

    def reciprocal(self) -> np.ndarray:
        """Reciprocal-score matrix, rows = side A, cols = side B.  Symmetric:
        B-side scores are the transpose."""
        if self._reciprocal is None:
            self._reciprocal = _harmonic_matrix(
                self.directional(Side.A), self.directional(Side.B).T
            )
        return self._reciprocal

    def algorithmic(self, side: Side) -> np.ndarray:
        """Algorithmic-scorer matrix from ``side``'s perspective (not
        symmetric): rows = side users, cols = opposite side."""
        return _harmonic_matrix(self.directional(side), self._attract_directional(side))

    def scores(self, side: Side, scorer: str = "reciprocal") -> np.ndarray:
        """Score matrix for building ``side``'s lists under the named scorer."""
        if scorer == "reciprocal":
            r = self.reciprocal()
            return r if side is Side.A else r.T
        if scorer == "algorithmic":
            return self.algorithmic(side)
        raise ValueError(f"unknown scorer {scorer!r}")
