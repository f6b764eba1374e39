"""Scoring kernels: hand-traced values, structural properties, and the
bit-exact agreement between the per-pair route and the matrix engine."""

import numpy as np
import pytest

from fairmatch.dataset import Side, build_graph
from fairmatch.similarity import (
    ScoreEngine,
    SideMismatchError,
    algorithmic_reciprocal_score,
    attractiveness_similarity,
    directional_score,
    harmonic_mean,
    interest_similarity,
    reciprocal_score,
)
from tests.test_dataset import make_profiles, random_market, records_of


class TestInterestSimilarity:
    def test_partial_overlap(self):
        # Se(a0)={b0,b1}, Se(a1)={b1,b2} -> 1/3
        g = build_graph(
            make_profiles(2, 3),
            records_of(("a0", "b0"), ("a0", "b1"), ("a1", "b1"), ("a1", "b2")),
        )
        assert interest_similarity("a0", "a1", g) == pytest.approx(1 / 3)

    def test_identity_with_history(self):
        g = build_graph(make_profiles(), records_of(("a0", "b0")))
        assert interest_similarity("a0", "a0", g) == 1.0

    def test_both_empty_is_zero(self):
        g = build_graph(make_profiles(), [])
        assert interest_similarity("a0", "a1", g) == 0.0

    def test_opposite_sides_rejected(self):
        g = build_graph(make_profiles(), [])
        with pytest.raises(SideMismatchError):
            interest_similarity("a0", "b0", g)


class TestAttractivenessSimilarity:
    def test_nested_contactors(self):
        # Re(b0)={a0}, Re(b1)={a0,a1} -> 1/2
        g = build_graph(
            make_profiles(2, 2),
            records_of(("a0", "b0"), ("a0", "b1"), ("a1", "b1")),
        )
        assert attractiveness_similarity("b0", "b1", g) == 0.5

    def test_identity(self):
        g = build_graph(make_profiles(), records_of(("a0", "b0")))
        assert attractiveness_similarity("b0", "b0", g) == 1.0

    def test_disjoint_contactors(self):
        g = build_graph(
            make_profiles(2, 2), records_of(("a0", "b0"), ("a1", "b1"))
        )
        assert attractiveness_similarity("b0", "b1", g) == 0.0


class TestDirectionalScore:
    def test_cold_start_target(self):
        g = build_graph(make_profiles(), records_of(("a0", "b0")))
        assert directional_score("a0", "b1", g) == 0.0

    def test_single_contactor_is_self_similarity(self):
        # Re(b1)={a0} and Se(a0) nonempty -> interest_similarity(a0,a0)=1
        g = build_graph(make_profiles(), records_of(("a0", "b1")))
        assert directional_score("a0", "b1", g) == 1.0

    def test_mean_of_two_jaccards(self):
        # Se(a0)={b1,b2,b3}; Se(a1)={b3,v,b5}: J=1/5; Se(a2)={b1,b2,v,b5}: J=2/5
        # Re(v)={a1,a2} -> s(a0->v) = (0.2+0.4)/2 = 0.3, with v=b0.
        profiles = make_profiles(3, 6)
        g = build_graph(profiles, records_of(
            ("a0", "b1"), ("a0", "b2"), ("a0", "b3"),
            ("a1", "b3"), ("a1", "b0"), ("a1", "b5"),
            ("a2", "b1"), ("a2", "b2"), ("a2", "b0"), ("a2", "b5"),
        ))
        assert interest_similarity("a0", "a1", g) == pytest.approx(0.2)
        assert interest_similarity("a0", "a2", g) == pytest.approx(0.4)
        assert directional_score("a0", "b0", g) == pytest.approx(0.3)

    def test_same_side_rejected(self):
        g = build_graph(make_profiles(), [])
        with pytest.raises(SideMismatchError):
            directional_score("a0", "a1", g)


class TestHarmonicMean:
    def test_equal_values(self):
        assert harmonic_mean(0.5, 0.5) == 0.5

    def test_skewed_values(self):
        assert harmonic_mean(0.2, 0.8) == pytest.approx(0.32)

    def test_zero_convention(self):
        assert harmonic_mean(0.0, 0.7) == 0.0
        assert harmonic_mean(0.7, 0.0) == 0.0

    def test_algorithmic_operand_example(self):
        assert harmonic_mean(1 / 3, 1 / 2) == pytest.approx(0.4)

    def test_sandwich_bounds_on_grid(self):
        """min <= HM <= min(2*min, max) for positive arguments."""
        grid = np.linspace(0.01, 1.0, 40)
        for a in grid:
            for b in grid:
                h = harmonic_mean(a, b)
                lo, hi = min(a, b), max(a, b)
                assert lo - 1e-12 <= h <= min(2 * lo, hi) + 1e-12

    def test_strictly_increasing_in_each_argument(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            a, b = rng.uniform(0.05, 1.0, size=2)
            eps = 0.01
            assert harmonic_mean(a + eps, b) > harmonic_mean(a, b)
            assert harmonic_mean(a, b + eps) > harmonic_mean(a, b)

    def test_pareto_property_on_equal_sum_grid(self):
        """Among score pairs with a fixed sum, the harmonic mean is maximized
        exactly where the product is maximized (balanced reciprocity)."""
        for total in np.linspace(0.2, 1.6, 15):
            pairs = [
                (a, total - a)
                for a in np.linspace(0.01, total - 0.01, 41)
                if 0 < a < total
            ]
            hm_best = max(range(len(pairs)), key=lambda i: harmonic_mean(*pairs[i]))
            prod_best = max(range(len(pairs)), key=lambda i: pairs[i][0] * pairs[i][1])
            assert hm_best == prod_best


class TestReciprocalScore:
    def test_symmetry(self):
        rng = np.random.default_rng(1)
        profiles, recs = random_market(rng, 6, 6, p=0.4)
        g = build_graph(profiles, recs)
        for a in g.users_a:
            for b in g.users_b:
                assert reciprocal_score(a, b, g) == reciprocal_score(b, a, g)

    def test_zero_when_one_direction_cold(self):
        g = build_graph(make_profiles(), records_of(("a0", "b1")))
        # Re(a0) empty -> s(b1->a0)=0 -> reciprocal 0
        assert reciprocal_score("a0", "b1", g) == 0.0

    def test_brute_force_equivalence_small_graphs(self):
        """Independent naive recomputation from raw records, <= 20 users."""
        rng = np.random.default_rng(99)
        for trial in range(30):
            profiles, recs = random_market(rng, 10, 10, p=0.3)
            g = build_graph(profiles, recs)

            se = {u: set() for u in profiles}
            re_ = {u: set() for u in profiles}
            for r in recs:
                se[r.from_id].add(r.to_id)
                re_[r.to_id].add(r.from_id)

            def jac(s, t):
                u = s | t
                return len(s & t) / len(u) if u else 0.0

            def direct(u, v):
                zs = sorted(re_[v])
                if not zs:
                    return 0.0
                return sum(jac(se[u], se[z]) for z in zs) / len(zs)

            def recip(u, v):
                s1, s2 = direct(u, v), direct(v, u)
                if s1 <= 0 or s2 <= 0:
                    return 0.0
                return 2.0 / (1.0 / s1 + 1.0 / s2)

            for a in g.users_a:
                for b in g.users_b:
                    assert reciprocal_score(a, b, g) == pytest.approx(
                        recip(a, b), abs=1e-12
                    )


class TestAlgorithmicScorer:
    def test_zero_operand_gives_zero(self):
        g = build_graph(make_profiles(), records_of(("a0", "b1")))
        # Se(b1) empty -> attractiveness operand 0
        assert algorithmic_reciprocal_score("a0", "b1", g) == 0.0

    def test_equal_operands_value(self):
        # Construct Re(b0)={a0} with Se(a0) nonempty -> s_int = 1;
        # Se(b0)={a0} with Re(a0) nonempty -> s_att = 1; HM(1,1)=1.
        g = build_graph(make_profiles(), records_of(("a0", "b1"), ("b0", "a0"), ("a0", "b0")))
        # Re(b0)={a0}: J_int(a0,a0)=1 since Se(a0)!=empty; Se(b0)={a0}:
        # J_att(a0,a0)=1 since Re(a0)={b0}.
        assert algorithmic_reciprocal_score("a0", "b0", g) == 1.0


class TestJaccardProperties:
    def test_symmetry_and_bounds_random_graphs(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            profiles, recs = random_market(rng, 8, 8, p=0.35)
            g = build_graph(profiles, recs)
            for side_users in (g.users_a, g.users_b):
                for x in side_users:
                    for y in side_users:
                        for fn in (interest_similarity, attractiveness_similarity):
                            v = fn(x, y, g)
                            assert 0.0 <= v <= 1.0
                            assert v == fn(y, x, g)

    def test_equal_nonempty_sets_give_one(self):
        g = build_graph(
            make_profiles(2, 2),
            records_of(("a0", "b0"), ("a0", "b1"), ("a1", "b0"), ("a1", "b1")),
        )
        assert interest_similarity("a0", "a1", g) == 1.0


class TestScoreEngine:
    """The vectorized engine must agree with the per-pair route bit for bit."""

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_all_matrices_match_per_pair(self, seed):
        rng = np.random.default_rng(seed)
        profiles, recs = random_market(rng, 9, 7, p=0.3)
        g = build_graph(profiles, recs)
        eng = ScoreEngine(g)

        ja = eng.interest_jaccard(Side.A)
        for i, x in enumerate(g.users_a):
            for j, y in enumerate(g.users_a):
                assert ja[i, j] == interest_similarity(x, y, g)

        jb_att = eng.attractiveness_jaccard(Side.B)
        for i, x in enumerate(g.users_b):
            for j, y in enumerate(g.users_b):
                assert jb_att[i, j] == attractiveness_similarity(x, y, g)

        da = eng.directional(Side.A)
        db = eng.directional(Side.B)
        for i, a in enumerate(g.users_a):
            for j, b in enumerate(g.users_b):
                assert da[i, j] == directional_score(a, b, g)
                assert db[j, i] == directional_score(b, a, g)

        r = eng.reciprocal()
        alg_a = eng.algorithmic(Side.A)
        alg_b = eng.algorithmic(Side.B)
        for i, a in enumerate(g.users_a):
            for j, b in enumerate(g.users_b):
                assert r[i, j] == reciprocal_score(a, b, g)
                assert alg_a[i, j] == algorithmic_reciprocal_score(a, b, g)
                assert alg_b[j, i] == algorithmic_reciprocal_score(b, a, g)

    def test_scores_selects_by_name(self):
        rng = np.random.default_rng(8)
        profiles, recs = random_market(rng, 5, 5, p=0.4)
        g = build_graph(profiles, recs)
        eng = ScoreEngine(g)
        assert np.array_equal(eng.scores(Side.B, "reciprocal"), eng.reciprocal().T)
        with pytest.raises(ValueError):
            eng.scores(Side.A, "nope")
