from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypwalk import (
    GroupModel,
    ball,
    conjugacy_representatives,
    distance,
    estimate_delta,
    geodesic,
    gromov_product,
)
from hypwalk.errors import BudgetExceededError, ModelMismatchError

from oracles import bfs_distances, free_ball_size


F2 = GroupModel.free(2)
F3 = GroupModel.free(3)
Z23 = GroupModel.free_product(2, 3)
Z25 = GroupModel.free_product(2, 5)


def random_word(model, draw_letters):
    return model.from_letters(draw_letters)


def letters_strategy(model, max_len=8):
    ids = list(range(1, model.n_letter_ids() + 1))
    signed = ids + [-i for i in ids]
    return st.lists(st.sampled_from(signed), max_size=max_len)


class TestMultiply:
    def test_free_cancellation(self):
        assert F2.word("ab") * F2.word("B") == F2.word("a")

    def test_identity(self):
        g = F2.word("abA")
        assert F2.identity() * g == g
        assert g * F2.identity() == g

    def test_torsion_relation(self):
        s, t = Z23.word("s"), Z23.word("t")
        assert (s * t) * (t * t) == s

    def test_mixed_models_error(self):
        with pytest.raises(ModelMismatchError):
            F2.word("a") * F3.word("a")

    def test_inverse_cancels(self):
        g = Z25.word("stTs")
        assert g * g.inverse() == Z25.identity()

    @given(letters_strategy(F2), letters_strategy(F2), letters_strategy(F2))
    @settings(max_examples=60, deadline=None)
    def test_associativity_free(self, la, lb, lc):
        a, b, c = (F2.from_letters(ls) for ls in (la, lb, lc))
        assert (a * b) * c == a * (b * c)

    @given(letters_strategy(Z25), letters_strategy(Z25), letters_strategy(Z25))
    @settings(max_examples=60, deadline=None)
    def test_associativity_product(self, la, lb, lc):
        a, b, c = (Z25.from_letters(ls) for ls in (la, lb, lc))
        assert (a * b) * c == a * (b * c)


class TestWordLength:
    def test_examples(self):
        assert F2.identity().word_length() == 0
        assert F2.word("ab").word_length() == 2
        assert Z23.word("sts").word_length() == 3

    def test_against_bfs(self):
        for model in (F2, Z23, Z25):
            dist = bfs_distances(model, 4)
            for g, d in dist.items():
                assert g.word_length() == d

    @given(letters_strategy(Z25))
    @settings(max_examples=60, deadline=None)
    def test_inverse_length(self, ls):
        g = Z25.from_letters(ls)
        assert g.word_length() == g.inverse().word_length()

    @given(letters_strategy(F2), letters_strategy(F2))
    @settings(max_examples=60, deadline=None)
    def test_triangle(self, la, lb):
        x, y = F2.from_letters(la), F2.from_letters(lb)
        assert (x * y).word_length() <= x.word_length() + y.word_length()

    @given(letters_strategy(Z23), letters_strategy(Z23), letters_strategy(Z23))
    @settings(max_examples=60, deadline=None)
    def test_left_invariance(self, lg, lx, ly):
        g, x, y = (Z23.from_letters(ls) for ls in (lg, lx, ly))
        assert distance(g * x, g * y) == distance(x, y)


class TestGromovProduct:
    def test_self(self):
        x = F2.word("abAB")
        assert gromov_product(x, x) == x.word_length()

    def test_common_prefix(self):
        assert gromov_product(F3.word("ab"), F3.word("ac")) == 1

    def test_orthogonal(self):
        assert gromov_product(F2.word("a"), F2.word("b")) == 0

    def test_half_integer(self):
        t = Z23.word("t")
        assert gromov_product(t, t * t) == Fraction(1, 2)


class TestGeodesic:
    def test_examples(self):
        seg = geodesic(F2.identity(), F2.word("ab"))
        assert [str(v) for v in seg.vertices] == ["e", "a", "ab"]
        assert geodesic(F2.word("a"), F2.word("a")).vertices == (F2.word("a"),)

    def test_product_model_against_bfs(self):
        dist = bfs_distances(Z23, 4)
        target = Z23.word("t") * Z23.word("s") * Z23.word("T")
        seg = geodesic(Z23.identity(), target)
        assert len(seg.vertices) == dist[target] + 1
        for u, v in zip(seg.vertices, seg.vertices[1:]):
            assert distance(u, v) == 1

    @given(letters_strategy(Z25, 6), letters_strategy(Z25, 6))
    @settings(max_examples=40, deadline=None)
    def test_valid_and_reversible(self, la, lb):
        x, y = Z25.from_letters(la), Z25.from_letters(lb)
        seg = geodesic(x, y)
        assert seg.start == x and seg.end == y
        assert len(seg) == distance(x, y)
        rev = seg.reversed()
        for u, v in zip(rev.vertices, rev.vertices[1:]):
            assert distance(u, v) == 1
        assert rev.start == y and rev.end == x


class TestDelta:
    def test_trees_are_zero(self):
        assert estimate_delta(F2, 4) == 0
        assert estimate_delta(F3, 3) == 0

    def test_z23_in_range(self):
        d = estimate_delta(Z23, 4)
        assert 0 <= d <= 2

    def test_monotone_in_radius(self):
        assert estimate_delta(Z25, 3) <= estimate_delta(Z25, 5)

    def test_four_point_condition_holds(self):
        # delta estimated on the double ball covers products based
        # anywhere in the inner ball.
        delta = estimate_delta(Z25, 6, max_states=10_000)
        b = ball(Z25, 3)
        pts = [b.element(i) for i in range(len(b))]
        for w in pts[:12]:
            for x in pts[::7]:
                for y in pts[::5]:
                    for z in pts[::3]:
                        lhs = gromov_product(x, y, w)
                        rhs = min(gromov_product(x, z, w), gromov_product(y, z, w))
                        assert lhs >= rhs - delta


class TestBall:
    def test_sizes_f2(self):
        assert len(ball(F2, 1)) == 5
        assert len(ball(F2, 2)) == 17

    def test_free_formula(self):
        for model, rank in ((F2, 2), (F3, 3)):
            for r in range(0, 7 if rank == 2 else 5):
                assert len(ball(model, r)) == free_ball_size(rank, r)

    def test_indexing_stable_and_complete(self):
        b = ball(Z23, 3)
        seen = set()
        for i in range(len(b)):
            g = b.element(i)
            assert b.index_of(g) == i
            assert g.word_length() <= 3
            seen.add(g)
        assert len(seen) == len(b)
        dist = bfs_distances(Z23, 3)
        assert seen == set(dist)

    def test_budget(self):
        with pytest.raises(BudgetExceededError):
            ball(F2, 8, max_states=100)

    def test_outside_lookup_is_error(self):
        b = ball(F2, 2)
        with pytest.raises(ValueError):
            b.index_of(F2.word("aaa"))


class TestConjugacy:
    def test_f2_length_one(self):
        reps = conjugacy_representatives(F2, 1)
        assert {str(g) for g, _ in reps} == {"a", "A", "b", "B"}
        assert all(not finite for _, finite in reps)

    def test_cyclic_reduction_class(self):
        reps = conjugacy_representatives(F2, 3)
        # the class of a b a^-1 is the class of b
        names = {str(g) for g, _ in reps}
        assert "b" in names and "abA" not in names

    def test_z23_torsion(self):
        reps = conjugacy_representatives(Z23, 1)
        assert {str(g) for g, _ in reps} == {"s", "t", "T"}
        assert all(finite for _, finite in reps)

    def test_minimal_length_and_distinct(self):
        reps = conjugacy_representatives(F2, 4)
        assert len({g.letters() for g, _ in reps}) == len(reps)
        for g, _ in reps:
            u, core = g.cyclic_reduction()
            assert u.is_identity() and core == g


class TestDeltaHint:
    def test_defaults(self):
        assert F2.delta_hint == 0
        assert Z23.delta_hint == 0
        assert Z25.delta_hint == 1

    def test_override(self):
        m = GroupModel.free_product(2, 3, delta_hint=2)
        assert m.delta_hint == 2
