import math

import numpy as np
import pytest

from hypwalk import (
    BoundaryPoint,
    GroupModel,
    hoelder_probe,
    harnack_constant,
    limit_gromov,
    livschitz_coboundary,
    martin_kernel,
    martin_kernel_at,
    radon_nikodym,
    ratio_invariant,
    restricted_green,
    uniform_walk,
)
from hypwalk.errors import ValidationError


class TestBoundaryPoint:
    def test_periodic_strips_conjugator(self, f2):
        xi = BoundaryPoint.periodic(f2.word("abA"))
        assert str(xi.head) == "a" and str(xi.cycle) == "b"
        assert xi.prefix_letters(4) == (1, 2, 2, 2)

    def test_prefixes_nest(self, z23):
        xi = BoundaryPoint.periodic(z23.word("st"))
        for n in range(1, 10):
            assert xi.prefix_letters(n + 1)[:n] == xi.prefix_letters(n)
            assert xi.prefix(n).word_length() == n

    def test_torsion_has_no_axis(self, z23):
        with pytest.raises(ValidationError):
            BoundaryPoint.periodic(z23.word("s"))

    def test_invalid_cycle(self, f2):
        with pytest.raises(ValidationError):
            BoundaryPoint(head=f2.word("a"), cycle=f2.word("Ab"))  # head cancels

    def test_frozen_depth_limit(self, f2):
        pt = BoundaryPoint(head=f2.word("ab"), cycle=f2.identity())
        assert pt.max_depth() == 2
        with pytest.raises(ValidationError):
            pt.prefix_letters(3)

    def test_limit_gromov_tree(self, f2):
        xi = BoundaryPoint.periodic(f2.word("a"))
        eta = BoundaryPoint(head=f2.word("aab"), cycle=f2.word("a"))
        value, stabilized = limit_gromov(xi, eta)
        assert stabilized and value == 2


class TestMartinKernel:
    def test_identity_kernel(self, walk_f2, f2):
        xi = BoundaryPoint.periodic(f2.word("b"))
        est = martin_kernel(walk_f2, f2.identity(), xi)
        assert est.value == 1.0 and est.deviation == 0.0

    def test_tree_cone_values(self, walk_f2, f2):
        # K(a, xi) is 3 on the cone at a and 1/3 elsewhere.
        a = f2.word("a")
        on = martin_kernel(walk_f2, a, BoundaryPoint.periodic(a))
        off = martin_kernel(walk_f2, a, BoundaryPoint.periodic(f2.word("b")))
        assert on.value == pytest.approx(3.0, rel=1e-6)
        assert off.value == pytest.approx(1 / 3, rel=1e-6)
        assert on.converged and off.converged

    def test_against_direct_row_oracle(self, walk_f2, f2):
        # Independent route: restricted rows from sources a and e directly,
        # no left-invariance reduction.
        a = f2.word("a")
        table = restricted_green(walk_f2, 12, sources=[a])
        xi = BoundaryPoint.periodic(a)
        y = xi.prefix(8)
        oracle = table.value(a, y) / table.value(f2.identity(), y)
        est = martin_kernel(walk_f2, a, xi)
        assert est.value == pytest.approx(oracle, rel=1e-2)

    def test_cocycle_exact_at_every_depth(self, walk_f2, f2):
        g, h = f2.word("a"), f2.word("b")
        xi = BoundaryPoint.periodic(f2.word("b"))
        for depth in (4, 5, 6):
            y = xi.prefix(depth)
            lhs = martin_kernel_at(walk_f2, g * h, y).value
            rhs = (
                martin_kernel_at(walk_f2, g, y).value
                * martin_kernel_at(walk_f2, h, g.inverse() * y).value
            )
            assert abs(lhs / rhs - 1.0) <= 1e-8

    def test_inverse_relation(self, walk_f2, f2):
        g = f2.word("ab")
        y = BoundaryPoint.periodic(f2.word("b")).prefix(5)
        forward = martin_kernel_at(walk_f2, g.inverse(), y).value
        back = martin_kernel_at(walk_f2, g, g * y).value
        assert forward * back == pytest.approx(1.0, rel=1e-12)

    def test_harnack_range(self, walk_f2, f2):
        c1 = harnack_constant(walk_f2)
        g = f2.word("aB")
        for cyc in ("a", "b", "ab"):
            est = martin_kernel(walk_f2, g, BoundaryPoint.periodic(f2.word(cyc)))
            bound = c1 ** g.word_length()
            assert 1 / bound <= est.value <= bound

    def test_radon_nikodym_alias(self, walk_f2, f2):
        xi = BoundaryPoint.periodic(f2.word("b"))
        assert radon_nikodym(walk_f2, f2.identity(), xi) == 1.0
        val = radon_nikodym(walk_f2, f2.word("a"), xi)
        assert val == pytest.approx(1 / 3, rel=1e-6)


class TestRatioInvariant:
    def test_paper_values(self, walk_f2, f2):
        r_a = ratio_invariant(walk_f2, f2.word("a"))
        r_ab = ratio_invariant(walk_f2, f2.word("ab"))
        assert r_a.value == pytest.approx(1 / 3, rel=0.01)
        assert r_ab.value == pytest.approx(1 / 9, rel=0.02)

    def test_class_function(self, walk_f2, f2):
        conj = ratio_invariant(walk_f2, f2.word("abA"))
        base = ratio_invariant(walk_f2, f2.word("b"))
        assert conj.value == pytest.approx(base.value, rel=0.02)

    def test_powers(self, walk_f2, f2):
        r = ratio_invariant(walk_f2, f2.word("a")).value
        for k in (2, 3, 4):
            rk = ratio_invariant(walk_f2, f2.word("a") ** k).value
            assert rk == pytest.approx(r**k, rel=0.02 * k)

    def test_symmetric_inverse(self, walk_f2, f2):
        g = f2.word("ab")
        assert ratio_invariant(walk_f2, g).value == pytest.approx(
            ratio_invariant(walk_f2, g.inverse()).value, rel=1e-6
        )

    def test_strictly_below_one(self, walk_f2, walk_z23, f2, z23):
        for walk, word in ((walk_f2, "a"), (walk_f2, "aBa"), (walk_z23, "st")):
            rv = ratio_invariant(walk, walk.model.word(word))
            assert rv.value < 1.0

    def test_finite_order_short_circuit(self, walk_z23, z23):
        rv = ratio_invariant(walk_z23, z23.word("s"))
        assert rv.finite_order and rv.value == 1.0

    def test_root_sequence_is_lower_bound(self, walk_f2, f2):
        rv = ratio_invariant(walk_f2, f2.word("ab"))
        assert max(rv.root_sequence) <= rv.value * (1 + 1e-6)
        assert rv.root_bound_ok

    def test_class_function_product_model(self, walk_z23, z23):
        # s(st)s^-1 = ts for the order-2 generator s.
        r1 = ratio_invariant(walk_z23, z23.word("st"))
        r2 = ratio_invariant(walk_z23, z23.word("ts"))
        assert r1.value == pytest.approx(r2.value, rel=0.02)


class TestHoelder:
    def test_equal_points_zero(self, walk_f2, f2):
        xi = BoundaryPoint.periodic(f2.word("ab"))
        rep = hoelder_probe(walk_f2, f2.word("a"), [(xi, xi)])
        assert rep.pairs[0].difference == 0.0
        assert rep.pairs[0].exact_zero

    @pytest.mark.parametrize("gword", ["a", "ab"])
    def test_tree_local_constancy(self, walk_f2, f2, gword):
        from hypwalk.report import _diverging_point

        g = f2.word(gword)
        axis = BoundaryPoint.periodic(f2.word("ab"))
        pairs = []
        for j in range(g.word_length() + 2, g.word_length() + 6):
            pairs.append((axis, _diverging_point(f2, axis, j)))
        rep = hoelder_probe(walk_f2, g, pairs)
        for pair in rep.pairs:
            assert pair.product >= g.word_length() + 2
            assert pair.difference <= 1e-6

    def test_product_model_negative_slope(self, walk_z23, z23):
        from hypwalk.report import _hoelder_pairs

        g = z23.word("st") ** 3
        pairs = _hoelder_pairs(z23, g.word_length())
        rep = hoelder_probe(walk_z23, g, pairs)
        live = [p for p in rep.pairs if not p.exact_zero]
        assert len(live) >= 3
        assert rep.slope < 0


class TestLivschitz:
    def test_angles_converge_on_lattice(self, walk_f2, f2):
        xi = BoundaryPoint.periodic(f2.word("b"))
        rep = livschitz_coboundary(
            walk_f2, f2.word("a"), xi, T=2 * math.pi / math.log(3)
        )
        assert rep.converged
        # every theta is a multiple of 2 pi up to kernel error
        for theta in rep.thetas:
            assert min(theta, 2 * math.pi - theta) <= 1e-2
        assert all(d <= 1e-2 for d in rep.step_distances)

    def test_finite_order_rejected(self, walk_z23, z23):
        xi = BoundaryPoint.periodic(z23.word("st"))
        with pytest.raises(ValidationError):
            livschitz_coboundary(walk_z23, z23.word("s"), xi, T=1.0)

    def test_too_close_to_repelling_point(self, walk_f2, f2):
        a = f2.word("a")
        near_minus = BoundaryPoint(head=a.inverse() ** 9, cycle=f2.word("B"))
        with pytest.raises(ValidationError):
            livschitz_coboundary(walk_f2, a, near_minus, T=1.0)

    def test_lattice_match_bounds_steps(self, walk_f2, f2):
        # On the matched lattice the step distances collapse to the
        # numerical floor: the geometric bound holds with a tiny constant.
        xi = BoundaryPoint.periodic(f2.word("b"))
        rep = livschitz_coboundary(
            walk_f2, f2.word("a"), xi, T=2 * math.pi / math.log(3)
        )
        assert max(rep.step_distances) <= 1e-6

    def test_mismatched_period_does_not_converge(self, walk_f2, f2):
        # With an unmatched winding speed the angles rotate by a fixed
        # amount each step and the diagnostics must say so.
        xi = BoundaryPoint.periodic(f2.word("b"))
        rep = livschitz_coboundary(walk_f2, f2.word("a"), xi, T=1.0, converge_tol=1e-2)
        assert not rep.converged
        for d in rep.step_distances:
            assert d == pytest.approx(math.log(3), abs=1e-3)
