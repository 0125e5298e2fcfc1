import numpy as np
import pytest

from hypwalk import (
    BoundaryPoint,
    Cylinder,
    cylinder_membership,
    estimate_measure,
    gibbs_ratio,
    radon_nikodym_check,
    uniform_walk,
)
from hypwalk.errors import ValidationError
from hypwalk.measure import _measure_from_prefixes, boundary_sample_set

from oracles import binomial_band, cone_measure


def cone(point, radius=0):
    return Cylinder.around(point, radius)


class TestMembership:
    def test_base_point_in_own_cylinder(self, f2):
        xi = BoundaryPoint.periodic(f2.word("ab"))
        for R in range(0, 4):
            assert cylinder_membership(xi, Cylinder.around(xi, R))

    def test_tree_prefix_rules(self, f2):
        ab = BoundaryPoint.periodic(f2.word("ab"))
        abab_then_b = BoundaryPoint(head=f2.word("abab"), cycle=f2.word("b"))
        b_ray = BoundaryPoint.periodic(f2.word("b"))
        assert cylinder_membership(abab_then_b, Cylinder.around(ab, 1))
        assert not cylinder_membership(b_ray, Cylinder.around(ab, 1))

    def test_sandwich_sharp_on_trees(self, f2):
        # On trees both directions of the product sandwich are exact.
        xi = BoundaryPoint.periodic(f2.word("a"))
        from hypwalk import limit_gromov

        for head, cyc in (("aa", "b"), ("aaa", "ab"), ("b", "a")):
            eta = BoundaryPoint(head=f2.word(head), cycle=f2.word(cyc))
            prod, stab = limit_gromov(xi, eta)
            assert stab
            for R in range(0, 4):
                inside = cylinder_membership(eta, Cylinder.around(xi, R))
                assert inside == (prod > R)

    def test_nesting(self, f2):
        # eta in U(xi, R + delta) implies U(xi, R + delta) subset U(eta, R);
        # delta-hat is 0 on the tree.
        xi = BoundaryPoint.periodic(f2.word("ab"))
        eta = BoundaryPoint(head=f2.word("ababab"), cycle=f2.word("a"))
        R = 2
        assert cylinder_membership(eta, Cylinder.around(xi, R))
        probes = [
            BoundaryPoint(head=f2.word("abab"), cycle=f2.word("ba")),
            BoundaryPoint(head=f2.word("ababa"), cycle=f2.word("b")),
            BoundaryPoint.periodic(f2.word("b")),
        ]
        for zeta in probes:
            if cylinder_membership(zeta, Cylinder.around(xi, R)):
                assert cylinder_membership(zeta, Cylinder.around(eta, R))

    def test_margin_floor_enforced(self, z25):
        xi = BoundaryPoint.periodic(z25.word("st"))
        with pytest.raises(ValidationError):
            Cylinder(base=xi, radius=1, margin=0)


class TestEstimateMeasure:
    N = 40_000

    def test_first_letter_cones(self, walk_f2, f2):
        xi = BoundaryPoint.periodic(f2.word("a"))
        est = estimate_measure(walk_f2, cone(xi), self.N, purpose="unit-shared")
        assert abs(est.value - 0.25) <= est.half_width
        assert est.half_width == pytest.approx(
            3 * np.sqrt(est.value * (1 - est.value) / est.n_samples)
        )

    def test_cones_partition(self, walk_f2, f2):
        total = 0.0
        for w in ("a", "A", "b", "B"):
            xi = BoundaryPoint.periodic(f2.word(w))
            est = estimate_measure(walk_f2, cone(xi), self.N, purpose="unit-shared")
            total += est.value
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_depth_two_cylinder(self, walk_f2, f2):
        # nu(U(aaa..., 2)) = cone measure at depth 3 for the tree.
        xi = BoundaryPoint.periodic(f2.word("a"))
        est = estimate_measure(walk_f2, Cylinder.around(xi, 2), self.N, purpose="unit-shared")
        target = cone_measure(2, 3)
        assert abs(est.value - target) <= est.half_width

    def test_monotone_in_radius(self, walk_f2, f2):
        xi = BoundaryPoint.periodic(f2.word("a"))
        prefixes, _ = boundary_sample_set(walk_f2, 20_000, 10, 20, 20_000, "unit-mono", 1)
        values = []
        for R in (0, 1, 2, 3):
            est = _measure_from_prefixes(
                prefixes, Cylinder.around(xi, R), f2, "unit-mono", walk_f2.seed, 0, 0.01
            )
            values.append(est.value)
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_deterministic(self, walk_f2, f2):
        xi = BoundaryPoint.periodic(f2.word("b"))
        e1 = estimate_measure(walk_f2, cone(xi), 2000, purpose="unit-det")
        e2 = estimate_measure(walk_f2, cone(xi), 2000, purpose="unit-det")
        assert e1.value == e2.value


class TestGibbs:
    def test_f2_flat_quarter(self, walk_f2, f2):
        xi = BoundaryPoint.periodic(f2.word("a"))
        rep = gibbs_ratio(walk_f2, xi, [1, 2, 3, 4], 40_000, purpose="unit-shared")
        for row in rep.rows:
            assert row.ratio_lower <= 0.25 <= row.ratio_upper
            assert row.ratio > 0
        assert rep.ratio_min > 0.2 and rep.ratio_max < 0.3

    def test_z23_envelope_finite(self, walk_z23, z23):
        xi = BoundaryPoint.periodic(z23.word("st"))
        rep = gibbs_ratio(walk_z23, xi, [1, 2, 3], 20_000, purpose="unit-gibbs-z")
        assert np.isfinite(rep.ratio_max) and rep.ratio_min > 0

    def test_radius_validation(self, walk_f2, f2):
        xi = BoundaryPoint.periodic(f2.word("a"))
        with pytest.raises(ValidationError):
            gibbs_ratio(walk_f2, xi, [0, 1], 1000)


class TestRadonNikodym:
    def test_identity_element(self, walk_f2, f2):
        xi = BoundaryPoint.periodic(f2.word("b"))
        rep = radon_nikodym_check(
            walk_f2, f2.identity(), cone(xi), 40_000, purpose="unit-shared"
        )
        assert rep.pulled_mass == rep.kernel_integral == pytest.approx(
            rep.pulled_mass
        )
        assert rep.agree

    def test_pull_into_smaller_cone(self, walk_f2, f2):
        # g = a, U = cone(b): nu(a^-1 U) = nu(cone(ab-prefix)) = 1/12 and
        # the kernel integral is (1/3) nu(U).
        rep = radon_nikodym_check(
            walk_f2, f2.word("a"), cone(BoundaryPoint.periodic(f2.word("b"))),
            40_000, purpose="unit-shared",
        )
        assert rep.agree
        assert abs(rep.pulled_mass - 1 / 12) <= rep.pulled_half
        assert abs(rep.kernel_integral - 1 / 12) <= rep.kernel_half

    def test_pull_into_larger_set(self, walk_f2, f2):
        # g = a, U = cone(a): a^-1 U covers everything except cone(A...)
        # below depth 2; the kernel integral must match the pulled mass.
        rep = radon_nikodym_check(
            walk_f2, f2.word("a"), cone(BoundaryPoint.periodic(f2.word("a"))),
            40_000, purpose="unit-shared",
        )
        assert rep.agree
        # brute cone decomposition: a^-1 cone(a) misses cone(AB), cone(Ab)
        # and cone(AA) at depth 2, keeping everything else.
        target = 1.0 - 3 * cone_measure(2, 2)
        assert abs(rep.pulled_mass - target) <= rep.pulled_half + 1e-3
