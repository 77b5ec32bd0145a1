import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pluritess.intervals import MERGE_TOL, IntervalUnion


def naive_contains(bounds, x, tol=0.0):
    return any(lo - tol <= x <= hi + tol for lo, hi in bounds)


finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


@st.composite
def interval_lists(draw, max_n=6):
    n = draw(st.integers(0, max_n))
    out = []
    for _ in range(n):
        a = draw(finite)
        b = draw(finite)
        out.append((min(a, b), max(a, b)))
    return out


class TestConstruction:
    def test_empty(self):
        u = IntervalUnion.empty()
        assert len(u) == 0
        assert u.total_length() == 0.0
        assert not u.contains(0.0)

    def test_full_line(self):
        u = IntervalUnion.full_line()
        assert len(u) == 1
        assert u.contains(0.0) and u.contains(1e308)
        assert np.isinf(u.bounds[0, 0]) and np.isinf(u.bounds[0, 1])

    def test_sorted_disjoint_invariant(self):
        u = IntervalUnion([(3.0, 4.0), (0.0, 1.0)])
        assert np.all(u.bounds[:-1, 1] < u.bounds[1:, 0])
        assert u.bounds[0, 0] == 0.0

    def test_overlapping_inputs_merge(self):
        u = IntervalUnion([(0.0, 2.0), (1.0, 3.0)])
        assert len(u) == 1
        assert u.bounds[0, 0] == 0.0 and u.bounds[0, 1] == 3.0

    def test_touching_within_tol_merge(self):
        u = IntervalUnion([(0.0, 1.0), (1.0 + MERGE_TOL / 2, 2.0)])
        assert len(u) == 1

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            IntervalUnion([(np.nan, 1.0)])

    def test_rejects_inverted(self):
        with pytest.raises(ValueError):
            IntervalUnion([(2.0, 1.0)])

    def test_bounds_read_only(self):
        u = IntervalUnion([(0.0, 1.0)])
        with pytest.raises(ValueError):
            u.bounds[0, 0] = -1.0


class TestContains:
    @given(interval_lists(), finite)
    @settings(max_examples=200, deadline=None)
    def test_matches_naive(self, ivs, x):
        u = IntervalUnion(ivs)
        assert u.contains(x) == naive_contains([tuple(b) for b in u.bounds], x)

    def test_closed_endpoints(self):
        u = IntervalUnion([(0.0, 1.0)])
        assert u.contains(0.0) and u.contains(1.0)
        assert not u.contains(1.0 + 1e-9)
        assert u.contains(1.0 + 1e-9, tol=1e-8)


class TestIntersect:
    @given(interval_lists(), interval_lists())
    @settings(max_examples=200, deadline=None)
    def test_membership_oracle(self, a_ivs, b_ivs):
        a = IntervalUnion(a_ivs)
        b = IntervalUnion(b_ivs)
        c = a.intersect(b)
        # probe on a fixed grid: x in c iff x in a and x in b
        for x in np.linspace(-55, 55, 223):
            expected = a.contains(x) and b.contains(x)
            got = c.contains(x)
            if expected != got:
                # disagreements are only tolerable within merge-tol of a bound
                d = min(
                    [abs(x - v) for iv in (a, b) for pair in iv.bounds for v in pair]
                    or [np.inf]
                )
                assert d <= 10 * MERGE_TOL
        # result well-formed
        if len(c) > 1:
            assert np.all(c.bounds[:-1, 1] < c.bounds[1:, 0])

    def test_disjoint_gives_empty(self):
        a = IntervalUnion([(0.0, 1.0)])
        b = IntervalUnion([(2.0, 3.0)])
        assert len(a.intersect(b)) == 0

    def test_with_full_line_is_identity(self):
        a = IntervalUnion([(0.0, 1.0), (2.0, 5.0)])
        assert a.intersect(IntervalUnion.full_line()) == a

    def test_with_empty_is_empty(self):
        a = IntervalUnion([(0.0, 1.0)])
        assert len(a.intersect(IntervalUnion.empty())) == 0


class TestAffine:
    @given(interval_lists(max_n=4), finite.filter(lambda s: abs(s) > 1e-3), finite)
    @settings(max_examples=200, deadline=None)
    def test_image_membership(self, ivs, scale, offset):
        u = IntervalUnion(ivs)
        t = u.affine(scale, offset)
        # t = {scale*x + offset : x in u}
        for x in np.linspace(-60, 60, 41):
            s = scale * x + offset
            if u.contains(x, tol=-1e-6):  # strictly interior
                assert t.contains(s, tol=1e-3)
            if not u.contains(x, tol=1e-3):  # strictly exterior
                assert not t.contains(s, tol=-abs(scale) * 1e-3)

    def test_negative_scale_flips(self):
        u = IntervalUnion([(2.0, 4.0)])
        t = u.affine(-1.0, 0.0)  # {-x : x in [2,4]} = [-4,-2]
        assert t.bounds[0, 0] == -4.0 and t.bounds[0, 1] == -2.0


class TestGaussianMass:
    def test_full_line_mass_one(self):
        assert IntervalUnion.full_line().gaussian_mass(0.0, 1.0) == pytest.approx(1.0)

    def test_half_line(self):
        u = IntervalUnion([(0.0, np.inf)])
        assert u.gaussian_mass(0.0, 1.0) == pytest.approx(0.5, abs=1e-12)

    def test_additive_over_pieces(self, rng):
        pieces = [(-2.0, -1.0), (0.0, 0.5), (1.5, 3.0)]
        u = IntervalUnion(pieces)
        total = sum(
            IntervalUnion([p]).gaussian_mass(0.3, 1.7) for p in pieces
        )
        assert u.gaussian_mass(0.3, 1.7) == pytest.approx(total, abs=1e-14)
