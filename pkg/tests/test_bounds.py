import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lib.bounds import (
    bhattacharyya_fp_lower,
    bsc_battacharyya,
    combining_lower,
    combining_upper,
    contraction_check,
    eps_ls_23,
    eps_star_23,
    exit_lower,
    exit_upper,
    fixed_point_battacharyya_curve,
    fixed_point_rectangles,
    fp_lower_23,
    r_lower,
    r_upper,
    uniqueness_bound_23,
    uniqueness_condition,
)
from lib.channels import ChannelFamily
from lib.de import DegreeDistribution, check_step, de_step
from lib.density import Atoms, entropy
from lib.ebp import bec_ebp_curve
from tests.helpers import SMALL_GRID, symmetric_density

REGULAR_36 = DegreeDistribution.regular(3, 6)
REGULAR_23 = DegreeDistribution.regular(2, 3)
BSC = ChannelFamily(ChannelFamily.Kind.BSC, SMALL_GRID)


class TestInformationCombining:
    @pytest.mark.parametrize("x", [0.0, 0.1, 0.5, 0.9, 1.0])
    def test_check_bounds_are_ordered(self, x):
        assert r_lower(REGULAR_36, x) <= r_upper(REGULAR_36, x) + 1e-12
        assert exit_lower(REGULAR_36, x) <= exit_upper(REGULAR_36, x) + 1e-12

    def test_bsc_inputs_attain_the_lower_check_bound(self):
        a = Atoms.bsc(0.1).to_density()
        assert entropy(check_step(REGULAR_36, a)) == pytest.approx(r_lower(REGULAR_36, entropy(a)), abs=2e-3)

    @given(seed=st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=15, deadline=None)
    def test_sandwich(self, seed):
        a = symmetric_density(SMALL_GRID, seed)
        x, h = entropy(a), 0.5
        out = entropy(de_step(REGULAR_36, BSC.density(h), a))
        assert h * combining_lower(REGULAR_36, x) - 2e-3 <= out <= combining_upper(REGULAR_36, h, x) + 2e-3


class TestRectangles:
    def test_contain_bec_fixed_points(self):
        curve = bec_ebp_curve(REGULAR_36, np.linspace(0.05, 1.0, 20))
        region = fixed_point_rectangles(REGULAR_36, curve.x)
        for x, h, g in zip(curve.x, curve.h, curve.g):
            rect = region.at(x)
            assert rect.h_lo <= rect.h_hi
            assert rect.contains(h, g)

    def test_rows_and_lookup(self):
        region = fixed_point_rectangles(REGULAR_36, [0.2, 0.6], threads=2)
        assert [row[0] for row in region.rows()] == [0.2, 0.6]
        with pytest.raises(KeyError):
            region.at(0.3)


class TestBhattacharyya:
    def test_constants(self):
        assert eps_star_23() == pytest.approx(0.18759473, abs=1e-6)
        assert eps_ls_23() == pytest.approx(0.066987298, abs=1e-6)
        assert 2 * bsc_battacharyya(eps_ls_23()) == pytest.approx(1.0)
        assert fp_lower_23(eps_star_23()) == pytest.approx(uniqueness_bound_23(eps_star_23()), abs=1e-9)

    @pytest.mark.parametrize("eps", [0.05, 0.2, 0.3, 0.45])
    def test_fixed_point_lower_bound_closed_form(self, eps):
        assert bhattacharyya_fp_lower(REGULAR_23, bsc_battacharyya(eps)) == pytest.approx(fp_lower_23(eps), abs=1e-9)

    @pytest.mark.parametrize(("b", "expected"), [(0.7, True), (0.5, False)])
    def test_uniqueness_condition(self, b, expected):
        # (2,3): B * 2 (1 - b^2) < 1, i.e. b > sqrt(1 - 1 / (2B)) = 0.6124 for B = 0.8
        assert uniqueness_condition(REGULAR_23, 0.8, b) is expected

    def test_lower_bound_vanishes_on_a_perfect_channel(self):
        assert bhattacharyya_fp_lower(REGULAR_36, 0.0) == 0.0

    def test_fixed_point_curve(self):
        eps = np.array([0.02, 0.1, 0.15, 0.2, 0.3, 0.4])
        curve = fixed_point_battacharyya_curve(REGULAR_23, eps, BSC, max_iter=3000)
        np.testing.assert_allclose(curve.columns["fp_lower"], [fp_lower_23(e) for e in eps], atol=1e-9)
        np.testing.assert_allclose(curve.columns["uniqueness"], [uniqueness_bound_23(e) for e in eps], atol=1e-9)
        assert curve.y[0] == pytest.approx(0.0, abs=1e-3)
        assert np.all(curve.y >= curve.columns["fp_lower"] - 2e-3)
        above = eps >= eps_star_23()
        assert np.all(curve.columns["fp_lower"][above] >= curve.columns["uniqueness"][above] - 1e-9)


class TestContraction:
    def test_holds(self):
        a1, a2 = Atoms.bsc(0.1).to_density(SMALL_GRID), Atoms.bsc(0.2).to_density(SMALL_GRID)
        report = contraction_check(REGULAR_36, BSC, 0.3, 0.35, a1, a2)
        assert report.holds

    def test_identical_inputs(self):
        a = Atoms.bsc(0.1).to_density(SMALL_GRID)
        report = contraction_check(REGULAR_36, BSC, 0.3, 0.3, a, a)
        assert report.lhs == 0.0
        assert report.xi_measured == 0.0
