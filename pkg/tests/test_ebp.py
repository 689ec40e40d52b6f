import numpy as np
import pytest

from lib.channels import ChannelFamily
from lib.curve import Curve
from lib.de import ConvergenceError, DegreeDistribution
from lib.density import delta_inf, delta_zero, entropy
from lib.ebp import (
    UnsolvableError,
    bec_ebp_area,
    bec_ebp_curve,
    conditional_entropy_curve,
    curve_cuts,
    ebp_area,
    ebp_curve,
    ebp_fixed_point,
    find_s_regions,
    map_threshold_upper_bound,
    maxwell_construction,
    maxwell_threshold,
    rx_step,
)
from tests.helpers import SMALL_GRID

BEC = ChannelFamily(ChannelFamily.Kind.BEC, SMALL_GRID)
REGULAR_36 = DegreeDistribution.regular(3, 6)
CYCLE = DegreeDistribution.parse("l=x,r=x^5")
XS = np.linspace(0.0, 1.0, 2001)


class TestFixedEntropyStep:
    def test_hits_target_entropy(self):
        out, h = rx_step(REGULAR_36, BEC, 0.4, delta_zero(SMALL_GRID))
        assert h == pytest.approx(0.4, abs=1e-8)
        assert entropy(out) == pytest.approx(0.4, abs=1e-8)

    def test_out_of_reach(self):
        with pytest.raises(UnsolvableError):
            rx_step(REGULAR_36, BEC, 0.3, delta_inf(SMALL_GRID))
        with pytest.raises(ValueError):
            rx_step(REGULAR_36, BEC, 1.2, delta_zero(SMALL_GRID))

    def test_zero_entropy(self):
        out, h = rx_step(REGULAR_36, BEC, 0.0, delta_zero(SMALL_GRID))
        assert h == 0.0
        assert out.atom_inf == 1.0

    def test_bec_fixed_point(self):
        pair = ebp_fixed_point(REGULAR_36, BEC, 0.3)
        y = 1 - 0.7**5
        assert pair.converged
        assert pair.h == pytest.approx(0.3 / y**2, abs=1e-6)
        assert pair.gexit_value == pytest.approx(y**3, abs=1e-6)
        assert pair.exit_value == pytest.approx(y**3, abs=1e-6)
        assert pair.residual < 1e-6


class TestSRegions:
    def test_runs(self):
        assert find_s_regions(np.array([3.0, 2.0, 1.0, 2.0, 1.5, 3.0])) == [(0, 2), (3, 4)]
        assert find_s_regions(np.array([0.1, 0.2, 0.3])) == []

    def test_bec_curve_has_one_s_region(self):
        curve = bec_ebp_curve(REGULAR_36, XS)
        assert len(curve.s_regions) == 1
        assert np.all(curve.h <= 1.0)
        assert curve.h.min() == pytest.approx(0.4294, abs=1e-3)

    def test_cycle_code_has_none(self):
        curve = bec_ebp_curve(CYCLE, XS)
        assert curve.s_regions == []
        assert maxwell_threshold(curve) == pytest.approx(curve.h[0])


class TestAreas:
    def test_closed_form_area_is_rate(self):
        assert bec_ebp_area(REGULAR_36) == pytest.approx(0.5, abs=1e-6)
        assert bec_ebp_area(CYCLE) == pytest.approx(2 / 3, abs=1e-6)

    def test_sampled_area(self):
        # the part of the curve with h > 1 is dropped, which costs a few thousandths
        assert ebp_area(bec_ebp_curve(REGULAR_36, XS)) == pytest.approx(0.5, abs=1e-2)


class TestMaxwell:
    def test_bec_threshold(self):
        assert maxwell_threshold(bec_ebp_curve(REGULAR_36, XS)) == pytest.approx(0.48815, abs=1e-3)

    def test_construction_is_monotone(self):
        curve = bec_ebp_curve(REGULAR_36, XS)
        map_curve = maxwell_construction(curve)
        assert np.all(np.diff(map_curve.x) >= -1e-12)
        assert np.all(np.diff(map_curve.y) >= -1e-12)
        assert len(curve_cuts(curve)) == 1

    def test_first_cut_is_the_threshold(self):
        # two S-regions: the MAP estimate first jumps at the left cut
        ddp = DegreeDistribution.parse("l=(3x+3x^2+4x^13)/10,r=x^6")
        curve = bec_ebp_curve(ddp, np.linspace(0.0, 1.0, 20001))
        cuts = curve_cuts(curve)
        assert len(curve.s_regions) == 2
        assert len(cuts) == 2
        assert cuts[0].h < cuts[1].h
        assert maxwell_threshold(curve) == cuts[0].h
        assert maxwell_threshold(curve) == pytest.approx(0.4913, abs=2e-3)

    def test_conditional_entropy_ends_at_rate(self):
        map_curve = maxwell_construction(bec_ebp_curve(REGULAR_36, XS))
        assert conditional_entropy_curve(map_curve).y[-1] == pytest.approx(0.5, abs=1e-2)

    def test_conditional_entropy_integrates_from_zero(self):
        map_curve = Curve(Curve.Role.MAP, [0.0, 0.5, 0.5, 1.0], [0.0, 0.0, 1.0, 1.0])
        np.testing.assert_allclose(conditional_entropy_curve(map_curve).y, [0.0, 0.0, 0.0, 0.5])

    def test_traced_curve_on_bec(self):
        curve = ebp_curve(REGULAR_36, BEC, np.linspace(0.0, 1.0, 201), sentinels=2)
        assert len(curve.s_regions) == 1
        assert curve.diagnostics == []
        assert maxwell_threshold(curve) == pytest.approx(0.48815, abs=3e-3)


class TestMapBound:
    def test_bec(self):
        bound = map_threshold_upper_bound(REGULAR_36, BEC)
        assert bound.h_bar == pytest.approx(0.48815, abs=3e-3)
        assert bound.h_bar <= 0.5
        assert bound.entropy_bound.y[-1] == pytest.approx(0.5)

    def test_coarse_grid(self):
        with pytest.raises(ConvergenceError):
            map_threshold_upper_bound(REGULAR_36, BEC, n_points=10)


@pytest.mark.slow
class TestBscCurve:
    def test_regular(self):
        bsc = ChannelFamily(ChannelFamily.Kind.BSC)
        curve = ebp_curve(REGULAR_36, bsc, np.linspace(0.0, 1.0, 101))
        assert ebp_area(curve) == pytest.approx(0.5, abs=1e-2)
        assert len(curve.s_regions) == 1
        h_map = maxwell_threshold(curve)
        assert h_map == pytest.approx(0.472, abs=3e-3)
        assert map_threshold_upper_bound(REGULAR_36, bsc).h_bar == pytest.approx(h_map, abs=3e-3)

    def test_cycle_code(self):
        bsc = ChannelFamily(ChannelFamily.Kind.BSC)
        curve = ebp_curve(CYCLE, bsc, np.linspace(0.0, 1.0, 101))
        assert curve.s_regions == []
        assert ebp_area(curve) == pytest.approx(2 / 3, abs=1e-2)
