import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lib.channels import ChannelFamily
from lib.density import Atoms, degrade_by_bsc, entropy, error_prob
from lib.kernels import (
    BawgnForm,
    exit_kernel,
    finite_difference_gexit,
    gexit_functional,
    gexit_kernel,
    kernel_absD,
    kernel_bawgn,
    kernel_bsc,
    kernel_generic,
)
from tests.helpers import SMALL_GRID, symmetric_density

HS = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
S = np.linspace(0.0, 1.0, 201)


class TestExitKernel:
    def test_values(self):
        assert exit_kernel(0.0) == pytest.approx(1.0)
        assert exit_kernel(-30.0) == pytest.approx(30.0 / np.log(2), abs=1e-6)
        assert exit_kernel(40.0) == pytest.approx(0.0, abs=1e-15)


class TestAbsDKernel:
    @pytest.mark.parametrize("h", HS)
    def test_monotone_concave_bounded(self, family, h):
        kappa = kernel_absD(family, h, S)
        assert np.all(np.diff(kappa) <= 1e-9)
        assert np.all(np.diff(kappa, 2) <= 1e-9)
        assert np.all(kappa <= 1.0 + 1e-9)
        assert np.all(kappa >= 1.0 - S - 1e-9)

    @pytest.mark.parametrize("kind", [ChannelFamily.Kind.BSC, ChannelFamily.Kind.BAWGN])
    def test_useless_channel_limit(self, kind):
        family = ChannelFamily(kind, SMALL_GRID)
        np.testing.assert_allclose(kernel_absD(family, 0.999, S), 1.0 - S**2, atol=1e-3)
        np.testing.assert_allclose(kernel_absD(family, 1.0, S[:-1]), 1.0 - S[:-1] ** 2, atol=1e-12)

    @pytest.mark.parametrize("kind", [ChannelFamily.Kind.BSC, ChannelFamily.Kind.BAWGN])
    def test_perfect_channel_limit(self, kind):
        # the h -> 0 limit is approached only logarithmically, so check the trend towards 1
        family = ChannelFamily(kind, SMALL_GRID)
        np.testing.assert_allclose(kernel_absD(family, 0.0, S[:-1]), 1.0, atol=1e-12)
        inner = S[1:-1]
        assert np.all(kernel_absD(family, 0.001, inner) >= kernel_absD(family, 0.1, inner) - 1e-9)

    def test_bec_is_entropy(self):
        family = ChannelFamily(ChannelFamily.Kind.BEC, SMALL_GRID)
        a = symmetric_density(SMALL_GRID, 5)
        assert gexit_functional(family, 0.4, a) == pytest.approx(entropy(a), abs=1e-12)


class TestBawgnForms:
    @given(seed=st.integers(min_value=0, max_value=2**32 - 1), h=st.sampled_from([0.2, 0.5, 0.8]))
    @settings(max_examples=20, deadline=None)
    def test_forms_agree_as_functionals(self, seed, h):
        a = symmetric_density(SMALL_GRID, seed, atom_inf=0.0)
        z = SMALL_GRID.points
        values = [float(a.bins @ kernel_bawgn(h, z, form)) for form in BawgnForm]
        np.testing.assert_allclose(values, values[0], atol=1e-6)


class TestGenericKernel:
    def test_bec(self):
        family = ChannelFamily(ChannelFamily.Kind.BEC, SMALL_GRID)
        z = np.linspace(-5, 5, 11)
        np.testing.assert_allclose(kernel_generic(family, 0.4, z), exit_kernel(z), atol=1e-12)

    def test_bsc(self):
        family = ChannelFamily(ChannelFamily.Kind.BSC, SMALL_GRID)
        z = np.linspace(-10, 10, 41)
        np.testing.assert_allclose(kernel_generic(family, 0.5, z), kernel_bsc(0.5, z), atol=1e-5)

    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_bawgn(self, seed):
        # the derivative kernel and the magnetization form only agree as functionals
        family = ChannelFamily(ChannelFamily.Kind.BAWGN, SMALL_GRID)
        a = symmetric_density(SMALL_GRID, seed, atom_inf=0.0)
        z = SMALL_GRID.points
        assert float(a.bins @ kernel_generic(family, 0.5, z)) == pytest.approx(float(a.bins @ kernel_bawgn(0.5, z)), abs=1e-4)

    def test_bsc_from_grid(self):
        family = ChannelFamily(ChannelFamily.Kind.BSC)
        z = np.linspace(-5, 5, 11)
        np.testing.assert_allclose(kernel_generic(family, 0.5, z, from_grid=True), kernel_bsc(0.5, z), atol=1e-2)


class TestGexitFunctional:
    @pytest.mark.parametrize("h", [0.2, 0.5, 0.8])
    def test_is_entropy_derivative(self, h):
        # G(c_h, a) = d/dh H(c_h * a)
        family = ChannelFamily(ChannelFamily.Kind.BSC)
        a = Atoms.bsc(0.15).to_density(family.grid)
        dh = 1e-4
        fd = finite_difference_gexit(family.density(h - dh), family.density(h + dh), a)
        assert gexit_functional(family, h, a) == pytest.approx(fd, abs=1e-3)

    def test_grid_mismatch(self):
        family = ChannelFamily(ChannelFamily.Kind.BSC)
        with pytest.raises(ValueError):
            gexit_functional(family, 0.5, symmetric_density(SMALL_GRID, 1))

    def test_finite_difference_needs_a_step(self):
        a = Atoms.bsc(0.1).to_density(SMALL_GRID)
        with pytest.raises(ValueError):
            finite_difference_gexit(a, a, a)

    def test_ordering(self):
        # a degraded extrinsic density has a larger GEXIT value
        family = ChannelFamily(ChannelFamily.Kind.BSC, SMALL_GRID)
        better, worse = Atoms.bsc(0.05).to_density(SMALL_GRID), Atoms.bsc(0.2).to_density(SMALL_GRID)
        assert gexit_functional(family, 0.5, better) < gexit_functional(family, 0.5, worse)

    @given(
        seed=st.integers(min_value=0, max_value=2**32 - 1),
        kind=st.sampled_from(list(ChannelFamily.Kind)),
        h=st.sampled_from(HS),
    )
    @settings(max_examples=50, deadline=None)
    def test_between_error_prob_and_one(self, seed, kind, h):
        family = ChannelFamily(kind, SMALL_GRID)
        a = symmetric_density(SMALL_GRID, seed)
        g = gexit_functional(family, h, a)
        assert 2 * error_prob(a) - 1e-9 <= g <= 1.0 + 1e-9

    @given(
        seed=st.integers(min_value=0, max_value=2**32 - 1),
        delta=st.floats(min_value=0.01, max_value=0.5),
        kind=st.sampled_from(list(ChannelFamily.Kind)),
    )
    @settings(max_examples=50, deadline=None)
    def test_degradation_preserves_order(self, seed, delta, kind):
        family = ChannelFamily(kind, SMALL_GRID)
        a = symmetric_density(SMALL_GRID, seed)
        assert gexit_functional(family, 0.5, a) <= gexit_functional(family, 0.5, degrade_by_bsc(a, delta)) + 2e-3


class TestKernelTable:
    def test_concavity_constant(self, family):
        table = gexit_kernel(family, 0.5)
        assert table.absD[0] == pytest.approx(1.0, abs=1e-9)
        assert table.absD[-1] == 0.0
        assert table.concavity_constant > 0
