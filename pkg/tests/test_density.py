import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lib.channels import h2
from lib.density import (
    DEFAULT_GRID,
    Atoms,
    Grid,
    LDensity,
    battacharyya,
    check_convolve,
    degrade_by_bsc,
    delta_inf,
    delta_zero,
    distance,
    entropy,
    error_prob,
    from_json,
    lambda_of,
    mean_squared_soft_bit,
    mixture,
    rho_of,
    symmetrize,
    to_absD,
    to_json,
    var_convolve,
)
from tests.helpers import SMALL_GRID, symmetric_density

seeds = st.integers(min_value=0, max_value=2**32 - 1)


class TestGrid:
    def test_zero_and_pairs_on_grid(self):
        points = SMALL_GRID.points
        assert points[SMALL_GRID.half] == 0.0
        np.testing.assert_allclose(points, -points[::-1], atol=1e-12)
        assert points[0] == pytest.approx(-SMALL_GRID.l_max)

    @pytest.mark.parametrize("n_bins", [4, 512, 3])
    def test_rejects_bad_sizes(self, n_bins):
        with pytest.raises(ValueError):
            Grid(10.0, n_bins)

    def test_default(self):
        assert DEFAULT_GRID.n_bins == 4097
        assert DEFAULT_GRID.l_max == 30.0


class TestLDensity:
    def test_rejects_negative_mass(self):
        bins = np.zeros(SMALL_GRID.n_bins)
        bins[0], bins[1] = -0.5, 1.5
        with pytest.raises(ValueError):
            LDensity(SMALL_GRID, bins)

    def test_rejects_wrong_total(self):
        bins = np.zeros(SMALL_GRID.n_bins)
        bins[10] = 0.5
        with pytest.raises(ValueError):
            LDensity(SMALL_GRID, bins, 0.4)

    def test_extremes(self):
        assert entropy(delta_zero(SMALL_GRID)) == pytest.approx(1.0, abs=1e-12)
        assert entropy(delta_inf(SMALL_GRID)) == 0.0
        assert battacharyya(delta_zero(SMALL_GRID)) == pytest.approx(1.0)
        assert error_prob(delta_zero(SMALL_GRID)) == pytest.approx(0.5)
        assert error_prob(delta_inf(SMALL_GRID)) == 0.0


class TestAtoms:
    def test_bsc_entropy(self):
        assert Atoms.bsc(0.11).entropy() == pytest.approx(0.499916, abs=1e-6)
        assert Atoms.bsc(0.11).entropy() == pytest.approx(h2(0.11), abs=1e-12)

    def test_bsc_functionals(self):
        a = Atoms.bsc(0.2)
        assert a.battacharyya() == pytest.approx(np.sqrt(4 * 0.2 * 0.8))
        assert a.error_prob() == pytest.approx(0.2)

    @pytest.mark.parametrize("eps", [0.01, 0.11, 0.3, 0.45])
    def test_quantization_preserves_entropy(self, eps):
        atoms = Atoms.bsc(eps)
        d = atoms.to_density(SMALL_GRID)
        assert entropy(d) == pytest.approx(atoms.entropy(), abs=1e-9)
        assert d.is_symmetric()

    def test_convolve_bec(self):
        out = Atoms.bec(0.3).convolve(Atoms.bec(0.5))
        assert out.entropy() == pytest.approx(0.15)


class TestConvolutions:
    def test_var_bec(self):
        out = var_convolve(Atoms.bec(0.3).to_density(SMALL_GRID), Atoms.bec(0.6).to_density(SMALL_GRID))
        assert entropy(out) == pytest.approx(0.18, abs=1e-12)

    def test_check_bec(self):
        out = check_convolve(Atoms.bec(0.3).to_density(SMALL_GRID), Atoms.bec(0.6).to_density(SMALL_GRID))
        assert entropy(out) == pytest.approx(1 - 0.7 * 0.4, abs=1e-12)
        assert out.atom_inf == pytest.approx(0.7 * 0.4)

    def test_check_bsc(self):
        e1, e2 = 0.05, 0.1
        out = check_convolve(Atoms.bsc(e1).to_density(), Atoms.bsc(e2).to_density())
        assert entropy(out) == pytest.approx(h2(e1 * (1 - e2) + e2 * (1 - e1)), abs=1e-3)

    def test_bec_duality(self):
        for x in np.linspace(0.0, 1.0, 10):
            for y in np.linspace(0.0, 1.0, 10):
                a, b = Atoms.bec(x).to_density(SMALL_GRID), Atoms.bec(y).to_density(SMALL_GRID)
                assert entropy(var_convolve(a, b)) == pytest.approx(x * y, abs=1e-12)
                assert entropy(check_convolve(a, b)) == pytest.approx(1 - (1 - x) * (1 - y), abs=1e-12)

    def test_identities(self):
        a = symmetric_density(SMALL_GRID, 7)
        assert distance(var_convolve(a, delta_zero(SMALL_GRID)), a) < 1e-12
        assert distance(check_convolve(a, delta_inf(SMALL_GRID)), a) < 1e-12
        assert var_convolve(a, delta_inf(SMALL_GRID)).atom_inf == 1.0

    @given(seed=seeds)
    @settings(max_examples=20, deadline=None)
    def test_entropy_of_sum(self, seed):
        a, b = symmetric_density(SMALL_GRID, seed), symmetric_density(SMALL_GRID, seed + 1)
        x = SMALL_GRID.points
        kernel = np.logaddexp(0.0, -(x[:, None] + x[None, :])) / np.log(2)
        assert entropy(var_convolve(a, b)) == pytest.approx(float(a.bins @ kernel @ b.bins), abs=1e-8)

    @given(seed=seeds)
    @settings(max_examples=20, deadline=None)
    def test_var_convolve_stays_symmetric(self, seed):
        a, b = symmetric_density(SMALL_GRID, seed), symmetric_density(SMALL_GRID, seed + 1)
        assert var_convolve(a, b).is_symmetric()

    @given(seed=seeds)
    @settings(max_examples=10, deadline=None)
    def test_check_convolve_degrades(self, seed):
        # a check node never knows more than either input
        a, b = symmetric_density(SMALL_GRID, seed), symmetric_density(SMALL_GRID, seed + 1)
        out = entropy(check_convolve(a, b))
        assert out >= max(entropy(a), entropy(b)) - 2e-3

    def test_polynomials(self):
        a = Atoms.bec(0.4).to_density(SMALL_GRID)
        assert entropy(lambda_of(a, {3: 1.0})) == pytest.approx(0.16, abs=1e-12)
        assert entropy(rho_of(a, {3: 0.5, 4: 0.5})) == pytest.approx(0.5 * (1 - 0.36) + 0.5 * (1 - 0.216), abs=1e-12)
        with pytest.raises(ValueError):
            lambda_of(a, {0: 1.0})


class TestAlgebra:
    @given(seed=seeds)
    @settings(max_examples=20, deadline=None)
    def test_symmetrize_is_identity_on_symmetric(self, seed):
        a = symmetric_density(SMALL_GRID, seed)
        np.testing.assert_allclose(symmetrize(a).bins, a.bins, atol=1e-12)

    def test_mixture_is_linear(self):
        a, b = symmetric_density(SMALL_GRID, 1), symmetric_density(SMALL_GRID, 2)
        m = mixture([0.25, 0.75], [a, b])
        assert entropy(m) == pytest.approx(0.25 * entropy(a) + 0.75 * entropy(b), abs=1e-12)
        with pytest.raises(ValueError):
            mixture([0.5, 0.6], [a, b])

    @given(seed=seeds)
    @settings(max_examples=20, deadline=None)
    def test_soft_bit_moments_agree(self, seed):
        # E[tanh(L/2)] = E[tanh^2(L/2)] for symmetric densities
        a = symmetric_density(SMALL_GRID, seed)
        first = float(a.bins @ np.tanh(SMALL_GRID.points / 2) + a.atom_inf)
        assert mean_squared_soft_bit(a) == pytest.approx(first, abs=1e-12)

    @given(seed=seeds)
    @settings(max_examples=100, deadline=None)
    def test_error_prob_below_battacharyya(self, seed):
        a = symmetric_density(SMALL_GRID, seed)
        assert 2 * error_prob(a) <= battacharyya(a) + 1e-12
        assert battacharyya(a) <= 1.0 + 1e-12
        assert 0.0 <= entropy(a) <= 1.0

    @given(seed=seeds)
    @settings(max_examples=20, deadline=None)
    def test_functionals_grow_under_degradation(self, seed):
        # BSC(d2) is BSC(d1) followed by another BSC, so each step degrades further
        a = symmetric_density(SMALL_GRID, seed)
        for functional in (entropy, battacharyya, error_prob):
            values = [functional(degrade_by_bsc(a, d)) for d in (0.0, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5)]
            assert np.all(np.diff(values) >= -2e-3)
            assert min(values) >= values[0] - 2e-3

    def test_degrade_by_bsc(self):
        a = Atoms.bsc(0.05).to_density(SMALL_GRID)
        assert entropy(degrade_by_bsc(a, 0.1)) > entropy(a)
        assert degrade_by_bsc(a, 0.0) is a
        with pytest.raises(ValueError):
            degrade_by_bsc(a, 0.6)

    def test_abs_domain_mass(self):
        a = symmetric_density(SMALL_GRID, 3)
        d = to_absD(a)
        assert d.mass.sum() == pytest.approx(1.0)
        assert d.s[-1] == 1.0
        assert np.all(np.diff(d.s) >= 0)


class TestJson:
    def test_round_trip(self):
        a = symmetric_density(SMALL_GRID, 11)
        b = from_json(to_json(a))
        assert b.grid == a.grid
        np.testing.assert_array_equal(b.bins, a.bins)
        assert b.atom_inf == a.atom_inf

    def test_missing_field(self):
        with pytest.raises(ValueError):
            from_json('{"l_max": 20.0, "n_bins": 513}')
