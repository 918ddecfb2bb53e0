import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pbtlab.meanfield import (
    MASS_TOL,
    DensityGrid,
    PdeConfig,
    apply_mutation,
    apply_selection,
    equilibrium_residual,
    moments,
    replicator_consistency,
    replicator_rhs,
    second_moment,
    step_averaged,
    step_replicator,
)


def gaussian_bump(center=0.0, width=0.5):
    def density(x):
        x = np.asarray(x)[..., 0]
        return np.exp(-0.5 * ((x - center) / width) ** 2)

    return density


class TestDensityGrid:
    def test_uniform_total_mass(self):
        g = DensityGrid.uniform([-1.0], [1.0], 100)
        assert g.mass.sum() == pytest.approx(1.0)
        assert g.cell_widths[0] == pytest.approx(0.02)

    def test_axis_centers(self):
        g = DensityGrid.uniform([0.0], [1.0], 4)
        np.testing.assert_allclose(g.axis_centers(0), [0.125, 0.375, 0.625, 0.875])

    def test_2d_centers_shape(self):
        g = DensityGrid.uniform([0.0, 0.0], [1.0, 2.0], [4, 8])
        assert g.centers().shape == (4, 8, 2)

    def test_point_mass(self):
        g = DensityGrid.point_mass([-1.0], [1.0], 10, at=[0.31])
        assert g.mass.sum() == pytest.approx(1.0)
        assert np.count_nonzero(g.mass) == 1
        assert g.mass[6] == pytest.approx(1.0)  # cell [0.2, 0.4)

    def test_from_density_normalizes(self):
        g = DensityGrid.from_density([-3.0], [3.0], 200, gaussian_bump())
        assert g.mass.sum() == pytest.approx(1.0)

    def test_negative_mass_rejected(self):
        with pytest.raises(ValueError):
            DensityGrid([-1.0], [1.0], np.array([1.5, -0.5]))

    def test_unnormalized_mass_rejected(self):
        with pytest.raises(ValueError):
            DensityGrid([-1.0], [1.0], np.full(10, 0.2))

    def test_rank_mismatch_rejected(self):
        with pytest.raises(ValueError):
            DensityGrid([-1.0, -1.0], [1.0, 1.0], np.full(10, 0.1))

    def test_2d_size_cap(self):
        with pytest.raises(ValueError, match="512"):
            DensityGrid.uniform([0.0, 0.0], [1.0, 1.0], [600, 600])

    def test_boundary_mass(self):
        g = DensityGrid.uniform([0.0], [1.0], 10)
        assert g.boundary_mass() == pytest.approx(0.2)


class TestSelection:
    def test_reweights_toward_high_fitness(self):
        g = DensityGrid.uniform([-1.0], [1.0], 100)
        out = apply_selection(g, lambda x: -np.asarray(x)[..., 0] ** 2, alpha=50.0)
        assert out.mass.sum() == pytest.approx(1.0)
        m, _ = moments(out)
        assert abs(m[0]) < 0.01
        assert out.mass[50] > g.mass[50]

    def test_alpha_zero_is_identity(self):
        g = DensityGrid.from_density([-2.0], [2.0], 50, gaussian_bump(0.3))
        out = apply_selection(g, lambda x: np.asarray(x)[..., 0], alpha=0.0)
        np.testing.assert_allclose(out.mass, g.mass)

    def test_fbar_as_array(self):
        g = DensityGrid.uniform([-1.0], [1.0], 20)
        f = np.linspace(0, 1, 20)
        out = apply_selection(g, f, alpha=1.0)
        assert out.mass.sum() == pytest.approx(1.0)
        assert out.mass[-1] > out.mass[0]

    def test_fbar_array_shape_mismatch(self):
        g = DensityGrid.uniform([-1.0], [1.0], 20)
        with pytest.raises(ValueError):
            apply_selection(g, np.zeros(19), alpha=1.0)

    def test_non_finite_fbar_rejected(self):
        g = DensityGrid.uniform([-1.0], [1.0], 20)
        with pytest.raises(ValueError):
            apply_selection(g, lambda x: np.full(np.asarray(x).shape[:-1], np.inf), alpha=1.0)


class TestMutation:
    def test_mass_conserved_1d(self):
        g = DensityGrid.point_mass([-3.0], [3.0], 300, at=[0.0])
        out = apply_mutation(g, sigma=0.2)
        assert abs(out.mass.sum() - 1.0) <= MASS_TOL

    def test_mass_conserved_2d(self):
        g = DensityGrid.point_mass([-2.0, -2.0], [2.0, 2.0], [80, 80], at=[0.5, -0.5])
        out = apply_mutation(g, sigma=0.3)
        assert abs(out.mass.sum() - 1.0) <= MASS_TOL

    def test_point_mass_spreads_to_gaussian(self):
        g = DensityGrid.point_mass([-3.0], [3.0], 600, at=[0.0])
        source = g.axis_centers(0)[np.argmax(g.mass)]
        out = apply_mutation(g, sigma=0.25)
        c = g.axis_centers(0)
        mean = float((out.mass * c).sum())
        var = float((out.mass * (c - mean) ** 2).sum())
        assert mean == pytest.approx(source, abs=1e-10)
        assert var == pytest.approx(0.25 ** 2, rel=0.01)

    def test_sigma_zero_identity(self):
        g = DensityGrid.from_density([-2.0], [2.0], 100, gaussian_bump())
        out = apply_mutation(g, sigma=0.0)
        np.testing.assert_array_equal(out.mass, g.mass)

    def test_negative_sigma_rejected(self):
        g = DensityGrid.uniform([-1.0], [1.0], 10)
        with pytest.raises(ValueError):
            apply_mutation(g, sigma=-0.1)

    def test_boundary_renormalization_keeps_mass(self):
        # mass near the edge would leak without column renormalization
        g = DensityGrid.point_mass([-1.0], [1.0], 100, at=[-0.99])
        out = apply_mutation(g, sigma=0.5)
        assert abs(out.mass.sum() - 1.0) <= MASS_TOL
        assert np.all(out.mass >= 0)


class TestStepAveraged:
    def _cfg(self, **kw):
        defaults = dict(dt=0.1, sigma=0.05, alpha=10.0, fbar=lambda x: -(np.asarray(x)[..., 0] - 0.3) ** 2)
        defaults.update(kw)
        return PdeConfig(**defaults)

    def test_mass_and_nonnegativity_preserved(self):
        g = DensityGrid.uniform([-3.0], [3.0], 300)
        cfg = self._cfg()
        for _ in range(50):
            g = step_averaged(g, cfg)
            assert abs(g.mass.sum() - 1.0) <= MASS_TOL
            assert np.all(g.mass >= 0)

    def test_dt_above_one_rejected(self):
        g = DensityGrid.uniform([-1.0], [1.0], 50)
        with pytest.raises(ValueError):
            step_averaged(g, self._cfg(dt=1.5))

    def test_mean_moves_toward_fitness_peak(self):
        g = DensityGrid.uniform([-3.0], [3.0], 300)
        cfg = self._cfg(alpha=100.0)
        m0, _ = moments(g)
        for _ in range(200):
            g = step_averaged(g, cfg)
        m, _ = moments(g)
        assert abs(m[0] - 0.3) < abs(m0[0] - 0.3)
        assert abs(m[0] - 0.3) < 0.05

    def test_2d_step(self):
        g = DensityGrid.uniform([-1.0, -1.0], [1.0, 1.0], [40, 40])
        cfg = self._cfg(fbar=lambda x: -np.sum(np.asarray(x) ** 2, axis=-1))
        out = step_averaged(g, cfg)
        assert abs(out.mass.sum() - 1.0) <= MASS_TOL


class TestStepReplicator:
    def _cfg(self, **kw):
        defaults = dict(
            dt=0.001, sigma=0.05, alpha=1.0, scheme="replicator_mutator",
            fbar=lambda x: -(np.asarray(x)[..., 0]) ** 2,
        )
        defaults.update(kw)
        return PdeConfig(**defaults)

    def test_mass_conserved(self):
        g = DensityGrid.from_density([-2.0], [2.0], 200, gaussian_bump(0.5))
        cfg = self._cfg()
        for _ in range(100):
            g = step_replicator(g, cfg)
        assert g.mass.sum() == pytest.approx(1.0)

    def test_stability_guard(self):
        g = DensityGrid.uniform([-1.0], [1.0], 400)  # width 0.005
        with pytest.raises(ValueError, match="stability"):
            step_replicator(g, self._cfg(dt=0.1, sigma=0.5))

    def test_rhs_integrates_to_zero(self):
        g = DensityGrid.from_density([-2.0], [2.0], 150, gaussian_bump(0.2))
        rhs = replicator_rhs(g, lambda x: np.sin(np.asarray(x)[..., 0]), sigma=0.1)
        assert abs(rhs.sum()) < 1e-12

    def test_pure_diffusion_spreads(self):
        g = DensityGrid.point_mass([-2.0], [2.0], 200, at=[0.0])
        cfg = self._cfg(fbar=lambda x: np.zeros(np.asarray(x).shape[:-1]), sigma=0.1, dt=0.0001)
        _, e0 = moments(g)
        for _ in range(200):
            g = step_replicator(g, cfg)
        _, e1 = moments(g)
        assert e1 > e0


class TestMoments:
    def test_uniform_moments(self):
        g = DensityGrid.uniform([-1.0], [1.0], 2000)
        mean, energy = moments(g)
        assert abs(mean[0]) < 1e-12
        assert energy == pytest.approx(1.0 / 6.0, rel=1e-4)
        assert second_moment(g) == pytest.approx(1.0 / 3.0, rel=1e-4)

    def test_energy_is_half_second_moment(self):
        g = DensityGrid.from_density([-2.0], [2.0], 100, gaussian_bump(0.7))
        _, energy = moments(g)
        assert second_moment(g) == pytest.approx(2.0 * energy)


class TestEquilibriumResidual:
    def test_zero_for_consistent_gaussian(self):
        # For quadratic fitness -a h^2 the jump-equilibrium is the Gaussian
        # whose selection contraction is exactly undone by the mutation
        # variance: var = var_g + sigma^2 with var_g = var / (1 + 2 a alpha var).
        sigma, alpha, a = 0.05, 100.0, 0.5
        # solve var - var/(1+2 a alpha var) = sigma^2
        from scipy.optimize import brentq

        def gap(v):
            return v - v / (1.0 + 2.0 * a * alpha * v) - sigma ** 2

        var = brentq(gap, 1e-8, 1.0)
        g = DensityGrid.from_density(
            [-3.0], [3.0], 600, lambda x: np.exp(-0.5 * np.asarray(x)[..., 0] ** 2 / var)
        )
        cfg = PdeConfig(dt=0.05, sigma=sigma, alpha=alpha, fbar=lambda x: -a * np.asarray(x)[..., 0] ** 2)
        r_mean, r_energy = equilibrium_residual(g, cfg)
        w = g.cell_widths[0]
        assert r_mean < w
        assert r_energy < w

    def test_nonzero_far_from_equilibrium(self):
        g = DensityGrid.uniform([-3.0], [3.0], 600)
        cfg = PdeConfig(dt=0.05, sigma=0.05, alpha=100.0, fbar=lambda x: -(np.asarray(x)[..., 0] - 0.3) ** 2)
        r_mean, r_energy = equilibrium_residual(g, cfg)
        assert r_energy > 0.1


class TestReplicatorConsistency:
    def test_residual_linear_in_nu(self):
        g = DensityGrid.from_density([-3.0], [3.0], 400, gaussian_bump(0.0, 0.8))
        cfg = PdeConfig(
            dt=0.01, sigma=0.5, alpha=1.0, scheme="replicator_mutator",
            fbar=lambda x: -(np.asarray(x)[..., 0] - 0.3) ** 2,
        )
        res = [replicator_consistency(g, cfg, nu) for nu in (0.1, 0.05, 0.025)]
        for a, b in zip(res, res[1:]):
            assert 1.5 <= a / b <= 3.0

    def test_invalid_nu(self):
        g = DensityGrid.uniform([-1.0], [1.0], 50)
        cfg = PdeConfig(dt=0.01, sigma=0.1, alpha=1.0, fbar=lambda x: np.zeros(np.asarray(x).shape[:-1]))
        with pytest.raises(ValueError):
            replicator_consistency(g, cfg, 0.0)


@given(st.integers(10, 200), st.floats(0.02, 0.5))
@settings(max_examples=25, deadline=None)
def test_mutation_mass_conservation_property(cells, sigma):
    g = DensityGrid.from_density([-2.0], [2.0], cells, gaussian_bump(0.3, 0.4))
    out = apply_mutation(g, sigma)
    assert abs(out.mass.sum() - 1.0) <= MASS_TOL
    assert np.all(out.mass >= 0)


def test_pde_config_validation():
    with pytest.raises(ValueError):
        PdeConfig(dt=0.0, sigma=0.1, alpha=1.0, fbar=lambda x: x)
    with pytest.raises(ValueError):
        PdeConfig(dt=0.1, sigma=0.1, alpha=1.0, fbar=lambda x: x, scheme="spectral")
