"""Grid solver for the averaged hyperparameter PDE and its replicator-mutator limit.

The state is per-cell probability *mass* on a regular grid, so every operator
is a stochastic-matrix application and mass conservation is exact by
construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

MASS_TOL = 1e-10
NEG_TOL = -1e-14


class DensityGrid:
    """Discretized probability density on a bounded 1D interval or 2D box.

    Cells are regular; ``mass`` holds per-cell probability mass (not density)
    with shape (n,) in 1D or (n0, n1) in 2D.
    """

    def __init__(self, lower, upper, mass: np.ndarray):
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(upper, dtype=float))
        self.mass = np.asarray(mass, dtype=float)
        if self.mass.ndim != self.lower.shape[0]:
            raise ValueError("mass array rank must match domain dimension")
        if self.mass.ndim not in (1, 2):
            raise ValueError("only 1D and 2D grids are supported")
        if self.mass.ndim == 2 and self.mass.size > 512 ** 2:
            raise ValueError("2D grids are limited to 512^2 cells")
        self._check()

    def _check(self):
        if np.any(self.mass < NEG_TOL):
            raise ValueError("negative cell mass beyond tolerance")
        np.clip(self.mass, 0.0, None, out=self.mass)
        total = self.mass.sum()
        if abs(total - 1.0) > 1e-8:
            raise ValueError(f"total mass {total} deviates from 1")

    @property
    def ndim(self) -> int:
        return self.mass.ndim

    @property
    def shape(self) -> tuple:
        return self.mass.shape

    @property
    def cell_widths(self) -> np.ndarray:
        return (self.upper - self.lower) / np.asarray(self.shape)

    def axis_centers(self, axis: int) -> np.ndarray:
        n = self.shape[axis]
        w = self.cell_widths[axis]
        return self.lower[axis] + (np.arange(n) + 0.5) * w

    def centers(self) -> np.ndarray:
        """Cell-center coordinates, shape (*grid_shape, ndim)."""
        axes = [self.axis_centers(a) for a in range(self.ndim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def copy(self) -> "DensityGrid":
        return DensityGrid(self.lower, self.upper, self.mass.copy())

    def with_mass(self, mass: np.ndarray) -> "DensityGrid":
        return DensityGrid(self.lower, self.upper, mass)

    def boundary_mass(self) -> float:
        """Mass sitting in the outermost layer of cells."""
        m = self.mass
        if self.ndim == 1:
            return float(m[0] + m[-1])
        interior = m[1:-1, 1:-1].sum()
        return float(m.sum() - interior)

    @classmethod
    def uniform(cls, lower, upper, cells) -> "DensityGrid":
        shape = tuple(np.atleast_1d(cells).astype(int))
        mass = np.full(shape, 1.0 / np.prod(shape))
        return cls(lower, upper, mass)

    @classmethod
    def from_density(cls, lower, upper, cells, density: Callable) -> "DensityGrid":
        grid = cls.uniform(lower, upper, cells)
        vals = np.asarray(density(grid.centers()), dtype=float)
        vals = np.clip(vals, 0.0, None)
        return grid.with_mass(vals / vals.sum())

    @classmethod
    def point_mass(cls, lower, upper, cells, at) -> "DensityGrid":
        grid = cls.uniform(lower, upper, cells)
        mass = np.zeros(grid.shape)
        at = np.atleast_1d(np.asarray(at, dtype=float))
        idx = tuple(
            int(np.clip((at[a] - grid.lower[a]) // grid.cell_widths[a], 0, grid.shape[a] - 1))
            for a in range(grid.ndim)
        )
        mass[idx] = 1.0
        return grid.with_mass(mass)


@dataclass
class PdeConfig:
    dt: float
    sigma: float
    alpha: float
    fbar: Callable[[np.ndarray], np.ndarray]
    scheme: str = "selection_mutation"
    nu: float = 1.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.scheme not in ("selection_mutation", "replicator_mutator"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


def _fbar_on_grid(grid: DensityGrid, fbar) -> np.ndarray:
    if callable(fbar):
        return np.asarray(fbar(grid.centers()), dtype=float)
    vals = np.asarray(fbar, dtype=float)
    if vals.shape != grid.shape:
        raise ValueError("fbar array shape must match the grid")
    return vals


def apply_selection(grid: DensityGrid, fbar, alpha: float) -> DensityGrid:
    """Reweight cell masses by exp(alpha * Fbar), exactly renormalized."""
    f = _fbar_on_grid(grid, fbar)
    if not np.all(np.isfinite(f)):
        raise ValueError("non-finite effective fitness on grid")
    w = np.exp(alpha * (f - np.max(f)))
    mass = grid.mass * w
    total = mass.sum()
    if total <= 0:
        raise ValueError("selection annihilated all mass")
    return grid.with_mass(mass / total)


def _mutation_matrix(centers: np.ndarray, sigma: float) -> np.ndarray:
    """Column-stochastic Gaussian transition matrix along one axis.

    Kernel truncated at 6 sigma; each column renormalized so mass leaving the
    domain is reflected back onto the retained targets.
    """
    diff = centers[:, None] - centers[None, :]
    kernel = np.exp(-0.5 * (diff / sigma) ** 2)
    kernel[np.abs(diff) > 6.0 * sigma] = 0.0
    return kernel / kernel.sum(axis=0, keepdims=True)


def apply_mutation(grid: DensityGrid, sigma: float) -> DensityGrid:
    """Convolve with the (truncated, boundary-renormalized) Gaussian kernel.

    2D grids use separability: one column-stochastic 1D pass per axis.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return grid.copy()
    mass = grid.mass
    for axis in range(grid.ndim):
        T = _mutation_matrix(grid.axis_centers(axis), sigma)
        mass = np.moveaxis(np.tensordot(T, mass, axes=([1], [axis])), 0, axis)
    return grid.with_mass(mass)


def step_averaged(grid: DensityGrid, cfg: PdeConfig) -> DensityGrid:
    """Forward-Euler step of the jump operator: rho' = rho + dt (K*G[rho] - rho).

    A convex combination for dt <= 1, so nonnegativity and unit mass are
    preserved without any correction.
    """
    if cfg.dt > 1:
        raise ValueError("dt must be <= 1 for the jump operator")
    target = apply_mutation(apply_selection(grid, cfg.fbar, cfg.alpha), cfg.sigma)
    mass = (1.0 - cfg.dt) * grid.mass + cfg.dt * target.mass
    return grid.with_mass(mass)


def _laplacian_zero_flux(mass: np.ndarray, widths: np.ndarray) -> np.ndarray:
    """Centered second differences with reflecting (zero-flux) boundary."""
    out = np.zeros_like(mass)
    for axis in range(mass.ndim):
        padded = np.concatenate(
            [
                np.take(mass, [0], axis=axis),
                mass,
                np.take(mass, [-1], axis=axis),
            ],
            axis=axis,
        )
        n = mass.shape[axis]
        up = np.take(padded, range(2, n + 2), axis=axis)
        down = np.take(padded, range(0, n), axis=axis)
        out = out + (up - 2.0 * mass + down) / widths[axis] ** 2
    return out


def replicator_rhs(grid: DensityGrid, fbar, sigma: float) -> np.ndarray:
    """Right-hand side of the replicator-mutator equation, in mass units."""
    f = _fbar_on_grid(grid, fbar)
    mean_f = float((grid.mass * f).sum())
    reaction = grid.mass * (f - mean_f)
    diffusion = 0.5 * sigma ** 2 * _laplacian_zero_flux(grid.mass, grid.cell_widths)
    return reaction + diffusion


def step_replicator(grid: DensityGrid, cfg: PdeConfig) -> DensityGrid:
    """Forward-Euler step of the diffusion-reaction (replicator-mutator) PDE."""
    widths = grid.cell_widths
    stab = cfg.sigma ** 2 * cfg.dt / (2.0 * float(np.min(widths)) ** 2)
    if stab > 0.5:
        raise ValueError(f"diffusion stability violated: sigma^2 dt / (2 w^2) = {stab:.3g} > 1/2")
    mass = grid.mass + cfg.dt * replicator_rhs(grid, cfg.fbar, cfg.sigma)
    drift = abs(mass.sum() - 1.0)
    if drift > MASS_TOL:
        raise RuntimeError(f"mass drift {drift:.3e} exceeds tolerance before renormalization")
    np.clip(mass, 0.0, None, out=mass)
    return grid.with_mass(mass / mass.sum())


def moments(grid: DensityGrid) -> tuple[np.ndarray, float]:
    """Cell-center weighted mean and energy (1/2) int |h|^2 d rho."""
    c = grid.centers()
    w = grid.mass[..., None]
    mean = (w * c).reshape(-1, grid.ndim).sum(axis=0)
    energy = 0.5 * float((grid.mass * np.sum(c ** 2, axis=-1)).sum())
    return mean, energy


def second_moment(grid: DensityGrid) -> float:
    """Factor-free second moment int |h|^2 d rho."""
    c = grid.centers()
    return float((grid.mass * np.sum(c ** 2, axis=-1)).sum())


def equilibrium_residual(grid: DensityGrid, cfg: PdeConfig) -> tuple[float, float]:
    """Residuals of the stationary moment relations of the jump dynamics.

    r_mean uses the mean relation m(rho) = m(G[rho]); r_energy uses the
    factor-free second-moment relation M2(rho) = M2(G[rho]) + d_h sigma^2,
    the convention in which Gaussian mutation is exact.
    """
    reweighted = apply_selection(grid, cfg.fbar, cfg.alpha)
    mean, _ = moments(grid)
    mean_g, _ = moments(reweighted)
    r_mean = float(np.linalg.norm(mean - mean_g))
    r_energy = abs(second_moment(grid) - second_moment(reweighted) - grid.ndim * cfg.sigma ** 2)
    return r_mean, r_energy


def replicator_consistency(grid: DensityGrid, cfg: PdeConfig, nu: float) -> float:
    """Discrete L1 gap between the nu-rescaled jump operator and the replicator RHS.

    The jump operator is applied with pressure nu * Fbar and mutation
    sqrt(nu) * sigma per the slow-mutation rescaling; the result should
    vanish at rate O(nu).
    """
    if nu <= 0:
        raise ValueError("nu must be positive")
    selected = apply_selection(grid, cfg.fbar, nu)
    jumped = apply_mutation(selected, np.sqrt(nu) * cfg.sigma)
    lhs = (jumped.mass - grid.mass) / nu
    rhs = replicator_rhs(grid, cfg.fbar, cfg.sigma)
    return float(np.abs(lhs - rhs).sum())
