"""Domain types, benchmark objectives, and the hyperparameter search box."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


@dataclass(frozen=True)
class Agent:
    """One individual: a (parameters, hyperparameters) pair with a stable id."""

    theta: np.ndarray
    h: np.ndarray
    id: int

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))
        object.__setattr__(self, "h", np.asarray(self.h, dtype=float))


@dataclass(frozen=True)
class SearchBox:
    """Bounded box for hyperparameters, with componentwise projection."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape:
            raise ValueError("lower and upper must have the same shape")
        if not np.all(lower < upper):
            raise ValueError("componentwise lower < upper required")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def project(self, h: np.ndarray) -> np.ndarray:
        return project(h, self)

    def to_unit(self, h: np.ndarray) -> np.ndarray:
        """Affine map of the box onto (-1, 1) per component."""
        return 2.0 * (np.asarray(h, dtype=float) - self.lower) / (self.upper - self.lower) - 1.0

    def from_unit(self, u: np.ndarray) -> np.ndarray:
        return self.lower + (np.asarray(u, dtype=float) + 1.0) * (self.upper - self.lower) / 2.0


def project(h: np.ndarray, box: SearchBox) -> np.ndarray:
    """Componentwise clamp of h into [box.lower, box.upper].

    Identity on interior points, idempotent everywhere. Supports batched
    input of shape (..., d_h).
    """
    h = np.asarray(h, dtype=float)
    if h.shape[-1] != box.dim:
        raise ValueError(f"dimension mismatch: h has {h.shape[-1]} components, box has {box.dim}")
    return np.clip(h, box.lower, box.upper)


@dataclass(frozen=True)
class ObjectiveSpec:
    """Fitness/loss pair, optionally with closed-form equilibrium machinery.

    All callables are vectorized over leading axes: theta has shape
    (..., d_theta) and h has shape (..., d_h) or (d_h,).
    """

    name: str
    d_theta: int
    d_h: int
    fitness: Callable[[np.ndarray, np.ndarray], np.ndarray]
    loss: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad_loss: Callable[[np.ndarray, np.ndarray], np.ndarray]
    # theta samples from the Langevin invariant measure at fixed h
    equilibrium_sampler: Optional[Callable] = None
    # closed-form effective fitness h -> F̄(h)
    effective_fitness_closed: Optional[Callable[[np.ndarray], float]] = None
    # closed-form min_theta loss(., h), needed for the penalized fitness
    loss_min: Optional[Callable[[np.ndarray], float]] = None
    # Gibbs-measure (inverse temperature beta) machinery for the averaged fitness
    gibbs_fbar_closed: Optional[Callable[[np.ndarray, float], float]] = None
    gibbs_sampler: Optional[Callable] = None
    # fitness is maximized; objectives posed as minimization set sign=-1 at
    # the selection layer while fitness() keeps the reported convention
    selection_sign: float = 1.0

    def selection_fitness(self, theta: np.ndarray, h: np.ndarray) -> np.ndarray:
        return self.selection_sign * self.fitness(theta, h)


@dataclass
class MetricsRecord:
    """Per-generation population statistics."""

    generation: int
    sim_time: float
    fitness_q10: float
    fitness_median: float
    fitness_q90: float
    mean_h: np.ndarray
    var_h: np.ndarray
    mean_theta: Optional[np.ndarray] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.fitness_q10 <= self.fitness_median <= self.fitness_q90):
            raise ValueError("fitness quantiles must be ordered q10 <= median <= q90")


class Population:
    """Array-backed population: theta (N, d_theta), h (N, d_h), ids (N,)."""

    def __init__(self, theta: np.ndarray, h: np.ndarray, ids: Optional[np.ndarray] = None):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        h = np.atleast_2d(np.asarray(h, dtype=float))
        if theta.shape[0] != h.shape[0]:
            raise ValueError("theta and h must have the same number of rows")
        if ids is None:
            ids = np.arange(theta.shape[0])
        self.theta = theta
        self.h = h
        self.ids = np.asarray(ids, dtype=int)

    @property
    def size(self) -> int:
        return self.theta.shape[0]

    def agent(self, i: int) -> Agent:
        return Agent(theta=self.theta[i].copy(), h=self.h[i].copy(), id=int(self.ids[i]))

    def copy(self) -> "Population":
        return Population(self.theta.copy(), self.h.copy(), self.ids.copy())

    @classmethod
    def from_agents(cls, agents) -> "Population":
        return cls(
            np.stack([a.theta for a in agents]),
            np.stack([a.h for a in agents]),
            np.array([a.id for a in agents]),
        )


# ---------------------------------------------------------------------------
# Benchmark objectives
# ---------------------------------------------------------------------------

def quadratic_objective() -> ObjectiveSpec:
    """Quadratic benchmark: fitness peaks at theta=(0,0), biased loss at (h0,h0).

    Hyperparameters are h = (h0, h1): h0 biases the loss minimizer, h1 is the
    diffusion strength of the Langevin training dynamics. The invariant
    measure is Normal((h0, h0), (h1^2/4) I).
    """

    def fitness(theta, h=None):
        theta = np.asarray(theta, dtype=float)
        return 1.2 - np.sum(theta ** 2, axis=-1)

    def loss(theta, h):
        theta = np.asarray(theta, dtype=float)
        h0 = np.asarray(h, dtype=float)[..., 0]
        return -1.2 + (theta[..., 0] - h0) ** 2 + (theta[..., 1] - h0) ** 2

    def grad_loss(theta, h):
        theta = np.asarray(theta, dtype=float)
        h0 = np.asarray(h, dtype=float)[..., 0:1]
        return 2.0 * (theta - h0)

    def equilibrium_sampler(h, rng, size=None):
        h = np.asarray(h, dtype=float)
        if np.any(h[..., 1] < 0):
            raise ValueError("diffusion strength h1 must be nonnegative")
        mean = np.stack([h[..., 0], h[..., 0]], axis=-1)
        std = np.abs(h[..., 1]) / 2.0
        if size is None:
            shape = mean.shape
        else:
            shape = (size,) + mean.shape
        return mean + std[..., None] * rng.standard_normal(shape)

    def effective_fitness_closed(h):
        h = np.asarray(h, dtype=float)
        h0, h1 = h[..., 0], h[..., 1]
        denom = 1.0 + h1 ** 2 / 2.0
        return 1.2 - 2.0 * h0 ** 2 / denom - np.log(denom)

    def loss_min(h):
        return -1.2

    def gibbs_fbar_closed(h, beta):
        h0 = np.asarray(h, dtype=float)[..., 0]
        denom = 1.0 + 1.0 / beta
        return 1.2 - 2.0 * h0 ** 2 / denom - np.log(denom)

    def gibbs_sampler(h, beta, rng, size):
        # Gibbs measure exp(-beta * L) with quadratic L: Normal((h0,h0), I/(2 beta))
        h0 = float(np.asarray(h, dtype=float)[..., 0])
        std = np.sqrt(1.0 / (2.0 * beta))
        return h0 + std * rng.standard_normal((size, 2))

    return ObjectiveSpec(
        name="quadratic",
        d_theta=2,
        d_h=2,
        fitness=fitness,
        loss=loss,
        grad_loss=grad_loss,
        equilibrium_sampler=equilibrium_sampler,
        effective_fitness_closed=effective_fitness_closed,
        loss_min=loss_min,
        gibbs_fbar_closed=gibbs_fbar_closed,
        gibbs_sampler=gibbs_sampler,
    )


def himmelblau_objective() -> ObjectiveSpec:
    """Himmelblau benchmark: four global minima at value 0; selection uses -F.

    The fitness keeps the conventional (minimization) values so that logs
    report them unchanged; ``selection_sign=-1`` flips it at the selection
    layer. The biased loss shifts the minima through h0.
    """

    def fitness(theta, h=None):
        theta = np.asarray(theta, dtype=float)
        t0, t1 = theta[..., 0], theta[..., 1]
        return (t0 ** 2 + t1 - 11.0) ** 2 + (t0 + t1 ** 2 - 7.0) ** 2

    def loss(theta, h):
        theta = np.asarray(theta, dtype=float)
        h0 = np.asarray(h, dtype=float)[..., 0]
        t0, t1 = theta[..., 0], theta[..., 1]
        return ((t0 - h0) ** 2 + t1 - 11.0) ** 2 + (t0 + (t1 - h0) ** 2 - 7.0) ** 2

    def grad_loss(theta, h):
        theta = np.asarray(theta, dtype=float)
        h0 = np.asarray(h, dtype=float)[..., 0]
        t0, t1 = theta[..., 0], theta[..., 1]
        a = (t0 - h0) ** 2 + t1 - 11.0
        b = t0 + (t1 - h0) ** 2 - 7.0
        g0 = 4.0 * a * (t0 - h0) + 2.0 * b
        g1 = 2.0 * a + 4.0 * b * (t1 - h0)
        return np.stack([g0, g1], axis=-1)

    # h = (h0, h1): h0 biases the loss, h1 is the Langevin noise strength
    return ObjectiveSpec(
        name="himmelblau",
        d_theta=2,
        d_h=2,
        fitness=fitness,
        loss=loss,
        grad_loss=grad_loss,
        selection_sign=-1.0,
    )


_OBJECTIVES = {
    "quadratic": quadratic_objective,
    "himmelblau": himmelblau_objective,
}


def get_objective(name: str) -> ObjectiveSpec:
    try:
        return _OBJECTIVES[name]()
    except KeyError:
        raise ValueError(f"unknown objective {name!r}; choose from {sorted(_OBJECTIVES)}")
