"""Effective (Gibbs-averaged) fitness: estimators, penalization, Laplace bound."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import ObjectiveSpec


@dataclass(frozen=True)
class EffectiveFitnessEstimate:
    value: float
    std_error: float
    method: str  # "closed" | "monte_carlo(n)" | "time_average(m)"

    def __post_init__(self):
        if not np.isfinite(self.std_error) or self.std_error < 0:
            raise ValueError("std_error must be finite and nonnegative")


class FitnessHistory:
    """Ring buffer of the last m fitness evaluations of one agent.

    Cleared when the agent is replaced by a genetic update, since the copied
    parameters come from a different trajectory.
    """

    def __init__(self, window: int):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self._values: list[float] = []
        self._generations: list[int] = []

    def record(self, value: float, generation: int) -> None:
        self._values.append(float(value))
        self._generations.append(int(generation))
        if len(self._values) > self.window:
            self._values.pop(0)
            self._generations.pop(0)

    def clear(self) -> None:
        self._values.clear()
        self._generations.clear()

    def __len__(self) -> int:
        return len(self._values)

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self._values)


def time_avg_fitness(history: FitnessHistory) -> float:
    """Mean of the buffered fitness values; partial windows average what is there."""
    if len(history) == 0:
        raise ValueError("fitness history is empty: agent needs at least one evaluation")
    return float(history.values.mean())


def fbar_monte_carlo(
    obj: ObjectiveSpec,
    h: np.ndarray,
    n: int,
    rng: np.random.Generator,
) -> EffectiveFitnessEstimate:
    """Log-mean-exp estimate of the effective fitness over equilibrium samples.

    value = log((1/n) sum exp(F(theta_k, h))) with max-subtraction; the
    standard error comes from the delta method on the exponential scale.
    """
    if obj.equilibrium_sampler is None:
        raise ValueError(f"objective {obj.name!r} has no equilibrium sampler")
    if n < 1:
        raise ValueError("n must be >= 1")
    h = np.asarray(h, dtype=float)
    theta = obj.equilibrium_sampler(h, rng, size=n)
    f = obj.fitness(theta, h)
    m = float(np.max(f))
    e = np.exp(f - m)
    mean_e = float(e.mean())
    value = m + np.log(mean_e)
    if n > 1:
        std_error = float(e.std(ddof=1) / (np.sqrt(n) * mean_e))
    else:
        std_error = 0.0
    return EffectiveFitnessEstimate(value=value, std_error=std_error, method=f"monte_carlo({n})")


def fbar_gibbs_beta(
    obj: ObjectiveSpec,
    h: np.ndarray,
    beta: float,
    n: int = 10 ** 5,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Effective fitness under the Gibbs equilibrium exp(-beta * loss).

    Uses the objective's closed form when available, otherwise log-mean-exp
    over samples from its Gibbs sampler.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if obj.gibbs_fbar_closed is not None:
        return float(obj.gibbs_fbar_closed(h, beta))
    if obj.gibbs_sampler is None:
        raise ValueError(f"objective {obj.name!r} supports neither closed-form nor sampled Gibbs averaging")
    if rng is None:
        rng = np.random.default_rng(0)
    theta = obj.gibbs_sampler(h, beta, rng, n)
    f = obj.fitness(theta, h)
    m = float(np.max(f))
    return m + float(np.log(np.exp(f - m).mean()))


def fbar_gibbs_beta_mc(
    obj: ObjectiveSpec,
    h: np.ndarray,
    beta: float,
    n: int,
    rng: np.random.Generator,
) -> EffectiveFitnessEstimate:
    """Monte Carlo counterpart of :func:`fbar_gibbs_beta`, with a standard error."""
    if obj.gibbs_sampler is None:
        raise ValueError(f"objective {obj.name!r} has no Gibbs sampler")
    theta = obj.gibbs_sampler(h, beta, rng, n)
    f = obj.fitness(theta, h)
    m = float(np.max(f))
    e = np.exp(f - m)
    mean_e = float(e.mean())
    std_error = float(e.std(ddof=1) / (np.sqrt(n) * mean_e)) if n > 1 else 0.0
    return EffectiveFitnessEstimate(
        value=m + np.log(mean_e), std_error=std_error, method=f"monte_carlo({n})"
    )


def penalized_fitness(
    obj: ObjectiveSpec, theta: np.ndarray, h: np.ndarray, beta: float
) -> float:
    """Fitness minus beta times the loss excess over its minimum in theta."""
    if obj.loss_min is None:
        raise ValueError(f"objective {obj.name!r} has no known loss minimum")
    f = float(obj.fitness(np.asarray(theta, dtype=float), h))
    penalty = float(obj.loss(np.asarray(theta, dtype=float), h)) - float(obj.loss_min(h))
    return f - beta * penalty


def laplace_bound(
    points: np.ndarray,
    weights: Optional[np.ndarray],
    fbar: Callable[[np.ndarray], np.ndarray],
    h_star: np.ndarray,
    alpha: float,
    r: float,
    q: float,
    c_p: float,
    p: float,
    fbar_r: Optional[float] = None,
) -> tuple[float, float]:
    """Quantitative Laplace bound on a weighted empirical measure.

    lhs = |mean of the alpha-reweighted measure - h_star|;
    rhs = c_p * (q + Fbar_r)^(1/p)
          + exp(-alpha q) * E|h - h_star| / mass(B(h_star, r)).
    Fbar_r defaults to the in-sample value fbar(h_star) - min over the ball.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = points.shape[0]
    if weights is None:
        weights = np.full(n, 1.0 / n)
    else:
        weights = np.asarray(weights, dtype=float)
        weights = weights / weights.sum()
    h_star = np.atleast_1d(np.asarray(h_star, dtype=float))

    f = np.asarray(fbar(points), dtype=float)
    gw = weights * np.exp(alpha * (f - np.max(f)))
    gw = gw / gw.sum()
    mean_g = gw @ points
    lhs = float(np.linalg.norm(mean_g - h_star))

    dist = np.linalg.norm(points - h_star, axis=-1)
    ball = dist < r
    ball_mass = float(weights[ball].sum())
    if ball_mass <= 0:
        raise ValueError("no mass in B(h_star, r): bound inapplicable")
    if fbar_r is None:
        f_star = float(np.asarray(fbar(h_star[None, :]), dtype=float)[0])
        fbar_r = f_star - float(np.min(f[ball]))
    rhs = c_p * (q + fbar_r) ** (1.0 / p) + np.exp(-alpha * q) * float(weights @ dist) / ball_mass
    return lhs, float(rhs)
