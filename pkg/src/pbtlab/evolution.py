"""Selection-mutation jump operators for the population interaction step."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Population, SearchBox, project


@dataclass(frozen=True)
class SelectionRule:
    """How jump targets (and, for worst-replacement, victims) are chosen.

    variant: "softmax" (copy weights ~ exp(alpha * F)), "truncation"
    (top-fraction replaces bottom-fraction, synchronous), or
    "worst_replacement" (softmax copy weights, victims ~ exp(-alpha * F)).
    """

    variant: str = "softmax"
    alpha: float = 1.0
    fraction: float = 0.2

    def __post_init__(self):
        if self.variant not in ("softmax", "truncation", "worst_replacement"):
            raise ValueError(f"unknown selection variant {self.variant!r}")
        if self.variant in ("softmax", "worst_replacement") and self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.variant == "truncation" and not (0.0 < self.fraction <= 0.5):
            raise ValueError("truncation fraction must lie in (0, 0.5]")


@dataclass(frozen=True)
class MutationConfig:
    """Gaussian hyperparameter mutation, optionally in box-normalized coordinates."""

    sigma: float = 0.1
    box: Optional[SearchBox] = None
    scale_to_unit: bool = False

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.scale_to_unit and self.box is None:
            raise ValueError("scale_to_unit requires a search box")


def softmax_weights(fitness: np.ndarray, alpha: float) -> np.ndarray:
    """Overflow-safe softmax of alpha * fitness."""
    z = alpha * np.asarray(fitness, dtype=float)
    z = z - np.max(z)
    w = np.exp(z)
    return w / w.sum()


def _top_indices(fitness: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k highest-fitness agents, ties broken by lower index."""
    order = np.lexsort((np.arange(len(fitness)), -np.asarray(fitness, dtype=float)))
    return order[:k]


def selection_weights(fitness: np.ndarray, rule: SelectionRule) -> np.ndarray:
    """Copy-probability vector over the population; nonnegative, sums to 1."""
    fitness = np.asarray(fitness, dtype=float)
    if fitness.size == 0:
        raise ValueError("empty population")
    if np.any(np.isnan(fitness)):
        raise ValueError("NaN fitness values")
    if rule.variant in ("softmax", "worst_replacement"):
        return softmax_weights(fitness, rule.alpha)
    k = int(np.ceil(rule.fraction * fitness.size))
    w = np.zeros(fitness.size)
    w[_top_indices(fitness, k)] = 1.0 / k
    return w


def mutate_h(h: np.ndarray, mut: MutationConfig, rng: np.random.Generator) -> np.ndarray:
    """Add N(0, sigma^2 I) noise to rows of h, respecting the configured box."""
    h = np.atleast_2d(np.asarray(h, dtype=float))
    noise = mut.sigma * rng.standard_normal(h.shape)
    if mut.scale_to_unit:
        u = mut.box.to_unit(h) + noise
        return mut.box.from_unit(np.clip(u, -1.0, 1.0))
    h_new = h + noise
    if mut.box is not None:
        h_new = project(h_new, mut.box)
    return h_new


@dataclass
class GeneticUpdateResult:
    population: Population
    replaced: np.ndarray  # boolean mask of replaced agents
    sources: np.ndarray  # source index per agent (self where not replaced)


def genetic_update(
    pop: Population,
    fitness: np.ndarray,
    rule: SelectionRule,
    mut: MutationConfig,
    tau: float,
    rng: np.random.Generator,
) -> GeneticUpdateResult:
    """One selection-mutation jump: copy theta, copy-and-perturb h.

    Softmax / worst-replacement: each agent independently jumps with
    probability tau to a source drawn from the copy weights; under
    worst-replacement the set of jumping agents is drawn with probabilities
    proportional to exp(-alpha * F) instead of Bernoulli(tau) per agent being
    uniform over agents. Truncation: deterministic synchronous exploit, the
    bottom-k agents are replaced by the top-k rank-paired; tau is ignored.
    Population size is always preserved.
    """
    fitness = np.asarray(fitness, dtype=float)
    n = pop.size
    if fitness.shape[0] != n:
        raise ValueError("fitness vector not aligned with population")
    if not (0.0 < tau <= 1.0) and rule.variant != "truncation":
        raise ValueError("tau must lie in (0, 1]")

    theta = pop.theta.copy()
    h = pop.h.copy()
    sources = np.arange(n)
    replaced = np.zeros(n, dtype=bool)

    if rule.variant == "truncation":
        k = int(np.ceil(rule.fraction * n))
        top = _top_indices(fitness, k)  # best first
        victims = _top_indices(-fitness, k)  # worst first
        # rank-paired: worst <- best, second-worst <- second-best, ...
        sources[victims] = top
        replaced[victims] = True
    else:
        weights = selection_weights(fitness, rule)
        jump = rng.random(n) < tau
        if rule.variant == "worst_replacement":
            # victim eligibility biased toward the least fit
            victim_w = softmax_weights(-fitness, rule.alpha)
            n_jumps = int(jump.sum())
            victims = rng.choice(n, size=n_jumps, replace=False, p=victim_w) if n_jumps else np.array([], dtype=int)
            jump = np.zeros(n, dtype=bool)
            jump[victims] = True
        idx = np.flatnonzero(jump)
        if idx.size:
            sources[idx] = rng.choice(n, size=idx.size, replace=True, p=weights)
            replaced[idx] = True

    if replaced.any():
        src = sources[replaced]
        theta[replaced] = pop.theta[src]
        h[replaced] = mutate_h(pop.h[src], mut, rng)

    return GeneticUpdateResult(Population(theta, h, pop.ids.copy()), replaced, sources)
