"""Inner-loop parameter training: Euler-Maruyama steps of the Langevin SDE."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Agent, ObjectiveSpec


@dataclass(frozen=True)
class LangevinConfig:
    """Time step and noise parameterization of the training SDE.

    noise_mode "direct" reads the diffusion coefficient from component
    ``noise_index`` of h (the quadratic benchmark uses h1); "temperature"
    uses the fixed isotropic coefficient sqrt(2/beta).
    """

    dt: float = 0.01
    noise_mode: str = "direct"
    noise_index: int = 1
    beta: Optional[float] = None

    def __post_init__(self):
        if self.dt < 0:
            raise ValueError("dt must be nonnegative")
        if self.noise_mode not in ("direct", "temperature"):
            raise ValueError(f"unknown noise_mode {self.noise_mode!r}")
        if self.noise_mode == "temperature":
            if self.beta is None or self.beta <= 0:
                raise ValueError("temperature mode requires beta > 0")

    def diffusion_coeff(self, h: np.ndarray) -> np.ndarray:
        """Per-agent diffusion coefficient c; shape broadcasts with theta rows."""
        if self.noise_mode == "direct":
            return np.asarray(h, dtype=float)[..., self.noise_index]
        return np.sqrt(2.0 / self.beta) * np.ones(np.asarray(h).shape[:-1])


class NonFiniteGradientError(RuntimeError):
    def __init__(self, agent_id, theta):
        super().__init__(f"non-finite gradient for agent {agent_id} at theta={theta}")
        self.agent_id = agent_id
        self.theta = theta


def langevin_step_batch(
    theta: np.ndarray,
    h: np.ndarray,
    obj: ObjectiveSpec,
    cfg: LangevinConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """One explicit Euler-Maruyama step for a batch of agents.

    theta' = theta - dt * grad_loss(theta, h) + sqrt(dt) * c * xi.
    """
    theta = np.asarray(theta, dtype=float)
    grad = obj.grad_loss(theta, h)
    if not np.all(np.isfinite(grad)):
        finite_rows = np.isfinite(grad).all(axis=-1)
        if theta.ndim > 1:
            i = int(np.argmin(finite_rows))
            raise NonFiniteGradientError(i, theta[i])
        raise NonFiniteGradientError(0, theta)
    if cfg.dt == 0:
        return theta.copy()
    c = cfg.diffusion_coeff(h)
    noise = rng.standard_normal(theta.shape)
    return theta - cfg.dt * grad + np.sqrt(cfg.dt) * np.asarray(c)[..., None] * noise


def langevin_step(
    agent: Agent, obj: ObjectiveSpec, cfg: LangevinConfig, rng: np.random.Generator
) -> Agent:
    """Single-agent Euler-Maruyama step; h is unchanged."""
    theta = langevin_step_batch(agent.theta, agent.h, obj, cfg, rng)
    return Agent(theta=theta, h=agent.h, id=agent.id)


def train_inner(
    agent: Agent,
    obj: ObjectiveSpec,
    cfg: LangevinConfig,
    steps: int,
    rng: np.random.Generator,
) -> Agent:
    """Apply ``steps`` Langevin steps to one agent."""
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    for _ in range(steps):
        agent = langevin_step(agent, obj, cfg, rng)
    return agent


def train_inner_batch(
    theta: np.ndarray,
    h: np.ndarray,
    obj: ObjectiveSpec,
    cfg: LangevinConfig,
    steps: int,
    rng: np.random.Generator,
) -> np.ndarray:
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    for _ in range(steps):
        theta = langevin_step_batch(theta, h, obj, cfg, rng)
    return theta
