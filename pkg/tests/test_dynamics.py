import numpy as np
import pytest

from pbtlab.core import Agent, ObjectiveSpec, get_objective
from pbtlab.dynamics import (
    LangevinConfig,
    NonFiniteGradientError,
    langevin_step,
    langevin_step_batch,
    train_inner,
    train_inner_batch,
)


def test_zero_noise_zero_gradient_is_fixed_point():
    obj = get_objective("quadratic")
    cfg = LangevinConfig(dt=0.01)
    agent = Agent(theta=np.array([0.5, 0.5]), h=np.array([0.5, 0.0]), id=0)
    out = langevin_step(agent, obj, cfg, np.random.default_rng(0))
    np.testing.assert_array_equal(out.theta, agent.theta)
    np.testing.assert_array_equal(out.h, agent.h)


def test_deterministic_drift_step():
    # pure gradient flow when the diffusion coefficient is zero
    obj = get_objective("quadratic")
    cfg = LangevinConfig(dt=0.01)
    agent = Agent(theta=np.array([1.0, -1.0]), h=np.array([0.0, 0.0]), id=0)
    out = langevin_step(agent, obj, cfg, np.random.default_rng(0))
    np.testing.assert_allclose(out.theta, [0.98, -0.98])


def test_dt_zero_is_identity():
    obj = get_objective("quadratic")
    cfg = LangevinConfig(dt=0.0)
    theta = np.random.default_rng(1).normal(size=(7, 2))
    h = np.random.default_rng(2).uniform(0, 1, size=(7, 2))
    out = langevin_step_batch(theta, h, obj, cfg, np.random.default_rng(3))
    np.testing.assert_array_equal(out, theta)


def test_noise_scale_statistics():
    # with zero drift (theta at the loss minimum) the increment is sqrt(dt)*c*xi
    obj = get_objective("quadratic")
    cfg = LangevinConfig(dt=0.01)
    n = 200_000
    theta = np.full((n, 2), 0.3)
    h = np.tile([0.3, 2.0], (n, 1))
    out = langevin_step_batch(theta, h, obj, cfg, np.random.default_rng(5))
    inc = out - theta
    assert abs(inc.mean()) < 5e-4
    np.testing.assert_allclose(inc.std(), np.sqrt(0.01) * 2.0, rtol=0.01)


def test_temperature_mode_coefficient():
    cfg = LangevinConfig(dt=0.01, noise_mode="temperature", beta=8.0)
    c = cfg.diffusion_coeff(np.zeros((3, 2)))
    np.testing.assert_allclose(c, np.full(3, 0.5))


def test_temperature_mode_requires_beta():
    with pytest.raises(ValueError):
        LangevinConfig(noise_mode="temperature")
    with pytest.raises(ValueError):
        LangevinConfig(noise_mode="temperature", beta=-1.0)


def test_unknown_noise_mode():
    with pytest.raises(ValueError):
        LangevinConfig(noise_mode="adaptive")


def test_batch_matches_sequence_of_single_steps():
    # identical draws: a 1-row batch consumes the same normals as one agent
    obj = get_objective("quadratic")
    cfg = LangevinConfig(dt=0.01)
    theta = np.array([[0.4, -0.2]])
    h = np.array([[0.1, 1.0]])
    a = langevin_step_batch(theta, h, obj, cfg, np.random.default_rng(9))
    agent = Agent(theta=theta[0], h=h[0], id=0)
    b = langevin_step(agent, obj, cfg, np.random.default_rng(9))
    np.testing.assert_allclose(a[0], b.theta)


def test_non_finite_gradient_reported_with_agent_index():
    def bad_grad(theta, h):
        g = np.zeros_like(theta)
        g[..., 0] = np.where(np.asarray(theta)[..., 0] > 1.0, np.nan, 0.0)
        return g

    obj = ObjectiveSpec(
        name="bad", d_theta=2, d_h=2,
        fitness=lambda t, h=None: np.zeros(np.asarray(t).shape[:-1]),
        loss=lambda t, h: np.zeros(np.asarray(t).shape[:-1]),
        grad_loss=bad_grad,
    )
    theta = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 0.0]])
    h = np.zeros((3, 2))
    with pytest.raises(NonFiniteGradientError) as exc:
        langevin_step_batch(theta, h, obj, LangevinConfig(), np.random.default_rng(0))
    assert exc.value.agent_id == 1


def test_equilibrium_statistics_long_run():
    # long Langevin run at fixed h matches the invariant Normal((h0,h0), h1^2/4 I)
    obj = get_objective("quadratic")
    cfg = LangevinConfig(dt=0.01)
    rng = np.random.default_rng(11)
    n = 4000
    theta = np.zeros((n, 2))
    h = np.tile([0.5, 1.0], (n, 1))
    theta = train_inner_batch(theta, h, obj, cfg, 400, rng)
    np.testing.assert_allclose(theta.mean(axis=0), [0.5, 0.5], atol=0.03)
    np.testing.assert_allclose(theta.var(axis=0), [0.25, 0.25], rtol=0.08)


def test_train_inner_negative_steps():
    obj = get_objective("quadratic")
    agent = Agent(theta=np.zeros(2), h=np.zeros(2), id=0)
    with pytest.raises(ValueError):
        train_inner(agent, obj, LangevinConfig(), -1, np.random.default_rng(0))


def test_seeded_determinism():
    obj = get_objective("quadratic")
    cfg = LangevinConfig(dt=0.01)
    theta = np.random.default_rng(0).normal(size=(10, 2))
    h = np.abs(np.random.default_rng(1).normal(size=(10, 2)))
    a = train_inner_batch(theta, h, obj, cfg, 20, np.random.default_rng(42))
    b = train_inner_batch(theta, h, obj, cfg, 20, np.random.default_rng(42))
    np.testing.assert_array_equal(a, b)
