"""Self-contained CartPole DQN experiment with truncation-selection PBT.

Tiny MLP (4 -> 64 -> 64 -> 2) with manual backprop and Adam, uniform replay
buffer, frozen target network, and windowed episodic-reward fitness.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import SearchBox
from .effective import FitnessHistory, time_avg_fitness
from .evolution import MutationConfig, mutate_h

# de-facto standard constants of the classic control benchmark
GRAVITY = 9.8
CART_MASS = 1.0
POLE_MASS = 0.1
TOTAL_MASS = CART_MASS + POLE_MASS
HALF_LENGTH = 0.5
POLEMASS_LENGTH = POLE_MASS * HALF_LENGTH
FORCE_MAG = 10.0
PHYS_DT = 0.02
X_LIMIT = 2.4
PHI_LIMIT = 0.2095

HYPERPARAM_BOX = SearchBox(lower=[1e-5, 500.0, 32.0], upper=[1e-2, 5000.0, 128.0])


@dataclass(frozen=True)
class CartPoleState:
    x: float
    x_dot: float
    phi: float
    phi_dot: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.x_dot, self.phi, self.phi_dot])

    @classmethod
    def from_array(cls, a) -> "CartPoleState":
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))


def initial_state(rng: np.random.Generator) -> np.ndarray:
    # standard benchmark convention: each component Uniform(-0.05, 0.05)
    return rng.uniform(-0.05, 0.05, size=4)


def _step_array(s: np.ndarray, action: int) -> tuple[np.ndarray, float, bool]:
    x, x_dot, phi, phi_dot = s
    force = FORCE_MAG if action == 1 else -FORCE_MAG
    cos, sin = np.cos(phi), np.sin(phi)
    temp = (force + POLEMASS_LENGTH * phi_dot ** 2 * sin) / TOTAL_MASS
    phi_acc = (GRAVITY * sin - cos * temp) / (
        HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos ** 2 / TOTAL_MASS)
    )
    x_acc = temp - POLEMASS_LENGTH * phi_acc * cos / TOTAL_MASS
    # semi-implicit Euler: velocities first, positions with updated velocities
    x_dot = x_dot + PHYS_DT * x_acc
    x = x + PHYS_DT * x_dot
    phi_dot = phi_dot + PHYS_DT * phi_acc
    phi = phi + PHYS_DT * phi_dot
    s_next = np.array([x, x_dot, phi, phi_dot])
    done = bool(abs(x) > X_LIMIT or abs(phi) > PHI_LIMIT)
    return s_next, 1.0, done


def env_step(state, action: int, rng=None):
    """One physics step; reward 1 on every step including the terminal one."""
    if action not in (0, 1):
        raise ValueError(f"action must be 0 or 1, got {action!r}")
    if isinstance(state, CartPoleState):
        a = state.as_array()
        if abs(a[0]) > X_LIMIT or abs(a[2]) > PHI_LIMIT:
            return state, 1.0, True
        s_next, reward, done = _step_array(a, action)
        return CartPoleState.from_array(s_next), reward, done
    a = np.asarray(state, dtype=float)
    if abs(a[0]) > X_LIMIT or abs(a[2]) > PHI_LIMIT:
        return a, 1.0, True
    return _step_array(a, action)


def epsilon(total_steps: int, p_start: float = 1.0, p_end: float = 0.01, p_decay: float = 1000.0) -> float:
    """Exponentially annealed exploration rate."""
    if p_decay <= 0:
        raise ValueError("p_decay must be positive")
    return p_end + (p_start - p_end) * np.exp(-total_steps / p_decay)


# ---------------------------------------------------------------------------
# MLP with manual backprop + Adam
# ---------------------------------------------------------------------------

class MLP:
    """Fully connected 4 -> 64 -> 64 -> 2 network with ReLU hidden layers."""

    SIZES = (4, 64, 64, 2)

    def __init__(self, rng: Optional[np.random.Generator] = None, params=None):
        if params is not None:
            self.params = [p.copy() for p in params]
            return
        self.params = []
        for n_in, n_out in zip(self.SIZES[:-1], self.SIZES[1:]):
            w = rng.standard_normal((n_in, n_out)) * np.sqrt(2.0 / n_in)
            b = np.zeros(n_out)
            self.params += [w, b]

    def forward(self, x: np.ndarray):
        """Returns (q_values, cache) for a batch x of shape (B, 4)."""
        w1, b1, w2, b2, w3, b3 = self.params
        z1 = x @ w1 + b1
        a1 = np.maximum(z1, 0.0)
        z2 = a1 @ w2 + b2
        a2 = np.maximum(z2, 0.0)
        q = a2 @ w3 + b3
        return q, (x, z1, a1, z2, a2)

    def backward(self, cache, dq: np.ndarray):
        """Gradients of the parameters given dLoss/dq."""
        w1, b1, w2, b2, w3, b3 = self.params
        x, z1, a1, z2, a2 = cache
        dw3 = a2.T @ dq
        db3 = dq.sum(axis=0)
        da2 = dq @ w3.T
        dz2 = da2 * (z2 > 0)
        dw2 = a1.T @ dz2
        db2 = dz2.sum(axis=0)
        da1 = dz2 @ w2.T
        dz1 = da1 * (z1 > 0)
        dw1 = x.T @ dz1
        db1 = dz1.sum(axis=0)
        return [dw1, db1, dw2, db2, dw3, db3]

    def copy(self) -> "MLP":
        return MLP(params=self.params)


class AdamState:
    """Adam moment buffers; copied along with weights on exploit."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            p -= lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def copy_from(self, other: "AdamState") -> None:
        self.t = other.t
        self.m = [m.copy() for m in other.m]
        self.v = [v.copy() for v in other.v]


class QNetwork:
    """Online MLP plus a frozen target copy and the Adam optimizer state."""

    def __init__(self, rng: np.random.Generator):
        self.online = MLP(rng)
        self.target = self.online.copy()
        self.adam = AdamState(self.online.params)

    def sync_target(self) -> None:
        self.target = self.online.copy()

    def q_values(self, states: np.ndarray) -> np.ndarray:
        q, _ = self.online.forward(np.atleast_2d(states))
        if not np.all(np.isfinite(q)):
            raise RuntimeError("non-finite Q-values")
        return q

    def greedy_action(self, state: np.ndarray) -> int:
        return int(np.argmax(self.q_values(state[None, :])[0]))

    def copy_from(self, other: "QNetwork") -> None:
        self.online = other.online.copy()
        self.target = other.target.copy()
        self.adam.copy_from(other.adam)


class ReplayBuffer:
    """Uniform-sampling ring buffer of transitions."""

    def __init__(self, capacity: int = 10 ** 4):
        self.capacity = capacity
        self.states = np.zeros((capacity, 4))
        self.actions = np.zeros(capacity, dtype=int)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, 4))
        self.dones = np.zeros(capacity)
        self.size = 0
        self._pos = 0

    def push(self, s, a, r, s_next, done) -> None:
        i = self._pos
        self.states[i] = s
        self.actions[i] = a
        self.rewards[i] = r
        self.next_states[i] = s_next
        self.dones[i] = float(done)
        self._pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.choice(self.size, size=min(batch_size, self.size), replace=False)
        return (
            self.states[idx],
            self.actions[idx],
            self.rewards[idx],
            self.next_states[idx],
            self.dones[idx],
        )


def dqn_update(net: QNetwork, batch, gamma: float, lr: float) -> float:
    """One mean-squared TD-error step with target bootstrap; returns the loss."""
    s, a, r, s_next, done = batch
    if s.shape[0] == 0:
        raise ValueError("empty batch")
    q_next, _ = net.target.forward(s_next)
    targets = r + gamma * q_next.max(axis=1) * (1.0 - done)
    q, cache = net.online.forward(s)
    n = s.shape[0]
    td = q[np.arange(n), a] - targets
    loss = float(np.mean(td ** 2))
    if not np.isfinite(loss):
        raise RuntimeError("non-finite DQN loss")
    dq = np.zeros_like(q)
    dq[np.arange(n), a] = 2.0 * td / n
    grads = net.online.backward(cache, dq)
    net.adam.step(net.online.params, grads, lr)
    return loss


# ---------------------------------------------------------------------------
# PBT harness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RlHyperparams:
    """Adam learning rate, epsilon decay constant, replay batch size."""

    lr: float
    p_decay: float
    batch_size: float  # continuous in the box, rounded at use

    def as_array(self) -> np.ndarray:
        return np.array([self.lr, self.p_decay, self.batch_size])

    @classmethod
    def from_array(cls, a) -> "RlHyperparams":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    @classmethod
    def sample(cls, rng: np.random.Generator) -> "RlHyperparams":
        return cls.from_array(rng.uniform(HYPERPARAM_BOX.lower, HYPERPARAM_BOX.upper))


@dataclass
class CartPoleConfig:
    N: int = 20
    steps_per_generation: int = 300
    reward_cap: int = 100
    window: int = 5
    sigma: float = 0.1
    generations: int = 40
    seed: int = 0
    exploit_fraction: float = 0.2
    gamma: float = 0.99
    target_sync: int = 200
    warmup: int = 500
    buffer_capacity: int = 10 ** 4

    def __post_init__(self):
        if self.steps_per_generation not in (300, 500, 1000):
            raise ValueError("steps_per_generation must be one of 300, 500, 1000")
        if self.reward_cap not in (100, 500):
            raise ValueError("reward_cap must be 100 or 500")
        if self.window < 1:
            raise ValueError("window must be >= 1")


class DqnAgent:
    def __init__(self, agent_id: int, hyper: RlHyperparams, window: int, rng: np.random.Generator):
        self.id = agent_id
        self.hyper = hyper
        self.net = QNetwork(rng)
        self.buffer = ReplayBuffer()
        self.rng = rng
        self.total_steps = 0
        self.history = FitnessHistory(window)
        self.state = initial_state(rng)
        self.episode_reward = 0.0

    def fitness(self) -> float:
        if len(self.history) == 0:
            return self.episode_reward
        return time_avg_fitness(self.history)


def _train_agent(agent: DqnAgent, cfg: CartPoleConfig, n_steps: int, generation: int) -> None:
    batch_size = int(round(agent.hyper.batch_size))
    for _ in range(n_steps):
        eps = epsilon(agent.total_steps, p_decay=agent.hyper.p_decay)
        if agent.rng.random() < eps:
            action = int(agent.rng.integers(2))
        else:
            action = agent.net.greedy_action(agent.state)
        s_next, reward, failed = _step_array(agent.state, action)
        agent.episode_reward += reward
        capped = agent.episode_reward >= cfg.reward_cap
        # bootstrap is zeroed only on genuine failure, not on the reward cap
        agent.buffer.push(agent.state, action, reward, s_next, failed)
        agent.state = s_next
        agent.total_steps += 1
        if agent.buffer.size >= cfg.warmup:
            batch = agent.buffer.sample(batch_size, agent.rng)
            dqn_update(agent.net, batch, cfg.gamma, agent.hyper.lr)
        if agent.total_steps % cfg.target_sync == 0:
            agent.net.sync_target()
        if failed or capped:
            agent.history.record(agent.episode_reward, generation)
            agent.episode_reward = 0.0
            agent.state = initial_state(agent.rng)


@dataclass
class CartPoleMetrics:
    generation: int
    top5_mean_reward: float
    pop_mean_reward: float
    mean_h: np.ndarray
    std_h: np.ndarray
    # top-5 mean of each agent's latest completed episode reward; unlike
    # top5_mean_reward it is window-independent, so runs with different
    # fitness windows can be compared on the same scale
    top5_last_reward: float = 0.0


@dataclass
class CartPoleResult:
    agents: list
    records: list
    wall_time: float

    def final_hyperparams(self) -> np.ndarray:
        return np.stack([a.hyper.as_array() for a in self.agents])


def run_cartpole_pbt(cfg: CartPoleConfig) -> CartPoleResult:
    """Truncation-selection PBT over DQN agents; fitness is windowed reward.

    Exploit copies network weights, target network, and Adam state bit-exactly
    and mutates hyperparameters in (-1, 1)-scaled coordinates. Replay buffers
    and per-agent step counters stay with the victim.
    """
    t0 = time.perf_counter()
    ss = np.random.SeedSequence(cfg.seed)
    streams = [np.random.default_rng(s) for s in ss.spawn(cfg.N + 1)]
    master = streams[-1]
    agents = [
        DqnAgent(i, RlHyperparams.sample(streams[i]), cfg.window, streams[i])
        for i in range(cfg.N)
    ]
    mut = MutationConfig(sigma=cfg.sigma, box=HYPERPARAM_BOX, scale_to_unit=True)
    k = int(np.ceil(cfg.exploit_fraction * cfg.N))

    records = [_cartpole_record(0, agents)]
    for gen in range(1, cfg.generations + 1):
        for agent in agents:
            _train_agent(agent, cfg, cfg.steps_per_generation, gen)
        fitness = np.array([a.fitness() for a in agents])
        order = np.lexsort((np.array([a.id for a in agents]), -fitness))
        top, bottom = order[:k], order[::-1][:k]
        for rank in range(k):
            src, dst = agents[top[rank]], agents[bottom[rank]]
            if src is dst:
                continue
            dst.net.copy_from(src.net)
            new_h = mutate_h(src.hyper.as_array()[None, :], mut, master)[0]
            dst.hyper = RlHyperparams.from_array(new_h)
            dst.history.clear()
            dst.episode_reward = 0.0
            dst.state = initial_state(dst.rng)
        records.append(_cartpole_record(gen, agents))

    return CartPoleResult(agents, records, time.perf_counter() - t0)


def _cartpole_record(gen: int, agents) -> CartPoleMetrics:
    fitness = np.array([a.fitness() for a in agents])
    last = np.array([
        a.history.values[-1] if len(a.history) else a.episode_reward for a in agents
    ])
    hs = np.stack([a.hyper.as_array() for a in agents])
    return CartPoleMetrics(
        generation=gen,
        top5_mean_reward=float(np.sort(fitness)[-5:].mean()),
        pop_mean_reward=float(fitness.mean()),
        mean_h=hs.mean(axis=0),
        std_h=hs.std(axis=0),
        top5_last_reward=float(np.sort(last)[-5:].mean()),
    )


def write_cartpole_csv(records, path) -> None:
    names = ["lr", "p_decay", "batch_size"]
    header = ["generation", "top5_mean_reward", "pop_mean_reward", "top5_last_reward"]
    header += [f"mean_{n}" for n in names] + [f"std_{n}" for n in names]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in records:
            row = [
                r.generation,
                f"{r.top5_mean_reward:.6g}",
                f"{r.pop_mean_reward:.6g}",
                f"{r.top5_last_reward:.6g}",
            ]
            row += [f"{v:.10g}" for v in r.mean_h] + [f"{v:.10g}" for v in r.std_h]
            writer.writerow(row)


def write_hyperparam_dump(result: CartPoleResult, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["agent_id", "lr", "p_decay", "batch_size", "fitness"])
        for a in result.agents:
            writer.writerow(
                [a.id] + [f"{v:.10g}" for v in a.hyper.as_array()] + [f"{a.fitness():.6g}"]
            )
