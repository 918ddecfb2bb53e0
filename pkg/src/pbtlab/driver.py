"""Drivers for the full PBT loop and the reduced (equilibrium-sampled) dynamics."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import MetricsRecord, ObjectiveSpec, Population, SearchBox, get_objective
from .dynamics import LangevinConfig, train_inner_batch
from .evolution import MutationConfig, SelectionRule, genetic_update

FITNESS_MODES = ("instantaneous", "time_average", "equilibrium_sample", "closed_form")


@dataclass
class RunConfig:
    """Full experiment description for one driver run."""

    N: int
    generations: int
    objective: str = "quadratic"
    tau: float = 1.0
    sigma: float = 0.1
    selection: SelectionRule = field(default_factory=lambda: SelectionRule("softmax", alpha=100.0))
    langevin: LangevinConfig = field(default_factory=LangevinConfig)
    inner_steps: int = 50
    seed: int = 0
    init_theta: tuple = (-1.0, 1.0)
    init_h: tuple = (-1.0, 1.0)
    fitness_mode: str = "instantaneous"
    window: int = 5
    box: Optional[SearchBox] = None
    scale_to_unit: bool = False
    snapshot_every: int = 10

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if not (0.0 < self.tau <= 1.0):
            raise ValueError("tau must lie in (0, 1]")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.inner_steps < 0:
            raise ValueError("inner_steps must be >= 0")
        if self.fitness_mode not in FITNESS_MODES:
            raise ValueError(f"unknown fitness_mode {self.fitness_mode!r}")

    def mutation(self) -> MutationConfig:
        return MutationConfig(sigma=self.sigma, box=self.box, scale_to_unit=self.scale_to_unit)


@dataclass
class RunResult:
    population: Population
    records: list
    snapshots: list
    wall_time: float


def _init_population(cfg: RunConfig, obj: ObjectiveSpec, rng: np.random.Generator) -> Population:
    lo_t, hi_t = cfg.init_theta
    lo_h, hi_h = cfg.init_h
    theta = rng.uniform(lo_t, hi_t, size=(cfg.N, obj.d_theta))
    h = rng.uniform(lo_h, hi_h, size=(cfg.N, obj.d_h))
    if cfg.box is not None:
        h = cfg.box.project(h)
    return Population(theta, h)


def _record(gen: int, sim_time: float, pop: Population, fitness: np.ndarray, phase: str) -> MetricsRecord:
    q10, med, q90 = np.quantile(fitness, [0.1, 0.5, 0.9])
    return MetricsRecord(
        generation=gen,
        sim_time=sim_time,
        fitness_q10=float(q10),
        fitness_median=float(med),
        fitness_q90=float(q90),
        mean_h=pop.h.mean(axis=0),
        var_h=pop.h.var(axis=0),
        mean_theta=pop.theta.mean(axis=0),
        extra={"phase": phase},
    )


def _check_finite(pop: Population, gen: int) -> None:
    if not (np.all(np.isfinite(pop.theta)) and np.all(np.isfinite(pop.h))):
        raise RuntimeError(f"non-finite population state at generation {gen}")


def run_pbt(cfg: RunConfig, obj: Optional[ObjectiveSpec] = None) -> RunResult:
    """Full PBT: inner Langevin training, fitness evaluation, genetic jump.

    Emits one pre-jump and one post-jump MetricsRecord per generation so the
    fitness discontinuity at generation boundaries stays visible.
    Deterministic given the config seed (single-threaded).
    """
    if cfg.fitness_mode not in ("instantaneous", "time_average"):
        raise ValueError("run_pbt supports instantaneous or time_average fitness modes")
    t0 = time.perf_counter()
    obj = obj or get_objective(cfg.objective)
    rng = np.random.default_rng(cfg.seed)
    pop = _init_population(cfg, obj, rng)
    mut = cfg.mutation()

    # vectorized per-agent fitness window (time_average mode)
    win_vals = np.zeros((cfg.N, cfg.window))
    win_count = np.zeros(cfg.N, dtype=int)

    records = []
    snapshots = []
    raw_f0 = obj.fitness(pop.theta, pop.h)
    records.append(_record(0, 0.0, pop, raw_f0, "init"))

    for gen in range(1, cfg.generations + 1):
        pop.theta = train_inner_batch(pop.theta, pop.h, obj, cfg.langevin, cfg.inner_steps, rng)
        _check_finite(pop, gen)

        raw_fitness = obj.fitness(pop.theta, pop.h)
        sel_fitness = obj.selection_sign * raw_fitness
        if cfg.fitness_mode == "time_average":
            slot = win_count % cfg.window
            win_vals[np.arange(cfg.N), slot] = sel_fitness
            win_count += 1
            filled = np.minimum(win_count, cfg.window)
            mask = np.arange(cfg.window)[None, :] < filled[:, None]
            sel_fitness = np.where(mask, win_vals, 0.0).sum(axis=1) / filled

        sim_time = gen * cfg.tau
        records.append(_record(gen, sim_time, pop, raw_fitness, "pre_jump"))

        res = genetic_update(pop, sel_fitness, cfg.selection, mut, cfg.tau, rng)
        pop = res.population
        _check_finite(pop, gen)
        if cfg.fitness_mode == "time_average":
            win_count[res.replaced] = 0

        records.append(_record(gen, sim_time, pop, obj.fitness(pop.theta, pop.h), "post_jump"))
        if cfg.snapshot_every and gen % cfg.snapshot_every == 0:
            snapshots.append((gen, pop.theta.copy(), pop.h.copy()))

    return RunResult(pop, records, snapshots, time.perf_counter() - t0)


def run_reduced(cfg: RunConfig, obj: Optional[ObjectiveSpec] = None) -> RunResult:
    """Reduced dynamics: effective fitness by equilibrium sampling or closed form.

    No inner training loop; per generation each agent's theta is drawn from
    the equilibrium law (equilibrium_sample mode) or left untouched while
    the closed-form effective fitness drives selection (closed_form mode).
    """
    if cfg.fitness_mode not in ("equilibrium_sample", "closed_form"):
        raise ValueError("run_reduced requires equilibrium_sample or closed_form fitness mode")
    t0 = time.perf_counter()
    obj = obj or get_objective(cfg.objective)
    if cfg.fitness_mode == "equilibrium_sample" and obj.equilibrium_sampler is None:
        raise ValueError(f"objective {obj.name!r} has no equilibrium sampler")
    if cfg.fitness_mode == "closed_form" and obj.effective_fitness_closed is None:
        raise ValueError(f"objective {obj.name!r} has no closed-form effective fitness")
    rng = np.random.default_rng(cfg.seed)
    pop = _init_population(cfg, obj, rng)
    mut = cfg.mutation()

    records = []
    snapshots = []
    records.append(_record(0, 0.0, pop, obj.fitness(pop.theta, pop.h), "init"))

    for gen in range(1, cfg.generations + 1):
        if cfg.fitness_mode == "equilibrium_sample":
            # the invariant law depends on the diffusion strength only through
            # its square, so negative mutated values are folded back
            h_eff = pop.h.copy()
            h_eff[:, -1] = np.abs(h_eff[:, -1]) if obj.name == "quadratic" else h_eff[:, -1]
            pop.theta = obj.equilibrium_sampler(h_eff, rng)
            sel_fitness = obj.selection_sign * obj.fitness(pop.theta, pop.h)
        else:
            sel_fitness = obj.selection_sign * np.asarray(obj.effective_fitness_closed(pop.h))
        _check_finite(pop, gen)

        sim_time = gen * cfg.tau
        records.append(_record(gen, sim_time, pop, obj.fitness(pop.theta, pop.h), "pre_jump"))

        res = genetic_update(pop, sel_fitness, cfg.selection, mut, cfg.tau, rng)
        pop = res.population
        records.append(_record(gen, sim_time, pop, obj.fitness(pop.theta, pop.h), "post_jump"))
        if cfg.snapshot_every and gen % cfg.snapshot_every == 0:
            snapshots.append((gen, pop.theta.copy(), pop.h.copy()))

    return RunResult(pop, records, snapshots, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def write_metrics_csv(records, path) -> None:
    if not records:
        return
    d_h = len(records[0].mean_h)
    header = ["generation", "sim_time", "phase", "fitness_q10", "fitness_median", "fitness_q90"]
    header += [f"mean_h{i}" for i in range(d_h)] + [f"var_h{i}" for i in range(d_h)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in records:
            row = [r.generation, f"{r.sim_time:.6g}", r.extra.get("phase", "")]
            row += [f"{v:.10g}" for v in (r.fitness_q10, r.fitness_median, r.fitness_q90)]
            row += [f"{v:.10g}" for v in r.mean_h] + [f"{v:.10g}" for v in r.var_h]
            writer.writerow(row)


def write_snapshot_csv(pop: Population, path) -> None:
    d_t, d_h = pop.theta.shape[1], pop.h.shape[1]
    header = ["agent_id"] + [f"theta{i}" for i in range(d_t)] + [f"h{i}" for i in range(d_h)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(pop.size):
            writer.writerow(
                [int(pop.ids[i])]
                + [f"{v:.10g}" for v in pop.theta[i]]
                + [f"{v:.10g}" for v in pop.h[i]]
            )
