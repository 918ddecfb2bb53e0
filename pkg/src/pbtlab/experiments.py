"""Config-driven experiments reproducing the benchmark figures at desk scale.

Each experiment takes a parameter dict (validated against its schema), an
output directory, and a seed list; writes CSVs plus a summary, and returns
the pass/fail status of its built-in assertions.
"""

from __future__ import annotations

import json
import platform
import time
from pathlib import Path

import numpy as np

from . import __version__
from .cartpole import CartPoleConfig, run_cartpole_pbt, write_cartpole_csv, write_hyperparam_dump
from .core import get_objective
from .driver import RunConfig, run_pbt, run_reduced, write_metrics_csv, write_snapshot_csv
from .dynamics import LangevinConfig
from .effective import fbar_gibbs_beta, fbar_gibbs_beta_mc
from .evolution import SelectionRule
from .meanfield import DensityGrid, PdeConfig, moments, replicator_consistency, step_averaged
from .metrics import EmpiricalMeasure, bl_distance, subsample

HIMMELBLAU_MINIMA = np.array(
    [
        [3.0, 2.0],
        [-2.805118, 3.131312],
        [-3.779310, -3.283186],
        [3.584428, -1.848126],
    ]
)


class ConfigError(ValueError):
    pass


def _int_list(v):
    return [int(x) for x in v]


def _float_list(v):
    return [float(x) for x in v]


SCHEMAS = {
    "quadratic_pbt": {
        "N": (int, 100),
        "generations": (int, 100),
        "inner_steps": (int, 50),
        "tau": (float, 1.0),
        "sigma": (float, 0.1),
        "alpha": (float, 100.0),
        "dt": (float, 0.01),
        "snapshot_every": (int, 0),
    },
    "quadratic_chaos": {
        "N_values": (_int_list, [100, 1000, 10000]),
        "generations": (int, 500),
        "inner_steps": (int, 50),
        "sigma": (float, 0.1),
        "alpha": (float, 100.0),
        "dt": (float, 0.01),
        "subsample": (int, 2000),
    },
    "quadratic_two_time": {
        "N": (int, 10000),
        "generations": (int, 10),
        "inner_steps_values": (_int_list, [20, 50, 100]),
        "sigma": (float, 0.1),
        "alpha": (float, 100.0),
        "dt": (float, 0.01),
        "subsample": (int, 2000),
    },
    "himmelblau": {
        "N": (int, 10000),
        "generations": (int, 500),
        "inner_steps": (int, 50),
        "sigma": (float, 0.1),
        "alpha": (float, 100.0),
        "dt": (float, 0.01),
        "radius": (float, 0.7),
    },
    "meanfield_convergence": {
        "cells": (int, 600),
        "domain": (float, 3.0),
        "alpha": (float, 100.0),
        "sigma": (float, 0.05),
        "dt": (float, 0.05),
        "t_max": (float, 10.0),
        "h_star": (float, 0.3),
    },
    "replicator_limit": {
        "cells": (int, 400),
        "domain": (float, 3.0),
        "sigma": (float, 0.5),
        "nu_values": (_float_list, [0.1, 0.05, 0.025]),
    },
    "penalization_rate": {
        "h0": (float, 0.5),
        "betas": (_float_list, [1.0, 4.0, 16.0, 64.0, 256.0]),
        "mc_samples": (int, 10 ** 6),
    },
    "cartpole": {
        "N": (int, 20),
        "steps_per_generation": (int, 300),
        "reward_cap": (int, 100),
        "window": (int, 5),
        "sigma": (float, 0.1),
        "generations": (int, 40),
    },
}


def _validated(params: dict, schema: dict, experiment: str) -> dict:
    """Fill defaults and reject unknown or badly typed keys."""
    params = dict(params or {})
    out = {}
    for key, (typ, default) in schema.items():
        if key in params:
            value = params.pop(key)
            try:
                out[key] = typ(value)
            except (TypeError, ValueError):
                raise ConfigError(f"{experiment}: invalid value for key '{key}': {value!r}")
        else:
            out[key] = default
    if params:
        bad = sorted(params)[0]
        raise ConfigError(f"{experiment}: unknown config key '{bad}'")
    return out


def _pbt_config(p: dict, seed: int, **overrides) -> RunConfig:
    kwargs = dict(
        objective=p.get("objective", "quadratic"),
        N=p.get("N"),
        generations=p["generations"],
        tau=p.get("tau", 1.0),
        sigma=p.get("sigma", 0.1),
        selection=SelectionRule("softmax", alpha=p.get("alpha", 100.0)),
        langevin=LangevinConfig(dt=p.get("dt", 0.01)),
        inner_steps=p.get("inner_steps", 50),
        seed=seed,
        snapshot_every=p.get("snapshot_every", 0),
    )
    kwargs.update(overrides)
    return RunConfig(**kwargs)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def quadratic_pbt(params: dict, outdir: Path, seeds: list[int]) -> dict:
    p = _validated(params, SCHEMAS["quadratic_pbt"], "quadratic_pbt")
    checks = {}
    for seed in seeds:
        res = run_pbt(_pbt_config(p, seed))
        write_metrics_csv(res.records, outdir / f"metrics_seed{seed}.csv")
        write_snapshot_csv(res.population, outdir / f"final_population_seed{seed}.csv")
        pre = [r.fitness_median for r in res.records if r.extra.get("phase") == "pre_jump"]
        post = [r.fitness_median for r in res.records if r.extra.get("phase") == "post_jump"]
        jumps_up = np.mean(np.array(post) >= np.array(pre))
        checks[f"seed{seed}_median_jump_fraction"] = float(jumps_up)
    ok = all(v > 0.5 for v in checks.values())
    return {"passed": ok, "checks": checks}


def quadratic_chaos(params: dict, outdir: Path, seeds: list[int]) -> dict:
    p = _validated(params, SCHEMAS["quadratic_chaos"], "quadratic_chaos")
    mean_dist = {}
    for n in p["N_values"]:
        marginals = []
        for seed in seeds:
            res = run_pbt(_pbt_config(p, seed, N=n))
            marginals.append(subsample(res.population.h[:, 0:1], p["subsample"], seed=seed))
        dists = [
            bl_distance(EmpiricalMeasure(a), EmpiricalMeasure(b))
            for i, a in enumerate(marginals)
            for b in marginals[i + 1:]
        ]
        mean_dist[n] = float(np.mean(dists))
    with open(outdir / "chaos_distances.csv", "w") as fh:
        fh.write("N,mean_pairwise_bl\n")
        for n, d in mean_dist.items():
            fh.write(f"{n},{d:.10g}\n")
    values = [mean_dist[n] for n in sorted(mean_dist)]
    ok = all(values[i] > values[i + 1] for i in range(len(values) - 1))
    return {"passed": ok, "checks": {"mean_pairwise_bl": mean_dist}}


def quadratic_two_time(params: dict, outdir: Path, seeds: list[int]) -> dict:
    p = _validated(params, SCHEMAS["quadratic_two_time"], "quadratic_two_time")
    dists = {}
    for seed in seeds:
        ref = run_reduced(_pbt_config(p, seed, fitness_mode="equilibrium_sample"))
        ref_marginal = subsample(ref.population.h[:, 0:1], p["subsample"], seed=seed)
        for steps in p["inner_steps_values"]:
            res = run_pbt(_pbt_config(p, seed, inner_steps=steps))
            marginal = subsample(res.population.h[:, 0:1], p["subsample"], seed=seed)
            d = bl_distance(EmpiricalMeasure(marginal), EmpiricalMeasure(ref_marginal))
            dists.setdefault(steps, []).append(d)
    mean_dists = {s: float(np.mean(v)) for s, v in dists.items()}
    with open(outdir / "two_time_distances.csv", "w") as fh:
        fh.write("inner_steps,mean_bl_to_reduced\n")
        for s in sorted(mean_dists):
            fh.write(f"{s},{mean_dists[s]:.10g}\n")
    values = [mean_dists[s] for s in sorted(mean_dists)]
    ok = all(values[i] > values[i + 1] for i in range(len(values) - 1))
    return {"passed": ok, "checks": {"mean_bl_to_reduced": mean_dists}}


def himmelblau(params: dict, outdir: Path, seeds: list[int]) -> dict:
    p = _validated(params, SCHEMAS["himmelblau"], "himmelblau")
    checks = {}
    for seed in seeds:
        cfg = _pbt_config(p, seed, objective="himmelblau", init_theta=(-0.5, 0.5))
        res = run_pbt(cfg)
        write_metrics_csv(res.records, outdir / f"himmelblau_metrics_seed{seed}.csv")
        write_snapshot_csv(res.population, outdir / f"himmelblau_final_seed{seed}.csv")
        d = np.linalg.norm(res.population.theta[:, None, :] - HIMMELBLAU_MINIMA[None, :, :], axis=-1)
        near_any = float(np.mean(d.min(axis=1) <= p["radius"]))
        per_basin = [float(np.mean(d[:, j] <= p["radius"])) for j in range(4)]
        checks[f"seed{seed}"] = {"near_any_minimum": near_any, "max_single_basin": max(per_basin)}
    n_ok = sum(
        1
        for c in checks.values()
        if c["near_any_minimum"] >= 0.9 and c["max_single_basin"] >= 0.7
    )
    return {"passed": n_ok >= max(1, len(seeds) - 1), "checks": checks}


def meanfield_convergence(params: dict, outdir: Path, seeds: list[int]) -> dict:
    p = _validated(params, SCHEMAS["meanfield_convergence"], "meanfield_convergence")
    h_star = p["h_star"]
    cfg = PdeConfig(
        dt=p["dt"],
        sigma=p["sigma"],
        alpha=p["alpha"],
        fbar=lambda h: -((h[..., 0] - h_star) ** 2),
    )
    grid = DensityGrid.uniform([-p["domain"]], [p["domain"]], p["cells"])
    m0, _ = moments(grid)
    err0 = float((m0[0] - h_star) ** 2)
    rows = [(0.0, float(m0[0]), err0)]
    n_steps = int(round(p["t_max"] / p["dt"]))
    ok = True
    for k in range(1, n_steps + 1):
        grid = step_averaged(grid, cfg)
        t = k * p["dt"]
        m, _ = moments(grid)
        err = float((m[0] - h_star) ** 2)
        rows.append((t, float(m[0]), err))
        if err > np.exp(-t) * err0 + 0.01:
            ok = False
    with open(outdir / "mean_decay.csv", "w") as fh:
        fh.write("t,mean,sq_error\n")
        for t, m, e in rows:
            fh.write(f"{t:.6g},{m:.10g},{e:.10g}\n")
    return {"passed": ok, "checks": {"final_sq_error": rows[-1][2]}}


def replicator_limit(params: dict, outdir: Path, seeds: list[int]) -> dict:
    p = _validated(params, SCHEMAS["replicator_limit"], "replicator_limit")
    grid = DensityGrid.from_density(
        [-p["domain"]], [p["domain"]], p["cells"],
        lambda h: np.exp(-0.5 * (h[..., 0] / 0.8) ** 2),
    )
    cfg = PdeConfig(dt=0.01, sigma=p["sigma"], alpha=1.0, fbar=lambda h: -((h[..., 0] - 0.3) ** 2))
    residuals = {nu: replicator_consistency(grid, cfg, nu) for nu in p["nu_values"]}
    with open(outdir / "replicator_residuals.csv", "w") as fh:
        fh.write("nu,residual\n")
        for nu in sorted(residuals, reverse=True):
            fh.write(f"{nu},{residuals[nu]:.10g}\n")
    nus = sorted(residuals, reverse=True)
    ratios = [residuals[nus[i]] / residuals[nus[i + 1]] for i in range(len(nus) - 1)]
    ok = all(1.5 <= r <= 3.0 for r in ratios)
    return {"passed": ok, "checks": {"residuals": residuals, "ratios": ratios}}


def penalization_rate(params: dict, outdir: Path, seeds: list[int]) -> dict:
    p = _validated(params, SCHEMAS["penalization_rate"], "penalization_rate")
    obj = get_objective("quadratic")
    h = np.array([p["h0"], 0.0])
    target = 1.2 - 2.0 * p["h0"] ** 2  # F(theta*(h), h)
    rng = np.random.default_rng(seeds[0] if seeds else 0)
    rows = []
    ok = True
    errs = []
    for beta in p["betas"]:
        closed = fbar_gibbs_beta(obj, h, beta)
        mc = fbar_gibbs_beta_mc(obj, h, beta, p["mc_samples"], rng)
        err = abs(closed - target)
        errs.append(err)
        agree = abs(closed - mc.value) <= 3.0 * mc.std_error
        ok = ok and agree
        rows.append((beta, closed, mc.value, mc.std_error, err))
    for i in range(len(errs) - 1):
        ok = ok and errs[i + 1] < errs[i]
    for beta, err in zip(p["betas"], errs):
        ok = ok and err <= errs[0] / np.sqrt(beta) * 1.05
    with open(outdir / "penalization.csv", "w") as fh:
        fh.write("beta,fbar_closed,fbar_mc,mc_std_error,error\n")
        for row in rows:
            fh.write(",".join(f"{v:.10g}" for v in row) + "\n")
    return {"passed": ok, "checks": {"errors": dict(zip(p["betas"], errs))}}


def cartpole(params: dict, outdir: Path, seeds: list[int]) -> dict:
    p = _validated(params, SCHEMAS["cartpole"], "cartpole")
    finals = {}
    for seed in seeds:
        cfg = CartPoleConfig(
            N=p["N"],
            steps_per_generation=p["steps_per_generation"],
            reward_cap=p["reward_cap"],
            window=p["window"],
            sigma=p["sigma"],
            generations=p["generations"],
            seed=seed,
        )
        res = run_cartpole_pbt(cfg)
        write_cartpole_csv(res.records, outdir / f"cartpole_metrics_seed{seed}.csv")
        write_hyperparam_dump(res, outdir / f"cartpole_hyperparams_seed{seed}.csv")
        finals[seed] = res.records[-1].top5_mean_reward
    threshold = 0.95 * p["reward_cap"]
    n_ok = sum(1 for v in finals.values() if v >= threshold)
    return {"passed": n_ok >= (len(seeds) + 1) // 2, "checks": {"final_top5": finals}}


EXPERIMENTS = {
    "quadratic_pbt": quadratic_pbt,
    "quadratic_chaos": quadratic_chaos,
    "quadratic_two_time": quadratic_two_time,
    "himmelblau": himmelblau,
    "meanfield_convergence": meanfield_convergence,
    "replicator_limit": replicator_limit,
    "penalization_rate": penalization_rate,
    "cartpole": cartpole,
}


def run_experiment_config(config: dict, outdir: Path, seeds_override=None) -> dict:
    """Run one validated experiment config; returns the summary dict."""
    name = config.get("experiment")
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown or missing config key 'experiment': {name!r}")
    seeds = seeds_override if seeds_override is not None else config.get("seeds", [0])
    if not isinstance(seeds, (list, tuple)) or not seeds:
        raise ConfigError("config key 'seeds' must be a nonempty list of integers")
    seeds = [int(s) for s in seeds]
    extra = set(config) - {"experiment", "seeds", "params"}
    if extra:
        raise ConfigError(f"unknown config key '{sorted(extra)[0]}'")

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    result = EXPERIMENTS[name](config.get("params", {}), outdir, seeds)
    summary = {
        "experiment": name,
        "config": config,
        "seeds": seeds,
        "passed": bool(result["passed"]),
        "checks": result["checks"],
        "wall_time_s": time.perf_counter() - t0,
        "versions": {"pbtlab": __version__, "python": platform.python_version(), "numpy": np.__version__},
    }
    with open(outdir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, default=str)
    return summary


def validate_config(config: dict) -> None:
    """Schema-check a config without running it; raises ConfigError on problems."""
    name = config.get("experiment")
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown or missing config key 'experiment': {name!r}")
    extra = set(config) - {"experiment", "seeds", "params"}
    if extra:
        raise ConfigError(f"unknown config key '{sorted(extra)[0]}'")
    _validated(config.get("params", {}), SCHEMAS[name], name)
