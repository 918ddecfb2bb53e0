import csv

import numpy as np
import pytest

from pbtlab.driver import (
    RunConfig,
    run_pbt,
    run_reduced,
    write_metrics_csv,
    write_snapshot_csv,
)
from pbtlab.dynamics import LangevinConfig
from pbtlab.evolution import SelectionRule


def small_cfg(**kw):
    defaults = dict(N=30, generations=5, seed=0, inner_steps=10)
    defaults.update(kw)
    return RunConfig(**defaults)


class TestRunConfigValidation:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            RunConfig(N=0, generations=1)
        with pytest.raises(ValueError):
            RunConfig(N=1, generations=-1)
        with pytest.raises(ValueError):
            RunConfig(N=1, generations=1, tau=0.0)
        with pytest.raises(ValueError):
            RunConfig(N=1, generations=1, tau=1.5)
        with pytest.raises(ValueError):
            RunConfig(N=1, generations=1, sigma=-0.1)
        with pytest.raises(ValueError):
            RunConfig(N=1, generations=1, fitness_mode="oracle")


class TestRunPbt:
    def test_population_size_and_shapes(self):
        res = run_pbt(small_cfg())
        assert res.population.size == 30
        assert res.population.theta.shape == (30, 2)
        assert res.population.h.shape == (30, 2)

    def test_record_phases_and_count(self):
        res = run_pbt(small_cfg(generations=4))
        assert len(res.records) == 1 + 2 * 4
        assert res.records[0].extra["phase"] == "init"
        phases = [r.extra["phase"] for r in res.records[1:]]
        assert phases == ["pre_jump", "post_jump"] * 4

    def test_sim_time_is_generation_times_tau(self):
        res = run_pbt(small_cfg(tau=0.5, generations=3))
        assert res.records[-1].sim_time == pytest.approx(1.5)

    def test_seeded_runs_bitwise_identical(self):
        a = run_pbt(small_cfg(seed=7))
        b = run_pbt(small_cfg(seed=7))
        np.testing.assert_array_equal(a.population.theta, b.population.theta)
        np.testing.assert_array_equal(a.population.h, b.population.h)

    def test_different_seeds_differ(self):
        a = run_pbt(small_cfg(seed=1))
        b = run_pbt(small_cfg(seed=2))
        assert not np.array_equal(a.population.h, b.population.h)

    def test_zero_generations_returns_initial_population(self):
        res = run_pbt(small_cfg(generations=0))
        assert len(res.records) == 1
        assert res.population.size == 30

    def test_snapshots_cadence(self):
        res = run_pbt(small_cfg(generations=10, snapshot_every=4))
        assert [g for g, _, _ in res.snapshots] == [4, 8]

    def test_time_average_mode_runs(self):
        res = run_pbt(small_cfg(fitness_mode="time_average", window=3, generations=8))
        assert res.population.size == 30

    def test_rejects_reduced_modes(self):
        with pytest.raises(ValueError):
            run_pbt(small_cfg(fitness_mode="equilibrium_sample"))

    def test_quadratic_fitness_improves(self):
        cfg = small_cfg(
            N=200, generations=40, inner_steps=20,
            selection=SelectionRule("softmax", alpha=100.0),
            langevin=LangevinConfig(dt=0.01), seed=0,
        )
        res = run_pbt(cfg)
        first = res.records[0].fitness_median
        last = res.records[-1].fitness_median
        assert last > first


class TestRunReduced:
    def test_equilibrium_sample_mode(self):
        res = run_reduced(small_cfg(fitness_mode="equilibrium_sample", init_h=(0.0, 1.0)))
        assert res.population.size == 30

    def test_closed_form_mode_keeps_theta(self):
        cfg = small_cfg(fitness_mode="closed_form", generations=3, sigma=0.0, tau=0.5)
        res = run_reduced(cfg)
        assert res.population.size == 30

    def test_negative_mutated_noise_handled(self):
        # mutation drives h1 below zero; the sampler sees |h1| and must not raise
        cfg = small_cfg(
            fitness_mode="equilibrium_sample", init_h=(-0.05, 0.05),
            sigma=0.3, generations=10,
        )
        res = run_reduced(cfg)
        assert np.all(np.isfinite(res.population.theta))

    def test_rejects_full_modes(self):
        with pytest.raises(ValueError):
            run_reduced(small_cfg(fitness_mode="instantaneous"))

    def test_reduced_concentrates_h(self):
        cfg = small_cfg(
            N=500, generations=100, fitness_mode="equilibrium_sample",
            selection=SelectionRule("softmax", alpha=100.0), seed=0,
        )
        res = run_reduced(cfg)
        assert abs(res.population.h[:, 0].mean()) < 0.2


class TestCsvWriters:
    def test_metrics_roundtrip(self, tmp_path):
        res = run_pbt(small_cfg(generations=2))
        path = tmp_path / "metrics.csv"
        write_metrics_csv(res.records, path)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0][:3] == ["generation", "sim_time", "phase"]
        assert len(rows) == 1 + len(res.records)

    def test_snapshot_roundtrip(self, tmp_path):
        res = run_pbt(small_cfg())
        path = tmp_path / "snap.csv"
        write_snapshot_csv(res.population, path)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["agent_id", "theta0", "theta1", "h0", "h1"]
        assert len(rows) == 1 + 30

    def test_reruns_byte_identical(self, tmp_path):
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_metrics_csv(run_pbt(small_cfg(seed=5)).records, p1)
        write_metrics_csv(run_pbt(small_cfg(seed=5)).records, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_empty_records_no_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        write_metrics_csv([], path)
        assert not path.exists()
