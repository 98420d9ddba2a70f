import dataclasses
import hashlib
import json

import numpy as np
import pytest

import smoothsgd.harness as harness
from smoothsgd import (
    CSV_HEADER,
    CellStats,
    PowerLawFit,
    SweepConfig,
    aggregate_cells,
    emit_plot_data,
    fit_cells,
    fit_power_law,
    parse_config,
    read_plot_data,
    refit_from_csv,
    run_sweep,
    run_trial,
    sweep_and_emit,
    trial_seed,
)

CONFIG_TEXT = """
# grid
k_list = 1
d_list = 8, 16
seeds = 2
threshold = 0.5
root_seed = 11
max_samples = 2e5
output = OUTDIR
"""


class TestParseConfig:
    def test_roundtrip(self):
        cfg = parse_config(CONFIG_TEXT.replace("OUTDIR", "x"))
        assert cfg.k_list == (1,)
        assert cfg.d_list == (8, 16)
        assert cfg.seeds == 2
        assert cfg.root_seed == 11
        assert cfg.max_samples == 200_000
        assert cfg.output == "x"
        assert cfg.lambda_policy == "paper"  # default survives

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown config key"):
            parse_config("k_list=1\nd_list=8\nstep_size=2\n")

    def test_duplicate_key(self):
        with pytest.raises(ValueError, match="duplicate"):
            parse_config("k_list=1\nk_list=2\nd_list=8\n")

    def test_missing_required(self):
        with pytest.raises(ValueError, match="k_list"):
            parse_config("d_list=8\n")

    def test_bad_line(self):
        with pytest.raises(ValueError, match="line 2"):
            parse_config("k_list=1\nwhat\nd_list=8\n")

    def test_validation_propagates(self):
        with pytest.raises(ValueError, match="increasing"):
            parse_config("k_list=1\nd_list=16,8\n")
        with pytest.raises(ValueError, match="threshold"):
            parse_config("k_list=1\nd_list=8\nthreshold=1.5\n")


class TestTrialSeed:
    def test_matches_digest_rule(self):
        digest = hashlib.sha256(b"5:3:128:2").digest()
        want = int.from_bytes(digest[:8], "little")
        assert trial_seed(5, 3, 128, 2) == want

    def test_frozen_value(self):
        assert trial_seed(0, 3, 64, 0) == 14692770221613048337

    def test_distinct_across_cells(self):
        seeds = {
            trial_seed(0, k, d, i)
            for k in (1, 2, 3)
            for d in (8, 16)
            for i in range(4)
        }
        assert len(seeds) == 24


class TestFitPowerLaw:
    def test_exact_law(self):
        pts = [(d, 3.0 * d**2) for d in (8, 16, 32, 64)]
        fit = fit_power_law(pts)
        assert fit.c1 == pytest.approx(3.0, rel=1e-10)
        assert fit.c2 == pytest.approx(2.0, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
        assert fit.n_points == 4

    def test_constant_series(self):
        fit = fit_power_law([(8, 5.0), (16, 5.0), (32, 5.0)])
        assert fit.c2 == pytest.approx(0.0, abs=1e-12)
        assert fit.r_squared == 1.0

    def test_guards(self):
        with pytest.raises(ValueError):
            fit_power_law([(8, 1.0), (16, 2.0)])
        with pytest.raises(ValueError):
            fit_power_law([(8, 1.0), (16, -2.0), (32, 3.0)])

    def test_scale_invariant_exponent(self, rng):
        d = np.array([8.0, 16, 32, 64, 128])
        n = 2.0 * d**1.7 * np.exp(rng.normal(0, 0.05, size=5))
        base = fit_power_law(list(zip(d, n)))
        scaled = fit_power_law(list(zip(d, 7.0 * n)))
        assert scaled.c2 == pytest.approx(base.c2, abs=1e-12)
        assert scaled.c1 == pytest.approx(7.0 * base.c1, rel=1e-10)


class TestAggregate:
    @staticmethod
    def rec(k, d, n, hit=True):
        return {"kstar": k, "d": d, "samples_used": n, "hit_threshold": hit}

    def test_basic_stats(self):
        stats = aggregate_cells(
            [self.rec(3, 8, 100), self.rec(3, 8, 300), self.rec(3, 16, 500)]
        )
        assert stats[0] == CellStats(k=3, d=8, n_min=100, n_mean=200.0, n_max=300, trials=2)
        assert stats[1].d == 16

    def test_capped_trials_excluded_with_warning(self):
        with pytest.warns(UserWarning, match="did not reach"):
            stats = aggregate_cells(
                [self.rec(3, 8, 100), self.rec(3, 8, 999, hit=False)]
            )
        assert stats[0].trials == 1
        assert stats[0].n_mean == 100.0

    def test_empty_cell_dropped(self):
        with pytest.warns(UserWarning):
            stats = aggregate_cells([self.rec(3, 8, 100, hit=False)])
        assert stats == []

    def test_fit_cells_needs_three(self):
        stats = aggregate_cells([self.rec(3, 8, 100), self.rec(3, 16, 400)])
        with pytest.warns(UserWarning, match="need 3"):
            fits = fit_cells(stats)
        assert fits == {}


class TestEmitRead:
    @staticmethod
    def toy_stats():
        stats = [
            CellStats(k=3, d=8, n_min=90, n_mean=100.0, n_max=110, trials=3),
            CellStats(k=3, d=16, n_min=700, n_mean=800.0, n_max=900, trials=3),
            CellStats(k=3, d=32, n_min=6000, n_mean=6400.0, n_max=7000, trials=3),
        ]
        return stats, fit_cells(stats)

    def test_header_is_pinned(self):
        assert CSV_HEADER == "k,d,n_min,n_mean,n_max,fit_c1,fit_c2,fit_r2"

    def test_roundtrip(self, tmp_path):
        stats, fits = self.toy_stats()
        out = emit_plot_data(stats, fits, tmp_path / "s.csv")
        text = out.read_text().splitlines()
        assert text[0] == CSV_HEADER
        assert len(text) == 4
        rows = read_plot_data(out)
        assert [r["d"] for r in rows] == [8, 16, 32]
        assert rows[0]["n_mean"] == 100.0
        refit = refit_from_csv(out)
        assert refit[3].c2 == pytest.approx(fits[3].c2, abs=1e-12)

    def test_sidecar(self, tmp_path):
        stats, fits = self.toy_stats()
        cfg = SweepConfig(k_list=(3,), d_list=(8, 16, 32), output=str(tmp_path))
        out = emit_plot_data(stats, fits, tmp_path / "s.csv", config=cfg)
        sidecar = json.loads(out.with_suffix(".config.json").read_text())
        assert sidecar["k_list"] == [3]
        assert sidecar["root_seed"] == 0

    def test_bad_header_rejected(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="header"):
            read_plot_data(p)

    def test_nan_fit_columns_survive(self, tmp_path):
        stats = [CellStats(k=4, d=8, n_min=1, n_mean=2.0, n_max=3, trials=1)]
        out = emit_plot_data(stats, {}, tmp_path / "s.csv")
        row = read_plot_data(out)[0]
        assert np.isnan(row["fit_c2"])


class TestRunSweep:
    def make_config(self, tmp_path):
        return parse_config(CONFIG_TEXT.replace("OUTDIR", str(tmp_path / "out")))

    def test_sweep_runs_and_is_sorted(self, tmp_path):
        cfg = self.make_config(tmp_path)
        records = run_sweep(cfg)
        assert len(records) == 4
        assert all(r["hit_threshold"] for r in records)
        keys = [(r["kstar"], r["d"], r["seed_index"]) for r in records]
        assert keys == sorted(keys)

    def test_resume_skips_finished_trials(self, tmp_path, monkeypatch):
        cfg = self.make_config(tmp_path)
        first = run_sweep(cfg)

        def boom(args):
            raise AssertionError("resume must not recompute")

        monkeypatch.setattr(harness, "_run_sweep_trial", boom)
        second = run_sweep(cfg)
        assert second == first

    def test_new_root_seed_recomputes(self, tmp_path):
        cfg = self.make_config(tmp_path)
        a = run_sweep(cfg)
        b = run_sweep(cfg, root_seed=12)
        assert a != b

    def test_emit_is_byte_stable(self, tmp_path):
        cfg = self.make_config(tmp_path)
        _, _, path1 = sweep_and_emit(cfg)
        blob1 = path1.read_bytes()
        _, _, path2 = sweep_and_emit(cfg)
        assert path2.read_bytes() == blob1

    def test_progress_callback(self, tmp_path):
        cfg = self.make_config(tmp_path)
        calls = []
        run_sweep(cfg, progress=lambda done, total, rec: calls.append((done, total)))
        assert calls == [(1, 4), (2, 4), (3, 4), (4, 4)]


class TestRunTrial:
    def test_deterministic(self):
        a = run_trial(1, 8, 42, max_samples=50_000)
        b = run_trial(1, 8, 42, max_samples=50_000)
        da, db = dataclasses.asdict(a), dataclasses.asdict(b)
        da.pop("wall_time"), db.pop("wall_time")
        assert da == db
        assert a.seed == 42
