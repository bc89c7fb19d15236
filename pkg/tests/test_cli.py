"""
End-to-end tests for the command line workflows
"""

import asyncio
import json

import numpy as np
import pandas as pd
import pytest

from analyzers.dist import DelayLaw
from cli import main
from database.models import get_run_history
from protocol.sync import ROUND_COLUMNS

SHORT_RUN = ["--set", "scenario.duration_ns=200000000", "--set", "scenario.sync_interval_ns=20000000", "--workers", "1"]


def summary(directory):
    return json.loads((directory / "summary.json").read_text(encoding="utf-8"))


def test_missing_scenario_file(tmp_path, runs_db, capsys):
    missing = tmp_path / "absent.ini"
    assert main(["simulate", str(missing), "--out", str(tmp_path / "out")]) == 2
    assert str(missing) in capsys.readouterr().err


def test_bad_scenario_reports_the_line(tmp_path, runs_db, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[scenario]\nduration_ns = 1000000000\n\n[marking]\nlevles = 2\n\n[flows.1]\nforward = SS\n")
    assert main(["simulate", str(path), "--out", str(tmp_path / "out")]) == 2
    err = capsys.readouterr().err
    assert "line 5 [marking]" in err
    assert "levles" in err


def test_usage_errors_exit_with_two(tmp_path):
    assert main(["analyze"]) == 2
    assert main(["frobnicate", "--out", str(tmp_path)]) == 2


def test_simulate_writes_the_round_schema(tmp_path, runs_db, minimal_scenario):
    out = tmp_path / "sim"
    assert main(["simulate", str(minimal_scenario), "--out", str(out), *SHORT_RUN]) == 0

    rounds = pd.read_csv(out / "rounds.csv")
    waits = ["wait_fwd_hop1", "wait_fwd_hop2", "wait_rev_hop1", "wait_rev_hop2"]
    assert list(rounds.columns) == ROUND_COLUMNS + waits + ["replication"]
    assert len(rounds) == 9

    stats = pd.read_csv(out / "queue_stats.csv")
    assert len(stats) == 4
    assert {"hop", "direction", "rho_obs", "mean_wait_ns", "drops", "mean_queue_length", "arrival_rate_per_us"} <= set(stats.columns)
    for hop in (1, 2):
        for direction in ("forward", "reverse"):
            assert (out / f"waits_hop{hop}_{direction}.csv").exists()

    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["command"] == "simulate"
    assert manifest["seeds"] == [3]
    assert "rounds.csv" in manifest["outputs"]
    assert "[flows.2]" in manifest["config_echo"]
    assert summary(out)["rounds"] == 9


def test_simulate_is_deterministic_per_seed(tmp_path, runs_db, minimal_scenario):
    outputs = []
    for name, seed in (("a", "7"), ("b", "7"), ("c", "8")):
        out = tmp_path / name
        assert main(["simulate", str(minimal_scenario), "--out", str(out), "--seed", seed, *SHORT_RUN]) == 0
        outputs.append((out / "rounds.csv").read_bytes())
    assert outputs[0] == outputs[1]
    assert outputs[0] != outputs[2]


def test_simulated_waits_feed_the_analyzer(tmp_path, runs_db, minimal_scenario):
    sim = tmp_path / "sim"
    assert main(["simulate", str(minimal_scenario), "--out", str(sim), *SHORT_RUN]) == 0
    out = tmp_path / "analysis"
    assert main(["analyze", "--waits-dir", str(sim), "--delta-star", "3000", "--R", "1,2", "--N", "8", "--out", str(out)]) == 0
    result = summary(out)
    assert result["label"] == "empirical"
    assert result["hops"] == 2
    assert len(result["results"]) == 2


def test_analyze_sf_model_reaches_the_expected_improvement(tmp_path, runs_db):
    out = tmp_path / "sf"
    assert main(["analyze", "--model", "SF", "--optimize", "--out", str(out)]) == 0
    result = summary(out)
    assert result["improvement"] == pytest.approx(0.3767, abs=0.01)
    assert 60_000 < result["delta_star_ns"] < 100_000

    sweep = pd.read_csv(out / "sweep.csv")
    assert list(sweep.columns) == ["R", "delta_star_ns", "mse_ns2", "improvement"]
    counters = pd.read_csv(out / "counter_dist.csv")
    assert list(counters.columns) == ["R", "direction", "n", "prob"]
    for _, group in counters.groupby("direction"):
        assert group["prob"].sum() == pytest.approx(1.0)
        assert list(group["n"]) == list(range(len(group)))
    error_law = pd.read_csv(out / "error_law.csv")
    assert list(error_law.columns) == ["R", "direction", "bin_start_ns", "mass"]
    conditions = pd.read_csv(out / "conditions_report.csv")
    assert "ir_fraction" in conditions.columns

    history = asyncio.run(get_run_history("analyze"))
    assert history[0]["output_dir"] == str(out)


def test_analyze_lists_every_counter_state(tmp_path, runs_db):
    out = tmp_path / "sm"
    args = ["analyze", "--model", "SM", "--hops", "2", "--R", "1,2", "--N", "6", "--delta-star", "12000"]
    assert main(args + ["--out", str(out)]) == 0
    counters = pd.read_csv(out / "counter_dist.csv")
    assert list(counters.columns) == ["R", "direction", "n", "prob"]
    for (levels, _), group in counters.groupby(["R", "direction"]):
        assert list(group["n"]) == list(range(7))
        assert group["prob"].sum() == pytest.approx(1.0)
        assert group.loc[group["n"] > 2 * levels, "prob"].sum() == 0.0
    sweep = pd.read_csv(out / "sweep.csv")
    assert list(sweep["R"]) == [1, 2]


def test_analyze_degenerate_path(tmp_path, runs_db):
    path = tmp_path / "idle.ini"
    path.write_text("[scenario]\nduration_ns = 1000000000\n\n[flows.1]\n")
    out = tmp_path / "idle"
    assert main(["analyze", str(path), "--out", str(out)]) == 0
    result = summary(out)
    assert result["degenerate"] is True
    assert result["mse_raw"] == 0.0
    assert result["improvement"] == 0.0


def test_check_flags_identical_directions(tmp_path, runs_db, rng):
    samples = tmp_path / "waits.csv"
    delays = np.where(rng.random(5_000) < 0.15, 0, rng.exponential(40_000.0, 5_000)).astype(np.int64)
    samples.write_text("\n".join(str(value) for value in delays) + "\n")
    out = tmp_path / "check"
    args = ["check", "--waits-forward", str(samples), "--waits-reverse", str(samples)]
    assert main([*args, "--thresholds", "80000", "--R", "1..3", "--out", str(out)]) == 0

    report = pd.read_csv(out / "conditions_report.csv")
    assert len(report) == 3
    assert not report["c2_holds"].any()
    assert report["a1_regime"].all()
    assert summary(out)["a1_regime"] is True


def test_check_rejects_malformed_samples(tmp_path, runs_db):
    samples = tmp_path / "waits.csv"
    samples.write_text("100\nfast\n")
    out = tmp_path / "check"
    assert main(["check", "--waits-forward", str(samples), "--waits-reverse", str(samples), "--out", str(out)]) == 2


def test_check_rejects_unpaired_hops(tmp_path, runs_db, monkeypatch, capsys):
    law = DelayLaw.exponential(1 / 20_000.0, 0.3)
    monkeypatch.setattr("cli.path_laws", lambda args, resolved: ([law, law], [law], "empirical"))
    assert main(["check", "--thresholds", "10000", "--R", "1", "--out", str(tmp_path / "check")]) == 2
    assert "2 forward vs 1 reverse" in capsys.readouterr().err


def test_levels_above_capacity_is_a_usage_error(tmp_path, runs_db):
    assert main(["analyze", "--model", "SS", "--R", "4", "--N", "2", "--out", str(tmp_path / "x")]) == 2


def test_optimize_and_report(tmp_path, runs_db):
    opt = tmp_path / "opt"
    assert main(["optimize", "--model", "SF", "--R", "1", "--N", "1", "--search", "38500,115500,256", "--out", str(opt)]) == 0
    optimum = pd.read_csv(opt / "optimum.csv")
    row = optimum.iloc[0]
    assert row["improvement"] == pytest.approx(0.3768, abs=0.02)
    assert row["threshold_bytes"] == pytest.approx(row["delta_star_ns"] / 8.0)
    assert row["cell_threshold_bytes"] == 80 * 2 ** int(row["cell_exponent"])

    ana = tmp_path / "ana"
    assert main(["analyze", "--model", "SM", "--delta-star", "12000", "--out", str(ana)]) == 0

    merged = tmp_path / "merged"
    assert main(["report", str(opt), str(ana), "--out", str(merged)]) == 0
    report = pd.read_csv(merged / "report.csv")
    assert list(report["command"]) == ["optimize", "analyze"]
    series = pd.read_csv(merged / "report_series.csv")
    assert set(series["table"]) == {"optimum", "sweep"}


def test_report_needs_earlier_outputs(tmp_path, runs_db):
    assert main(["report", str(tmp_path / "nothing"), "--out", str(tmp_path / "merged")]) == 2
