"""
Tests for run history and report files
"""

from datetime import datetime

import numpy as np
import pandas as pd
import pytest

from analyzers.dist import load_samples
from database.models import RunManifest, RunRecord, get_run_history, init_database, save_run
from database.reports import (
    collect_outputs,
    read_frame,
    read_json,
    wait_file_name,
    write_json,
    write_rows,
    write_samples,
)


async def test_run_history_round_trip(runs_db):
    await init_database()
    first = await save_run(RunRecord("analyze", "/tmp/a", datetime(2024, 1, 1), {"improvement": 0.37}))
    second = await save_run(RunRecord("simulate", "/tmp/b", datetime(2024, 1, 2), {"rounds": 9}, "s.ini"))
    assert second > first

    history = await get_run_history()
    assert [item["command"] for item in history] == ["simulate", "analyze"]
    assert history[0]["scenario_path"] == "s.ini"
    assert history[1]["summary"] == {"improvement": 0.37}

    only = await get_run_history("analyze")
    assert len(only) == 1
    assert only[0]["output_dir"] == "/tmp/a"
    assert len(await get_run_history(limit=1)) == 1


async def test_history_in_an_explicit_database(tmp_path):
    path = str(tmp_path / "other.db")
    await init_database(path)
    await save_run(RunRecord("check", "/tmp/c", datetime.now(), {"rows": np.int64(3)}), path)
    history = await get_run_history(db_path=path)
    assert history[0]["summary"] == {"rows": "3"}


def test_manifest_serializes():
    manifest = RunManifest("optimize", None, "[marking]\n", [1, 2], "out", wall_clock_s=1.5)
    payload = manifest.to_dict()
    assert payload["seeds"] == [1, 2]
    assert payload["tool_version"]
    assert RunManifest.from_dict(payload) == manifest


async def test_report_writers_and_readers(tmp_path):
    await write_rows(tmp_path / "rows.csv", [{"a": 1, "b": 2.5}], ["a", "b"])
    await write_rows(tmp_path / "empty.csv", [], ["a", "b"])
    await write_json(tmp_path / "summary.json", {"value": np.float64(0.5), "items": np.arange(3)})

    frame = read_frame(tmp_path / "rows.csv")
    assert list(frame.columns) == ["a", "b"]
    assert frame.iloc[0]["b"] == 2.5
    assert read_frame(tmp_path / "empty.csv").empty
    assert read_json(tmp_path / "summary.json") == {"items": [0, 1, 2], "value": 0.5}
    assert collect_outputs(tmp_path) == ["empty.csv", "rows.csv", "summary.json"]

    with pytest.raises(FileNotFoundError):
        read_frame(tmp_path / "absent.csv")
    with pytest.raises(FileNotFoundError):
        read_json(tmp_path / "absent.json")


async def test_written_samples_load_back(tmp_path):
    path = tmp_path / wait_file_name(2, "reverse")
    assert path.name == "waits_hop2_reverse.csv"
    await write_samples(path, np.array([0, 1_500, 42]))
    np.testing.assert_array_equal(load_samples(path), [0.0, 1_500.0, 42.0])
    assert pd.read_csv(path).columns.tolist() == ["queuing_delay_ns"]
