"""
Tests for the MCP tool handlers
"""

import json

import pytest

from database.models import get_run_history, init_database
from server import (
    analyze_paths,
    check_conditions,
    handle_call_tool,
    handle_read_resource,
    model_flow,
    optimize_for,
)


def test_model_flow_from_pattern_and_parameters():
    sf = model_flow("SF")
    assert sf["utilization"] == pytest.approx(0.85)
    assert sf["mean_wait_us"] == pytest.approx(38.5, abs=0.05)

    custom = model_flow(mean_packet_bytes=100, mean_interarrival_us=8)
    assert custom["utilization"] == pytest.approx(0.1)
    with pytest.raises(ValueError):
        model_flow()


def test_check_conditions_pairs_every_switch():
    rows = check_conditions({"model": "MI", "delta_star_ns": 20_000, "levels": 2})
    assert [row["hop"] for row in rows] == [1, 2, 3]
    assert all(row["levels"] == 2 for row in rows)


def test_analyze_and_optimize_agree_on_a_single_hop():
    optimized = optimize_for({"model": "SF", "levels": 1, "capacity": 1, "steps": 256})
    summary = analyze_paths(
        {"model": "SF", "levels": "1", "capacity": 1, "delta_star_ns": optimized["delta_star_ns"]}
    )
    assert summary["mse_comp"] == pytest.approx(optimized["mse_ns2"], rel=1e-9)
    assert summary["improvement"] == pytest.approx(0.3767, abs=0.01)


async def test_tool_calls_return_json_and_record_runs(runs_db):
    await init_database()
    reply = await handle_call_tool("model_flow", {"pattern": "SS"})
    payload = json.loads(reply[0].text)
    assert payload["utilization"] == pytest.approx(0.343, abs=0.001)
    history = await get_run_history("model_flow")
    assert history[0]["summary"] == {"arguments": {"pattern": "SS"}}


async def test_tool_errors_are_reported_as_text(runs_db):
    reply = await handle_call_tool("shuffle", {})
    assert reply[0].text.startswith("Error executing shuffle")


async def test_flow_pattern_resource():
    patterns = json.loads(await handle_read_resource("cmc://flow-patterns"))
    assert set(patterns) == {"SF", "LM", "SM", "SS"}
    with pytest.raises(ValueError):
        await handle_read_resource("cmc://nothing")
