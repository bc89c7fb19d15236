#!/usr/bin/env python3
"""
CMC Sync Analyzer MCP Server
Congestion-marking clock synchronization analysis tools for LLMs
"""

import asyncio
import functools
import json
import logging
from datetime import datetime
from typing import Any, Dict, List, Optional

from mcp.server.models import InitializationOptions
from mcp.server import NotificationOptions, Server
from mcp.types import Resource, Tool
import mcp.types as types

from analyzers.criteria import evaluate_conditions
from analyzers.propagate import pair_hops
from analyzers.tune import FLOW_PATTERNS, MM1Model, default_search, model_paths, optimize_threshold
from cli import analyze_laws
from config import Config
from database.models import RunRecord, get_run_history, init_database, save_run
from database.scenario import parse_int_list, parse_scenario
from simulator.filters import FilterWindow, filtered_errors, measure_rms
from simulator.network import pooled_queue_stats, run_replications

# Configure logging
logging.basicConfig(level=Config.LOG_LEVEL)
logger = logging.getLogger("cmc-sync")

# Initialize the MCP server
server = Server("cmc-sync")

_MODEL_PROPERTIES = {
    "model": {"type": "string", "enum": sorted(FLOW_PATTERNS) + ["MI"], "description": "Flow pattern of every hop"},
    "hops": {"type": "number", "default": 1, "description": "Hops for a single pattern"},
    "pure_exponential": {"type": "boolean", "default": False},
}


@server.list_resources()
async def handle_list_resources() -> List[Resource]:
    """List flow patterns and run history."""
    return [
        Resource(
            uri="cmc://flow-patterns",
            name="Flow Patterns",
            description="Cross-traffic patterns with their M/M/1 utilization and mean wait",
            mimeType="application/json"
        ),
        Resource(
            uri="cmc://run-history",
            name="Run History",
            description="Recent simulate/analyze/check/optimize runs",
            mimeType="application/json"
        )
    ]


@server.read_resource()
async def handle_read_resource(uri: Any) -> str:
    uri = str(uri)
    if uri == "cmc://flow-patterns":
        return json.dumps({name: model_flow(name) for name in FLOW_PATTERNS}, indent=2)

    elif uri == "cmc://run-history":
        return json.dumps(await get_run_history(), indent=2)

    else:
        raise ValueError(f"Unknown resource: {uri}")


@server.list_tools()
async def handle_list_tools() -> List[Tool]:
    """List all available analysis tools."""
    return [
        Tool(
            name="simulate_scenario",
            description="Run the multi-hop network simulator on a scenario file",
            inputSchema={
                "type": "object",
                "properties": {
                    "scenario": {"type": "string", "description": "Scenario file contents"},
                    "overrides": {"type": "array", "items": {"type": "string"}, "default": []},
                    "seed": {"type": "number"},
                    "replications": {"type": "number"}
                },
                "required": ["scenario"]
            }
        ),

        Tool(
            name="analyze_paths",
            description="Predict raw and compensated MSE and the expected improvement for model paths",
            inputSchema={
                "type": "object",
                "properties": {
                    **_MODEL_PROPERTIES,
                    "levels": {"type": "string", "default": "1", "description": "Level counts, e.g. 1..8"},
                    "capacity": {"type": "number", "default": 16},
                    "delta_star_ns": {"type": "number", "description": "Threshold delay; omitted means optimize"}
                },
                "required": ["model"]
            }
        ),

        Tool(
            name="check_conditions",
            description="Evaluate the variance, tail-ordering and threshold-bound conditions per switch",
            inputSchema={
                "type": "object",
                "properties": {
                    **_MODEL_PROPERTIES,
                    "delta_star_ns": {"type": "number"},
                    "levels": {"type": "number", "default": 1}
                },
                "required": ["model", "delta_star_ns"]
            }
        ),

        Tool(
            name="optimize_threshold",
            description="Grid search of the threshold delay minimizing compensated MSE",
            inputSchema={
                "type": "object",
                "properties": {
                    **_MODEL_PROPERTIES,
                    "levels": {"type": "number", "default": 1},
                    "capacity": {"type": "number", "default": 16},
                    "search_lo_ns": {"type": "number"},
                    "search_hi_ns": {"type": "number"},
                    "steps": {"type": "number", "default": Config.SEARCH_STEPS}
                },
                "required": ["model"]
            }
        ),

        Tool(
            name="model_flow",
            description="M/M/1 utilization, mean wait and decay rate of a flow",
            inputSchema={
                "type": "object",
                "properties": {
                    "pattern": {"type": "string", "enum": sorted(FLOW_PATTERNS)},
                    "mean_packet_bytes": {"type": "number"},
                    "mean_interarrival_us": {"type": "number"},
                    "line_rate": {"type": "number", "default": 1e9}
                }
            }
        )
    ]


def model_flow(
    pattern: Optional[str] = None,
    mean_packet_bytes: Optional[float] = None,
    mean_interarrival_us: Optional[float] = None,
    line_rate: float = 1e9,
) -> Dict[str, Any]:
    if pattern:
        model = MM1Model.from_pattern(pattern, line_rate)
    elif mean_packet_bytes and mean_interarrival_us:
        model = MM1Model(mean_packet_bytes, mean_interarrival_us, line_rate)
    else:
        raise ValueError("Give a pattern or both mean_packet_bytes and mean_interarrival_us")
    return {
        "mean_packet_bytes": model.mean_packet_bytes,
        "mean_interarrival_us": model.mean_interarrival_us,
        "utilization": model.utilization,
        "mean_wait_us": model.mean_wait_ns / 1000.0,
        "rate_per_ns": model.rate,
    }


def _paths(arguments: Dict[str, Any]):
    return model_paths(arguments["model"], int(arguments.get("hops", 1)), pure_exponential=arguments.get("pure_exponential", False))


def simulate_scenario(arguments: Dict[str, Any]) -> Dict[str, Any]:
    overrides = list(arguments.get("overrides", []))
    if arguments.get("seed") is not None:
        overrides.append(f"scenario.seed={int(arguments['seed'])}")
    if arguments.get("replications") is not None:
        overrides.append(f"scenario.replications={int(arguments['replications'])}")
    resolved = parse_scenario(arguments["scenario"], overrides)
    if resolved.scenario is None:
        raise ValueError("Scenario has no [flows.N] section")

    results = run_replications(resolved.scenario)
    eps_raw = [item.eps_raw for result in results for item in result.rounds]
    eps_comp = [item.eps_comp for result in results for item in result.rounds]
    window = FilterWindow(resolved.analysis.filter_kind, resolved.analysis.filter_window)
    filtered = [filtered_errors(window, result.rounds, compensated=True) for result in results if result.rounds]

    return {
        "rounds": len(eps_raw),
        "rms_raw_ns": measure_rms(eps_raw) if eps_raw else None,
        "rms_comp_ns": measure_rms(eps_comp) if eps_comp else None,
        "filtered_rms_comp_ns": measure_rms([v for series in filtered for v in series]) if filtered else None,
        "queue_stats": [vars(item) for item in pooled_queue_stats(results)],
    }


def analyze_paths(arguments: Dict[str, Any]) -> Dict[str, Any]:
    forward, reverse = _paths(arguments)
    levels = parse_int_list(str(arguments.get("levels", "1")))
    capacity = int(arguments.get("capacity", 16))
    if arguments.get("delta_star_ns"):
        thresholds = {r: float(arguments["delta_star_ns"]) for r in levels}
    else:
        search = default_search(forward, reverse)
        thresholds = {r: optimize_threshold(forward, reverse, r, capacity, search)[0] for r in levels}
    _, summary = analyze_laws(forward, reverse, arguments["model"], levels, capacity, thresholds, "moments")
    return summary


def check_conditions(arguments: Dict[str, Any]) -> List[Dict[str, Any]]:
    forward, reverse = _paths(arguments)
    rows = []
    for hop, (fwd, rev) in enumerate(pair_hops(forward, reverse), start=1):
        report = evaluate_conditions(fwd, rev, float(arguments["delta_star_ns"]), int(arguments.get("levels", 1)))
        rows.append({"hop": hop, **report.to_dict()})
    return rows


def optimize_for(arguments: Dict[str, Any]) -> Dict[str, Any]:
    forward, reverse = _paths(arguments)
    lo, hi, steps = default_search(forward, reverse, int(arguments.get("steps", Config.SEARCH_STEPS)))
    search = (float(arguments.get("search_lo_ns", lo)), float(arguments.get("search_hi_ns", hi)), steps)
    delta_star, best = optimize_threshold(
        forward, reverse, int(arguments.get("levels", 1)), int(arguments.get("capacity", 16)), search
    )
    return {"delta_star_ns": delta_star, "mse_ns2": best, "search": list(search)}


TOOLS = {
    "simulate_scenario": simulate_scenario,
    "analyze_paths": analyze_paths,
    "check_conditions": check_conditions,
    "optimize_threshold": optimize_for,
    "model_flow": lambda arguments: model_flow(**arguments),
}


@server.call_tool()
async def handle_call_tool(name: str, arguments: Dict[str, Any]) -> List[types.TextContent]:
    """Handle tool calls; computation runs off the event loop."""

    try:
        if name not in TOOLS:
            raise ValueError(f"Unknown tool: {name}")

        loop = asyncio.get_running_loop()
        result = await loop.run_in_executor(None, functools.partial(TOOLS[name], arguments or {}))

        await save_run(RunRecord(name, "", datetime.now(), {"arguments": arguments}))
        return [types.TextContent(type="text", text=json.dumps(result, indent=2, default=str))]

    except Exception as e:
        logger.error(f"Error in tool {name}: {str(e)}")
        return [types.TextContent(
            type="text",
            text=f"Error executing {name}: {str(e)}"
        )]


async def main():
    """Main function to run the MCP server."""
    # Initialize database
    await init_database()

    # Run the server using stdin/stdout streams
    from mcp.server.stdio import stdio_server

    async with stdio_server() as (read_stream, write_stream):
        await server.run(
            read_stream,
            write_stream,
            InitializationOptions(
                server_name="cmc-sync",
                server_version="1.0.0",
                capabilities=server.get_capabilities(
                    notification_options=NotificationOptions(),
                    experimental_capabilities={}
                )
            )
        )


def run():
    asyncio.run(main())


if __name__ == "__main__":
    run()
