"""
Tests for scenario file parsing, overrides and echo
"""

import warnings

import pytest

from database.scenario import (
    ConfigError,
    echo_scenario,
    load_scenario,
    parse_float_list,
    parse_int_list,
    parse_scenario,
)
from simulator.filters import FilterKind


def test_minimal_scenario_resolves(minimal_scenario):
    resolved = load_scenario(minimal_scenario)
    scenario = resolved.scenario
    assert len(scenario.hops) == 2
    assert scenario.hops[0].forward.mean_packet_bytes == 600.0
    assert scenario.hops[0].reverse.mean_interarrival_us == 12.0
    assert scenario.hops[1].reverse.mean_packet_bytes == 600.0
    assert scenario.hops[1].reverse.mean_interarrival_us == 14.0
    assert scenario.marking.levels == 2
    assert scenario.marking.capacity == 8
    assert scenario.true_offset_ns == 1_500
    assert resolved.analysis.filter_kind is FilterKind.MIN_RTT


def test_echo_is_a_fixpoint(minimal_scenario):
    resolved = load_scenario(minimal_scenario)
    echoed = echo_scenario(resolved)
    again = parse_scenario(echoed)
    assert again == resolved
    assert echo_scenario(again) == echoed


def test_echo_raises_no_deprecation_warnings(minimal_scenario):
    resolved = load_scenario(minimal_scenario)
    with warnings.catch_warnings():
        warnings.simplefilter("error", DeprecationWarning)
        echoed = echo_scenario(resolved)
    assert "[marking]" in echoed


def test_echo_keeps_cell_thresholds_and_analysis():
    text = "\n".join(
        [
            "[marking]",
            "cell_exponent = 5",
            "levels = 4",
            "[analysis]",
            "r_values = 1..4",
            "thresholds_ns = 20000, 40000",
            "model = sf",
            "model_hops = 3",
        ]
    )
    resolved = parse_scenario(text)
    assert resolved.scenario is None
    assert resolved.marking.threshold_bytes == 2_560
    assert resolved.analysis.r_values == [1, 2, 3, 4]
    assert resolved.analysis.thresholds_ns == [20_000.0, 40_000.0]
    assert resolved.analysis.model == "SF"
    assert parse_scenario(echo_scenario(resolved)) == resolved


def test_overrides_win_over_the_file(minimal_scenario):
    resolved = load_scenario(
        minimal_scenario,
        ["marking.levels=1", "scenario.seed=9", "flows.2.forward.mean_interarrival_us=20", "analysis.engine=histogram"],
    )
    assert resolved.scenario.marking.levels == 1
    assert resolved.scenario.seed == 9
    assert resolved.scenario.hops[1].forward.mean_interarrival_us == 20.0
    assert resolved.scenario.hops[1].forward.mean_packet_bytes == 750.0
    assert resolved.analysis.engine == "histogram"


@pytest.mark.parametrize("override", ["marking.levels", "levels=2", "flows.1=SF"])
def test_malformed_overrides(minimal_scenario, override):
    with pytest.raises(ConfigError):
        load_scenario(minimal_scenario, [override])


def test_validation_errors_name_the_line():
    text = "[scenario]\nduration_ns = 1000000000\n\n[marking]\nlevels = 2\nthreshold_bytes = -5\n\n[flows.1]\nforward = SS\n"
    with pytest.raises(ConfigError) as info:
        parse_scenario(text)
    assert info.value.section == "marking"
    assert info.value.field == "threshold_bytes"
    assert info.value.line == 6
    assert "line 6" in str(info.value)


def test_flow_field_errors_point_into_the_flow_section():
    text = "[scenario]\nduration_ns = 1000000000\n\n[flows.1]\nforward.mean_packet_bytes = 0\nforward.mean_interarrival_us = 8\n"
    with pytest.raises(ConfigError) as info:
        parse_scenario(text)
    assert info.value.section == "flows.1"
    assert info.value.field == "forward.mean_packet_bytes"
    assert info.value.line == 5


def test_unknown_keys_name_their_line():
    with pytest.raises(ConfigError) as info:
        parse_scenario("[analysis]\nengine = moments\nengin = histogram\n")
    assert (info.value.section, info.value.field, info.value.line) == ("analysis", "engin", 3)

    with pytest.raises(ConfigError) as info:
        parse_scenario("[flows.1]\nforward = SS\nreverse.rate = 3\n")
    assert (info.value.section, info.value.field, info.value.line) == ("flows.1", "reverse.rate", 3)


def test_levels_above_capacity_point_at_the_marking_section():
    text = "[marking]\nheader_bits = 2\nencoding = bitshift\nfr_split = true\nlevels = 2\n"
    with pytest.raises(ConfigError) as info:
        parse_scenario(text)
    assert info.value.section == "marking"
    assert info.value.line == 1


@pytest.mark.parametrize(
    "text",
    [
        "[scenario]\nduration_ns = 10\nspeed = 3\n[flows.1]\nforward = SS\n",
        "[extras]\nkey = 1\n",
        "[scenario]\nduration_ns = 10\n[flows.1]\nforward = SS\n[flows.3]\nforward = SS\n",
        "[flows.1]\nforward = XX\n",
        "[flows.1]\nsideways = SS\n",
        "[flows.1]\nforward.colour = red\n",
        "[scenario]\nduration_ns = 1000\n",
        "[analysis]\nmodel = QQ\n",
        "[marking]\nlevels = 1\nlevels = 2\n",
        "levels = 1\n",
    ],
)
def test_invalid_files_raise_config_errors(text):
    with pytest.raises(ConfigError):
        parse_scenario(text)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_scenario(tmp_path / "absent.ini")


def test_list_parsing():
    assert parse_int_list("1..3,5") == [1, 2, 3, 5]
    assert parse_int_list(4) == [4]
    assert parse_float_list("1.5, 2") == [1.5, 2.0]
    with pytest.raises(ValueError):
        parse_int_list("3..1")
