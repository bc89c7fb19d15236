"""
Tests for round-trip filters and RMS measurement
"""

import math

import numpy as np
import pytest

from protocol.cmc import CounterState, MarkingConfig
from protocol.sync import SyncRound, compensate_server_mode, estimate_offset
from simulator.filters import (
    FilterKind,
    FilterSample,
    FilterWindow,
    apply_filter,
    filter_sample,
    filtered_errors,
    measure_rms,
)
from simulator.network import FlowSpec, HopSpec, ScenarioSpec, SimulatedRound, pooled_rounds, run_replications


def sample(rtt_split, offset, error=None):
    fwd, rev = rtt_split
    return FilterSample(float(fwd), float(rev), float(offset), error)


def simulated(fwd_delay, rev_delay, theta, n_fwd=0, delta_star=1_000.0):
    t1 = 0
    t2 = fwd_delay + theta
    t3 = t2
    t4 = t3 - theta + rev_delay
    sync = SyncRound(t1, t2, t3, t4, CounterState(n_fwd), CounterState(0), delta_star, float(theta))
    return SimulatedRound(sync, estimate_offset(sync), compensate_server_mode(sync))


@pytest.mark.parametrize("kind", list(FilterKind))
def test_window_of_one_is_identity(kind):
    samples = [sample((10, 20), 1.0, 0.5), sample((5, 5), 2.0, -0.5), sample((40, 1), 3.0, 0.0)]
    window = FilterWindow(kind, 1)
    assert [window.push(item) for item in samples] == samples


def test_min_rtt_selects_the_fastest_round_and_keeps_the_earliest_tie():
    window = FilterWindow("minrtt", 3)
    window.push(sample((10, 10), 1.0))
    window.push(sample((5, 5), 2.0))
    assert window.push(sample((3, 7), 3.0)).offset == 2.0
    assert window.push(sample((30, 30), 4.0)).offset == 2.0
    # The earlier of the two fast rounds slides out
    assert window.push(sample((40, 40), 5.0)).offset == 3.0


def test_median_rtt_takes_the_lower_median():
    window = FilterWindow(FilterKind.MEDIAN_RTT, 4)
    for rtt, offset in ((40, 1.0), (10, 2.0), (30, 3.0), (20, 4.0)):
        output = window.push(sample((rtt, 0), offset))
    assert output.offset == 4.0


def test_moving_average():
    window = FilterWindow(FilterKind.MOVING_AVERAGE, 2)
    window.push(sample((10, 10), 1.0, 1.0))
    output = window.push(sample((20, 30), 3.0, 2.0))
    assert output.offset == pytest.approx(2.0)
    assert output.error == pytest.approx(1.5)
    assert output.rtt == pytest.approx(35.0)


def test_window_validation():
    with pytest.raises(ValueError):
        FilterWindow("minrtt", 0)
    with pytest.raises(ValueError):
        FilterWindow("minrtt", 2).output()
    with pytest.raises(ValueError):
        FilterWindow("fastest", 2)


def test_constant_series_is_left_unchanged():
    rounds = [simulated(4_000, 4_000, 250) for _ in range(10)]
    for kind in FilterKind:
        offsets = apply_filter(FilterWindow(kind, 4), rounds)
        np.testing.assert_allclose(offsets, 250.0)


def test_compensated_samples_subtract_the_marked_delay():
    item = simulated(3_500, 500, 0, n_fwd=3)
    raw = filter_sample(item)
    compensated = filter_sample(item, compensated=True)
    assert raw.fwd_delay == 3_500
    assert compensated.fwd_delay == 500
    assert compensated.error == pytest.approx(0.0)
    assert raw.error == pytest.approx(-1_500.0)


def test_min_rtt_filter_prefers_uncongested_rounds():
    rounds = [simulated(9_000, 1_000, 0), simulated(1_000, 1_000, 0), simulated(6_000, 1_000, 0)]
    errors = filtered_errors(FilterWindow("minrtt", 8), rounds)
    np.testing.assert_allclose(errors, [-4_000.0, 0.0, 0.0])


def test_errors_need_a_true_offset():
    sync = SyncRound(0, 10, 10, 20)
    item = SimulatedRound(sync, estimate_offset(sync), compensate_server_mode(sync))
    with pytest.raises(ValueError):
        filtered_errors(FilterWindow("minrtt", 2), [item])


def test_measure_rms():
    assert measure_rms([3.0, 4.0]) == pytest.approx(math.sqrt(12.5))
    assert measure_rms([0.0]) == 0.0
    with pytest.raises(ValueError):
        measure_rms([])


@pytest.mark.slow
def test_marking_beats_longer_filters_under_persistent_congestion():
    flow = FlowSpec(
        mean_packet_bytes=850,
        mean_interarrival_us=7.2,
        on_duration_ns=200_000_000,
        off_duration_ns=50_000_000,
    )
    scenario = ScenarioSpec(
        hops=[HopSpec(forward=flow)],
        marking=MarkingConfig(threshold_bytes=3_600, levels=32),
        duration_ns=1_000_000_000,
        sync_interval_ns=1_000_000,
        replications=8,
        seed=7,
    )
    results = run_replications(scenario, workers=1)

    def variance(kind, size, compensated):
        series = [filtered_errors(FilterWindow(kind, size), result.rounds, compensated) for result in results]
        return float(np.var(np.concatenate(series)))

    assert variance("minrtt", 8, True) <= variance("minrtt", 8, False)
    assert variance("minrtt", 1, True) < variance("minrtt", 12, False)
    assert len(pooled_rounds(results)) > 7_000
