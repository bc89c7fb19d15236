"""
Tests for M/M/1 model laws and threshold tuning
"""

import math

import numpy as np
import pytest

from analyzers.dist import DelayLaw
from analyzers.tune import (
    FLOW_PATTERNS,
    MM1Model,
    default_search,
    mm1_from_flow,
    model_paths,
    mse_curve,
    optimize_threshold,
    search_grid,
    sweep_r,
)


@pytest.mark.parametrize(
    "pattern, utilization, mean_wait_us",
    [("SF", 0.85, 38.5), ("LM", 0.667, 16.0), ("SM", 0.5, 6.0), ("SS", 0.343, 2.5)],
)
def test_flow_pattern_table(pattern, utilization, mean_wait_us):
    model = MM1Model.from_pattern(pattern)
    assert model.utilization == pytest.approx(utilization, abs=0.001)
    assert model.mean_wait_ns / 1000.0 == pytest.approx(mean_wait_us, abs=0.05)
    law = model.waiting_law()
    assert law.zero_mass == pytest.approx(1 - model.utilization)
    assert law.mean() == pytest.approx(model.mean_wait_ns)


def test_light_flow_closed_form():
    model = mm1_from_flow(100, 8)
    assert model.utilization == pytest.approx(0.1)
    assert model.mean_wait_ns == pytest.approx(0.1 / (1 / 800 - 1 / 8000))


def test_unstable_flow_rejected():
    with pytest.raises(ValueError):
        mm1_from_flow(1000, 8)
    with pytest.raises(ValueError):
        MM1Model.from_pattern("XL")


def test_pure_exponential_variant_keeps_the_mean():
    model = MM1Model.from_pattern("SM")
    law = model.waiting_law(pure_exponential=True)
    assert law.zero_mass == 0.0
    assert law.mean() == pytest.approx(model.mean_wait_ns)


def test_model_paths():
    forward, reverse = model_paths("MI")
    assert [law.mean() for law in forward] == pytest.approx(
        [MM1Model.from_pattern(name).mean_wait_ns for name in ("SS", "SM", "LM")]
    )
    assert [law.mean() for law in reverse] == pytest.approx([law.mean() for law in reversed(forward)])
    forward, reverse = model_paths("sf", hops=3)
    assert len(forward) == len(reverse) == 3


def test_search_grid():
    grid = search_grid((1_000.0, 8_000.0, 4))
    np.testing.assert_allclose(grid, [1_000.0, 2_000.0, 4_000.0, 8_000.0])
    assert search_grid((5.0, 5.0, 10)).tolist() == [5.0]
    with pytest.raises(ValueError):
        search_grid((1.0, 2.0, 0))
    with pytest.raises(ValueError):
        search_grid((0.0, 2.0, 10))


def test_default_search_brackets_the_hop_means():
    forward, reverse = model_paths("SM")
    lo, hi, steps = default_search(forward, reverse, 64)
    assert lo == pytest.approx(6_000.0 / 8, rel=1e-3)
    assert hi == pytest.approx(6_000.0 * 8, rel=1e-3)
    assert steps == 64


def test_degenerate_paths_pick_the_smallest_threshold():
    flat = [DelayLaw.degenerate()]
    delta_star, best = optimize_threshold(flat, flat, 1, 1, (500.0, 5_000.0, 32))
    assert delta_star == 500.0
    assert best == 0.0


def sf_closed_form_improvement(delta_star: float) -> float:
    model = MM1Model.from_pattern("SF")
    rho, beta = model.utilization, model.rate
    u = beta * delta_star
    q = rho * math.exp(-u)
    marked = (2 * rho - q * u * u - 2 * q * u) - (rho - u * q) ** 2
    return 1.0 - math.sqrt(marked / (2 * rho - rho * rho))


def test_sf_single_hop_optimum():
    forward, reverse = model_paths("SF")
    delta_star, best = optimize_threshold(forward, reverse, 1, 1, (38_500.0, 115_500.0, 512))
    raw = forward[0].variance() / 2.0
    improvement = 1.0 - math.sqrt(best / raw)

    assert 70_000.0 < delta_star < 90_000.0
    assert improvement == pytest.approx(0.3768, abs=0.02)
    assert improvement == pytest.approx(sf_closed_form_improvement(delta_star), abs=1e-9)


@pytest.mark.parametrize("pattern, expected", [("SF", 0.3768), ("LM", 0.3684), ("SM", 0.3639), ("SS", 0.3609)])
def test_model_expected_improvement(pattern, expected):
    # Single mark, one counter increment
    forward, reverse = model_paths(pattern)
    mean_wait = MM1Model.from_pattern(pattern).mean_wait_ns
    _, best = optimize_threshold(forward, reverse, 1, 1, (0.5 * mean_wait, 8.0 * mean_wait, 2048))
    raw = forward[0].variance() / 2.0
    assert 1.0 - math.sqrt(best / raw) == pytest.approx(expected, abs=0.02)


def test_engines_agree_on_the_curve():
    forward, reverse = model_paths("LM", hops=2)
    grid = search_grid((8_000.0, 40_000.0, 6))
    moments = mse_curve(forward, reverse, 2, 4, grid, "moments")
    histogram = mse_curve(forward, reverse, 2, 4, grid, "histogram")
    np.testing.assert_allclose(histogram, moments, rtol=0.02)
    with pytest.raises(ValueError):
        mse_curve(forward, reverse, 2, 4, grid, "other")


def test_levels_above_capacity_rejected():
    forward, reverse = model_paths("SF")
    with pytest.raises(ValueError):
        optimize_threshold(forward, reverse, 4, 2)


def test_single_level_sweep():
    forward, reverse = model_paths("SM")
    result = sweep_r(forward, reverse, 16, [1], (1_000.0, 30_000.0, 64))
    assert list(result.best_mse) == [1]
    assert len(result.rows) == 64
    assert min(row.mse_ns2 for row in result.rows) == result.best_mse[1]
    assert 0.0 <= result.best_improvement(1) < 1.0


def test_sweep_over_levels_and_capacity():
    forward, reverse = model_paths("MI")
    search = (500.0, 100_000.0, 512)
    levels = list(range(1, 17))
    n16 = sweep_r(forward, reverse, 16, levels, search)
    n32 = sweep_r(forward, reverse, 32, levels, search)

    best16 = [n16.best_mse[r] for r in levels]
    assert all(b <= a * (1 + 1e-9) for a, b in zip(best16, best16[1:]))
    # Returns diminish: levels nine to sixteen add far less than the first eight
    gain_low = n16.best_improvement(8) - n16.best_improvement(1)
    gain_high = n16.best_improvement(16) - n16.best_improvement(8)
    assert 0.0 <= gain_high < 0.5 * gain_low
    assert all(n32.best_mse[r] <= n16.best_mse[r] * (1 + 1e-9) for r in levels)
    assert n32.best_mse[12] < n16.best_mse[12]
    assert all(0.0 <= n16.best_improvement(r) < 1.0 for r in levels)


def test_flow_patterns_are_stable():
    for name in FLOW_PATTERNS:
        assert MM1Model.from_pattern(name).utilization < 1
