"""
Shared fixtures and reference oracles
"""

import itertools
from collections import defaultdict
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pytest

from analyzers.dist import DelayLaw, HistogramLaw
from analyzers.tune import MM1Model


def tree_error_law(
    hops: Sequence[Tuple[Sequence[float], Sequence[float]]], delta_star: float, levels: int, capacity: int
) -> Tuple[Dict[float, float], np.ndarray]:
    """
    Enumerate every path outcome of discrete hop laws given as (support, masses).
    Returns the corrected error law and the final counter distribution.
    """
    errors: Dict[float, float] = defaultdict(float)
    counters = np.zeros(capacity + 1)
    for outcome in itertools.product(*[list(zip(support, masses)) for support, masses in hops]):
        counter, error, prob = 0, 0.0, 1.0
        for delay, mass in outcome:
            used = min(int(np.floor(delay / delta_star)), levels, capacity - counter)
            error += delay - used * delta_star
            counter += used
            prob *= mass
        if prob > 0:
            errors[round(error, 6)] += prob
            counters[counter] += prob
    return dict(errors), counters


def marking_monte_carlo(
    hops: Sequence[DelayLaw], delta_star: float, levels: int, capacity: int, trials: int, seed: int = 0
) -> Tuple[np.ndarray, np.ndarray]:
    """Direct simulation of one direction: corrected errors and final counters."""
    rng = np.random.default_rng(seed)
    counters = np.zeros(trials, dtype=np.int64)
    errors = np.zeros(trials)
    for law in hops:
        delays = np.asarray(law.sample(rng, trials), dtype=float)
        used = np.minimum(np.floor(delays / delta_star).astype(np.int64), np.minimum(levels, capacity - counters))
        errors += delays - used * delta_star
        counters += used
    return errors, counters


def lattice_ks(law: HistogramLaw, samples: np.ndarray) -> float:
    """KS distance between a lattice law and samples, each cell read at its upper half-bin edge."""
    values = np.sort(np.asarray(samples, dtype=float))
    edges = law.support() + law.bin_width / 2.0
    lattice_cdf = np.cumsum(law.masses)
    sample_cdf = np.searchsorted(values, edges, side="right") / values.size
    return float(np.max(np.abs(lattice_cdf - sample_cdf)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def sf_law() -> DelayLaw:
    return MM1Model.from_pattern("SF").waiting_law()


@pytest.fixture
def two_point_law():
    def build(delta_star: float) -> DelayLaw:
        return DelayLaw.discrete([0.0, 1.5 * delta_star], [0.5, 0.5])

    return build


@pytest.fixture
def runs_db(tmp_path, monkeypatch) -> str:
    path = str(tmp_path / "runs.db")
    monkeypatch.setattr("database.models.DATABASE_PATH", path)
    return path


@pytest.fixture
def minimal_scenario(tmp_path):
    """A short two-hop scenario file with light cross-traffic."""
    text = "\n".join(
        [
            "[scenario]",
            "duration_ns = 2000000000",
            "sync_interval_ns = 50000000",
            "base_delay_ns = 3000",
            "true_offset_ns = 1500",
            "seed = 3",
            "",
            "[marking]",
            "threshold_bytes = 3600",
            "levels = 2",
            "header_bits = 4",
            "",
            "[flows.1]",
            "forward = SS",
            "reverse = SM",
            "",
            "[flows.2]",
            "forward = SM",
            "reverse.mean_packet_bytes = 600",
            "reverse.mean_interarrival_us = 14",
            "",
        ]
    )
    path = tmp_path / "scenario.ini"
    path.write_text(text, encoding="utf-8")
    return path


def random_law(rng: np.random.Generator, lattice: float) -> DelayLaw:
    """Exponential, lattice-aligned discrete or gamma-sampled empirical law."""
    kind = rng.integers(0, 3)
    if kind == 0:
        rho = rng.uniform(0.2, 0.9)
        return DelayLaw.exponential(rho / rng.uniform(0.5, 2.0) / 10_000.0, 1.0 - rho)
    if kind == 1:
        support = lattice * rng.integers(0, 400, size=rng.integers(2, 6))
        masses = rng.dirichlet(np.ones(support.size))
        masses[-1] = 1.0 - masses[:-1].sum()
        return DelayLaw.discrete(support, masses)
    samples = rng.gamma(rng.uniform(0.5, 3.0), 6_000.0, size=4_000)
    samples[rng.random(samples.size) < rng.uniform(0.1, 0.5)] = 0.0
    return DelayLaw.empirical(samples)


def sample_paths(seed: int, count: int) -> List[Tuple[List[DelayLaw], float, int, int]]:
    rng = np.random.default_rng(seed)
    paths = []
    for _ in range(count):
        delta_star = float(rng.uniform(5_000.0, 15_000.0))
        capacity = int(rng.integers(1, 9))
        levels = int(rng.integers(1, min(capacity, 4) + 1))
        hops = [random_law(rng, delta_star / 64.0) for _ in range(int(rng.integers(1, 5)))]
        paths.append((hops, delta_star, levels, capacity))
    return paths
