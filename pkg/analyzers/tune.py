"""
Threshold and parameter tuning
M/M/1 model laws, grid search over the threshold delay and sweeps over R
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from dataclasses_json import dataclass_json

from analyzers.criteria import check_c1
from analyzers.dist import DelayLaw
from analyzers.propagate import (
    PathModel,
    moment_curve,
    mse,
    propagate_path,
    raw_moments,
)
from config import Config

logger = logging.getLogger(__name__)

Search = Tuple[float, float, int]

# Mean packet size in bytes and mean interarrival time in microseconds
FLOW_PATTERNS: Dict[str, Tuple[float, float]] = {
    "SF": (850.0, 8.0),
    "LM": (1000.0, 12.0),
    "SM": (750.0, 12.0),
    "SS": (600.0, 14.0),
}

# Mixed load: the request climbs SS -> SM -> LM, the response sees the same switches in reverse
MIXED_FORWARD = ("SS", "SM", "LM")


@dataclass(frozen=True)
class MM1Model:
    """Egress queue fed by Poisson arrivals of exponentially sized packets."""

    mean_packet_bytes: float
    mean_interarrival_us: float
    line_rate: float = 1e9

    def __post_init__(self):
        if self.mean_packet_bytes <= 0 or self.mean_interarrival_us <= 0 or self.line_rate <= 0:
            raise ValueError("Packet size, interarrival time and line rate must be positive")
        if self.utilization >= 1:
            raise ValueError(f"Unstable queue: utilization {self.utilization:.3f} >= 1")

    @classmethod
    def from_flow(cls, mean_packet_bytes: float, mean_interarrival_us: float, line_rate: float = 1e9) -> "MM1Model":
        return cls(mean_packet_bytes, mean_interarrival_us, line_rate)

    @classmethod
    def from_pattern(cls, name: str, line_rate: float = 1e9) -> "MM1Model":
        try:
            size, gap = FLOW_PATTERNS[name.upper()]
        except KeyError:
            raise ValueError(f"Unknown flow pattern '{name}', choose from {sorted(FLOW_PATTERNS)}") from None
        return cls(size, gap, line_rate)

    @property
    def service_time_ns(self) -> float:
        return self.mean_packet_bytes * 8.0 * 1e9 / self.line_rate

    @property
    def interarrival_ns(self) -> float:
        return self.mean_interarrival_us * 1000.0

    @property
    def utilization(self) -> float:
        return self.service_time_ns / self.interarrival_ns

    @property
    def mean_wait_ns(self) -> float:
        return self.utilization / (1.0 / self.service_time_ns - 1.0 / self.interarrival_ns)

    @property
    def rate(self) -> float:
        """Decay rate per ns of the positive waiting time."""
        return self.utilization / self.mean_wait_ns

    def waiting_law(self, pure_exponential: bool = False) -> DelayLaw:
        if pure_exponential:
            return DelayLaw.exponential(1.0 / self.mean_wait_ns)
        return DelayLaw.exponential(self.rate, 1.0 - self.utilization)


def mm1_from_flow(mean_packet_bytes: float, mean_interarrival_us: float, line_rate: float = 1e9) -> MM1Model:
    return MM1Model.from_flow(mean_packet_bytes, mean_interarrival_us, line_rate)


def model_paths(
    patterns: Union[str, Sequence[str]], hops: int = 1, line_rate: float = 1e9, pure_exponential: bool = False
) -> Tuple[List[DelayLaw], List[DelayLaw]]:
    """
    Model waiting laws of both directions, in traversal order.

    A single pattern loads every hop alike; `MI` is the mixed three-switch load;
    a sequence names the forward switches and the reverse sees them in reverse.
    """
    if isinstance(patterns, str):
        if patterns.upper() == "MI":
            forward = list(MIXED_FORWARD)
        else:
            forward = [patterns] * hops
    else:
        forward = list(patterns)
    if not forward:
        raise ValueError("At least one hop is required")

    laws = [MM1Model.from_pattern(name, line_rate).waiting_law(pure_exponential) for name in forward]
    return laws, list(reversed(laws))


def search_grid(search: Search) -> np.ndarray:
    lo, hi, steps = search
    if steps < 1:
        raise ValueError("Threshold search grid is empty")
    if lo <= 0 or hi < lo:
        raise ValueError(f"Invalid threshold search range ({lo}, {hi})")
    if steps == 1 or hi == lo:
        return np.array([float(lo)])
    return np.geomspace(lo, hi, int(steps))


def default_search(fwd_hops: Sequence[DelayLaw], rev_hops: Sequence[DelayLaw], steps: Optional[int] = None) -> Search:
    """
    Search from an eighth of the average hop mean to eight times it.
    Lightly loaded hops have their optimum several mean waits out.
    """
    means = [law.mean() for law in list(fwd_hops) + list(rev_hops)]
    centre = float(np.mean(means)) if means else 0.0
    if centre <= 0:
        centre = 1000.0
    return centre / 8.0, 8.0 * centre, steps or Config.SEARCH_STEPS


def mse_curve(
    fwd_hops: Sequence[DelayLaw],
    rev_hops: Sequence[DelayLaw],
    levels: int,
    capacity: int,
    grid: np.ndarray,
    engine: str = "moments",
) -> np.ndarray:
    """Compensated MSE at every threshold of the grid."""
    if engine == "moments":
        f_mean, f_var, _ = moment_curve(fwd_hops, grid, levels, capacity)
        r_mean, r_var, _ = moment_curve(rev_hops, grid, levels, capacity)
        return (f_var + r_var + (f_mean - r_mean) ** 2) / 4.0
    if engine == "histogram":
        values = []
        for delta_star in grid:
            fwd, _ = propagate_path(PathModel(tuple(fwd_hops), float(delta_star), levels, capacity))
            rev, _ = propagate_path(PathModel(tuple(rev_hops), float(delta_star), levels, capacity))
            values.append(mse(fwd, rev))
        return np.array(values)
    raise ValueError(f"Unknown engine '{engine}'")


def optimize_threshold(
    fwd_hops: Sequence[DelayLaw],
    rev_hops: Sequence[DelayLaw],
    levels: int,
    capacity: int,
    search: Optional[Search] = None,
    engine: str = "moments",
) -> Tuple[float, float]:
    """
    Grid search of the threshold delay minimizing the compensated MSE.
    Ties resolve to the smallest threshold.
    """
    if levels > capacity:
        raise ValueError(f"levels R={levels} exceeds counter capacity N={capacity}")
    grid = search_grid(search or default_search(fwd_hops, rev_hops))
    curve = mse_curve(fwd_hops, rev_hops, levels, capacity, grid, engine)
    best = int(np.argmin(curve))
    delta_star, best_mse = float(grid[best]), float(curve[best])

    for law in list(fwd_hops) + list(rev_hops):
        holds, rhs = check_c1(law, delta_star, levels)
        if not holds:
            logger.warning(
                f"Optimum {delta_star:.1f} ns lies below the C1 bound {rhs:.1f} ns of a hop (R={levels})"
            )
            break

    logger.info(f"Optimal threshold {delta_star:.1f} ns (R={levels}, N={capacity}), MSE {best_mse:.4g} ns^2")
    return delta_star, best_mse


@dataclass_json
@dataclass
class SweepRow:
    levels: int
    delta_star_ns: float
    mse_ns2: float
    improvement: float


@dataclass_json
@dataclass
class SweepResult:
    """Per (R, threshold) candidates with the best threshold of every R."""

    capacity: int
    mse_raw: float
    rows: List[SweepRow] = field(default_factory=list)
    best_delta_star: Dict[int, float] = field(default_factory=dict)
    best_mse: Dict[int, float] = field(default_factory=dict)

    def best_improvement(self, levels: int) -> float:
        if self.mse_raw <= 0:
            return 0.0
        return 1.0 - math.sqrt(max(self.best_mse[levels], 0.0) / self.mse_raw)

    def curve(self) -> List[Tuple[int, float, float]]:
        return [(r, self.best_delta_star[r], self.best_mse[r]) for r in sorted(self.best_mse)]


def sweep_r(
    fwd_hops: Sequence[DelayLaw],
    rev_hops: Sequence[DelayLaw],
    capacity: int,
    r_values: Sequence[int],
    search: Optional[Search] = None,
) -> SweepResult:
    """Optimize the threshold for every R in r_values."""
    grid = search_grid(search or default_search(fwd_hops, rev_hops))
    raw = mse(raw_moments(fwd_hops), raw_moments(rev_hops))
    result = SweepResult(capacity=capacity, mse_raw=raw)

    for levels in r_values:
        curve = mse_curve(fwd_hops, rev_hops, levels, capacity, grid)
        for delta_star, value in zip(grid, curve):
            improvement = 1.0 - math.sqrt(max(value, 0.0) / raw) if raw > 0 else 0.0
            result.rows.append(SweepRow(levels, float(delta_star), float(value), improvement))
        best = int(np.argmin(curve))
        result.best_delta_star[levels] = float(grid[best])
        result.best_mse[levels] = float(curve[best])

    ordered = sorted(result.best_mse)
    for previous, current in zip(ordered, ordered[1:]):
        if result.best_mse[current] > result.best_mse[previous] * (1 + 1e-9):
            logger.warning(
                f"Best MSE rises from R={previous} to R={current} "
                f"({result.best_mse[previous]:.4g} -> {result.best_mse[current]:.4g}); refine the search grid"
            )

    logger.info(f"Swept R over {list(r_values)} with N={capacity}, {grid.size} thresholds each")
    return result
