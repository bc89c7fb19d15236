"""
Improvement conditions for marking over one hop
Variance improvement region, tail ordering between directions and the threshold upper bound
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Tuple

import numpy as np
from dataclasses_json import dataclass_json
from scipy import optimize

from analyzers.dist import DelayLaw
from config import Config

logger = logging.getLogger(__name__)

REGION_GRID_POINTS = 2048


@dataclass_json
@dataclass
class ConditionReport:
    """Condition outcomes for one (request law, response law, threshold, R) evaluation."""

    delta_star: float
    levels: int
    c1_holds: bool
    c2_holds: bool
    c3_holds: bool
    ir_lower_bound: float
    c3_upper_bound: float
    ir_fraction: float
    actual_ir_fraction: float = 1.0
    a1_regime: bool = False
    mean_term_reduced: bool = False


def _c1_rhs(law: DelayLaw, delta_star: float, levels: int) -> float:
    mean = law.mean()
    return 2.0 * mean / (1.0 + (2 * levels - 1) * float(law.tail(levels * delta_star)))


def check_c1(law: DelayLaw, delta_star: float, levels: int) -> Tuple[bool, float]:
    """
    Sufficient condition for variance reduction:
    delta_star >= 2 E[X] / (1 + (2R - 1) P(X >= R delta_star)).
    """
    if delta_star <= 0:
        raise ValueError(f"delta_star must be positive, got {delta_star}")
    if law.mean() <= 0:
        return True, 0.0
    rhs = _c1_rhs(law, delta_star, levels)
    return delta_star >= rhs, rhs


def _oriented(req: DelayLaw, resp: DelayLaw) -> Tuple[DelayLaw, DelayLaw, bool]:
    """Order a pair by mean; the flag reports equal means."""
    equal = math.isclose(req.mean(), resp.mean(), rel_tol=1e-12, abs_tol=1e-12)
    if req.mean() >= resp.mean():
        return req, resp, equal
    return resp, req, equal


def _tail_gaps(high: DelayLaw, low: DelayLaw, delta_star: float, levels: int) -> np.ndarray:
    points = delta_star * np.arange(1, levels + 1)
    return np.asarray(high.tail(points)) - np.asarray(low.tail(points))


def check_c2(req: DelayLaw, resp: DelayLaw, delta_star: float, levels: int) -> bool:
    """The law with the larger mean has a strictly larger tail at every level boundary."""
    if delta_star <= 0:
        raise ValueError(f"delta_star must be positive, got {delta_star}")
    high, low, equal = _oriented(req, resp)
    if equal:
        return False
    return bool(np.all(_tail_gaps(high, low, delta_star, levels) > 0))


def check_c3(req: DelayLaw, resp: DelayLaw, delta_star: float, levels: int) -> Tuple[bool, float]:
    """delta_star < 2 (mean gap) / sum of tail gaps."""
    if delta_star <= 0:
        raise ValueError(f"delta_star must be positive, got {delta_star}")
    high, low, _ = _oriented(req, resp)
    denominator = float(_tail_gaps(high, low, delta_star, levels).sum())
    if denominator == 0:
        return True, math.inf
    upper = 2.0 * (high.mean() - low.mean()) / denominator
    return delta_star < upper, upper


def mean_term_reduced(req: DelayLaw, resp: DelayLaw, delta_star: float, levels: int) -> Tuple[bool, float, float]:
    """
    Whether marking shrinks the squared mean difference over one hop:
    true iff 0 < E[C'] < 2 E[C]. Returns the flag and the terms before and after.
    """
    high, low, _ = _oriented(req, resp)
    gap = high.mean() - low.mean()
    removed = delta_star * float(_tail_gaps(high, low, delta_star, levels).sum())
    return 0 < removed < 2 * gap, gap * gap, (gap - removed) ** 2


def variance_after_marking(law: DelayLaw, delta_star: float, levels: int) -> float:
    """Variance of X - delta_star * min(floor(X / delta_star), R), computed from interval moments."""
    if delta_star <= 0:
        raise ValueError(f"delta_star must be positive, got {delta_star}")
    lower = delta_star * np.arange(levels)
    i0, i1, i2 = law.interval_moments(lower, lower + delta_star)
    t0, t1, t2 = law.interval_moments(levels * delta_star, np.inf)
    first = float(i1.sum() + t1)
    second = float(i2.sum() + t2)
    return max(second - first * first, 0.0)


def ir_lower_bound(law: DelayLaw, levels: int) -> float:
    """Smallest threshold from which the C1 condition holds up to twice the mean."""
    mean = law.mean()
    if mean <= 0:
        return 0.0

    def gap(x: float) -> float:
        return x - _c1_rhs(law, x, levels)

    grid = np.geomspace(mean * 1e-4, 2.0 * mean, 256)
    values = np.array([gap(x) for x in grid])
    signs = np.sign(values)
    crossings = np.flatnonzero(np.diff(signs) != 0)

    if values[0] >= 0:
        return float(grid[0])
    if crossings.size == 1:
        k = int(crossings[0])
        try:
            return float(optimize.brentq(gap, grid[k], grid[k + 1], xtol=1e-9 * mean))
        except ValueError:
            logger.debug("Root bracket rejected, falling back to grid scan")

    failing = np.flatnonzero(values < 0)
    if failing.size == 0:
        return float(grid[0])
    return float(grid[min(failing[-1] + 1, grid.size - 1)])


def _region_range(law: DelayLaw) -> float:
    if law.is_bounded:
        return law.upper_support()
    return float(law.quantile(Config.UNBOUNDED_QUANTILE))


def improvement_region_fraction(law: DelayLaw, levels: int, mode: str = "sufficient") -> float:
    """
    Fraction of the data range of thresholds that improve the variance.

    `sufficient` counts thresholds admitted by the C1 condition for any level count
    up to R; `actual` counts thresholds where the marked variance is below the raw one.
    """
    upper = _region_range(law)
    if upper <= 0 or law.mean() <= 0:
        return 1.0

    grid = upper * (np.arange(1, REGION_GRID_POINTS + 1) / REGION_GRID_POINTS)
    if mode == "sufficient":
        admitted = np.zeros(grid.size, dtype=bool)
        for r in range(1, levels + 1):
            admitted |= np.array([check_c1(law, x, r)[0] for x in grid])
    elif mode == "actual":
        raw = law.variance()
        admitted = np.array([variance_after_marking(law, x, levels) < raw for x in grid])
    else:
        raise ValueError(f"Unknown improvement region mode '{mode}'")
    return float(admitted.mean())


def actual_improvement_fraction(law: DelayLaw, levels: int) -> float:
    return improvement_region_fraction(law, levels, mode="actual")


def evaluate_conditions(req: DelayLaw, resp: DelayLaw, delta_star: float, levels: int) -> ConditionReport:
    """Evaluate every condition for one hop pair; C1 must hold in both directions."""
    c1_req, _ = check_c1(req, delta_star, levels)
    c1_resp, _ = check_c1(resp, delta_star, levels)
    _, _, equal = _oriented(req, resp)
    c3_holds, upper = check_c3(req, resp, delta_star, levels)
    reduced, _, _ = mean_term_reduced(req, resp, delta_star, levels)

    report = ConditionReport(
        delta_star=delta_star,
        levels=levels,
        c1_holds=c1_req and c1_resp,
        c2_holds=check_c2(req, resp, delta_star, levels),
        c3_holds=c3_holds,
        ir_lower_bound=max(ir_lower_bound(req, levels), ir_lower_bound(resp, levels)),
        c3_upper_bound=upper,
        ir_fraction=min(improvement_region_fraction(req, levels), improvement_region_fraction(resp, levels)),
        actual_ir_fraction=min(actual_improvement_fraction(req, levels), actual_improvement_fraction(resp, levels)),
        a1_regime=equal,
        mean_term_reduced=reduced,
    )
    logger.debug(f"Conditions at delta*={delta_star:.1f} ns, R={levels}: {report}")
    return report


def report_row(report: ConditionReport, scenario: str) -> Dict[str, Any]:
    row = {"scenario": scenario}
    row.update(report.to_dict())
    return row
