"""
Round-trip filters over sync rounds
MinRTT, MedianRTT and MovingAverage sliding windows, and RMS of offset errors
"""

import logging
import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Deque, List, Optional, Sequence, Union

import numpy as np

logger = logging.getLogger(__name__)


class FilterKind(str, Enum):
    MIN_RTT = "minrtt"
    MEDIAN_RTT = "medianrtt"
    MOVING_AVERAGE = "movingaverage"


@dataclass(frozen=True)
class FilterSample:
    """Delay estimates and the offset estimate of one round."""

    fwd_delay: float
    rev_delay: float
    offset: float
    error: Optional[float] = None

    @property
    def rtt(self) -> float:
        return self.fwd_delay + self.rev_delay


def filter_sample(simulated, compensated: bool = False) -> FilterSample:
    """Filter input of a simulated round; compensated inputs subtract the marked delay."""
    sync = simulated.sync
    fwd = float(sync.t2 - sync.t1)
    rev = float(sync.t4 - sync.t3)
    estimate = simulated.raw
    if compensated:
        fwd -= sync.fwd_counter.value * sync.delta_star
        rev -= sync.rev_counter.value * sync.delta_star
        estimate = simulated.compensated
    return FilterSample(fwd, rev, estimate.theta_hat, estimate.epsilon)


class FilterWindow:
    """The last `size` samples and the selection rule applied to them."""

    def __init__(self, kind: Union[FilterKind, str], size: int):
        if size < 1:
            raise ValueError(f"Filter window length must be at least 1, got {size}")
        self.kind = FilterKind(kind)
        self.size = size
        self._ring: Deque[FilterSample] = deque(maxlen=size)

    def __len__(self) -> int:
        return len(self._ring)

    def reset(self) -> None:
        self._ring.clear()

    def push(self, sample: FilterSample) -> FilterSample:
        """Add a sample and return the window output."""
        self._ring.append(sample)
        return self.output()

    def output(self) -> FilterSample:
        if not self._ring:
            raise ValueError("Filter window is empty")
        samples = list(self._ring)

        if self.kind is FilterKind.MIN_RTT:
            # Earliest round wins ties
            return min(samples, key=lambda item: item.rtt)

        if self.kind is FilterKind.MEDIAN_RTT:
            ordered = sorted(samples, key=lambda item: item.rtt)
            return ordered[(len(ordered) - 1) // 2]

        errors = [item.error for item in samples]
        return FilterSample(
            fwd_delay=float(np.mean([item.fwd_delay for item in samples])),
            rev_delay=float(np.mean([item.rev_delay for item in samples])),
            offset=float(np.mean([item.offset for item in samples])),
            error=None if any(e is None for e in errors) else float(np.mean(errors)),
        )


def _samples(rounds: Sequence, compensated: bool) -> List[FilterSample]:
    return [item if isinstance(item, FilterSample) else filter_sample(item, compensated) for item in rounds]


def filter_outputs(window: FilterWindow, rounds: Sequence, compensated: bool = False) -> List[FilterSample]:
    window.reset()
    return [window.push(sample) for sample in _samples(rounds, compensated)]


def apply_filter(window: FilterWindow, rounds: Sequence, compensated: bool = False) -> np.ndarray:
    """Filtered offset estimate after every round."""
    return np.array([item.offset for item in filter_outputs(window, rounds, compensated)], dtype=float)


def filtered_errors(window: FilterWindow, rounds: Sequence, compensated: bool = False) -> np.ndarray:
    """Offset error of the filtered estimate after every round."""
    outputs = filter_outputs(window, rounds, compensated)
    if any(item.error is None for item in outputs):
        raise ValueError("Rounds carry no true offset, errors are undefined")
    return np.array([item.error for item in outputs], dtype=float)


def measure_rms(errors: Sequence[float]) -> float:
    values = np.asarray(errors, dtype=float)
    if values.size == 0:
        raise ValueError("Cannot take the RMS of an empty series")
    return math.sqrt(float(np.mean(values * values)))
