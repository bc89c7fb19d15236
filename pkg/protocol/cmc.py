"""
Congestion Marking Clock switch semantics
Congestion levels, counter updates, header capacity and threshold mappings
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, NamedTuple, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

logger = logging.getLogger(__name__)

CELL_BYTES = 80


class Encoding(str, Enum):
    BIT_SHIFT = "bitshift"
    INTEGER_COUNTER = "integer"


class Direction(str, Enum):
    FORWARD = "forward"
    REVERSE = "reverse"


class CorruptHeaderError(ValueError):
    """A marking counter holds a value above the header capacity."""


@dataclass(frozen=True)
class CounterState:
    """Marking counter carried in a packet header."""

    value: int = 0

    def __post_init__(self):
        if self.value < 0:
            raise CorruptHeaderError(f"Counter value must be non-negative, got {self.value}")


def encoding_capacity(header_bits: int, encoding: Union[Encoding, str], fr_split: bool = False) -> Tuple[int, int]:
    """
    Counter capacity per direction for a header budget.

    Bit-shift encodings count one level per bit. Integer counters use 2^(b-1).
    A forward/reverse split halves the budget of each direction.
    """
    encoding = Encoding(encoding)
    if header_bits < 1:
        raise ValueError(f"header_bits must be >= 1, got {header_bits}")
    if fr_split and header_bits % 2:
        raise ValueError(f"A forward/reverse split needs an even bit budget, got {header_bits}")

    if encoding is Encoding.BIT_SHIFT:
        capacity = header_bits
    else:
        capacity = 2 ** (header_bits - 1)

    if fr_split:
        half = max(capacity // 2, 1)
        return half, half
    return capacity, capacity


def threshold_delay(threshold_bytes: float, line_rate: float, mtu_bytes: float = 0.0) -> float:
    """Delay in ns needed to drain threshold_bytes (plus an optional MTU) at line_rate bits/s."""
    if line_rate <= 0:
        raise ValueError(f"line_rate must be positive, got {line_rate}")
    if threshold_bytes < 0:
        raise ValueError(f"threshold_bytes must be non-negative, got {threshold_bytes}")
    return (threshold_bytes + mtu_bytes) * 8.0 * 1e9 / line_rate


class MarkingConfig(BaseModel):
    """Switch marking configuration shared by every hop of a path."""

    model_config = ConfigDict(frozen=True, use_enum_values=False)

    threshold_bytes: float = Field(3600.0, ge=0)
    levels: int = Field(1, ge=1)
    line_rate: float = Field(1e9, gt=0)
    encoding: Encoding = Encoding.INTEGER_COUNTER
    fr_split: bool = False
    header_bits: int = Field(30, ge=1)
    cell_exponent: Optional[int] = Field(None, ge=0, le=40)
    capacity_override: Optional[int] = Field(None, ge=1)
    mtu_inclusive: bool = False
    mtu_bytes: int = Field(1500, ge=0)
    enabled: bool = True

    @model_validator(mode="before")
    @classmethod
    def _cell_threshold(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("cell_exponent") is not None:
            cell_bytes = CELL_BYTES * 2 ** int(data["cell_exponent"])
            given = data.get("threshold_bytes")
            if given is not None and float(given) != float(cell_bytes):
                raise ValueError(
                    f"threshold_bytes={given} conflicts with cell_exponent={data['cell_exponent']} "
                    f"(cell thresholds are {CELL_BYTES}*2^n = {cell_bytes} bytes)"
                )
            data = {**data, "threshold_bytes": cell_bytes}
        return data

    @model_validator(mode="after")
    def _levels_within_capacity(self) -> "MarkingConfig":
        forward, reverse = self.capacities
        if self.levels > min(forward, reverse):
            raise ValueError(f"levels R={self.levels} exceeds counter capacity N={min(forward, reverse)}")
        return self

    @property
    def capacities(self) -> Tuple[int, int]:
        if self.capacity_override is not None:
            return self.capacity_override, self.capacity_override
        return encoding_capacity(self.header_bits, self.encoding, self.fr_split)

    @property
    def capacity(self) -> int:
        return min(self.capacities)

    def direction_capacity(self, direction: Union[Direction, str]) -> int:
        forward, reverse = self.capacities
        return forward if Direction(direction) is Direction.FORWARD else reverse

    @property
    def delta_star(self) -> float:
        mtu = self.mtu_bytes if self.mtu_inclusive else 0
        return threshold_delay(self.threshold_bytes, self.line_rate, mtu)


def congestion_level(queue_bits: float, config: MarkingConfig) -> int:
    """Number of whole thresholds of 8K bits below the queue occupancy, capped at R."""
    if queue_bits < 0:
        raise ValueError(f"queue_bits must be non-negative, got {queue_bits}")
    threshold_bits = 8.0 * config.threshold_bytes
    if threshold_bits <= 0:
        return config.levels if queue_bits > 0 else 0
    return min(int(math.floor(queue_bits / threshold_bits)), config.levels)


def cell_level(enq_qdepth_cells: int, exponent: int, levels: int) -> int:
    """Level from a cell-count queue depth by right shift, as a switch pipeline computes it."""
    if exponent < 0:
        raise ValueError(f"cell exponent must be non-negative, got {exponent}")
    if enq_qdepth_cells < 0:
        raise ValueError(f"queue depth must be non-negative, got {enq_qdepth_cells}")
    return min(int(enq_qdepth_cells) >> exponent, levels)


def counter_update(counter: Union[CounterState, int], level: int, capacity: int) -> CounterState:
    """Y = X + min(r, N - X)."""
    value = counter.value if isinstance(counter, CounterState) else int(counter)
    if value > capacity:
        raise CorruptHeaderError(f"Counter {value} exceeds capacity {capacity}")
    if level < 0:
        raise ValueError(f"level must be non-negative, got {level}")
    return CounterState(value + min(level, capacity - value))


def mark_packet(
    counter: CounterState,
    queue_bits: float,
    config: MarkingConfig,
    direction: Union[Direction, str] = Direction.FORWARD,
) -> CounterState:
    """Apply one hop of marking to the counter of the given direction."""
    capacity = config.direction_capacity(direction)
    if not config.enabled:
        if counter.value > capacity:
            raise CorruptHeaderError(f"Counter {counter.value} exceeds capacity {capacity}")
        return counter
    if config.cell_exponent is not None:
        cells = int(queue_bits // (8 * CELL_BYTES))
        level = cell_level(cells, config.cell_exponent, config.levels)
    else:
        level = congestion_level(queue_bits, config)
    return counter_update(counter, level, capacity)


@dataclass(frozen=True)
class MarkingHeader:
    """Both direction counters of one exchange; each direction only touches its own half."""

    forward: CounterState = field(default_factory=CounterState)
    reverse: CounterState = field(default_factory=CounterState)

    def mark(self, direction: Union[Direction, str], queue_bits: float, config: MarkingConfig) -> "MarkingHeader":
        direction = Direction(direction)
        if direction is Direction.FORWARD:
            return MarkingHeader(mark_packet(self.forward, queue_bits, config, direction), self.reverse)
        return MarkingHeader(self.forward, mark_packet(self.reverse, queue_bits, config, direction))


def nearest_cell_threshold(delta_star: float, line_rate: float) -> Tuple[int, int, float]:
    """Closest cell-quantized threshold (in log scale) to a requested delay."""
    if delta_star <= 0:
        raise ValueError(f"delta_star must be positive, got {delta_star}")
    wanted_bytes = delta_star * line_rate / 8e9
    exponent = max(int(round(math.log2(max(wanted_bytes / CELL_BYTES, 1e-12)))), 0)
    threshold_bytes = CELL_BYTES * 2 ** exponent
    snapped = threshold_delay(threshold_bytes, line_rate)
    if not math.isclose(snapped, delta_star, rel_tol=1e-9):
        logger.info(f"Threshold {delta_star:.1f} ns snapped to cell threshold {snapped:.1f} ns (n={exponent})")
    return exponent, threshold_bytes, snapped


class HeaderBudget(NamedTuple):
    header_bits: int
    encoding: Encoding
    fr_split: bool
    max_bits: int


HEADER_BUDGETS: Dict[str, HeaderBudget] = {
    # Classical ECN: one CE bit, one level
    "ecn": HeaderBudget(1, Encoding.BIT_SHIFT, False, 1),
    # Both ECN bits, one per direction
    "ecn_modified": HeaderBudget(2, Encoding.BIT_SHIFT, True, 2),
    # 32-bit reserved PTP field minus two configuration flag bits
    "ptp_reserved3": HeaderBudget(30, Encoding.INTEGER_COUNTER, False, 30),
    "ntp_extension": HeaderBudget(30, Encoding.INTEGER_COUNTER, False, 4000),
}


def header_budget(preset: str) -> HeaderBudget:
    try:
        return HEADER_BUDGETS[preset]
    except KeyError:
        raise ValueError(f"Unknown header budget '{preset}', choose from {sorted(HEADER_BUDGETS)}") from None
