"""
Four-timestamp synchronization exchange
Offset estimation and marking-based compensation at the server or the client
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from protocol.cmc import CorruptHeaderError, CounterState

logger = logging.getLogger(__name__)

ROUND_COLUMNS = ["round", "t1", "t2", "t3", "t4", "n_fwd", "n_rev", "eps_raw", "eps_comp"]


@dataclass(frozen=True)
class SyncRound:
    """
    One exchange: client send (t1), server receive (t2), server send (t3) and
    client receive (t4), in nanoseconds on the respective local clocks.
    """

    t1: int
    t2: int
    t3: int
    t4: int
    fwd_counter: CounterState = field(default_factory=CounterState)
    rev_counter: CounterState = field(default_factory=CounterState)
    delta_star: float = 0.0
    true_offset: Optional[float] = None
    index: int = 0
    # Ground-truth queuing per switch, ordered from the client side
    fwd_waits: Tuple[int, ...] = ()
    rev_waits: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.delta_star < 0:
            raise ValueError(f"delta_star must be non-negative, got {self.delta_star}")


@dataclass(frozen=True)
class OffsetEstimate:
    theta_hat: float
    epsilon: Optional[float] = None
    compensated: bool = False
    negative_queuing: bool = False


def _estimate(t1: float, t2: float, t3: float, t4: float, true_offset: Optional[float]) -> Tuple[float, Optional[float]]:
    theta_hat = ((t2 - t1) + (t3 - t4)) / 2.0
    epsilon = None if true_offset is None else true_offset - theta_hat
    return theta_hat, epsilon


def estimate_offset(sync_round: SyncRound) -> OffsetEstimate:
    """theta_hat = ((t2 - t1) + (t3 - t4)) / 2, epsilon = theta - theta_hat."""
    theta_hat, epsilon = _estimate(sync_round.t1, sync_round.t2, sync_round.t3, sync_round.t4, sync_round.true_offset)
    return OffsetEstimate(theta_hat, epsilon, compensated=False)


def _compensate(sync_round: SyncRound, capacity: Optional[int]) -> OffsetEstimate:
    n_fwd = sync_round.fwd_counter.value
    n_rev = sync_round.rev_counter.value
    if capacity is not None and max(n_fwd, n_rev) > capacity:
        raise CorruptHeaderError(f"Counters ({n_fwd}, {n_rev}) exceed capacity {capacity}")

    fwd_correction = n_fwd * sync_round.delta_star
    rev_correction = n_rev * sync_round.delta_star
    negative = fwd_correction > sync_round.t2 - sync_round.t1 or rev_correction > sync_round.t4 - sync_round.t3
    if negative:
        logger.debug(f"Round {sync_round.index}: correction exceeds the measured one-way time")

    theta_hat, epsilon = _estimate(
        sync_round.t1,
        sync_round.t2 - fwd_correction,
        sync_round.t3,
        sync_round.t4 - rev_correction,
        sync_round.true_offset,
    )
    return OffsetEstimate(theta_hat, epsilon, compensated=True, negative_queuing=negative)


def compensate_server_mode(sync_round: SyncRound, capacity: Optional[int] = None) -> OffsetEstimate:
    """
    Server reports t2 - n_fwd * delta_star in its response; the client subtracts
    n_rev * delta_star from t4 before estimating.
    """
    return _compensate(sync_round, capacity)


def compensate_fr_mode(sync_round: SyncRound, capacity: Optional[int] = None) -> OffsetEstimate:
    """
    The response carries both counter halves and the client applies both corrections.
    Same arithmetic as the server mode, performed at the client.
    """
    return _compensate(sync_round, capacity)


def per_hop_corrected_error(
    delta_q: float, levels: int, delta_star: float, increments_available: int
) -> Tuple[float, int]:
    """Residual queuing at one hop after marking, and the counter increment it consumed."""
    if delta_q < 0:
        raise ValueError(f"delta_q must be non-negative, got {delta_q}")
    if delta_star <= 0:
        raise ValueError(f"delta_star must be positive, got {delta_star}")
    if delta_q == 0:
        return 0.0, 0
    used = min(int(math.floor(delta_q / delta_star)), levels, max(increments_available, 0))
    return delta_q - used * delta_star, used


def path_corrected_error(
    waits: List[float], levels: int, delta_star: float, capacity: int
) -> Tuple[float, int]:
    """Fold per_hop_corrected_error along a path sharing one counter budget."""
    total, counter = 0.0, 0
    for wait in waits:
        error, used = per_hop_corrected_error(wait, levels, delta_star, capacity - counter)
        total += error
        counter += used
    return total, counter


def round_row(sync_round: SyncRound, raw: OffsetEstimate, compensated: OffsetEstimate) -> Dict[str, Any]:
    return {
        "round": sync_round.index,
        "t1": sync_round.t1,
        "t2": sync_round.t2,
        "t3": sync_round.t3,
        "t4": sync_round.t4,
        "n_fwd": sync_round.fwd_counter.value,
        "n_rev": sync_round.rev_counter.value,
        "eps_raw": raw.epsilon,
        "eps_comp": compensated.epsilon,
    }
