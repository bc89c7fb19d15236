"""
Markov propagation of marking counters and corrected queuing error along a path

The joint state after each hop is the set of sub-distributions of accumulated
corrected error, one per counter value. Hops move mass from counter n to n + r
with r bounded by min(R, N - n); counter N absorbs.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import signal, sparse

from analyzers.dist import DelayLaw, HistogramLaw, convolve, to_histogram
from config import Config

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PathModel:
    """Ordered per-hop laws of one direction, with the marking parameters."""

    hops: Tuple[DelayLaw, ...]
    delta_star: float
    levels: int
    capacity: int

    def __post_init__(self):
        object.__setattr__(self, "hops", tuple(self.hops))
        if not self.hops:
            raise ValueError("A path needs at least one hop")
        if not self.delta_star > 0:
            raise ValueError(f"delta_star must be positive, got {self.delta_star}")
        if self.levels < 1:
            raise ValueError(f"levels R must be >= 1, got {self.levels}")
        if self.levels > self.capacity:
            raise ValueError(f"levels R={self.levels} exceeds counter capacity N={self.capacity}")

    def with_threshold(self, delta_star: float) -> "PathModel":
        return PathModel(self.hops, delta_star, self.levels, self.capacity)

    @property
    def reachable_capacity(self) -> int:
        return reachable_capacity(self.capacity, self.levels, len(self.hops))


def reachable_capacity(capacity: int, levels: int, hops: int) -> int:
    """Largest counter value a path can reach; higher states stay empty."""
    return min(capacity, levels * hops)


def pad_counters(counters: np.ndarray, capacity: int) -> np.ndarray:
    """Extend a reachable-state counter law with zeros to the N + 1 header states."""
    counters = np.asarray(counters, dtype=float)
    if capacity + 1 > Config.MAX_COUNTER_STATES or counters.size >= capacity + 1:
        return counters
    return np.concatenate((counters, np.zeros(capacity + 1 - counters.size)))


@dataclass(frozen=True)
class ErrorMoments:
    """Mean and variance of an error law when only moments are tracked."""

    mean_ns: float
    variance_ns2: float

    def mean(self) -> float:
        return self.mean_ns

    def variance(self) -> float:
        return self.variance_ns2


@dataclass(frozen=True, eq=False)
class PropagationState:
    """Per-counter sub-distributions of accumulated corrected error on a shared grid."""

    bin_width: float
    masses: np.ndarray
    overflow: np.ndarray

    def total_mass(self) -> float:
        return float(self.masses.sum() + self.overflow.sum())

    def counter_distribution(self) -> np.ndarray:
        return self.masses.sum(axis=1) + self.overflow

    def marginal(self) -> HistogramLaw:
        masses = self.masses.sum(axis=0)
        last = np.flatnonzero(masses > 0)
        masses = masses[: last[-1] + 1] if last.size else masses[:1]
        overflow = float(self.overflow.sum())
        total = masses.sum() + overflow
        return HistogramLaw(self.bin_width, masses / total, overflow / total)


def _grid(path: PathModel, bin_width: Optional[float], max_bins: int) -> Tuple[float, float, int, int]:
    """Bin width, snapped threshold, bins per threshold and grid length for a path."""
    width = bin_width if bin_width is not None else path.delta_star / Config.BINS_PER_THRESHOLD
    if width <= 0:
        raise ValueError(f"bin_width must be positive, got {width}")
    per_threshold = max(int(round(path.delta_star / width)), 1)
    delta_star = per_threshold * width
    if not math.isclose(delta_star, path.delta_star, rel_tol=1e-9):
        logger.warning(f"Threshold {path.delta_star:.3f} ns snapped to grid value {delta_star:.3f} ns")

    reach = sum(law.upper_support(Config.TAIL_EPSILON) for law in path.hops)
    bins = int(math.ceil(reach / width)) + 2
    if bins > max_bins and per_threshold > 1:
        coarser = max(int(per_threshold * max_bins / bins), 1)
        width = delta_star / coarser
        logger.debug(f"Grid of {bins} bins too long, using {coarser} bins per threshold")
        per_threshold = coarser
        bins = int(math.ceil(reach / width)) + 2
    return width, delta_star, per_threshold, min(bins, max_bins)


def _hop_pieces(law: DelayLaw, delta_star: float, levels: int, width: float, per_threshold: int, bins: int):
    """Residual lattices of the marking intervals and of each possible top piece."""
    intervals = [
        law.residual_lattice(r * delta_star, (r + 1) * delta_star, width, per_threshold + 1)
        for r in range(levels)
    ]
    tops = [law.residual_lattice(m * delta_star, np.inf, width, bins) for m in range(levels + 1)]
    return intervals, tops


def _deposit(masses, overflow, target, row, row_overflow, piece, spill, bins):
    piece_mass = piece.sum()
    if piece_mass + spill <= 0:
        return
    row_mass = row.sum()
    if row_mass > 0 and piece_mass > 0:
        shifted = signal.convolve(row, piece, method="auto")
        masses[target] += np.maximum(shifted[:bins], 0.0)
        overflow[target] += max(float(shifted[bins:].sum()), 0.0)
    overflow[target] += row_overflow * (piece_mass + spill) + row_mass * spill


def propagate_states(
    path: PathModel, bin_width: Optional[float] = None, max_bins: Optional[int] = None
) -> List[PropagationState]:
    """Joint counter/error state after every hop of the path."""
    width, delta_star, per_threshold, bins = _grid(path, bin_width, max_bins or Config.MAX_GRID_BINS)
    levels, capacity = path.levels, path.reachable_capacity

    masses = np.zeros((capacity + 1, bins))
    overflow = np.zeros(capacity + 1)
    masses[0, 0] = 1.0
    states = []

    for index, law in enumerate(path.hops):
        intervals, tops = _hop_pieces(law, delta_star, levels, width, per_threshold, bins)
        next_masses = np.zeros_like(masses)
        next_overflow = np.zeros_like(overflow)

        for n in range(capacity + 1):
            row, row_overflow = masses[n], overflow[n]
            if row_overflow <= 0 and not row.any():
                continue
            top_level = min(levels, capacity - n)
            for r in range(top_level):
                piece, spill = intervals[r]
                _deposit(next_masses, next_overflow, n + r, row, row_overflow, piece, spill, bins)
            piece, spill = tops[top_level]
            _deposit(next_masses, next_overflow, n + top_level, row, row_overflow, piece, spill, bins)

        masses, overflow = next_masses, next_overflow
        state = PropagationState(width, masses, overflow)
        states.append(state)
        logger.debug(
            f"Hop {index + 1}: mass {state.total_mass():.12f}, "
            f"absorbed {state.counter_distribution()[-1]:.6f}, overflow {overflow.sum():.3e}"
        )

    spilled = float(overflow.sum())
    if spilled > 1e-9:
        logger.warning(f"Error law grid overflow mass {spilled:.3e}")
    return states


def propagate_path(
    path: PathModel, bin_width: Optional[float] = None, max_bins: Optional[int] = None
) -> Tuple[HistogramLaw, np.ndarray]:
    """End-to-end corrected error law and final counter distribution over n = 0..N."""
    final = propagate_states(path, bin_width, max_bins)[-1]
    return final.marginal(), pad_counters(final.counter_distribution(), path.capacity)


def moment_curve(
    hops: Sequence[DelayLaw], deltas: Sequence[float], levels: int, capacity: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Exact mean and variance of the corrected error for every threshold in `deltas`.

    Tracks E[1{C=n}], E[D 1{C=n}] and E[D^2 1{C=n}] per counter value n with no grid.
    Returns (means, variances, counter distributions of shape (min(N, R L)+1, len(deltas))).
    """
    d = np.atleast_1d(np.asarray(deltas, dtype=float))
    if np.any(d <= 0):
        raise ValueError("Thresholds must be positive")
    if levels < 1 or levels > capacity:
        raise ValueError(f"Need 1 <= R <= N, got R={levels}, N={capacity}")
    hops = list(hops)
    capacity = reachable_capacity(capacity, levels, len(hops))

    m0 = np.zeros((capacity + 1, d.size))
    m1 = np.zeros_like(m0)
    m2 = np.zeros_like(m0)
    m0[0] = 1.0

    lower = np.arange(levels)[:, None] * d
    starts = np.arange(levels + 1)[:, None] * d

    for law in hops:
        i0, i1, i2 = law.interval_moments(lower, lower + d)
        t0, t1, t2 = law.interval_moments(starts, np.inf)
        n0, n1, n2 = np.zeros_like(m0), np.zeros_like(m1), np.zeros_like(m2)

        def add(src: slice, dst: slice, p0, p1, p2):
            n0[dst] += m0[src] * p0
            n1[dst] += m1[src] * p0 + m0[src] * p1
            n2[dst] += m2[src] * p0 + 2.0 * m1[src] * p1 + m0[src] * p2

        for r in range(levels):
            add(slice(0, capacity - r), slice(r, capacity), i0[r], i1[r], i2[r])
            add(slice(capacity - r, capacity - r + 1), slice(capacity, capacity + 1), t0[r], t1[r], t2[r])
        add(slice(0, capacity - levels + 1), slice(levels, capacity + 1), t0[levels], t1[levels], t2[levels])

        m0, m1, m2 = n0, n1, n2

    means = m1.sum(axis=0)
    variances = np.maximum(m2.sum(axis=0) - means ** 2, 0.0)
    return means, variances, m0


def propagate_moments(path: PathModel) -> Tuple[ErrorMoments, np.ndarray]:
    means, variances, counters = moment_curve(path.hops, [path.delta_star], path.levels, path.capacity)
    return ErrorMoments(float(means[0]), float(variances[0])), pad_counters(counters[:, 0], path.capacity)


def raw_moments(hops: Sequence[DelayLaw]) -> ErrorMoments:
    """Uncorrected end-to-end moments of independent hops."""
    return ErrorMoments(sum(law.mean() for law in hops), sum(law.variance() for law in hops))


def raw_law(hops: Sequence[DelayLaw], bin_width: float, max_bins: Optional[int] = None) -> HistogramLaw:
    """Uncorrected end-to-end lattice law."""
    max_bins = max_bins or Config.MAX_GRID_BINS
    result = None
    for law in hops:
        hop = to_histogram(law, bin_width, max_bins)
        result = hop if result is None else convolve(result, hop, max_bins)
    if result is None:
        raise ValueError("A path needs at least one hop")
    return result


def transition_matrix(law: DelayLaw, delta_star: float, levels: int, capacity: int) -> sparse.csr_matrix:
    """Counter transition matrix of one hop; row n has at most R + 1 non-zeros."""
    rows, cols, values = [], [], []
    for n in range(capacity + 1):
        top_level = min(levels, capacity - n)
        probs = law.bin_probabilities(delta_star, top_level) if top_level > 0 else np.ones(1)
        for r, p in enumerate(probs):
            if p > 0:
                rows.append(n)
                cols.append(n + r)
                values.append(p)
    shape = (capacity + 1, capacity + 1)
    return sparse.csr_matrix((values, (rows, cols)), shape=shape)


def counter_distribution(path: PathModel) -> np.ndarray:
    """Final counter law as the row vector e0 P_1 ... P_L."""
    capacity = path.reachable_capacity
    pi = np.zeros(capacity + 1)
    pi[0] = 1.0
    for law in path.hops:
        pi = transition_matrix(law, path.delta_star, path.levels, capacity).T @ pi
    return pad_counters(np.asarray(pi).ravel(), path.capacity)


def mse(fwd, rev) -> float:
    """(Var f + Var r + (mean f - mean r)^2) / 4 for independent directions."""
    bias = fwd.mean() - rev.mean()
    return (fwd.variance() + rev.variance() + bias * bias) / 4.0


def expected_improvement(mse_comp: float, mse_raw: float) -> float:
    """I = 1 - sqrt(compensated MSE / raw MSE)."""
    if mse_raw <= 0:
        raise ValueError("Raw MSE must be positive to measure an improvement")
    return 1.0 - math.sqrt(max(mse_comp, 0.0) / mse_raw)


def pair_hops(fwd_hops: Sequence, rev_hops: Sequence) -> List[Tuple]:
    """Pair forward hop i with the reverse hop traversing the same switch."""
    if len(fwd_hops) != len(rev_hops):
        raise ValueError(f"Direction hop counts differ: {len(fwd_hops)} forward vs {len(rev_hops)} reverse")
    return list(zip(fwd_hops, reversed(list(rev_hops))))


def multihop_mse_decomposition(paired_hops: Sequence[Tuple]) -> Tuple[List[float], float]:
    """
    Split the end-to-end MSE into per-switch MSEs and the cross term
    1/2 * sum_{i<k} bias_i * bias_k of per-switch mean differences.
    """
    if not paired_hops:
        raise ValueError("Need at least one hop pair")
    per_pair = [mse(fwd, rev) for fwd, rev in paired_hops]
    biases = np.array([fwd.mean() - rev.mean() for fwd, rev in paired_hops])
    coherence = 0.5 * (biases.sum() ** 2 - np.dot(biases, biases)) / 2.0
    return per_pair, float(coherence)
