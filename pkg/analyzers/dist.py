"""
Delay distribution algebra for per-hop and end-to-end queuing delays
Construction, moments, tails, binning, lattice convolution, sampling and goodness-of-fit
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import signal

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

MASS_TOLERANCE = 1e-12
HISTOGRAM_TOLERANCE = 1e-9
SAMPLE_COLUMN = "queuing_delay_ns"


def _as_array(t: ArrayLike) -> np.ndarray:
    return np.asarray(t, dtype=float)


def _scalar_or_array(value: np.ndarray, like: ArrayLike) -> ArrayLike:
    if np.ndim(like) == 0:
        return float(value)
    return value


def _round_to_cells(residuals: np.ndarray, bin_width: float) -> np.ndarray:
    return np.floor(residuals / bin_width + 0.5).astype(np.int64)


@dataclass(frozen=True)
class Exponential:
    """Exponential positive part, rate per nanosecond."""

    rate: float

    def __post_init__(self):
        if not np.isfinite(self.rate) or self.rate <= 0:
            raise ValueError(f"Exponential rate must be positive and finite, got {self.rate}")

    def mean(self) -> float:
        return 1.0 / self.rate

    def second_moment(self) -> float:
        return 2.0 / self.rate ** 2

    def ccdf(self, t: ArrayLike) -> np.ndarray:
        return np.exp(-self.rate * np.maximum(_as_array(t), 0.0))

    def tail(self, t: ArrayLike) -> np.ndarray:
        return self.ccdf(t)

    def quantile(self, p: ArrayLike) -> np.ndarray:
        return -np.log1p(-_as_array(p)) / self.rate

    def upper_support(self, tail_epsilon: float) -> float:
        return float(self.quantile(1.0 - tail_epsilon))

    def interval_moments(self, a: ArrayLike, b: ArrayLike) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        beta = self.rate
        a = _as_array(a)
        bd = beta * (_as_array(b) - a)
        finite = np.isfinite(bd)
        bd = np.where(finite, bd, 0.0)
        decay = np.where(finite, np.exp(-bd), 0.0)
        base = np.exp(-beta * a)

        m0 = base * np.where(finite, -np.expm1(-bd), 1.0)
        m1 = base * (1.0 - decay * (1.0 + bd)) / beta
        m2 = base * 2.0 * (1.0 - decay * (1.0 + bd + 0.5 * bd * bd)) / beta ** 2
        return m0, m1, np.maximum(m2, 0.0)

    def lattice(self, a: float, b: float, bin_width: float, bins: int) -> Tuple[np.ndarray, float]:
        # Residual X - a lands on cell k when it lies within half a bin of k * bin_width
        span = b - a
        k = np.arange(bins, dtype=float)
        lo = np.maximum((k - 0.5) * bin_width, 0.0)
        hi = np.minimum((k + 0.5) * bin_width, span)
        width = np.maximum(hi - lo, 0.0)
        masses = np.exp(-self.rate * (a + lo)) * -np.expm1(-self.rate * width)

        edge = (bins - 0.5) * bin_width
        overflow = 0.0
        if span > edge:
            upper = 0.0 if np.isinf(b) else float(np.exp(-self.rate * b))
            overflow = max(float(np.exp(-self.rate * (a + edge))) - upper, 0.0)
        return masses, overflow

    def sample(self, rng: np.random.Generator, size=None):
        return rng.exponential(1.0 / self.rate, size)


class _WeightedSupport:
    """Shared arithmetic for sorted atoms carrying weights."""

    values: np.ndarray
    weights: np.ndarray

    def _prefix(self):
        # Normalize so the prefix mass ends at exactly one and tails vanish past the support
        c0 = np.cumsum(self.weights)
        self.weights = self.weights / c0[-1]
        self._c0 = np.concatenate(([0.0], c0 / c0[-1]))
        self._c0[-1] = 1.0
        self._c1 = np.concatenate(([0.0], np.cumsum(self.weights * self.values)))
        self._c2 = np.concatenate(([0.0], np.cumsum(self.weights * self.values ** 2)))

    def mean(self) -> float:
        return float(self._c1[-1])

    def second_moment(self) -> float:
        return float(self._c2[-1])

    def ccdf(self, t: ArrayLike) -> np.ndarray:
        idx = np.searchsorted(self.values, _as_array(t), side="right")
        return np.maximum(1.0 - self._c0[idx], 0.0)

    def tail(self, t: ArrayLike) -> np.ndarray:
        idx = np.searchsorted(self.values, _as_array(t), side="left")
        return np.maximum(1.0 - self._c0[idx], 0.0)

    def quantile(self, p: ArrayLike) -> np.ndarray:
        idx = np.searchsorted(self._c0[1:], _as_array(p) - 1e-15, side="left")
        return self.values[np.minimum(idx, len(self.values) - 1)]

    def upper_support(self, tail_epsilon: float) -> float:
        return float(self.values[-1])

    def interval_moments(self, a: ArrayLike, b: ArrayLike) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        a = _as_array(a)
        i = np.searchsorted(self.values, a, side="left")
        j = np.searchsorted(self.values, _as_array(b), side="left")
        s0 = self._c0[j] - self._c0[i]
        s1 = self._c1[j] - self._c1[i]
        s2 = self._c2[j] - self._c2[i]
        m1 = s1 - a * s0
        m2 = s2 - 2.0 * a * s1 + a * a * s0
        return s0, np.maximum(m1, 0.0), np.maximum(m2, 0.0)

    def lattice(self, a: float, b: float, bin_width: float, bins: int) -> Tuple[np.ndarray, float]:
        i = np.searchsorted(self.values, a, side="left")
        j = np.searchsorted(self.values, b, side="left")
        cells = _round_to_cells(self.values[i:j] - a, bin_width)
        weights = self.weights[i:j]
        inside = cells < bins
        masses = np.bincount(cells[inside], weights=weights[inside], minlength=bins)
        return masses[:bins], float(weights[~inside].sum())


class Empirical(_WeightedSupport):
    """Sorted positive delay samples in nanoseconds, equally weighted."""

    def __init__(self, samples: Sequence[float]):
        values = np.sort(np.asarray(samples, dtype=float))
        if values.size == 0:
            raise ValueError("Empirical positive part needs at least one sample")
        if values[0] <= 0:
            raise ValueError("Empirical positive part only holds strictly positive delays")
        self.values = values
        self.weights = np.full(values.size, 1.0 / values.size)
        self._prefix()

    @property
    def samples(self) -> np.ndarray:
        return self.values

    def quantile(self, p: ArrayLike) -> np.ndarray:
        return np.quantile(self.values, _as_array(p), method="inverted_cdf")

    def sample(self, rng: np.random.Generator, size=None):
        return self.values[rng.integers(0, self.values.size, size)]

    def __repr__(self) -> str:
        return f"Empirical(n={self.values.size}, mean={self.mean():.1f})"


class Discrete(_WeightedSupport):
    """Finite positive support with probability masses."""

    def __init__(self, support: Sequence[float], masses: Sequence[float]):
        values = np.asarray(support, dtype=float)
        weights = np.asarray(masses, dtype=float)
        if values.shape != weights.shape or values.size == 0:
            raise ValueError("Discrete support and masses must be non-empty and aligned")
        if np.any(values <= 0):
            raise ValueError("Discrete positive part only holds strictly positive delays")
        if np.any(weights < 0):
            raise ValueError("Discrete masses must be non-negative")
        total = weights.sum()
        if total <= 0:
            raise ValueError("Discrete masses must carry positive total mass")

        order = np.argsort(values, kind="stable")
        values, weights = values[order], weights[order] / total
        unique, inverse = np.unique(values, return_inverse=True)
        merged = np.bincount(inverse, weights=weights)
        # Support keeps only atoms with positive mass
        keep = merged > 0
        self.values = unique[keep]
        self.weights = merged[keep]
        self._prefix()

    @property
    def support(self) -> np.ndarray:
        return self.values

    @property
    def masses(self) -> np.ndarray:
        return self.weights

    def sample(self, rng: np.random.Generator, size=None):
        return rng.choice(self.values, size=size, p=self.weights)

    def __repr__(self) -> str:
        return f"Discrete(support={self.values.tolist()}, masses={self.weights.tolist()})"


PositivePart = Union[Exponential, Empirical, Discrete]


@dataclass(frozen=True, eq=False)
class DelayLaw:
    """
    One-hop queuing delay: an atom at zero plus a normalized positive part.

    The positive part describes the delay conditional on being strictly positive,
    so every tail and moment of the full law scales it by 1 - zero_mass.
    """

    zero_mass: float
    positive: Optional[PositivePart] = None

    def __post_init__(self):
        if not -MASS_TOLERANCE <= self.zero_mass <= 1.0 + MASS_TOLERANCE:
            raise ValueError(f"zero_mass must lie in [0, 1], got {self.zero_mass}")
        object.__setattr__(self, "zero_mass", float(min(max(self.zero_mass, 0.0), 1.0)))
        if self.positive is None and self.zero_mass < 1.0 - MASS_TOLERANCE:
            raise ValueError("A law without positive part must put all mass at zero")
        if self.zero_mass >= 1.0 - MASS_TOLERANCE:
            object.__setattr__(self, "zero_mass", 1.0)
            object.__setattr__(self, "positive", None)

    # Construction

    @classmethod
    def degenerate(cls) -> "DelayLaw":
        return cls(1.0, None)

    @classmethod
    def exponential(cls, rate: float, zero_mass: float = 0.0) -> "DelayLaw":
        return cls(zero_mass, Exponential(rate))

    @classmethod
    def from_mean(cls, mean: float, zero_mass: float = 0.0) -> "DelayLaw":
        """Atom plus exponential law whose overall mean is `mean`."""
        if mean <= 0:
            return cls.degenerate()
        return cls.exponential((1.0 - zero_mass) / mean, zero_mass)

    @classmethod
    def empirical(cls, samples: Sequence[float]) -> "DelayLaw":
        """Empirical law; zero samples are merged into the atom."""
        values = np.asarray(samples, dtype=float)
        if values.size == 0:
            raise ValueError("Cannot build an empirical law from zero samples")
        if np.any(values < 0):
            raise ValueError("Queuing delay samples must be non-negative")
        positive = values[values > 0]
        zero_mass = 1.0 - positive.size / values.size
        if positive.size == 0:
            return cls.degenerate()
        return cls(zero_mass, Empirical(positive))

    @classmethod
    def discrete(cls, support: Sequence[float], masses: Sequence[float]) -> "DelayLaw":
        values = np.asarray(support, dtype=float)
        weights = np.asarray(masses, dtype=float)
        if values.shape != weights.shape:
            raise ValueError("Discrete support and masses must be aligned")
        if np.any(values < 0):
            raise ValueError("Discrete support values must be non-negative")
        if abs(weights.sum() - 1.0) > MASS_TOLERANCE:
            raise ValueError(f"Discrete masses must sum to 1, got {weights.sum()}")
        positive = values > 0
        zero_mass = float(weights[~positive].sum())
        if not np.any(weights[positive] > 0):
            return cls.degenerate()
        return cls(zero_mass, Discrete(values[positive], weights[positive]))

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "DelayLaw":
        return cls.empirical(load_samples(path))

    # Moments and tails

    @property
    def positive_mass(self) -> float:
        return 1.0 - self.zero_mass

    def mean(self) -> float:
        if self.positive is None:
            return 0.0
        return self.positive_mass * self.positive.mean()

    def second_moment(self) -> float:
        if self.positive is None:
            return 0.0
        return self.positive_mass * self.positive.second_moment()

    def variance(self) -> float:
        return max(self.second_moment() - self.mean() ** 2, 0.0)

    def ccdf(self, t: ArrayLike) -> ArrayLike:
        """Strict tail P(X > t)."""
        t_arr = _as_array(t)
        if np.any(t_arr < 0):
            raise ValueError("ccdf is only defined for t >= 0")
        if self.positive is None:
            return _scalar_or_array(np.zeros_like(t_arr), t)
        return _scalar_or_array(self.positive_mass * self.positive.ccdf(t_arr), t)

    def cdf(self, t: ArrayLike) -> ArrayLike:
        """P(X <= t) for any real t."""
        t_arr = _as_array(t)
        if self.positive is None:
            value = np.where(t_arr >= 0, 1.0, 0.0)
        else:
            tail = self.positive_mass * self.positive.ccdf(t_arr)
            value = np.where(t_arr >= 0, 1.0 - tail, 0.0)
        return _scalar_or_array(value, t)

    def prob_below(self, t: ArrayLike) -> ArrayLike:
        """P(X < t) for any real t."""
        t_arr = _as_array(t)
        value = np.where(t_arr > 0, 1.0 - self._positive_tail(t_arr), 0.0)
        return _scalar_or_array(value, t)

    def _positive_tail(self, t_arr: np.ndarray) -> np.ndarray:
        if self.positive is None:
            return np.zeros_like(t_arr)
        return self.positive_mass * self.positive.tail(np.maximum(t_arr, 0.0))

    def tail(self, t: ArrayLike) -> ArrayLike:
        """P(X >= t), the mass a level boundary at t marks; exactly zero past a bounded support."""
        t_arr = _as_array(t)
        value = np.where(t_arr > 0, self._positive_tail(t_arr), 1.0)
        return _scalar_or_array(value, t)

    def quantile(self, p: ArrayLike) -> ArrayLike:
        p_arr = _as_array(p)
        if np.any((p_arr < 0) | (p_arr > 1)):
            raise ValueError("quantile probabilities must lie in [0, 1]")
        if self.positive is None:
            return _scalar_or_array(np.zeros_like(p_arr), p)
        inner = np.clip((p_arr - self.zero_mass) / self.positive_mass, 0.0, 1.0)
        value = np.where(p_arr <= self.zero_mass, 0.0, self.positive.quantile(inner))
        return _scalar_or_array(value, p)

    def upper_support(self, tail_epsilon: float = MASS_TOLERANCE) -> float:
        """Largest support value, or the 1 - tail_epsilon quantile for unbounded laws."""
        if self.positive is None:
            return 0.0
        if isinstance(self.positive, Exponential):
            return float(self.quantile(1.0 - tail_epsilon))
        return self.positive.upper_support(tail_epsilon)

    @property
    def is_bounded(self) -> bool:
        return not isinstance(self.positive, Exponential)

    # Binning

    def bin_probabilities(self, delta_star: float, levels: int) -> np.ndarray:
        """
        Probabilities of the marking intervals [r*delta_star, (r+1)*delta_star) for r < levels,
        and of [levels*delta_star, inf) in the last entry.
        """
        if delta_star <= 0:
            raise ValueError(f"delta_star must be positive, got {delta_star}")
        if levels < 1:
            raise ValueError(f"levels must be >= 1, got {levels}")
        edges = delta_star * np.arange(levels + 1)
        below = _as_array(self.prob_below(edges))
        probs = np.diff(np.append(below, 1.0))
        return np.maximum(probs, 0.0)

    def interval_moments(self, a: ArrayLike, b: ArrayLike) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Restricted residual moments E[(X - a)^k ; a <= X < b] for k = 0, 1, 2.

        `a` and `b` broadcast; `b` may be infinite. Intervals are assumed to start at a >= 0.
        """
        a_arr = _as_array(a)
        b_arr = _as_array(b)
        hits_atom = (a_arr <= 0) & (b_arr > 0)
        m0 = np.where(hits_atom, self.zero_mass, 0.0)
        m1 = np.where(hits_atom, self.zero_mass * -a_arr, 0.0)
        m2 = np.where(hits_atom, self.zero_mass * a_arr * a_arr, 0.0)
        if self.positive is not None:
            p0, p1, p2 = self.positive.interval_moments(a_arr, b_arr)
            m0 = m0 + self.positive_mass * p0
            m1 = m1 + self.positive_mass * p1
            m2 = m2 + self.positive_mass * p2
        return m0, m1, m2

    def residual_lattice(self, a: float, b: float, bin_width: float, bins: int) -> Tuple[np.ndarray, float]:
        """
        Lattice masses of the residual X - a over [a, b): cell k holds residuals within
        half a bin of k * bin_width. Returns the masses and the mass beyond the last cell.
        """
        masses = np.zeros(bins)
        overflow = 0.0
        if a <= 0 < b:
            masses[0] += self.zero_mass
        if self.positive is not None:
            part, spill = self.positive.lattice(a, b, bin_width, bins)
            masses += self.positive_mass * part
            overflow += self.positive_mass * spill
        return masses, overflow

    def sample(self, rng: np.random.Generator, size=None):
        if self.positive is None:
            return 0.0 if size is None else np.zeros(size)
        draws = self.positive.sample(rng, size)
        queued = rng.random(size) >= self.zero_mass
        if size is None:
            return float(draws) if queued else 0.0
        return np.where(queued, draws, 0.0)

    def __repr__(self) -> str:
        return f"DelayLaw(zero_mass={self.zero_mass:.6g}, positive={self.positive!r})"


@dataclass(frozen=True, eq=False)
class HistogramLaw:
    """Lattice law: masses[k] sits at origin + k * bin_width; overflow lies past the last cell."""

    bin_width: float
    masses: np.ndarray
    overflow_mass: float = 0.0
    origin: float = 0.0

    def __post_init__(self):
        if not self.bin_width > 0:
            raise ValueError(f"bin_width must be positive, got {self.bin_width}")
        masses = np.asarray(self.masses, dtype=float)
        if masses.ndim != 1 or masses.size == 0:
            raise ValueError("HistogramLaw needs a non-empty one-dimensional mass vector")
        if np.any(masses < -HISTOGRAM_TOLERANCE):
            raise ValueError("HistogramLaw masses must be non-negative")
        masses = np.maximum(masses, 0.0)
        total = masses.sum() + self.overflow_mass
        if abs(total - 1.0) > HISTOGRAM_TOLERANCE:
            raise ValueError(f"HistogramLaw mass must total 1, got {total}")
        object.__setattr__(self, "masses", masses)

    @classmethod
    def point(cls, value: float, bin_width: float) -> "HistogramLaw":
        cell = int(round(value / bin_width))
        masses = np.zeros(cell + 1)
        masses[cell] = 1.0
        return cls(bin_width, masses)

    def support(self) -> np.ndarray:
        return self.origin + self.bin_width * np.arange(self.masses.size)

    def _with_overflow(self) -> Tuple[np.ndarray, np.ndarray]:
        # Overflow is placed at the grid end
        points = np.append(self.support(), self.origin + self.bin_width * self.masses.size)
        weights = np.append(self.masses, self.overflow_mass)
        return points, weights

    def total_mass(self) -> float:
        return float(self.masses.sum() + self.overflow_mass)

    def mean(self) -> float:
        points, weights = self._with_overflow()
        return float(np.dot(points, weights))

    def second_moment(self) -> float:
        points, weights = self._with_overflow()
        return float(np.dot(points ** 2, weights))

    def variance(self) -> float:
        points, weights = self._with_overflow()
        centred = points - np.dot(points, weights)
        return float(np.dot(centred ** 2, weights))

    def ccdf(self, t: float) -> float:
        return float(self.masses[self.support() > t].sum() + self.overflow_mass)

    def cdf(self, t: float) -> float:
        return 1.0 - self.ccdf(t)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"bin_start_ns": self.support(), "mass": self.masses})


# Module-level operations


def mean(law: DelayLaw) -> float:
    return law.mean()


def variance(law: DelayLaw) -> float:
    return law.variance()


def ccdf(law: DelayLaw, t: ArrayLike) -> ArrayLike:
    return law.ccdf(t)


def bin_probabilities(law: DelayLaw, delta_star: float, levels: int) -> np.ndarray:
    return law.bin_probabilities(delta_star, levels)


def to_histogram(law: DelayLaw, bin_width: float, max_bins: int) -> HistogramLaw:
    """Lattice a law at bin_width; mass past max_bins cells goes to overflow."""
    if bin_width <= 0:
        raise ValueError(f"bin_width must be positive, got {bin_width}")
    masses, overflow = law.residual_lattice(0.0, np.inf, bin_width, max_bins)
    last = np.flatnonzero(masses > 0)
    masses = masses[: last[-1] + 1] if last.size else masses[:1]
    total = masses.sum() + overflow
    if abs(total - 1.0) > HISTOGRAM_TOLERANCE:
        logger.debug(f"Renormalizing lattice mass {total:.12f}")
        masses, overflow = masses / total, overflow / total
    return HistogramLaw(bin_width, masses, overflow)


def convolve(a: HistogramLaw, b: HistogramLaw, max_bins: Optional[int] = None) -> HistogramLaw:
    """Law of the sum of two independent lattice laws on the same grid."""
    if not np.isclose(a.bin_width, b.bin_width, rtol=1e-12, atol=0.0):
        raise ValueError(f"Cannot convolve bin widths {a.bin_width} and {b.bin_width}")

    masses = np.maximum(signal.convolve(a.masses, b.masses, method="auto"), 0.0)
    overflow = 1.0 - (1.0 - a.overflow_mass) * (1.0 - b.overflow_mass)
    if max_bins is not None and masses.size > max_bins:
        overflow += float(masses[max_bins:].sum())
        masses = masses[:max_bins]

    # Keep total mass exact after clipping round-off
    drift = masses.sum() + overflow - 1.0
    if masses.sum() > 0:
        masses = masses * (1.0 - overflow) / masses.sum()
    if abs(drift) > 1e-12:
        logger.debug(f"Convolution mass drift {drift:.3e} corrected")
    return HistogramLaw(a.bin_width, masses, overflow, a.origin + b.origin)


def sample(law: DelayLaw, rng: np.random.Generator) -> float:
    return float(law.sample(rng))


def ks_statistic(samples: Sequence[float], reference: DelayLaw) -> float:
    """
    One-sample Kolmogorov-Smirnov distance between samples and a reference law.

    Both the value and the left limit of the empirical CDF are compared at every
    distinct sample, so atoms in the reference are handled exactly.
    """
    values = np.sort(np.asarray(samples, dtype=float))
    if values.size == 0:
        raise ValueError("ks_statistic needs at least one sample")

    points, counts = np.unique(values, return_counts=True)
    right = np.cumsum(counts) / values.size
    left = right - counts / values.size
    upper = np.abs(right - _as_array(reference.cdf(points)))
    lower = np.abs(left - _as_array(reference.prob_below(points)))
    return float(min(max(upper.max(), lower.max()), 1.0))


def exponential_fit(samples: Sequence[float]) -> DelayLaw:
    """Atom plus exponential law matching the zero fraction and positive sample mean."""
    values = np.asarray(samples, dtype=float)
    if values.size == 0:
        raise ValueError("Cannot fit an empty sample")
    positive = values[values > 0]
    if positive.size == 0:
        return DelayLaw.degenerate()
    return DelayLaw.exponential(1.0 / positive.mean(), 1.0 - positive.size / values.size)


def load_samples(path: Union[str, Path]) -> np.ndarray:
    """
    Read nanosecond queuing delays from a CSV with a `queuing_delay_ns` column
    or from plain text holding one integer per line.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Sample file not found: {path}")

    with open(path, "r", encoding="utf-8") as handle:
        first = next((line.strip() for line in handle if line.strip()), "")

    has_header = bool(first) and not first.split(",")[0].lstrip("+-").replace(".", "", 1).isdigit()
    if has_header:
        frame = pd.read_csv(path)
        if SAMPLE_COLUMN not in frame.columns:
            raise ValueError(f"{path}: expected a '{SAMPLE_COLUMN}' column, found {list(frame.columns)}")
        column = frame[SAMPLE_COLUMN]
    else:
        column = pd.read_csv(path, header=None, names=[SAMPLE_COLUMN], usecols=[0])[SAMPLE_COLUMN]

    values = pd.to_numeric(column, errors="coerce")
    if values.isna().any():
        bad = int(values.isna().idxmax()) + (2 if has_header else 1)
        raise ValueError(f"{path}: non-numeric delay on line {bad}")
    values = values.to_numpy(dtype=float)
    if np.any(values < 0):
        raise ValueError(f"{path}: queuing delays must be non-negative")

    logger.debug(f"Loaded {values.size} delay samples from {path}")
    return values
