"""Near-balanced bipartition of probability sets.

The partitioner splits a sorted probability set into two sides of almost
equal mass.  It walks the sorted entries until the running prefix reaches
half the total, backs up by a small adjustment window, and then picks the
window subset whose inclusion brings the left side closest to half.  A
split is accepted only when its balance, measured as the binary entropy
of the left-mass fraction, clears a configurable threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "ProbSubset",
    "Partition",
    "adjustment_width",
    "split_entropy",
    "split_entropy_at_deviation",
    "partition",
    "security_level",
]

MIN_ADJUSTMENT_WIDTH = 2
MAX_ADJUSTMENT_WIDTH = 16


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProbSubset:
    """A subset of a distribution's entries, kept in the parent's order.

    Probabilities are the original (unnormalized) masses; total caches
    their sum so repeated splits never re-reduce the full array.
    """

    token_ids: np.ndarray = field(repr=False)
    probs: np.ndarray = field(repr=False)
    total: float = None  # type: ignore[assignment]  # computed when omitted

    def __post_init__(self) -> None:
        ids = np.asarray(self.token_ids, dtype=np.int64)
        probs = np.asarray(self.probs, dtype=np.float64)
        if ids.ndim != 1 or probs.ndim != 1 or ids.size != probs.size or ids.size == 0:
            raise ValueError("token_ids and probs must be nonempty 1-D arrays of equal length")
        if not np.all(np.isfinite(probs)) or not np.all(probs > 0):
            raise ValueError("probabilities must be finite and strictly positive")
        total = float(probs.sum()) if self.total is None else float(self.total)
        if not (total > 0 and math.isfinite(total)):
            raise ValueError(f"total must be finite and > 0, got {total}")
        if abs(total - float(probs.sum())) > 1e-9 * max(1.0, total):
            raise ValueError("total does not match the sum of probs")
        ids.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "token_ids", ids)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "total", total)

    @classmethod
    def from_distribution(cls, dist) -> "ProbSubset":
        """View a TokenDistribution's entries as a full subset."""
        return cls(token_ids=dist.token_ids, probs=dist.probs)

    @property
    def items(self) -> list[tuple[int, float]]:
        """(token_id, prob) pairs in parent order."""
        return list(zip(self.token_ids.tolist(), self.probs.tolist()))

    def __len__(self) -> int:
        return int(self.token_ids.size)


@dataclass(frozen=True)
class Partition:
    """An accepted two-way split: bit 0 selects left, bit 1 selects right."""

    left: ProbSubset
    right: ProbSubset
    p_left: float
    split_entropy: float

    def __post_init__(self) -> None:
        if not 0 < self.p_left < 1:
            raise ValueError(f"p_left must lie strictly in (0, 1), got {self.p_left}")
        expected = split_entropy(self.p_left)
        if abs(expected - self.split_entropy) > 1e-12:
            raise ValueError(
                f"split_entropy {self.split_entropy!r} does not match "
                f"binary entropy of p_left ({expected!r})"
            )

    def side(self, bit: int) -> ProbSubset:
        """The side a message bit selects."""
        return self.left if bit == 0 else self.right


# ---------------------------------------------------------------------------
# Scalar maps
# ---------------------------------------------------------------------------


def adjustment_width(min_split_entropy: float) -> int:
    """Window size for the balance adjustment, clamped to [2, 16].

    Tight thresholds demand finer balancing, hence wider windows.  The
    limit case of a threshold of exactly 1 uses the maximum width.
    """
    if not 0 < min_split_entropy <= 1:
        raise ValueError(
            f"min_split_entropy must lie in (0, 1], got {min_split_entropy}"
        )
    if min_split_entropy == 1.0:
        return MAX_ADJUSTMENT_WIDTH
    width = math.floor(-math.log2(1.0 - min_split_entropy) - 0.5)
    return max(MIN_ADJUSTMENT_WIDTH, min(MAX_ADJUSTMENT_WIDTH, width))


def split_entropy(p: float) -> float:
    """Binary entropy of p in bits; 0 at the endpoints, at most 1."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    q = 1.0 - p
    return min(1.0, -(p * math.log2(p) + q * math.log2(q)))


def split_entropy_at_deviation(deviation: float) -> float:
    """Binary entropy of a split with left mass (1 - deviation) / 2."""
    if not 0.0 <= deviation <= 1.0:
        raise ValueError(f"deviation must lie in [0, 1], got {deviation}")
    return split_entropy((1.0 - deviation) / 2.0)


def security_level(min_split_entropy: float) -> float:
    """Approximate statistical advantage bound for a split threshold."""
    if not 0 < min_split_entropy <= 1:
        raise ValueError(
            f"min_split_entropy must lie in (0, 1], got {min_split_entropy}"
        )
    return 2.0 * (1.0 - min_split_entropy)


# ---------------------------------------------------------------------------
# The partitioner
# ---------------------------------------------------------------------------


def _window_subset_sums(window: np.ndarray) -> np.ndarray:
    """Sums of all subsets of window, indexed by bitmask (bit i = item i)."""
    sums = np.zeros(1 << window.size, dtype=np.float64)
    for i in range(window.size):
        step = 1 << i
        sums[step : 2 * step] = sums[:step] + window[i]
    return sums


def _trusted_subset(token_ids: np.ndarray, probs: np.ndarray, total: float) -> ProbSubset:
    """Build a ProbSubset from slices of an already validated parent.

    Skips __post_init__: the inputs are views of arrays that passed the
    public constructor, so revalidating every recursive split would only
    burn time in the encoder's hot path.
    """
    out = object.__new__(ProbSubset)
    object.__setattr__(out, "token_ids", token_ids)
    object.__setattr__(out, "probs", probs)
    object.__setattr__(out, "total", total)
    return out


def partition(subset: ProbSubset, min_split_entropy: float) -> Optional[Partition]:
    """Split a probability set near its half-mass point, or refuse.

    The sorted entries are scanned until the cumulative mass first reaches
    half the total; the last few entries before that point form an
    adjustment window whose subsets are enumerated exhaustively (ascending
    bitmask order, first minimizer wins) to bring the left mass as close
    to half as possible.  The left side is the scanned prefix plus the
    chosen window subset.  Returns None when the set has a single entry,
    when a side would be empty, or when the achieved balance entropy falls
    below min_split_entropy.
    """
    if not 0 < min_split_entropy <= 1:
        raise ValueError(
            f"min_split_entropy must lie in (0, 1], got {min_split_entropy}"
        )
    if subset.total <= 0:
        raise ValueError(f"subset total must be > 0, got {subset.total}")
    n = len(subset)
    if n == 1:
        return None

    probs = subset.probs
    half = subset.total / 2.0
    width = adjustment_width(min_split_entropy)

    cumulative = probs.cumsum()
    crossing = int(cumulative.searchsorted(half, side="left")) + 1
    start = max(0, crossing - width)
    window = probs[start : start + width]
    prefix_mass = float(cumulative[start - 1]) if start else 0.0

    sums = _window_subset_sums(window)
    deviations = np.abs(sums + (prefix_mass - half))
    best_mask = int(deviations.argmin())

    left_count = start + best_mask.bit_count()
    if left_count == 0 or left_count == n:
        return None

    left_total = prefix_mass + float(sums[best_mask])
    p_left = left_total / subset.total
    if not 0.0 < p_left < 1.0:
        return None
    h_s = split_entropy(p_left)
    if not h_s >= min_split_entropy:
        return None

    in_left = np.zeros(n, dtype=bool)
    in_left[:start] = True
    for i in range(window.size):
        if best_mask >> i & 1:
            in_left[start + i] = True

    left = _trusted_subset(subset.token_ids[in_left], probs[in_left], left_total)
    right = _trusted_subset(
        subset.token_ids[~in_left], probs[~in_left], subset.total - left_total
    )
    return Partition(left=left, right=right, p_left=p_left, split_entropy=h_s)
