"""Token distributions and the preprocessing pipeline that produces them.

A raw logit vector is turned into a truncated, renormalized next-token
distribution in three steps: temperature scaling, nucleus (top-p) cutoff,
and renormalization.  The resulting :class:`TokenDistribution` keeps its
entries sorted by descending probability (ties broken by ascending token
id) so that every downstream component sees one canonical ordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "LogitVector",
    "SamplerConfig",
    "TokenDistribution",
    "CorpusStats",
    "preprocess_logits",
    "entropy",
    "information",
    "filter_corpus",
    "corpus_stats",
]


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SamplerConfig:
    """Sampling-side knobs shared by the codec and the experiment harness.

    temperature and top_p shape the distribution; min_split_entropy is the
    threshold below which the codec refuses to split a probability set; and
    max_nonzero caps the support size a distribution may have before the
    corpus filter drops it.
    """

    temperature: float = 1.0
    top_p: float = 1.0
    min_split_entropy: float = 0.999
    max_nonzero: int = 1024

    def __post_init__(self) -> None:
        if not (self.temperature > 0 and math.isfinite(self.temperature)):
            raise ValueError(f"temperature must be finite and > 0, got {self.temperature}")
        if not 0 < self.top_p <= 1:
            raise ValueError(f"top_p must lie in (0, 1], got {self.top_p}")
        if not 0 < self.min_split_entropy <= 1:
            raise ValueError(
                f"min_split_entropy must lie in (0, 1], got {self.min_split_entropy}"
            )
        if self.max_nonzero < 1:
            raise ValueError(f"max_nonzero must be >= 1, got {self.max_nonzero}")

    @classmethod
    def reference(cls, min_split_entropy: float = 0.999) -> "SamplerConfig":
        """The operating point used throughout the experiments."""
        return cls(temperature=1.1, top_p=0.95, min_split_entropy=min_split_entropy)


@dataclass(frozen=True)
class LogitVector:
    """A raw next-token logit vector, one value per vocabulary entry."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("logit vector must be a nonempty 1-D array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("logit vector must be finite")
        object.__setattr__(self, "values", arr)

    @property
    def vocab_size(self) -> int:
        return int(self.values.size)


# ---------------------------------------------------------------------------
# Distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TokenDistribution:
    """A finite next-token distribution with strictly positive mass.

    Entries are sorted by descending probability, ties broken by ascending
    token id.  Instances compare by identity, which lets the codec memoize
    per-distribution state in weak maps.
    """

    token_ids: np.ndarray = field(repr=False)
    probs: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        ids = np.asarray(self.token_ids, dtype=np.int64)
        probs = np.asarray(self.probs, dtype=np.float64)
        if ids.ndim != 1 or probs.ndim != 1 or ids.size != probs.size or ids.size == 0:
            raise ValueError("token_ids and probs must be nonempty 1-D arrays of equal length")
        if not np.all(np.isfinite(probs)) or not np.all(probs > 0):
            raise ValueError("probabilities must be finite and strictly positive")
        total = float(probs.sum())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probabilities must sum to 1 within 1e-9, got {total!r}")
        if np.unique(ids).size != ids.size:
            raise ValueError("token ids must be unique")
        diffs = np.diff(probs)
        if np.any(diffs > 0):
            raise ValueError("probabilities must be non-increasing")
        ties = diffs == 0
        if np.any(ties & (np.diff(ids) <= 0)):
            raise ValueError("equal probabilities must be ordered by ascending token id")
        ids.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "token_ids", ids)
        object.__setattr__(self, "probs", probs)

    # -- construction -------------------------------------------------------

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, float]]) -> "TokenDistribution":
        """Build from (token_id, probability) pairs, sorting and normalizing."""
        seq = list(pairs)
        if not seq:
            raise ValueError("need at least one (token_id, probability) pair")
        ids = np.asarray([int(t) for t, _ in seq], dtype=np.int64)
        probs = np.asarray([float(p) for _, p in seq], dtype=np.float64)
        if not np.all(np.isfinite(probs)) or not np.all(probs > 0):
            raise ValueError("probabilities must be finite and strictly positive")
        probs = probs / probs.sum()
        order = np.lexsort((ids, -probs))
        return cls(token_ids=ids[order], probs=probs[order])

    @classmethod
    def from_probs(cls, probs: Sequence[float]) -> "TokenDistribution":
        """Convenience for tests: token ids are assigned 0..n-1 in order."""
        return cls.from_pairs(enumerate(np.asarray(probs, dtype=np.float64)))

    # -- cached views -------------------------------------------------------

    @cached_property
    def entropy(self) -> float:
        """Shannon entropy in bits."""
        return float(-np.dot(self.probs, np.log2(self.probs)))

    @cached_property
    def info_second_moment(self) -> float:
        """Expected squared surprisal, E[(-log2 p)^2], in bits squared."""
        logs = np.log2(self.probs)
        return float(np.dot(self.probs, logs * logs))

    @cached_property
    def cumulative(self) -> np.ndarray:
        """Cumulative probabilities in entry order (read-only)."""
        csum = np.cumsum(self.probs)
        csum.setflags(write=False)
        return csum

    @cached_property
    def _index_of(self) -> dict[int, int]:
        return {int(t): i for i, t in enumerate(self.token_ids)}

    # -- queries ------------------------------------------------------------

    def __len__(self) -> int:
        return int(self.token_ids.size)

    def index_of(self, token_id: int) -> int:
        """Entry index of a token id, or raise KeyError if absent."""
        try:
            return self._index_of[int(token_id)]
        except KeyError:
            raise KeyError(f"token id {token_id} is not in the distribution") from None

    def prob_of(self, token_id: int) -> float:
        return float(self.probs[self.index_of(token_id)])


def entropy(dist: TokenDistribution) -> float:
    """Shannon entropy of the distribution in bits."""
    return dist.entropy


def information(dist: TokenDistribution, token_id: int) -> float:
    """Surprisal of one token in bits, -log2 p(token_id)."""
    return float(-np.log2(dist.prob_of(token_id)))


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------


def preprocess_logits(
    logits: LogitVector | np.ndarray | Sequence[float],
    config: SamplerConfig,
) -> TokenDistribution:
    """Temperature-scale, nucleus-truncate, and renormalize a logit vector.

    The cutoff keeps the smallest prefix of the sorted distribution whose
    cumulative probability reaches top_p: with prefix sums s_1 <= s_2 <= ...
    the kept count is one more than the number of prefix sums strictly
    below top_p (clamped to the vocabulary size).  Entries whose scaled
    probability underflows to zero are dropped before renormalizing.
    """
    values = logits.values if isinstance(logits, LogitVector) else np.asarray(
        logits, dtype=np.float64
    )
    if values.ndim != 1 or values.size == 0:
        raise ValueError("logit vector must be a nonempty 1-D array")
    if not np.all(np.isfinite(values)):
        raise ValueError("logit vector must be finite")

    scaled = (values - values.max()) / config.temperature
    q = np.exp(scaled)
    q /= q.sum()

    ids = np.arange(values.size, dtype=np.int64)
    order = np.lexsort((ids, -q))
    q_sorted = q[order]

    cutoff = 1 + int(np.searchsorted(np.cumsum(q_sorted), config.top_p, side="left"))
    cutoff = min(cutoff, values.size)

    kept_ids = order[:cutoff]
    kept_q = q_sorted[:cutoff]
    nonzero = kept_q > 0
    kept_ids = kept_ids[nonzero]
    kept_q = kept_q[nonzero]
    kept_q = kept_q / kept_q.sum()
    return TokenDistribution(token_ids=kept_ids, probs=kept_q)


# ---------------------------------------------------------------------------
# Corpus statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorpusStats:
    """Summary statistics over a list of distributions."""

    count: int
    zero_entropy_fraction: float
    mean_entropy: float
    mean_nonzero_entropy: float
    median_nonzero_entropy: float
    removed_wide_fraction: float = 0.0


def filter_corpus(
    corpus: Sequence[TokenDistribution], max_nonzero: int
) -> tuple[list[TokenDistribution], float]:
    """Drop distributions with more than max_nonzero entries.

    Returns the kept records and the fraction removed.
    """
    if max_nonzero < 1:
        raise ValueError(f"max_nonzero must be >= 1, got {max_nonzero}")
    kept = [d for d in corpus if len(d) <= max_nonzero]
    removed = 0.0 if not corpus else 1.0 - len(kept) / len(corpus)
    return kept, removed


def corpus_stats(
    corpus: Sequence[TokenDistribution], *, removed_wide_fraction: float = 0.0
) -> CorpusStats:
    """Entropy summary of a corpus.

    Records with a single entry carry zero entropy.  The nonzero mean and
    median are 0.0 when every record is deterministic.
    """
    if not corpus:
        raise ValueError("corpus is empty")
    entropies = np.asarray([d.entropy for d in corpus], dtype=np.float64)
    nonzero = entropies[entropies > 0.0]
    return CorpusStats(
        count=len(corpus),
        zero_entropy_fraction=float(np.mean(entropies == 0.0)),
        mean_entropy=float(entropies.mean()),
        mean_nonzero_entropy=float(nonzero.mean()) if nonzero.size else 0.0,
        median_nonzero_entropy=float(np.median(nonzero)) if nonzero.size else 0.0,
        removed_wide_fraction=float(removed_wide_fraction),
    )
