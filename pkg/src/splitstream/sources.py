"""Distribution provenance: synthetic corpora, corpus files, live logits.

Encoder and decoder must agree bit-exactly on the distribution at every
step, so every source here is deterministic given its configuration, its
seed, and the token history.  The synthetic generator produces corpora
calibrated to published next-token entropy statistics of an instruction
tuned 7B model; the binary corpus format round-trips 64-bit floats
verbatim; and an optional HTTP client lets real model logits stand in
for the synthetic records.
"""

from __future__ import annotations

import json
import math
import struct
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .distributions import SamplerConfig, TokenDistribution, preprocess_logits
from .errors import CorpusFormatError, SourceError

__all__ = [
    "SynthConfig",
    "generate_synthetic_corpus",
    "write_corpus",
    "read_corpus",
    "ReplaySource",
    "replay_source",
    "fetch_logits",
    "HttpLogitsSource",
]

CORPUS_MAGIC = b"LMD1"
CORPUS_VERSION = 1

_RECORD_DTYPE = np.dtype([("token_id", "<u4"), ("prob", "<f8")])


# ---------------------------------------------------------------------------
# Synthetic corpus generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    """Shape parameters for the synthetic next-token distribution corpus.

    Defaults reproduce the reference entropy profile: 40% deterministic
    positions, nonzero entropies log-normal with mean 1.93 and median
    1.55 bits, and a thin tail (0.6%) of very wide distributions that
    the corpus filter later removes.
    """

    seed: int = 0
    zero_entropy_prob: float = 0.40
    entropy_mean: float = 1.93
    entropy_median: float = 1.55
    entropy_floor: float = 0.02
    entropy_cap: float = 9.90
    support_median: float = 8.0
    support_log_sigma: float = 1.0
    max_support: int = 1024
    wide_fraction: float = 0.006
    wide_support_mean: float = 5500.0
    wide_support_sd: float = 1500.0
    wide_support_cap: int = 16384
    wide_entropy_mean: float = 7.5
    wide_entropy_sd: float = 0.4
    vocab_size: int = 32000
    max_sequence_len: int = 4096

    def __post_init__(self) -> None:
        if not 0 <= self.zero_entropy_prob <= 1 or not 0 <= self.wide_fraction <= 1:
            raise ValueError("branch probabilities must lie in [0, 1]")
        if self.zero_entropy_prob + self.wide_fraction > 1:
            raise ValueError("zero_entropy_prob + wide_fraction must not exceed 1")
        if not 0 < self.entropy_median <= self.entropy_mean:
            raise ValueError("need 0 < entropy_median <= entropy_mean")
        if not 0 < self.entropy_floor < self.entropy_cap:
            raise ValueError("need 0 < entropy_floor < entropy_cap")
        if self.entropy_cap + 0.05 > math.log2(self.max_support):
            raise ValueError("entropy_cap leaves no headroom under max_support")
        if self.support_median <= 0 or self.support_log_sigma <= 0:
            raise ValueError("support parameters must be positive")
        if not 2 <= self.max_support < self.wide_support_cap <= self.vocab_size:
            raise ValueError("need 2 <= max_support < wide_support_cap <= vocab_size")
        if self.max_sequence_len < 1:
            raise ValueError("max_sequence_len must be >= 1")


def _geometric_entropy(decay: float, support: int) -> float:
    """Entropy in bits of p_i proportional to decay**i, i < support.

    Closed form, stable for decay near 1: with x = 1 - decay, the mean
    index uses the exact finite-sum formula whose numerator stays well
    away from cancellation as long as x * support is not tiny, which the
    entropy headroom margin guarantees.
    """
    if decay <= 0.0:
        return 0.0
    x = 1.0 - decay
    if x <= 0.0:
        return math.log2(support)
    log_r = math.log1p(-x)
    r_s = math.exp(support * log_r)
    mass = -math.expm1(support * log_r)
    norm = x / mass
    r_s1 = math.exp((support - 1) * log_r)
    index_sum = decay * (1.0 - support * r_s1 + (support - 1) * r_s) / (x * x)
    mean_index = norm * index_sum
    return -math.log2(norm) - (log_r / math.log(2.0)) * mean_index


def _solve_decay(support: int, target_entropy: float) -> float:
    """Bisect the decay rate whose profile hits the target entropy."""
    lo, hi = 1e-9, 1.0 - 1e-12
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        h = _geometric_entropy(mid, support)
        if abs(h - target_entropy) <= 2e-7:
            return mid
        if h < target_entropy:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _build_profile(
    rng: np.random.Generator, support: int, target_entropy: float, vocab_size: int
) -> TokenDistribution:
    decay = _solve_decay(support, target_entropy)
    probs = decay ** np.arange(support, dtype=np.float64)
    probs = probs[probs > 0.0]
    probs /= probs.sum()
    ids = rng.choice(vocab_size, size=probs.size, replace=False)
    return TokenDistribution.from_pairs(zip(ids.tolist(), probs.tolist()))


def generate_synthetic_corpus(config: SynthConfig, n: int) -> list[TokenDistribution]:
    """Generate n distributions, deterministic in (config.seed, n).

    Each record is a point mass with probability zero_entropy_prob, a
    very wide distribution with probability wide_fraction, and otherwise
    a geometric-decay profile whose decay rate is bisected until the
    entropy matches a log-normal target to within 1e-6 bits.  Supports
    too small for their entropy target are redrawn a bounded number of
    times, then forced up to the minimal satisfying size.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(config.seed)
    mu = math.log(config.entropy_median)
    sigma = math.sqrt(2.0 * math.log(config.entropy_mean / config.entropy_median))
    support_mu = math.log(config.support_median)

    corpus: list[TokenDistribution] = []
    for _ in range(n):
        branch = rng.random()
        if branch < config.zero_entropy_prob:
            token_id = int(rng.integers(config.vocab_size))
            corpus.append(TokenDistribution.from_pairs([(token_id, 1.0)]))
            continue
        if branch < config.zero_entropy_prob + config.wide_fraction:
            support = int(
                np.clip(
                    round(rng.normal(config.wide_support_mean, config.wide_support_sd)),
                    config.max_support + 1,
                    config.wide_support_cap,
                )
            )
            target = float(
                np.clip(
                    rng.normal(config.wide_entropy_mean, config.wide_entropy_sd),
                    config.entropy_floor,
                    math.log2(support) - 0.05,
                )
            )
            corpus.append(_build_profile(rng, support, target, config.vocab_size))
            continue
        target = float(
            np.clip(
                rng.lognormal(mu, sigma) if sigma > 0 else config.entropy_median,
                config.entropy_floor,
                config.entropy_cap,
            )
        )
        support = 2
        for _ in range(16):
            support = 2 + int(rng.lognormal(support_mu, config.support_log_sigma))
            support = min(support, config.max_support)
            if math.log2(support) >= target + 0.05:
                break
        else:
            support = max(support, math.ceil(2.0 ** (target + 0.05)))
        corpus.append(_build_profile(rng, support, target, config.vocab_size))
    return corpus


# ---------------------------------------------------------------------------
# Corpus file format
# ---------------------------------------------------------------------------


def write_corpus(corpus: Sequence[TokenDistribution], path) -> None:
    """Serialize a corpus; probabilities round-trip bit-exactly.

    Layout, all little-endian: magic "LMD1", version u16, count u64,
    then per record a u32 entry count followed by (token_id u32,
    prob f64) pairs in the record's sorted order.
    """
    with open(path, "wb") as fh:
        fh.write(CORPUS_MAGIC)
        fh.write(struct.pack("<HQ", CORPUS_VERSION, len(corpus)))
        for index, dist in enumerate(corpus):
            ids = dist.token_ids
            if ids.min() < 0 or ids.max() >= 1 << 32:
                raise ValueError(f"record {index}: token ids do not fit in u32")
            record = np.empty(len(dist), dtype=_RECORD_DTYPE)
            record["token_id"] = ids
            record["prob"] = dist.probs
            fh.write(struct.pack("<I", len(dist)))
            fh.write(record.tobytes())


def read_corpus(path) -> list[TokenDistribution]:
    """Parse a corpus file, validating structure and per-record invariants."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CORPUS_MAGIC:
        raise CorpusFormatError(
            f"bad magic at offset 0: expected {CORPUS_MAGIC!r}, got {data[:4]!r}"
        )
    if len(data) < 14:
        raise CorpusFormatError("truncated header")
    version, count = struct.unpack_from("<HQ", data, 4)
    if version != CORPUS_VERSION:
        raise CorpusFormatError(f"unsupported version {version}")
    offset = 14
    corpus: list[TokenDistribution] = []
    for index in range(count):
        if offset + 4 > len(data):
            raise CorpusFormatError(f"record {index}: truncated entry count")
        (m,) = struct.unpack_from("<I", data, offset)
        offset += 4
        if m == 0:
            raise CorpusFormatError(f"record {index}: empty record")
        end = offset + m * _RECORD_DTYPE.itemsize
        if end > len(data):
            raise CorpusFormatError(f"record {index}: truncated entries")
        entries = np.frombuffer(data[offset:end], dtype=_RECORD_DTYPE)
        offset = end
        try:
            corpus.append(
                TokenDistribution(
                    token_ids=entries["token_id"].astype(np.int64),
                    probs=entries["prob"].astype(np.float64),
                )
            )
        except ValueError as exc:
            raise CorpusFormatError(f"record {index}: {exc}") from exc
    if offset != len(data):
        raise CorpusFormatError(f"trailing data after {count} records")
    return corpus


# ---------------------------------------------------------------------------
# Replay source
# ---------------------------------------------------------------------------


class ReplaySource:
    """Serves corpus records in a seed-determined, history-independent order.

    next(history) is a pure function of (corpus, seed, len(history)): the
    served index sequence is precomputed from the seed, so any two
    instances with equal construction arguments replay identically.  In
    permutation mode (the default) every record is served once and the
    source then signals end-of-sequence; with replace=True records are
    drawn with replacement, optionally bounded by length.
    """

    def __init__(
        self,
        corpus: Sequence[TokenDistribution],
        seed: int,
        *,
        replace: bool = False,
        length: Optional[int] = None,
    ):
        if len(corpus) == 0:
            raise ValueError("corpus is empty")
        self._corpus = list(corpus)
        self._seed = seed
        self._replace = replace
        self._rng = np.random.default_rng(seed)
        if replace:
            self._limit = length
            self._indices = np.empty(0, dtype=np.int64)
        else:
            order = self._rng.permutation(len(self._corpus))
            self._limit = len(order) if length is None else min(length, len(order))
            self._indices = order

    def next(self, history: Sequence[int]) -> Optional[TokenDistribution]:
        """Distribution for the next position, or None at end-of-sequence."""
        position = len(history)
        if self._limit is not None and position >= self._limit:
            return None
        while position >= self._indices.size:
            grown = self._rng.integers(
                0, len(self._corpus), size=4096, dtype=np.int64
            )
            self._indices = np.concatenate([self._indices, grown])
        return self._corpus[int(self._indices[position])]

    def reset(self) -> "ReplaySource":
        """A fresh source with identical construction arguments."""
        length = None if not self._replace else self._limit
        if not self._replace and self._limit < len(self._corpus):
            length = self._limit
        return ReplaySource(
            self._corpus, self._seed, replace=self._replace, length=length
        )


def replay_source(corpus: Sequence[TokenDistribution], seed: int) -> ReplaySource:
    """A source that serves each record once, in a seeded random order."""
    return ReplaySource(corpus, seed)


# ---------------------------------------------------------------------------
# HTTP logits client (optional live backend)
# ---------------------------------------------------------------------------


def fetch_logits(
    endpoint: str,
    prompt: str,
    history: Sequence[int],
    *,
    temperature: float = 1.0,
    top_p: float = 1.0,
    timeout: float = 10.0,
) -> Optional[np.ndarray]:
    """POST one step's context to a logits server; None means end-of-sequence.

    Request body: {"prompt", "history", "temperature", "top_p"}.  The
    response must carry {"logits": [...]}; an empty list is the server's
    end-of-sequence signal.
    """
    body = json.dumps(
        {
            "prompt": prompt,
            "history": [int(t) for t in history],
            "temperature": temperature,
            "top_p": top_p,
        }
    ).encode()
    request = urllib.request.Request(
        endpoint, data=body, headers={"Content-Type": "application/json"}
    )
    try:
        with urllib.request.urlopen(request, timeout=timeout) as response:
            payload = json.loads(response.read().decode())
    except (urllib.error.URLError, OSError, json.JSONDecodeError) as exc:
        raise SourceError(f"logits fetch failed: {exc}") from exc
    if not isinstance(payload, dict) or "logits" not in payload:
        raise SourceError("malformed response: missing 'logits' field")
    logits = payload["logits"]
    if not isinstance(logits, list) or not all(
        isinstance(v, (int, float)) for v in logits
    ):
        raise SourceError("malformed response: 'logits' must be a list of numbers")
    if not logits:
        return None
    return np.asarray(logits, dtype=np.float64)


class HttpLogitsSource:
    """DistributionSource backed by a live logits endpoint.

    The first response fixes the vocabulary size; any later deviation is
    reported as a source error because it guarantees desynchronization.
    """

    def __init__(
        self,
        endpoint: str,
        prompt: str,
        config: SamplerConfig,
        *,
        vocab_size: Optional[int] = None,
        timeout: float = 10.0,
    ):
        self._endpoint = endpoint
        self._prompt = prompt
        self._config = config
        self._vocab_size = vocab_size
        self._timeout = timeout

    def next(self, history: Sequence[int]) -> Optional[TokenDistribution]:
        values = fetch_logits(
            self._endpoint,
            self._prompt,
            history,
            temperature=self._config.temperature,
            top_p=self._config.top_p,
            timeout=self._timeout,
        )
        if values is None:
            return None
        if self._vocab_size is None:
            self._vocab_size = values.size
        elif values.size != self._vocab_size:
            raise SourceError(
                f"vocab size changed mid-sequence: expected {self._vocab_size}, "
                f"got {values.size}"
            )
        return preprocess_logits(values, self._config)
