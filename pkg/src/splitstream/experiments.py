"""Monte Carlo sweeps over the codec/detector trade-off, emitting CSV.

Four drivers mirror the headline experiments: embedded bits per token
versus the split threshold, detection fraction versus stream length,
the theoretically safe rate versus observation budget, and QQ data for
p-value uniformity at the capacity boundary.  Every sweep derives all
randomness from (master seed, domain tag, cell index, run index), so
outputs are byte-identical across repeat runs and across worker counts.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np

from .codec import BitCursor, encode_token
from .detector import p_value as _p_value
from .distributions import TokenDistribution
from .partitioning import split_entropy

__all__ = [
    "SweepConfig",
    "BitrateRow",
    "DetectionRow",
    "SafeRateRow",
    "QQRow",
    "default_hs_grid",
    "deviation_scale",
    "run_bitrate_sweep",
    "run_detection_sweep",
    "run_safe_rate",
    "run_qq",
    "write_csv",
]

# Domain tags keeping the seed streams of different sweeps disjoint.
_TAG_BITRATE = 101
_TAG_DETECTION_STEGO = 202
_TAG_DETECTION_HONEST = 203
_TAG_QQ_STEGO = 301
_TAG_QQ_HONEST = 302

BITRATE_CSV_COLUMNS = ("hs", "bits_per_token", "mean_entropy_bits")
DETECTION_CSV_COLUMNS = ("hs", "n_tokens", "threshold", "detection_fraction", "mode")
SAFERATE_CSV_COLUMNS = (
    "n_tokens",
    "epsilon",
    "hs_min",
    "safe_bits_per_token",
    "epsilon_multiplier",
)
QQ_CSV_COLUMNS = ("series", "hs", "bits_per_token", "rank", "uniform_quantile", "p_value")


# ---------------------------------------------------------------------------
# Configuration and row schemas
# ---------------------------------------------------------------------------


def default_hs_grid(points: int = 7) -> tuple[float, ...]:
    """Split thresholds log-spaced in 1 - H_s from 0.9 to 0.9999."""
    return tuple(1.0 - 10.0**x for x in np.linspace(-1.0, -4.0, points))


def deviation_scale(min_split_entropy: float) -> float:
    """Imbalance whose split entropy equals the threshold (small-dev form)."""
    return math.sqrt(2.0 * math.log(2.0) * (1.0 - min_split_entropy))


@dataclass(frozen=True)
class SweepConfig:
    """Knobs shared by the detection sweep (and reused by the others)."""

    hs_grid: tuple[float, ...] = default_hs_grid()
    n_tokens_grid: tuple[int, ...] = (1_000, 10_000, 100_000)
    runs_per_cell: int = 100
    thresholds: tuple[float, ...] = (1e-6, 1e-3, 0.05)
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.hs_grid or not self.n_tokens_grid or not self.thresholds:
            raise ValueError("grids and thresholds must be nonempty")
        if not all(0 < h <= 1 for h in self.hs_grid):
            raise ValueError("hs_grid values must lie in (0, 1]")
        if not all(0 < t < 1 for t in self.thresholds):
            raise ValueError("thresholds must lie in (0, 1)")
        if self.runs_per_cell < 1:
            raise ValueError("runs_per_cell must be >= 1")


@dataclass(frozen=True)
class BitrateRow:
    hs: float
    bits_per_token: float
    mean_entropy_bits: float


@dataclass(frozen=True)
class DetectionRow:
    hs: float
    n_tokens: int
    threshold: float
    detection_fraction: float
    mode: str


@dataclass(frozen=True)
class SafeRateRow:
    n_tokens: int
    epsilon: float
    hs_min: float
    safe_bits_per_token: float
    epsilon_multiplier: float


@dataclass(frozen=True)
class QQRow:
    series: str
    hs: Optional[float]
    bits_per_token: float
    rank: int
    uniform_quantile: float
    p_value: float


def write_csv(path, rows: Sequence) -> None:
    """Write dataclass rows as CSV: UTF-8, header row, '.' decimal marks.

    Values render via str(); None renders as the empty string.  Output
    bytes are a pure function of the row values.
    """
    if not rows:
        raise ValueError("no rows to write")
    names = [f.name for f in fields(rows[0])]
    lines = [",".join(names)]
    for row in rows:
        values = []
        for name in names:
            value = getattr(row, name)
            values.append("" if value is None else str(value))
        lines.append(",".join(values))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Packed corpus: vectorized honest sampling
# ---------------------------------------------------------------------------


class PackedCorpus:
    """Flat arrays over a corpus for batch honest sampling and statistics."""

    def __init__(self, corpus: Sequence[TokenDistribution]):
        if len(corpus) == 0:
            raise ValueError("corpus is empty")
        self.records = list(corpus)
        self.entropies = np.asarray([d.entropy for d in corpus], dtype=np.float64)
        second = np.asarray([d.info_second_moment for d in corpus], dtype=np.float64)
        self.variances = np.maximum(0.0, second - self.entropies**2)
        sizes = np.asarray([len(d) for d in corpus], dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        flat = np.concatenate([d.probs for d in corpus])
        self.flat_surprisal = -np.log2(flat)
        self.flat_cum = np.cumsum(flat)
        base = np.concatenate([[0.0], self.flat_cum[self.offsets[1:-1] - 1]])
        self.base = base
        self.totals = self.flat_cum[self.offsets[1:] - 1] - base

    def __len__(self) -> int:
        return len(self.records)

    def sample_surprisal(self, idx: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Surprisal of one honest inverse-CDF draw per (record, uniform)."""
        targets = self.base[idx] + u * self.totals[idx]
        pos = np.searchsorted(self.flat_cum, targets, side="right")
        pos = np.minimum(pos, self.offsets[idx + 1] - 1)
        pos = np.maximum(pos, self.offsets[idx])
        return self.flat_surprisal[pos]

    def honest_p_value(self, rng: np.random.Generator, n_tokens: int) -> float:
        """Detector p-value of one honest run of n_tokens draws."""
        idx = rng.integers(0, len(self.records), size=n_tokens)
        u = rng.random(n_tokens)
        surprisal = self.sample_surprisal(idx, u)
        d_hat = float(np.mean(self.entropies[idx] - surprisal))
        sigma = math.sqrt(float(np.sum(self.variances[idx]))) / n_tokens
        return _p_value(d_hat, sigma)


# ---------------------------------------------------------------------------
# Stego runs
# ---------------------------------------------------------------------------


def _run_rng(seed: int, tag: int, cell: int, run: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, tag, cell, run)))


def _stego_run(
    packed: PackedCorpus,
    min_split_entropy: float,
    n_tokens: int,
    idx_rng: np.random.Generator,
    walk_rng: np.random.Generator,
) -> tuple[float, float, int]:
    """Embed random bits over n_tokens replacement draws from the corpus.

    Returns (d_hat, sigma, total embedded bits).  Record indices come
    from idx_rng; the bit stream and residual draws from walk_rng, so
    two thresholds given equal idx seeds see identical record sequences.
    """
    records = packed.records
    entropies = packed.entropies
    variances = packed.variances
    cursor = BitCursor.random(walk_rng)
    indices = idx_rng.integers(0, len(records), size=n_tokens)
    deviation_sum = 0.0
    variance_sum = 0.0
    total_bits = 0
    for i in range(n_tokens):
        rec = int(indices[i])
        dist = records[rec]
        record = encode_token(cursor, dist, min_split_entropy, walk_rng)
        realized = -math.log2(dist.probs[dist.index_of(record.token_id)])
        deviation_sum += entropies[rec] - realized
        variance_sum += variances[rec]
        total_bits += record.bits_embedded
    d_hat = deviation_sum / n_tokens
    sigma = math.sqrt(variance_sum) / n_tokens
    return d_hat, sigma, total_bits


# ---------------------------------------------------------------------------
# Sweep drivers
# ---------------------------------------------------------------------------


def run_bitrate_sweep(
    corpus: Sequence[TokenDistribution],
    hs_grid: Optional[Sequence[float]] = None,
    *,
    tokens_per_point: int = 20_000,
    seed: int = 0,
    workers: int = 1,
) -> list[BitrateRow]:
    """Mean embedded bits per token at each threshold, plus corpus entropy.

    All thresholds share one record-index seed (common random numbers),
    which sharpens the monotone shape of the measured curve.
    """
    grid = tuple(hs_grid) if hs_grid is not None else default_hs_grid()
    packed = corpus if isinstance(corpus, PackedCorpus) else PackedCorpus(corpus)
    mean_entropy = float(packed.entropies.mean())

    def one(hs: float) -> BitrateRow:
        idx_rng = _run_rng(seed, _TAG_BITRATE, 1, 0)
        walk_rng = _run_rng(seed, _TAG_BITRATE, 2, 0)
        _, _, bits = _stego_run(packed, hs, tokens_per_point, idx_rng, walk_rng)
        return BitrateRow(
            hs=hs,
            bits_per_token=bits / tokens_per_point,
            mean_entropy_bits=mean_entropy,
        )

    return _map_ordered(one, grid, workers)


def run_detection_sweep(
    corpus: Sequence[TokenDistribution],
    config: SweepConfig,
    *,
    workers: int = 1,
) -> list[DetectionRow]:
    """Detection fraction per (threshold, stream length) cell.

    Each cell runs runs_per_cell independent embedding streams plus an
    equal-size honest control batch; rows report, per significance
    threshold, the fraction of runs the detector flags.
    """
    packed = corpus if isinstance(corpus, PackedCorpus) else PackedCorpus(corpus)
    cells = [
        (ci, hs, n)
        for ci, (hs, n) in enumerate(
            (h, n) for h in config.hs_grid for n in config.n_tokens_grid
        )
    ]

    def one(cell: tuple[int, float, int]) -> list[DetectionRow]:
        ci, hs, n_tokens = cell
        stego_p = np.empty(config.runs_per_cell)
        for run in range(config.runs_per_cell):
            base = np.random.SeedSequence((config.seed, _TAG_DETECTION_STEGO, ci, run))
            idx_ss, walk_ss = base.spawn(2)
            d_hat, sigma, _ = _stego_run(
                packed,
                hs,
                n_tokens,
                np.random.default_rng(idx_ss),
                np.random.default_rng(walk_ss),
            )
            stego_p[run] = _p_value(d_hat, sigma)
        honest_p = np.empty(config.runs_per_cell)
        for run in range(config.runs_per_cell):
            rng = _run_rng(config.seed, _TAG_DETECTION_HONEST, ci, run)
            honest_p[run] = packed.honest_p_value(rng, n_tokens)
        rows = []
        for mode, values in (("stego", stego_p), ("honest", honest_p)):
            for threshold in config.thresholds:
                rows.append(
                    DetectionRow(
                        hs=hs,
                        n_tokens=n_tokens,
                        threshold=threshold,
                        detection_fraction=float(np.mean(values < threshold)),
                        mode=mode,
                    )
                )
        return rows

    nested = _map_ordered(one, cells, workers)
    return [row for cell_rows in nested for row in cell_rows]


def run_safe_rate(
    corpus: Sequence[TokenDistribution],
    n_grid: Sequence[int],
    *,
    bitrate_rows: Optional[Sequence[BitrateRow]] = None,
    epsilon_multiplier: float = 1.0,
    seed: int = 0,
    workers: int = 1,
) -> list[SafeRateRow]:
    """Theoretically safe embedding rate against an N-token observer.

    An observer with N tokens resolves statistical distance down to
    about epsilon_multiplier / sqrt(N); holding every split's imbalance
    below that requires a threshold of at least the binary entropy at
    that imbalance, and the corresponding rate is read off the measured
    bitrate curve (log-linear interpolation in 1 - H_s, floored at 0).
    """
    if len(n_grid) == 0:
        raise ValueError("n_grid is empty")
    if epsilon_multiplier <= 0:
        raise ValueError("epsilon_multiplier must be > 0")
    if bitrate_rows is None:
        bitrate_rows = run_bitrate_sweep(corpus, seed=seed, workers=workers)
    curve = sorted(bitrate_rows, key=lambda r: r.hs)
    xs = np.asarray([math.log10(1.0 - r.hs) for r in curve])[::-1]
    rates = np.asarray([r.bits_per_token for r in curve])[::-1]
    # Non-increasing envelope in H_s: guards the documented monotonicity
    # of the safe-rate output against Monte Carlo jitter in the curve.
    rates = np.minimum.accumulate(rates[::-1])[::-1]

    rows = []
    for n_tokens in n_grid:
        if n_tokens < 1:
            raise ValueError("n_grid entries must be >= 1")
        epsilon = epsilon_multiplier / math.sqrt(n_tokens)
        delta = min(epsilon, 1.0 - 1e-12)
        hs_min = split_entropy((1.0 - delta) / 2.0)
        rows.append(
            SafeRateRow(
                n_tokens=int(n_tokens),
                epsilon=epsilon,
                hs_min=hs_min,
                safe_bits_per_token=_interp_rate(xs, rates, hs_min),
                epsilon_multiplier=epsilon_multiplier,
            )
        )
    return rows


def _interp_rate(xs: np.ndarray, rates: np.ndarray, hs: float) -> float:
    """Rate at hs from the measured curve; linear in log10(1 - H_s).

    Queries beyond the measured grid extrapolate from the outermost
    segment and clamp at zero; xs must be ascending in log10(1 - hs),
    which orders thresholds from tight to loose.
    """
    x = math.log10(max(1.0 - hs, 1e-300))
    if xs.size == 1:
        return max(0.0, float(rates[0]))
    slope_lo = (rates[1] - rates[0]) / (xs[1] - xs[0])
    slope_hi = (rates[-1] - rates[-2]) / (xs[-1] - xs[-2])
    if x <= xs[0]:
        value = rates[0] + slope_lo * (x - xs[0])
    elif x >= xs[-1]:
        value = rates[-1] + slope_hi * (x - xs[-1])
    else:
        value = float(np.interp(x, xs, rates))
    return max(0.0, float(value))


def run_qq(
    corpus: Sequence[TokenDistribution],
    hs_values: Sequence[float],
    runs: int,
    tokens_per_run: int,
    *,
    seed: int = 0,
    workers: int = 1,
    include_honest: bool = True,
) -> list[QQRow]:
    """Sorted detector p-values per threshold, paired with uniform quantiles.

    Emits one series per threshold plus (by default) an honest control
    series whose hs field is empty; ranks use the (i - 1/2)/runs
    plotting positions.
    """
    if runs < 2:
        raise ValueError("runs must be >= 2")
    if tokens_per_run < 1:
        raise ValueError("tokens_per_run must be >= 1")
    packed = corpus if isinstance(corpus, PackedCorpus) else PackedCorpus(corpus)

    def stego_series(job: tuple[int, float]) -> list[QQRow]:
        hi, hs = job
        p_values = np.empty(runs)
        bits_total = 0
        for run in range(runs):
            base = np.random.SeedSequence((seed, _TAG_QQ_STEGO, hi, run))
            idx_ss, walk_ss = base.spawn(2)
            d_hat, sigma, bits = _stego_run(
                packed,
                hs,
                tokens_per_run,
                np.random.default_rng(idx_ss),
                np.random.default_rng(walk_ss),
            )
            p_values[run] = _p_value(d_hat, sigma)
            bits_total += bits
        rate = bits_total / (runs * tokens_per_run)
        return _qq_rows("stego", hs, rate, np.sort(p_values))

    jobs = list(enumerate(hs_values))
    nested = _map_ordered(stego_series, jobs, workers)
    rows = [row for series in nested for row in series]
    if include_honest:
        p_values = np.empty(runs)
        for run in range(runs):
            rng = _run_rng(seed, _TAG_QQ_HONEST, 0, run)
            p_values[run] = packed.honest_p_value(rng, tokens_per_run)
        rows.extend(_qq_rows("honest", None, 0.0, np.sort(p_values)))
    return rows


def _qq_rows(
    series: str, hs: Optional[float], rate: float, sorted_p: np.ndarray
) -> list[QQRow]:
    runs = sorted_p.size
    return [
        QQRow(
            series=series,
            hs=hs,
            bits_per_token=rate,
            rank=i + 1,
            uniform_quantile=(i + 0.5) / runs,
            p_value=float(sorted_p[i]),
        )
        for i in range(runs)
    ]


def _map_ordered(fn, items, workers: int) -> list:
    """Apply fn over items, preserving order regardless of worker count."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
