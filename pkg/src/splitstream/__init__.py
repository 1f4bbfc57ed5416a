"""Hiding encrypted bitstreams inside LLM-style token sampling decisions.

The codec repeatedly splits a next-token distribution into two
near-equal-mass halves, letting each message bit choose a side, then
samples honestly from whatever residual set remains; a matched detector
measures how far realized token surprisal drifts from its expectation.
The package also ships a calibrated synthetic corpus generator and the
Monte Carlo sweeps that trace the capacity-versus-detectability curve.
"""

from .codec import (
    BitCursor,
    ChannelKey,
    MessageFrame,
    TokenRecord,
    clear_split_cache,
    decode_message,
    decode_token,
    encode_message,
    encode_token,
    whiten,
)
from .detector import DetectionReport, detect, deviation_statistic, normal_cdf, p_value
from .distributions import (
    CorpusStats,
    LogitVector,
    SamplerConfig,
    TokenDistribution,
    corpus_stats,
    entropy,
    filter_corpus,
    information,
    preprocess_logits,
)
from .errors import (
    CorpusFormatError,
    DesyncError,
    IncompleteFrameError,
    SourceError,
    SplitstreamError,
    TruncationError,
)
from .experiments import (
    SweepConfig,
    default_hs_grid,
    run_bitrate_sweep,
    run_detection_sweep,
    run_qq,
    run_safe_rate,
    write_csv,
)
from .partitioning import (
    Partition,
    ProbSubset,
    adjustment_width,
    partition,
    security_level,
    split_entropy,
    split_entropy_at_deviation,
)
from .sources import (
    HttpLogitsSource,
    ReplaySource,
    SynthConfig,
    fetch_logits,
    generate_synthetic_corpus,
    read_corpus,
    replay_source,
    write_corpus,
)

__version__ = "0.1.0"

__all__ = [
    "BitCursor",
    "ChannelKey",
    "CorpusFormatError",
    "CorpusStats",
    "DesyncError",
    "DetectionReport",
    "HttpLogitsSource",
    "IncompleteFrameError",
    "LogitVector",
    "MessageFrame",
    "Partition",
    "ProbSubset",
    "ReplaySource",
    "SamplerConfig",
    "SourceError",
    "SplitstreamError",
    "SweepConfig",
    "SynthConfig",
    "TokenDistribution",
    "TokenRecord",
    "TruncationError",
    "adjustment_width",
    "clear_split_cache",
    "corpus_stats",
    "decode_message",
    "decode_token",
    "default_hs_grid",
    "detect",
    "deviation_statistic",
    "encode_message",
    "encode_token",
    "entropy",
    "fetch_logits",
    "filter_corpus",
    "generate_synthetic_corpus",
    "information",
    "normal_cdf",
    "p_value",
    "partition",
    "preprocess_logits",
    "read_corpus",
    "replay_source",
    "run_bitrate_sweep",
    "run_detection_sweep",
    "run_qq",
    "run_safe_rate",
    "security_level",
    "split_entropy",
    "split_entropy_at_deviation",
    "whiten",
    "write_corpus",
    "write_csv",
]
