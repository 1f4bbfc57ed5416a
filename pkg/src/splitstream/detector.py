"""The adversary's anomaly test over an observed token stream.

For each position the observer knows the model's next-token distribution
and therefore both the expected information (the entropy) and the
realized information (the surprisal of the emitted token).  Systematic
shortfall of realized information relative to its expectation is exactly
what bit-embedding produces, so the mean difference, normalized by its
exact standard deviation, yields a z-score and two-sided p-value.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .distributions import TokenDistribution

__all__ = [
    "DetectionReport",
    "deviation_statistic",
    "normal_cdf",
    "p_value",
    "detect",
]

NORMAL_APPROX_MIN_TOKENS = 100

_SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------------------
# Scalar helpers
# ---------------------------------------------------------------------------


def normal_cdf(z: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return 0.5 * math.erfc(-z / _SQRT2)


def p_value(d_hat: float, sigma: float) -> float:
    """Two-sided tail probability of the normalized deviation.

    With sigma = 0 the statistic is degenerate: a zero deviation is
    perfectly ordinary (p = 1) and any nonzero one impossible under the
    null (p = 0).
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0.0:
        return 1.0 if d_hat == 0.0 else 0.0
    return math.erfc(abs(d_hat) / sigma / _SQRT2)


def _z_score(d_hat: float, sigma: float) -> float:
    if sigma > 0.0:
        return abs(d_hat) / sigma
    return 0.0 if d_hat == 0.0 else math.inf


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DetectionReport:
    """Outcome of the deviation test on one token stream."""

    n_tokens: int
    d_hat: float
    sigma: float
    z: float
    p_value: float

    def __post_init__(self) -> None:
        if self.n_tokens < 1:
            raise ValueError("n_tokens must be >= 1")
        if self.sigma < 0 or self.z < 0:
            raise ValueError("sigma and z must be >= 0")
        expected = p_value(self.d_hat, self.sigma)
        if abs(expected - self.p_value) > 1e-12:
            raise ValueError(
                f"p_value {self.p_value!r} inconsistent with d_hat/sigma "
                f"(expected {expected!r})"
            )

    CSV_HEADER = "n_tokens,d_hat,sigma,z,p_value"

    def csv_row(self) -> str:
        return ",".join(
            str(v) for v in (self.n_tokens, self.d_hat, self.sigma, self.z, self.p_value)
        )


# ---------------------------------------------------------------------------
# The statistic
# ---------------------------------------------------------------------------


def deviation_statistic(
    dists: Sequence[TokenDistribution], tokens: Sequence[int]
) -> tuple[float, float]:
    """Mean information shortfall and its exact null standard deviation.

    Returns (d_hat, sigma) where d_hat averages entropy minus realized
    surprisal over the stream and sigma aggregates each distribution's
    exact surprisal variance.  Positions with a single possible token
    contribute zero to both.
    """
    if len(dists) != len(tokens):
        raise ValueError(
            f"got {len(dists)} distributions but {len(tokens)} tokens"
        )
    n = len(dists)
    if n == 0:
        raise ValueError("need at least one position")
    deviation_sum = 0.0
    variance_sum = 0.0
    for dist, token_id in zip(dists, tokens):
        entropy = dist.entropy
        realized = -math.log2(dist.probs[dist.index_of(int(token_id))])
        deviation_sum += entropy - realized
        variance_sum += max(0.0, dist.info_second_moment - entropy * entropy)
    return deviation_sum / n, math.sqrt(variance_sum) / n


def detect(
    dists: Sequence[TokenDistribution], tokens: Sequence[int]
) -> DetectionReport:
    """Run the deviation test and package the verdict.

    Warns when the stream is short enough that the normal approximation
    behind the p-value is shaky.
    """
    n = len(dists)
    if n < NORMAL_APPROX_MIN_TOKENS:
        warnings.warn(
            f"deviation test on {n} tokens; the normal approximation is "
            f"unreliable below {NORMAL_APPROX_MIN_TOKENS}",
            UserWarning,
            stacklevel=2,
        )
    d_hat, sigma = deviation_statistic(dists, tokens)
    return DetectionReport(
        n_tokens=n,
        d_hat=d_hat,
        sigma=sigma,
        z=_z_score(d_hat, sigma),
        p_value=p_value(d_hat, sigma),
    )
