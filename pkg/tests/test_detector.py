"""Tests for the information-deviation anomaly test."""

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from splitstream.detector import (
    NORMAL_APPROX_MIN_TOKENS,
    DetectionReport,
    detect,
    deviation_statistic,
    normal_cdf,
    p_value,
)
from splitstream.distributions import TokenDistribution
from splitstream.sources import SynthConfig, generate_synthetic_corpus

# Hand-computed single-position example: a (0.75, 0.25) distribution whose
# more likely token was drawn.  Frozen from 50-digit arithmetic:
#   entropy            = 0.8112781244591328
#   realized info      = 0.4150374992788438
#   second moment      = 1.1291920943557272
EXAMPLE_D_HAT = 0.396240625180289
EXAMPLE_SIGMA = 0.6863088948351165
EXAMPLE_Z = 0.5773502691896257
EXAMPLE_P = 0.5637028616507731


def example_dist():
    return TokenDistribution.from_probs([0.75, 0.25])


# ---------------------------------------------------------------------------
# Scalar pieces
# ---------------------------------------------------------------------------


class TestNormalCdf:
    def test_symmetry_point(self):
        assert normal_cdf(0.0) == 0.5

    def test_upper_quantile(self):
        assert abs(normal_cdf(1.959964) - 0.975) < 1e-6

    def test_against_scipy_grid(self):
        for z in np.linspace(-8.0, 8.0, 401):
            assert abs(normal_cdf(float(z)) - stats.norm.cdf(z)) <= 1e-10

    @given(st.floats(min_value=-10.0, max_value=10.0))
    def test_reflection(self, z):
        assert abs(normal_cdf(z) + normal_cdf(-z) - 1.0) <= 1e-12


class TestPValue:
    def test_zero_deviation(self):
        assert p_value(0.0, 1.7) == 1.0

    def test_degenerate_sigma(self):
        assert p_value(0.0, 0.0) == 1.0
        assert p_value(0.3, 0.0) == 0.0

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            p_value(0.1, -1e-9)

    def test_example_values(self):
        assert p_value(EXAMPLE_D_HAT, EXAMPLE_SIGMA) == pytest.approx(
            EXAMPLE_P, abs=1e-15
        )

    @given(
        d_hat=st.floats(min_value=-5.0, max_value=5.0),
        sigma=st.floats(min_value=1e-6, max_value=5.0),
    )
    def test_two_sided_tail_identity(self, d_hat, sigma):
        z = abs(d_hat) / sigma
        p = p_value(d_hat, sigma)
        assert abs(p - 2.0 * (1.0 - normal_cdf(z))) <= 1e-12
        assert abs(p - 2.0 * stats.norm.sf(z)) <= 1e-12
        assert 0.0 <= p <= 1.0

    def test_sign_symmetric(self):
        assert p_value(0.25, 0.5) == p_value(-0.25, 0.5)


# ---------------------------------------------------------------------------
# The statistic
# ---------------------------------------------------------------------------


class TestDeviationStatistic:
    def test_single_position_example(self):
        d_hat, sigma = deviation_statistic([example_dist()], [0])
        assert d_hat == pytest.approx(EXAMPLE_D_HAT, abs=1e-15)
        assert sigma == pytest.approx(EXAMPLE_SIGMA, abs=1e-15)

    def test_all_point_masses(self):
        dists = [TokenDistribution.from_pairs([(5, 1.0)])] * 7
        assert deviation_statistic(dists, [5] * 7) == (0.0, 0.0)

    def test_forced_positions_contribute_nothing(self):
        point = TokenDistribution.from_pairs([(3, 1.0)])
        d_hat, sigma = deviation_statistic(
            [point, example_dist(), point], [3, 0, 3]
        )
        assert d_hat == pytest.approx(EXAMPLE_D_HAT / 3.0, abs=1e-15)
        assert sigma == pytest.approx(EXAMPLE_SIGMA / 3.0, abs=1e-15)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            deviation_statistic([example_dist()], [0, 1])

    def test_empty_stream(self):
        with pytest.raises(ValueError):
            deviation_statistic([], [])

    def test_missing_token(self):
        with pytest.raises(KeyError):
            deviation_statistic([example_dist()], [17])

    def test_numpy_integer_tokens_accepted(self):
        d_hat, _ = deviation_statistic([example_dist()], np.array([0]))
        assert d_hat == pytest.approx(EXAMPLE_D_HAT, abs=1e-15)

    def test_base_invariance_of_z(self):
        # recompute everything in nats; the global log-base factor scales
        # numerator and denominator identically, so z must not move
        rng = np.random.default_rng(31)
        dists = [
            TokenDistribution.from_probs(rng.dirichlet(np.ones(5)))
            for _ in range(40)
        ]
        tokens = [int(d.token_ids[rng.integers(len(d))]) for d in dists]
        d_hat, sigma = deviation_statistic(dists, tokens)

        dev_nats = 0.0
        var_nats = 0.0
        for d, t in zip(dists, tokens):
            p = np.asarray(d.probs, dtype=float)
            h_nats = float(-(p * np.log(p)).sum())
            second = float((p * np.log(p) ** 2).sum())
            realized = -math.log(d.prob_of(t))
            dev_nats += h_nats - realized
            var_nats += second - h_nats * h_nats
        n = len(dists)
        z_nats = abs(dev_nats / n) / (math.sqrt(var_nats) / n)
        assert abs(d_hat / sigma) == pytest.approx(z_nats, abs=1e-9)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


class TestDetectionReport:
    def test_example_report(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            report = detect([example_dist()], [0])
        assert report.n_tokens == 1
        assert report.d_hat == pytest.approx(EXAMPLE_D_HAT, abs=1e-15)
        assert report.sigma == pytest.approx(EXAMPLE_SIGMA, abs=1e-15)
        assert report.z == pytest.approx(EXAMPLE_Z, abs=1e-15)
        assert report.p_value == pytest.approx(EXAMPLE_P, abs=1e-15)
        # agreement with the 5-digit hand-rounded presentation
        assert abs(report.z - 0.57736) < 1e-4
        assert abs(report.p_value - 0.56363) < 1.5e-4

    def test_forced_stream_is_unsuspicious(self):
        point = TokenDistribution.from_pairs([(0, 1.0)])
        report = detect([point] * 200, [0] * 200)
        assert report.z == 0.0
        assert report.p_value == 1.0

    def test_short_stream_warns(self):
        with pytest.warns(UserWarning, match="normal approximation"):
            detect([example_dist()] * (NORMAL_APPROX_MIN_TOKENS - 1),
                   [0] * (NORMAL_APPROX_MIN_TOKENS - 1))

    def test_long_stream_does_not_warn(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            detect([example_dist()] * NORMAL_APPROX_MIN_TOKENS,
                   [0] * NORMAL_APPROX_MIN_TOKENS)

    def test_infinite_z_is_representable(self):
        report = DetectionReport(
            n_tokens=3, d_hat=0.5, sigma=0.0, z=math.inf, p_value=0.0
        )
        assert report.z == math.inf

    def test_validation(self):
        with pytest.raises(ValueError):
            DetectionReport(n_tokens=0, d_hat=0.0, sigma=0.0, z=0.0, p_value=1.0)
        with pytest.raises(ValueError):
            DetectionReport(n_tokens=1, d_hat=0.0, sigma=-1.0, z=0.0, p_value=1.0)
        with pytest.raises(ValueError):
            DetectionReport(n_tokens=1, d_hat=0.0, sigma=1.0, z=-0.1, p_value=1.0)
        with pytest.raises(ValueError):
            DetectionReport(
                n_tokens=1, d_hat=EXAMPLE_D_HAT, sigma=EXAMPLE_SIGMA,
                z=EXAMPLE_Z, p_value=0.9,
            )

    def test_csv_shape(self):
        assert DetectionReport.CSV_HEADER == "n_tokens,d_hat,sigma,z,p_value"
        report = DetectionReport(
            n_tokens=4, d_hat=EXAMPLE_D_HAT, sigma=EXAMPLE_SIGMA,
            z=EXAMPLE_Z, p_value=EXAMPLE_P,
        )
        fields = report.csv_row().split(",")
        assert fields[0] == "4"
        assert float(fields[1]) == EXAMPLE_D_HAT
        assert float(fields[4]) == EXAMPLE_P


# ---------------------------------------------------------------------------
# Honest-stream behavior
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def honest_corpus():
    corpus = generate_synthetic_corpus(SynthConfig(seed=881), 400)
    return [d for d in corpus if len(d) <= 1024]


class TestHonestStreams:
    def test_honest_z_scores_stay_moderate(self, honest_corpus):
        corpus = honest_corpus
        rng = np.random.default_rng(55)
        worst = 0.0
        p_values = []
        for _ in range(200):
            picks = rng.integers(0, len(corpus), size=300)
            dists = [corpus[i] for i in picks]
            tokens = []
            for d in dists:
                cum = np.cumsum(d.probs)
                idx = min(
                    int(np.searchsorted(cum, rng.random() * cum[-1], side="right")),
                    len(d) - 1,
                )
                tokens.append(int(d.token_ids[idx]))
            report = detect(dists, tokens)
            worst = max(worst, report.z)
            p_values.append(report.p_value)
        assert worst < 6.0
        assert 0.35 < float(np.mean(p_values)) < 0.65
