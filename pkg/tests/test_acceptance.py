"""Release gate: every headline guarantee, one test and one verdict line each.

Run with `pytest tests/test_acceptance.py -s` to see the verdict lines;
the two Monte Carlo trade-off tests dominate the runtime (several
minutes at the desk-scale budgets).
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

from splitstream.codec import (
    ChannelKey,
    clear_split_cache,
    decode_message,
    encode_message,
)
from splitstream.distributions import TokenDistribution, corpus_stats, filter_corpus
from splitstream.errors import TruncationError
from splitstream.experiments import (
    PackedCorpus,
    SweepConfig,
    run_bitrate_sweep,
    run_detection_sweep,
    run_qq,
    run_safe_rate,
    write_csv,
)
from splitstream.partitioning import ProbSubset, partition, split_entropy
from splitstream.sources import ReplaySource, SynthConfig, generate_synthetic_corpus

MASTER_SEED = 20260822


def _verdict(tag: str, ok: bool, detail: str) -> None:
    print(f"\n[acceptance {tag}] {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"[acceptance {tag}] {detail}"


@pytest.fixture(scope="module")
def round_trip_corpus():
    raw = generate_synthetic_corpus(SynthConfig(seed=MASTER_SEED), 2000)
    kept, _ = filter_corpus(raw, 1024)
    return kept


@pytest.fixture(scope="module")
def calibrated():
    raw = generate_synthetic_corpus(SynthConfig(seed=MASTER_SEED), 20000)
    kept, removed = filter_corpus(raw, 1024)
    return kept, removed


@pytest.fixture(scope="module")
def bitrate_rows(calibrated):
    kept, _ = calibrated
    return run_bitrate_sweep(kept, seed=1)


# ---------------------------------------------------------------------------
# 1. Round-trip correctness at volume
# ---------------------------------------------------------------------------


def test_criterion_1_round_trip_volume(round_trip_corpus):
    gates = (0.9, 0.99, 0.999)
    # conservative floors on measured bits/token, used only to budget
    # the token allowance per run
    rate_floor = {0.9: 0.97, 0.99: 0.61, 0.999: 0.47}
    rng = np.random.default_rng(MASTER_SEED)

    started = time.perf_counter()
    decoded = truncated = mismatched = 0
    for case in range(1000):
        gate = gates[case % 3]
        size = int(rng.integers(1, 65))
        payload = rng.bytes(size)
        key = ChannelKey(rng.bytes(16), rng.bytes(12))
        frame_bits = 32 + 8 * size
        max_tokens = int(frame_bits / (0.75 * rate_floor[gate])) + 48
        try:
            records = encode_message(
                payload, key,
                ReplaySource(round_trip_corpus, seed=case, replace=True),
                gate, case, max_tokens,
            )
        except TruncationError:
            truncated += 1
            continue
        out = decode_message(
            [r.token_id for r in records], key,
            ReplaySource(round_trip_corpus, seed=case, replace=True), gate,
        )
        if out == payload:
            decoded += 1
        else:
            mismatched += 1
    elapsed = time.perf_counter() - started
    clear_split_cache()

    ok = mismatched == 0 and decoded + truncated == 1000 and elapsed < 10.0
    _verdict(
        "1/9 round-trip",
        ok,
        f"decoded {decoded}/1000, truncated {truncated}, "
        f"mismatched {mismatched}, {elapsed:.2f}s (budget 10s)",
    )


# ---------------------------------------------------------------------------
# 2. Partition validity against the exhaustive oracle
# ---------------------------------------------------------------------------


def _oracle_best_split_entropy(probs: np.ndarray, total: float):
    """Best achievable split entropy over all proper subsets, by brute force."""
    m = probs.size
    sums = np.zeros(1 << m)
    size = 1
    for p in probs:
        sums[size : 2 * size] = sums[:size] + p
        size *= 2
    proper = sums[1:-1]
    if proper.size == 0:
        return None
    best = float(proper[np.argmin(np.abs(proper - total / 2.0))])
    fraction = best / total
    if not 0.0 < fraction < 1.0:
        return None
    return split_entropy(fraction)


def test_criterion_2_partition_oracle_consistency():
    rng = np.random.default_rng(MASTER_SEED)
    started = time.perf_counter()
    accepted = infeasible = gate_violations = missed_none = 0
    for _ in range(10_000):
        m = int(rng.integers(1, 21))
        weights = rng.random(m) + 1e-9
        ids = rng.choice(100_000, size=m, replace=False)
        dist = TokenDistribution.from_pairs(zip(ids.tolist(), weights.tolist()))
        gate = float(rng.uniform(0.85, 0.99999))
        subset = ProbSubset.from_distribution(dist)
        result = partition(subset, gate)
        if result is not None:
            accepted += 1
            if not result.split_entropy >= gate:
                gate_violations += 1
        optimum = _oracle_best_split_entropy(subset.probs, subset.total)
        if optimum is None or optimum < gate:
            infeasible += 1
            if result is not None:
                missed_none += 1
    elapsed = time.perf_counter() - started

    ok = gate_violations == 0 and missed_none == 0 and elapsed < 30.0
    _verdict(
        "2/9 partition-oracle",
        ok,
        f"10000 cases ({accepted} accepted, {infeasible} infeasible), "
        f"{gate_violations} gate violations, {missed_none} splits where the "
        f"oracle says none exists, {elapsed:.2f}s (budget 30s)",
    )


# ---------------------------------------------------------------------------
# 3. Security-limit identity
# ---------------------------------------------------------------------------


def test_criterion_3_security_limit_identity():
    deltas = np.geomspace(1e-6, 0.05, 4000)
    worst = 0.0
    for delta in deltas:
        gap = 1.0 - split_entropy((1.0 - delta) / 2.0)
        ratio = gap * 2.0 * math.log(2.0) / (delta * delta)
        worst = max(worst, abs(ratio - 1.0))
    ok = worst < 0.01
    _verdict(
        "3/9 security-limit",
        ok,
        f"max |(1-h)*2ln2/delta^2 - 1| = {worst:.2e} over {deltas.size} "
        f"points in (0, 0.05] (tolerance 1e-2)",
    )


# ---------------------------------------------------------------------------
# 4. Detector null calibration
# ---------------------------------------------------------------------------


def test_criterion_4_detector_null_calibration(calibrated):
    kept, _ = calibrated
    packed = PackedCorpus(kept)
    started = time.perf_counter()
    p_values = np.empty(10_000)
    for run in range(10_000):
        rng = np.random.default_rng(np.random.SeedSequence((MASTER_SEED, 404, run)))
        p_values[run] = packed.honest_p_value(rng, 1000)
    elapsed = time.perf_counter() - started

    ks = stats.kstest(p_values, "uniform")
    flagged = int(np.sum(p_values < 1e-6))
    binom_p = stats.binomtest(flagged, 10_000, 1e-6, alternative="greater").pvalue
    ok = ks.statistic < 0.02 and binom_p > 0.01
    _verdict(
        "4/9 null-calibration",
        ok,
        f"KS={ks.statistic:.5f} (< 0.02), {flagged} of 10000 honest runs "
        f"below 1e-6 (binomial p={binom_p:.3f} > 0.01), {elapsed:.1f}s",
    )


# ---------------------------------------------------------------------------
# 5. Bitrate reproduction on a calibrated corpus
# ---------------------------------------------------------------------------


def test_criterion_5_bitrate_reproduction(calibrated, bitrate_rows):
    kept, removed = calibrated
    summary = corpus_stats(kept)
    calibration_ok = (
        abs(summary.zero_entropy_fraction - 0.40) < 0.05
        and abs(summary.mean_entropy - 1.15) < 0.10
        and abs(summary.mean_nonzero_entropy - 1.93) < 0.15
        and abs(summary.median_nonzero_entropy - 1.55) < 0.15
    )

    rates = [row.bits_per_token for row in bitrate_rows]
    loose_rate = rates[0]
    monotone = all(a >= b for a, b in zip(rates, rates[1:]))
    level_ok = 0.7 <= loose_rate <= 1.3
    drop_ok = rates[-1] <= 0.5 * loose_rate
    bounded = all(r <= bitrate_rows[0].mean_entropy_bits for r in rates)

    ok = calibration_ok and monotone and level_ok and drop_ok and bounded
    _verdict(
        "5/9 bitrate-curve",
        ok,
        f"calibration(zero={summary.zero_entropy_fraction:.3f}, "
        f"mean={summary.mean_entropy:.3f}, "
        f"nonzero={summary.mean_nonzero_entropy:.3f}, "
        f"median={summary.median_nonzero_entropy:.3f}, removed={removed:.4f}) "
        f"ok={calibration_ok}; rate@0.9={loose_rate:.4f} in [0.7,1.3]={level_ok}; "
        f"monotone={monotone}; tightest/loosest={rates[-1] / loose_rate:.3f} "
        f"(need <= 0.5)={drop_ok}; under mean entropy={bounded}",
    )


# ---------------------------------------------------------------------------
# 6. Detection trade-off over stream length
# ---------------------------------------------------------------------------


def test_criterion_6_detection_tradeoff(calibrated):
    kept, _ = calibrated
    config = SweepConfig(
        hs_grid=(0.9, 0.9999),
        n_tokens_grid=(1_000, 10_000, 100_000),
        runs_per_cell=100,
        thresholds=(1e-6,),
        seed=5,
    )
    started = time.perf_counter()
    rows = run_detection_sweep(kept, config, workers=4)
    elapsed = time.perf_counter() - started
    clear_split_cache()

    stego = {
        (row.hs, row.n_tokens): row.detection_fraction
        for row in rows
        if row.mode == "stego"
    }
    curve = [stego[(0.9, n)] for n in config.n_tokens_grid]
    monotone = all(a <= b for a, b in zip(curve, curve[1:]))
    endpoint = curve[-1] > 0.9
    tight_quiet = stego[(0.9999, 1_000)] < 0.05

    ok = monotone and endpoint and tight_quiet
    _verdict(
        "6/9 detection-tradeoff",
        ok,
        f"loose-gate detection over N grid {curve} (monotone={monotone}, "
        f"last>0.9={endpoint}); tight gate at N=1000 -> "
        f"{stego[(0.9999, 1_000)]:.3f} (< 0.05), {elapsed:.1f}s",
    )


# ---------------------------------------------------------------------------
# 7. QQ non-uniformity across the half-bit boundary
# ---------------------------------------------------------------------------


def test_criterion_7_qq_nonuniformity_boundary(calibrated):
    kept, _ = calibrated
    gates = (0.9, 1.0 - 10.0**-5.5)
    runs = 600
    started = time.perf_counter()
    rows = run_qq(kept, gates, runs, 25_000, seed=9, workers=4)
    elapsed = time.perf_counter() - started
    clear_split_cache()

    series = {}
    for gate in gates:
        p = [r.p_value for r in rows if r.series == "stego" and r.hs == gate]
        rate = next(
            r.bits_per_token for r in rows if r.series == "stego" and r.hs == gate
        )
        series[gate] = (rate, np.asarray(p))
    rate_hi, p_hi = series[gates[0]]
    rate_lo, p_lo = series[gates[1]]
    ks_hi = stats.kstest(p_hi, "uniform").statistic
    ks_lo = stats.kstest(p_lo, "uniform").statistic
    honest_p = np.asarray([r.p_value for r in rows if r.series == "honest"])
    ks_honest = stats.kstest(honest_p, "uniform").statistic
    # two-sample critical difference at the 1% level for equal-size runs
    critical = 1.63 * math.sqrt(2.0 / runs)
    one_sided = stats.ks_2samp(p_hi, p_lo, alternative="greater").pvalue

    rates_straddle = rate_hi >= 0.5 and rate_lo <= 0.3
    separated = (ks_hi - ks_lo) > critical and one_sided < 1e-6
    ok = rates_straddle and separated
    _verdict(
        "7/9 qq-boundary",
        ok,
        f"rates {rate_hi:.4f} (>=0.5) vs {rate_lo:.4f} (<=0.3); KS vs uniform "
        f"{ks_hi:.4f} vs {ks_lo:.4f} (diff > {critical:.4f}), honest "
        f"{ks_honest:.4f}; one-sided two-sample p={one_sided:.2e} (< 1e-6); "
        f"{elapsed:.1f}s",
    )


# ---------------------------------------------------------------------------
# 8. Safe-rate formula spot check
# ---------------------------------------------------------------------------


def test_criterion_8_safe_rate_formula(calibrated, bitrate_rows):
    kept, _ = calibrated
    rows = run_safe_rate(
        kept, [10**3, 10**4, 10**5, 10**6], bitrate_rows=bitrate_rows
    )
    largest = rows[-1]
    target = 1.0 - 1e-6 / (2.0 * math.log(2.0))
    spot_ok = abs(largest.hs_min - target) <= 1e-9
    monotone = all(
        a.safe_bits_per_token >= b.safe_bits_per_token
        for a, b in zip(rows, rows[1:])
    )
    ok = spot_ok and monotone
    _verdict(
        "8/9 safe-rate",
        ok,
        f"N=1e6 threshold floor {largest.hs_min!r} vs {target!r} "
        f"(|diff|={abs(largest.hs_min - target):.2e} <= 1e-9); safe rates "
        f"{[round(r.safe_bits_per_token, 4) for r in rows]} non-increasing={monotone}",
    )


# ---------------------------------------------------------------------------
# 9. Byte-identical outputs across runs and worker counts
# ---------------------------------------------------------------------------


def test_criterion_9_deterministic_csv(calibrated, tmp_path):
    kept, _ = calibrated
    small = SweepConfig(
        hs_grid=(0.9,),
        n_tokens_grid=(500,),
        runs_per_cell=10,
        thresholds=(0.05, 1e-3),
        seed=3,
    )

    def emit(name: str, workers: int) -> bytes:
        path = tmp_path / name
        bitrate = run_bitrate_sweep(
            kept, (0.9, 0.99, 0.999), tokens_per_point=2000, seed=2, workers=workers
        )
        detection = run_detection_sweep(kept, small, workers=workers)
        qq = run_qq(kept, (0.99,), 6, 300, seed=4, workers=workers)
        blobs = []
        for suffix, rows in (("b", bitrate), ("d", detection), ("q", qq)):
            target = path.with_name(path.name + suffix + ".csv")
            write_csv(target, rows)
            blobs.append(target.read_bytes())
        return b"\x00".join(blobs)

    first = emit("run1", workers=1)
    second = emit("run2", workers=1)
    threaded = emit("run3", workers=3)
    ok = first == second == threaded
    _verdict(
        "9/9 determinism",
        ok,
        f"three sweep families, repeat identical={first == second}, "
        f"1 vs 3 workers identical={first == threaded}",
    )
