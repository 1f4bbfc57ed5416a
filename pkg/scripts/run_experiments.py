"""Run the full desk-scale experiment battery and emit result CSVs.

Generates a calibrated synthetic corpus, filters the wide tail, then
runs the four sweeps: bitrate versus split threshold, detection
fraction versus stream length, safe rate versus observation budget, and
QQ p-value data near the capacity boundary.  Everything is seeded, so a
re-run with the same arguments reproduces the CSVs byte for byte.

    python3 scripts/run_experiments.py --out-dir results

The default battery takes several minutes, dominated by the detection
sweep; --large adds the million-token observer column and multiplies
that cost accordingly.
"""

import argparse
import sys
import time
from pathlib import Path

from splitstream.distributions import corpus_stats, filter_corpus
from splitstream.experiments import (
    PackedCorpus,
    SweepConfig,
    default_hs_grid,
    run_bitrate_sweep,
    run_detection_sweep,
    run_qq,
    run_safe_rate,
    write_csv,
)
from splitstream.sources import SynthConfig, generate_synthetic_corpus, write_corpus

LARGE_N = 1_000_000


def _stage(label: str):
    print(f"-- {label}", flush=True)
    return time.perf_counter()


def _done(started: float) -> None:
    print(f"   {time.perf_counter() - started:.1f}s", flush=True)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", default="results", help="output directory")
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--corpus-size", type=int, default=20_000)
    parser.add_argument("--workers", type=int, default=4)
    parser.add_argument(
        "--large",
        action="store_true",
        help="add the N = 10^6 observer column to detection and safe-rate sweeps",
    )
    args = parser.parse_args(argv)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    started = _stage(f"corpus: {args.corpus_size} records, seed {args.seed}")
    corpus = generate_synthetic_corpus(SynthConfig(seed=args.seed), args.corpus_size)
    kept, removed = filter_corpus(corpus, 1024)
    write_corpus(corpus, out_dir / "corpus.lmd")
    write_corpus(kept, out_dir / "corpus_filtered.lmd")
    summary = corpus_stats(kept)
    print(
        f"   kept {summary.count} (removed {removed:.4f}), "
        f"zero-entropy {summary.zero_entropy_fraction:.3f}, "
        f"mean entropy {summary.mean_entropy:.3f} bits"
    )
    _done(started)
    packed = PackedCorpus(kept)

    started = _stage("bitrate sweep")
    bitrate_rows = run_bitrate_sweep(packed, seed=args.seed, workers=args.workers)
    write_csv(out_dir / "bitrate.csv", bitrate_rows)
    for row in bitrate_rows:
        print(f"   hs={row.hs:.6f}  bits/token={row.bits_per_token:.4f}")
    _done(started)

    n_grid = (1_000, 10_000, 100_000) + ((LARGE_N,) if args.large else ())

    started = _stage(f"detection sweep over N={n_grid}")
    detection_rows = run_detection_sweep(
        packed,
        SweepConfig(
            hs_grid=(0.9, 0.99, 0.999, 0.9999),
            n_tokens_grid=n_grid,
            runs_per_cell=100,
            thresholds=(1e-6, 1e-3, 0.05),
            seed=args.seed,
        ),
        workers=args.workers,
    )
    write_csv(out_dir / "detection.csv", detection_rows)
    _done(started)

    started = _stage("safe-rate curve")
    saferate_rows = run_safe_rate(
        packed,
        n_grid,
        bitrate_rows=bitrate_rows,
        seed=args.seed,
        workers=args.workers,
    )
    write_csv(out_dir / "saferate.csv", saferate_rows)
    for row in saferate_rows:
        print(
            f"   N={row.n_tokens:>7}  hs_min={row.hs_min:.8f}  "
            f"safe bits/token={row.safe_bits_per_token:.4f}"
        )
    _done(started)

    started = _stage("qq p-value data near the boundary")
    qq_rows = run_qq(
        packed,
        (0.995, 0.997, 0.999),
        200,
        20_000,
        seed=args.seed,
        workers=args.workers,
    )
    write_csv(out_dir / "qq.csv", qq_rows)
    _done(started)

    print(f"wrote bitrate/detection/saferate/qq CSVs to {out_dir}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
