"""Command-line entry points.

Subcommands: `corpus gen|stats|filter`, `encode`, `decode`, `detect`,
and `sweep bitrate|detection|saferate|qq`.  Encode, decode, and detect
share a corpus-backed source that draws records with replacement from a
seeded stream, so a decoder given the same corpus file and seed replays
the encoder's distributions exactly.  Token sequences are text files of
decimal token ids, one per line; keys and nonces are hex strings.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .codec import ChannelKey, decode_message, encode_message
from .detector import DetectionReport, detect
from .distributions import corpus_stats, filter_corpus
from .errors import SplitstreamError
from .experiments import (
    SweepConfig,
    default_hs_grid,
    run_bitrate_sweep,
    run_detection_sweep,
    run_qq,
    run_safe_rate,
    write_csv,
)
from .sources import ReplaySource, SynthConfig, generate_synthetic_corpus, read_corpus, write_corpus

_LARGE_N = 1_000_000


# ---------------------------------------------------------------------------
# Small helpers
# ---------------------------------------------------------------------------


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(",") if part.strip())


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(float(part)) for part in text.split(",") if part.strip())


def _read_tokens(path: str) -> list[int]:
    with open(path, "r", encoding="utf-8") as fh:
        return [int(line) for line in fh if line.strip()]


def _write_tokens(path: str, tokens: Sequence[int]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{token}\n" for token in tokens)


def _replay(args) -> ReplaySource:
    corpus = read_corpus(args.corpus)
    return ReplaySource(corpus, args.seed, replace=True)


def _payload_bytes(args) -> bytes:
    if args.payload_hex is not None:
        return bytes.fromhex(args.payload_hex)
    with open(args.payload_file, "rb") as fh:
        return fh.read()


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------


def _cmd_corpus_gen(args) -> int:
    config = SynthConfig(seed=args.seed)
    corpus = generate_synthetic_corpus(config, args.count)
    write_corpus(corpus, args.out)
    stats = corpus_stats(corpus)
    print(f"wrote {stats.count} records to {args.out}")
    print(f"zero_entropy_fraction={stats.zero_entropy_fraction}")
    print(f"mean_entropy={stats.mean_entropy}")
    return 0


def _cmd_corpus_stats(args) -> int:
    corpus = read_corpus(args.corpus)
    stats = corpus_stats(corpus)
    print(f"count={stats.count}")
    print(f"zero_entropy_fraction={stats.zero_entropy_fraction}")
    print(f"mean_entropy={stats.mean_entropy}")
    print(f"mean_nonzero_entropy={stats.mean_nonzero_entropy}")
    print(f"median_nonzero_entropy={stats.median_nonzero_entropy}")
    return 0


def _cmd_corpus_filter(args) -> int:
    corpus = read_corpus(args.corpus)
    kept, removed = filter_corpus(corpus, args.max_nonzero)
    if not kept:
        print("error: filter removed every record", file=sys.stderr)
        return 2
    write_corpus(kept, args.out)
    print(f"kept={len(kept)}")
    print(f"removed_fraction={removed}")
    return 0


def _cmd_encode(args) -> int:
    key = ChannelKey.from_hex(args.key, args.nonce)
    payload = _payload_bytes(args)
    source = _replay(args)
    max_tokens = args.tokens if args.tokens is not None else SynthConfig().max_sequence_len
    records = encode_message(payload, key, source, args.hs, args.seed, max_tokens)
    _write_tokens(args.out, [r.token_id for r in records])
    embedded = sum(r.bits_embedded for r in records)
    print(f"tokens={len(records)}")
    print(f"bits_embedded={embedded}")
    return 0


def _cmd_decode(args) -> int:
    key = ChannelKey.from_hex(args.key, args.nonce)
    tokens = _read_tokens(args.tokens_file)
    source = _replay(args)
    payload = decode_message(
        tokens, key, source, args.hs, max_payload_bytes=args.max_bytes
    )
    if args.out:
        with open(args.out, "wb") as fh:
            fh.write(payload)
        print(f"wrote {len(payload)} bytes to {args.out}")
    else:
        print(payload.hex())
    return 0


def _cmd_detect(args) -> int:
    tokens = _read_tokens(args.tokens_file)
    source = _replay(args)
    dists = []
    for position, _ in enumerate(tokens):
        dist = source.next(tokens[:position])
        if dist is None:
            print("error: source ended before the token stream", file=sys.stderr)
            return 2
        dists.append(dist)
    try:
        report = detect(dists, tokens)
    except KeyError as exc:
        print(
            f"error: token stream does not align with the replayed source "
            f"(wrong --seed or --corpus?): {exc.args[0]}",
            file=sys.stderr,
        )
        return 2
    print(f"n_tokens={report.n_tokens}")
    print(f"d_hat={report.d_hat}")
    print(f"sigma={report.sigma}")
    print(f"z={report.z}")
    print(f"p_value={report.p_value}")
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(DetectionReport.CSV_HEADER + "\n" + report.csv_row() + "\n")
    return 0


def _cmd_sweep_bitrate(args) -> int:
    corpus = read_corpus(args.corpus)
    grid = _parse_floats(args.hs_grid) if args.hs_grid else default_hs_grid()
    rows = run_bitrate_sweep(
        corpus,
        grid,
        tokens_per_point=args.tokens,
        seed=args.seed,
        workers=args.workers,
    )
    write_csv(args.out, rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _cmd_sweep_detection(args) -> int:
    corpus = read_corpus(args.corpus)
    n_grid = _parse_ints(args.tokens_grid)
    if args.large:
        n_grid = tuple(sorted({*n_grid, _LARGE_N}))
    config = SweepConfig(
        hs_grid=_parse_floats(args.hs_grid) if args.hs_grid else default_hs_grid(),
        n_tokens_grid=n_grid,
        runs_per_cell=args.runs,
        thresholds=_parse_floats(args.thresholds),
        seed=args.seed,
    )
    rows = run_detection_sweep(corpus, config, workers=args.workers)
    write_csv(args.out, rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _cmd_sweep_saferate(args) -> int:
    corpus = read_corpus(args.corpus)
    n_grid = _parse_ints(args.n_grid)
    if args.large:
        n_grid = tuple(sorted({*n_grid, _LARGE_N}))
    rows = run_safe_rate(
        corpus,
        n_grid,
        epsilon_multiplier=args.multiplier,
        seed=args.seed,
        workers=args.workers,
    )
    write_csv(args.out, rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _cmd_sweep_qq(args) -> int:
    corpus = read_corpus(args.corpus)
    grid = _parse_floats(args.hs_grid) if args.hs_grid else (0.995, 0.997, 0.999)
    rows = run_qq(
        corpus,
        grid,
        args.runs,
        args.tokens,
        seed=args.seed,
        workers=args.workers,
    )
    write_csv(args.out, rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Parser assembly
# ---------------------------------------------------------------------------


def _add_channel_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--corpus", required=True, help="corpus file path")
    parser.add_argument("--hs", type=float, required=True, help="minimum split entropy")
    parser.add_argument("--key", required=True, help="128-bit key, hex")
    parser.add_argument("--nonce", required=True, help="96-bit nonce, hex")
    parser.add_argument("--seed", type=int, default=0, help="source replay seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splitstream",
        description="Hide encrypted bitstreams in token-sampling decisions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    corpus = sub.add_parser("corpus", help="generate, inspect, filter corpora")
    corpus_sub = corpus.add_subparsers(dest="corpus_command", required=True)

    gen = corpus_sub.add_parser("gen", help="generate a calibrated synthetic corpus")
    gen.add_argument("--out", required=True)
    gen.add_argument("--count", type=int, default=20_000)
    gen.add_argument("--seed", type=int, default=0)
    gen.set_defaults(func=_cmd_corpus_gen)

    stats = corpus_sub.add_parser("stats", help="print corpus entropy statistics")
    stats.add_argument("--corpus", required=True)
    stats.set_defaults(func=_cmd_corpus_stats)

    filt = corpus_sub.add_parser("filter", help="drop records with wide support")
    filt.add_argument("--corpus", required=True)
    filt.add_argument("--out", required=True)
    filt.add_argument("--max-nonzero", type=int, default=1024)
    filt.set_defaults(func=_cmd_corpus_filter)

    encode = sub.add_parser("encode", help="embed a payload into a token stream")
    _add_channel_flags(encode)
    encode.add_argument("--tokens", type=int, default=None, help="max tokens to emit")
    group = encode.add_mutually_exclusive_group(required=True)
    group.add_argument("--payload-hex", help="payload as a hex string")
    group.add_argument("--payload-file", help="payload file path")
    encode.add_argument("--out", required=True, help="token id output file")
    encode.set_defaults(func=_cmd_encode)

    decode = sub.add_parser("decode", help="recover a payload from a token stream")
    _add_channel_flags(decode)
    decode.add_argument("--tokens-file", required=True)
    decode.add_argument("--max-bytes", type=int, default=None)
    decode.add_argument("--out", default=None, help="payload output file (default: hex to stdout)")
    decode.set_defaults(func=_cmd_decode)

    det = sub.add_parser("detect", help="run the deviation test on a token stream")
    det.add_argument("--corpus", required=True)
    det.add_argument("--seed", type=int, default=0)
    det.add_argument("--tokens-file", required=True)
    det.add_argument("--out", default=None, help="optional CSV report path")
    det.set_defaults(func=_cmd_detect)

    sweep = sub.add_parser("sweep", help="run an experiment sweep, emit CSV")
    sweep_sub = sweep.add_subparsers(dest="sweep_command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--corpus", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=1)

    bitrate = sweep_sub.add_parser("bitrate", help="bits/token vs split threshold")
    common(bitrate)
    bitrate.add_argument("--tokens", type=int, default=20_000, help="tokens per grid point")
    bitrate.add_argument("--hs-grid", default=None, help="comma-separated thresholds")
    bitrate.set_defaults(func=_cmd_sweep_bitrate)

    detection = sweep_sub.add_parser("detection", help="detection fraction vs N")
    common(detection)
    detection.add_argument("--runs", type=int, default=100, help="runs per cell")
    detection.add_argument("--hs-grid", default=None)
    detection.add_argument("--tokens-grid", default="1000,10000,100000")
    detection.add_argument("--thresholds", default="1e-6,1e-3,0.05")
    detection.add_argument("--large", action="store_true", help="include N = 10^6")
    detection.set_defaults(func=_cmd_sweep_detection)

    saferate = sweep_sub.add_parser("saferate", help="safe bits/token vs N")
    common(saferate)
    saferate.add_argument("--n-grid", default="1000,10000,100000")
    saferate.add_argument("--large", action="store_true", help="include N = 10^6")
    saferate.add_argument("--multiplier", type=float, default=1.0, help="epsilon multiplier")
    saferate.set_defaults(func=_cmd_sweep_saferate)

    qq = sweep_sub.add_parser("qq", help="p-value QQ data near the capacity boundary")
    common(qq)
    qq.add_argument("--runs", type=int, default=200)
    qq.add_argument("--hs-grid", default=None, help="default: 0.995,0.997,0.999")
    qq.add_argument("--tokens", type=int, default=20_000, help="tokens per run")
    qq.set_defaults(func=_cmd_sweep_qq)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SplitstreamError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
