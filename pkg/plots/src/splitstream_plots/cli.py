"""Command line entry point: one figure per invocation."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from .figures import KINDS, FigureSpec, SchemaError, render


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="splitstream-plot",
        description="Render a splitstream experiment CSV into a figure.",
    )
    parser.add_argument("--in", dest="input_csv", required=True, help="input CSV path")
    parser.add_argument("--kind", required=True, choices=KINDS, help="figure kind")
    parser.add_argument("--out", required=True, help="output image path (png/svg/pdf)")
    args = parser.parse_args(argv)
    try:
        render(FigureSpec(Path(args.input_csv), args.kind, Path(args.out)))
    except (SchemaError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
