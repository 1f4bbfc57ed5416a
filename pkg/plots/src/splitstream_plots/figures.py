"""Render the four experiment CSVs into summary figures.

The plotting layer holds no computation: it reads the CSVs the sweep
drivers emit, validates their headers against the documented schemas,
and draws.  Rendering is deterministic for a given input file: fixed
figure geometry, no randomness, constant output metadata.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["KINDS", "FigureSpec", "SchemaError", "build_figure", "render"]

KINDS = ("bitrate", "detection", "saferate", "qq")

_REQUIRED_COLUMNS = {
    "bitrate": ("hs", "bits_per_token", "mean_entropy_bits"),
    "detection": ("hs", "n_tokens", "threshold", "detection_fraction", "mode"),
    "saferate": (
        "n_tokens",
        "epsilon",
        "hs_min",
        "safe_bits_per_token",
        "epsilon_multiplier",
    ),
    "qq": ("series", "hs", "bits_per_token", "rank", "uniform_quantile", "p_value"),
}

_FIGSIZE = (6.4, 4.8)
_DPI = 150


class SchemaError(ValueError):
    """The CSV header does not match the documented sweep schema."""


@dataclass(frozen=True)
class FigureSpec:
    """One figure: which CSV, which kind of plot, where to write it."""

    input_csv: Path
    kind: str
    output: Path

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")


# ---------------------------------------------------------------------------
# CSV loading
# ---------------------------------------------------------------------------


def _load_rows(path: Path, kind: str) -> list[dict]:
    required = _REQUIRED_COLUMNS[kind]
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if header is None:
            raise SchemaError(f"{path}: empty file, expected columns {required}")
        missing = [name for name in required if name not in header]
        if missing:
            raise SchemaError(
                f"{path}: missing column(s) {', '.join(missing)} "
                f"for kind {kind!r}"
            )
        unexpected = [name for name in header if name not in required]
        if unexpected:
            raise SchemaError(
                f"{path}: unexpected column(s) {', '.join(unexpected)} "
                f"for kind {kind!r}"
            )
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def _floats(rows: list[dict], column: str) -> np.ndarray:
    return np.asarray([float(row[column]) for row in rows])


# ---------------------------------------------------------------------------
# The four figure builders
# ---------------------------------------------------------------------------


def _new_axes():
    figure, axes = plt.subplots(figsize=_FIGSIZE, layout="constrained")
    axes.grid(True, which="both", alpha=0.3)
    return figure, axes


def _bitrate_figure(rows: list[dict]):
    figure, axes = _new_axes()
    gap = _floats(rows, "hs")
    order = np.argsort(1.0 - gap)
    x = (1.0 - gap)[order]
    y = _floats(rows, "bits_per_token")[order]
    mean_entropy = float(rows[0]["mean_entropy_bits"])
    axes.plot(x, y, marker="o", color="C0", label="embedding rate")
    axes.axhline(
        mean_entropy, linestyle="--", color="0.4", label="corpus mean entropy"
    )
    axes.set_xscale("log")
    axes.invert_xaxis()
    axes.set_xlabel("1 - minimum split entropy")
    axes.set_ylabel("bits per token")
    axes.set_ylim(bottom=0.0)
    axes.set_title("Embedding rate versus split threshold")
    axes.legend()
    return figure


def _detection_figure(rows: list[dict]):
    figure, axes = _new_axes()
    curves: dict[tuple[str, float, float], list[tuple[float, float]]] = {}
    for row in rows:
        key = (row["mode"], int(row["n_tokens"]), float(row["threshold"]))
        curves.setdefault(key, []).append(
            (1.0 - float(row["hs"]), float(row["detection_fraction"]))
        )
    stego_keys = sorted(key for key in curves if key[0] == "stego")
    honest_keys = sorted(key for key in curves if key[0] == "honest")
    for index, key in enumerate(stego_keys):
        points = sorted(curves[key])
        _, n_tokens, threshold = key
        axes.plot(
            [p[0] for p in points],
            [p[1] for p in points],
            marker="o",
            color=f"C{index % 10}",
            label=f"N={n_tokens}, p<{threshold:g}",
        )
    for index, key in enumerate(honest_keys):
        points = sorted(curves[key])
        axes.plot(
            [p[0] for p in points],
            [p[1] for p in points],
            linestyle=":",
            color="0.6",
            label="honest controls" if index == 0 else "_nolegend_",
        )
    axes.set_xscale("log")
    axes.invert_xaxis()
    axes.set_xlabel("1 - minimum split entropy")
    axes.set_ylabel("fraction of runs flagged")
    axes.set_ylim(-0.02, 1.02)
    axes.set_title("Detection fraction versus split threshold")
    axes.legend(fontsize="small")
    return figure


def _saferate_figure(rows: list[dict]):
    figure, axes = _new_axes()
    ordered = sorted(rows, key=lambda row: int(row["n_tokens"]))
    x = np.asarray([int(row["n_tokens"]) for row in ordered])
    y = np.asarray([float(row["safe_bits_per_token"]) for row in ordered])
    multiplier = float(ordered[0]["epsilon_multiplier"])
    axes.plot(x, y, marker="o", color="C2")
    axes.set_xscale("log")
    axes.set_xlabel("observer token budget N")
    axes.set_ylabel("safe bits per token")
    axes.set_ylim(bottom=0.0)
    axes.set_title(
        f"Safe embedding rate versus observation budget "
        f"(epsilon = {multiplier:g}/sqrt(N))"
    )
    return figure


def _qq_figure(rows: list[dict]):
    figure, axes = _new_axes()
    series: dict[tuple[str, str], list[dict]] = {}
    for row in rows:
        series.setdefault((row["series"], row["hs"]), []).append(row)
    axes.plot([0.0, 1.0], [0.0, 1.0], linestyle="--", color="0.4", label="uniform")
    ordered_keys = sorted(series, key=lambda key: (key[0] != "stego", key[1]))
    for index, key in enumerate(ordered_keys):
        group = sorted(series[key], key=lambda row: int(row["rank"]))
        x = _floats(group, "uniform_quantile")
        y = _floats(group, "p_value")
        name, gap_text = key
        if name == "stego":
            rate = float(group[0]["bits_per_token"])
            label = f"H_s={float(gap_text):g} ({rate:.2f} bits/token)"
            style = dict(marker=".", linestyle="-", color=f"C{index % 10}")
        else:
            label = "honest control"
            style = dict(marker=".", linestyle="-", color="0.55")
        axes.plot(x, y, markersize=3, label=label, **style)
    axes.set_xlabel("uniform quantile")
    axes.set_ylabel("observed p-value")
    axes.set_xlim(0.0, 1.0)
    axes.set_ylim(-0.02, 1.02)
    axes.set_title("Detector p-value QQ against uniform")
    axes.legend(fontsize="small")
    return figure


_BUILDERS = {
    "bitrate": _bitrate_figure,
    "detection": _detection_figure,
    "saferate": _saferate_figure,
    "qq": _qq_figure,
}

# Constant output metadata: savefig otherwise stamps library versions
# (PNG) or timestamps (SVG/PDF) into the file, breaking byte stability.
_METADATA = {
    ".png": {"Software": "splitstream-plots"},
    ".svg": {"Date": None},
    ".pdf": {"CreationDate": None},
}


def build_figure(spec: FigureSpec):
    """Parse the CSV and return the matplotlib figure, without saving."""
    rows = _load_rows(Path(spec.input_csv), spec.kind)
    return _BUILDERS[spec.kind](rows)


def render(spec: FigureSpec) -> None:
    """Render one figure to spec.output."""
    figure = build_figure(spec)
    try:
        suffix = Path(spec.output).suffix.lower()
        figure.savefig(
            spec.output, dpi=_DPI, metadata=_METADATA.get(suffix)
        )
    finally:
        plt.close(figure)
