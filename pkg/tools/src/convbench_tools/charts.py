"""Figure rendering for convbench report CSVs.

Two renderers: a per-operation speedup/slowdown bar chart (bars straddling
the y = 1 line) and a side-by-side stacked execution-time breakdown (main
bar left, baseline bar right, one segment per phase, milliseconds).

Rendering is a pure function of the input CSV: fixed geometry, fonts and
colors, a pinned SVG hash salt, and stripped timestamps, so two runs over
the same file produce byte-identical output. Values are plotted exactly as
read; nothing is recomputed.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

PHASE_STEMS = [
    "pre_analysis", "pre_reorder", "in_tiling", "in_packing",
    "in_microkernel", "in_unpacking", "post_reorder",
]

PHASE_COLORS = {
    "pre_analysis": "#8c8c8c",
    "pre_reorder": "#937860",
    "in_tiling": "#ccb974",
    "in_packing": "#c44e52",
    "in_microkernel": "#4c72b0",
    "in_unpacking": "#55a868",
    "post_reorder": "#8172b3",
}

SPEEDUP_COLOR = "#4c72b0"
SLOWDOWN_COLOR = "#c44e52"

_RC = {
    "figure.figsize": (10.0, 4.0),
    "figure.dpi": 100,
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "svg.hashsalt": "convbench-plot",
    "svg.fonttype": "none",
    "axes.grid": True,
    "grid.alpha": 0.3,
    "grid.linewidth": 0.5,
}

SCOPES = ("convolution", "operation")
SORTS = ("convset-order", "by-speedup", "by-flops")


class ChartDataError(ValueError):
    """Input CSV is missing required columns or rows."""


@dataclass(frozen=True)
class ChartSpec:
    input_path: str
    output_path: str
    scope: str = "convolution"
    sort: str = "convset-order"
    log_y: bool = False

    def __post_init__(self) -> None:
        if self.scope not in SCOPES:
            raise ValueError(f"scope must be one of {SCOPES}")
        if self.sort not in SORTS:
            raise ValueError(f"sort must be one of {SORTS}")


def _read_csv(path: str, required: list[str]) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        missing = [c for c in required if c not in cols]
        if missing:
            raise ChartDataError(f"{path}: missing columns {missing}")
        rows = list(reader)
    if not rows:
        raise ChartDataError(f"{path}: no data rows")
    return rows


def _save(fig, path: str) -> None:
    suffix = Path(path).suffix.lower()
    metadata = None
    if suffix == ".svg":
        metadata = {"Date": None}
    elif suffix == ".pdf":
        metadata = {"CreationDate": None}
    # hashsalt and font settings are consulted at save time, not figure build time
    with plt.rc_context(_RC):
        fig.savefig(path, metadata=metadata)
    plt.close(fig)


def build_speedup_figure(spec: ChartSpec):
    col = f"{spec.scope}_speedup"
    rows = _read_csv(spec.input_path, ["key", "flops", col])
    data = [(r["key"], int(r["flops"]), float(r[col])) for r in rows]
    if spec.sort == "by-speedup":
        data.sort(key=lambda t: t[2])
    elif spec.sort == "by-flops":
        data.sort(key=lambda t: t[1])
    values = [t[2] for t in data]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        xs = range(len(values))
        colors = [SPEEDUP_COLOR if v >= 1.0 else SLOWDOWN_COLOR for v in values]
        ax.bar(xs, values, color=colors, width=0.8)
        ax.axhline(1.0, color="black", linewidth=0.8)
        ax.set_xlabel("operation index")
        ax.set_ylabel(f"{spec.scope} speedup (baseline / main)")
        if spec.log_y:
            ax.set_yscale("log")
        ax.set_xlim(-0.6, len(values) - 0.4)
        fig.tight_layout()
    return fig, ax


def render_speedup(spec: ChartSpec) -> str:
    fig, _ = build_speedup_figure(spec)
    _save(fig, spec.output_path)
    return spec.output_path


def build_breakdown_figure(spec: ChartSpec):
    cols = ["index", "key", "side"] + [f"{s}_ms" for s in PHASE_STEMS] + ["operation_ms"]
    rows = _read_csv(spec.input_path, cols)
    sides: dict[str, dict[int, list[float]]] = {"main": {}, "baseline": {}}
    order: list[int] = []
    for r in rows:
        idx = int(r["index"])
        if r["side"] not in sides:
            raise ChartDataError(f"{spec.input_path}: unknown side {r['side']!r}")
        sides[r["side"]][idx] = [float(r[f"{s}_ms"]) for s in PHASE_STEMS]
        if idx not in order:
            order.append(idx)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        width = 0.42
        for offset, side in ((-width / 2, "main"), (width / 2, "baseline")):
            xs = [i + offset for i in order]
            bottoms = [0.0] * len(order)
            for pi, stem in enumerate(PHASE_STEMS):
                heights = [sides[side].get(i, [0.0] * len(PHASE_STEMS))[pi] for i in order]
                ax.bar(xs, heights, width=width, bottom=bottoms,
                       color=PHASE_COLORS[stem],
                       label=stem if side == "main" else None)
                bottoms = [b + h for b, h in zip(bottoms, heights)]
        ax.set_xlabel("operation index (main left, baseline right)")
        ax.set_ylabel("time (ms)")
        ax.set_xticks(order)
        ax.legend(loc="upper right", fontsize=7)
        fig.tight_layout()
    return fig, ax


def render_breakdown(spec: ChartSpec) -> str:
    fig, _ = build_breakdown_figure(spec)
    _save(fig, spec.output_path)
    return spec.output_path


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="convbench-plot")
    sub = ap.add_subparsers(dest="kind", required=True)
    for kind in ("speedup", "breakdown"):
        p = sub.add_parser(kind)
        p.add_argument("--in", dest="input_path", required=True)
        p.add_argument("--out", dest="output_path", required=True)
        p.add_argument("--scope", default="convolution", choices=list(SCOPES))
        p.add_argument("--sort", default="convset-order", choices=list(SORTS))
        p.add_argument("--log-y", action="store_true")
    args = ap.parse_args(argv)
    spec = ChartSpec(input_path=args.input_path, output_path=args.output_path,
                     scope=args.scope, sort=args.sort, log_y=args.log_y)
    try:
        if args.kind == "speedup":
            render_speedup(spec)
        else:
            render_breakdown(spec)
    except (OSError, ChartDataError) as exc:
        print(f"convbench-plot: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
