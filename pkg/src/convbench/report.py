"""Results persistence and main-vs-baseline comparison datasets.

The results CSV is the on-disk form of a sweep (one row per operation).
compute_speedups joins a main-mode and a baseline-mode results file on the
operation key and derives per-scope and per-phase ratios; breakdown_dataset
emits the tidy per-phase-milliseconds table the stacked-bar renderer
consumes. Ratios are oriented baseline/main, so values above 1 mean the
main algorithm was faster.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

from .descriptor import flop_count, parse_key
from .harness import RunOutcome
from .timing import PHASE_COLUMNS, Phase

RESULTS_HEADER = ["key", "mode", "status", "runs", "warmups"]
for _p in Phase:
    _stem = PHASE_COLUMNS[_p]
    RESULTS_HEADER += [f"{_stem}_ns_mean", f"{_stem}_ns_min", f"{_stem}_calls"]
RESULTS_HEADER += ["operation_ns_mean", "operation_ns_min",
                   "convolution_ns_mean", "convolution_ns_min",
                   "correctness_max_rel_err"]

SPEEDUP_HEADER = (["key", "flops", "operation_speedup", "convolution_speedup"]
                  + [f"{PHASE_COLUMNS[p]}_ratio" for p in Phase])

BREAKDOWN_HEADER = (["index", "key", "side"]
                    + [f"{PHASE_COLUMNS[p]}_ms" for p in Phase]
                    + ["operation_ms"])


class ResultsSchemaError(Exception):
    """Results CSV does not match the expected schema."""


@dataclass
class ResultRow:
    key: str
    mode: str
    status: str
    runs: int
    warmups: int
    phase_ns_mean: dict[Phase, float] | None = None
    phase_ns_min: dict[Phase, int] | None = None
    phase_calls: dict[Phase, int] | None = None
    operation_ns_mean: float | None = None
    operation_ns_min: int | None = None
    convolution_ns_mean: float | None = None
    convolution_ns_min: int | None = None
    correctness_max_rel_err: float | None = None

    @classmethod
    def from_outcome(cls, o: RunOutcome) -> "ResultRow":
        row = cls(key=o.key, mode=o.mode, status=o.status, runs=o.runs, warmups=o.warmups,
                  correctness_max_rel_err=o.correctness_max_rel_err)
        if o.stats is not None:
            row.phase_ns_mean = dict(o.stats.phase_ns_mean)
            row.phase_ns_min = dict(o.stats.phase_ns_min)
            row.phase_calls = dict(o.stats.calls)
            row.operation_ns_mean = o.stats.operation_ns_mean
            row.operation_ns_min = o.stats.operation_ns_min
            row.convolution_ns_mean = o.stats.convolution_ns_mean
            row.convolution_ns_min = o.stats.convolution_ns_min
        return row


def _fmt(v) -> str:
    return "" if v is None else repr(v) if isinstance(v, float) else str(v)


def write_results_csv(outcomes: list[RunOutcome] | list[ResultRow], path: str | Path) -> None:
    if not outcomes:
        raise ValueError("refusing to write an empty results file")
    rows = [o if isinstance(o, ResultRow) else ResultRow.from_outcome(o) for o in outcomes]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(RESULTS_HEADER)
        for r in rows:
            rec = [r.key, r.mode, r.status, r.runs, r.warmups]
            for p in Phase:
                if r.phase_ns_mean is None:
                    rec += ["", "", ""]
                else:
                    rec += [_fmt(r.phase_ns_mean[p]), _fmt(r.phase_ns_min[p]),
                            _fmt(r.phase_calls[p])]
            rec += [_fmt(r.operation_ns_mean), _fmt(r.operation_ns_min),
                    _fmt(r.convolution_ns_mean), _fmt(r.convolution_ns_min),
                    _fmt(r.correctness_max_rel_err)]
            w.writerow(rec)


def read_results_csv(path: str | Path) -> list[ResultRow]:
    rows: list[ResultRow] = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ResultsSchemaError(f"{path}: empty file, expected header")
        if header != RESULTS_HEADER:
            missing = [c for c in RESULTS_HEADER if c not in header]
            raise ResultsSchemaError(f"{path}: bad results header, missing columns {missing}")
        for rec in reader:
            if not rec:
                continue
            if len(rec) != len(RESULTS_HEADER):
                raise ResultsSchemaError(
                    f"{path}: row for {rec[0] if rec else '?'} has {len(rec)} fields")
            row = ResultRow(key=rec[0], mode=rec[1], status=rec[2],
                            runs=int(rec[3]), warmups=int(rec[4]))
            if rec[5] != "":
                row.phase_ns_mean, row.phase_ns_min, row.phase_calls = {}, {}, {}
                for i, p in enumerate(Phase):
                    row.phase_ns_mean[p] = float(rec[5 + 3 * i])
                    row.phase_ns_min[p] = int(rec[6 + 3 * i])
                    row.phase_calls[p] = int(rec[7 + 3 * i])
                row.operation_ns_mean = float(rec[26])
                row.operation_ns_min = int(rec[27])
                row.convolution_ns_mean = float(rec[28])
                row.convolution_ns_min = int(rec[29])
            if rec[30] != "":
                row.correctness_max_rel_err = float(rec[30])
            rows.append(row)
    return rows


@dataclass
class SpeedupRow:
    key: str
    flops: int
    operation_speedup: float
    convolution_speedup: float
    phase_ratio: dict[Phase, float | None] = field(default_factory=dict)


@dataclass
class SpeedupJoin:
    rows: list[SpeedupRow]
    missing_in_main: list[str]
    missing_in_baseline: list[str]
    dropped_degenerate: list[str]


def compute_speedups(main_rows: list[ResultRow], baseline_rows: list[ResultRow]) -> SpeedupJoin:
    """Join on key (ok-status rows only), in main-file order.

    Per-phase ratios are left undefined (None) when either side spent zero
    time in the phase; an infinity or a zero would poison every downstream
    average. Keys present on only one side, or whose scope totals are zero,
    are reported in the join record rather than dropped silently.
    """
    base = {r.key: r for r in baseline_rows if r.status == "ok"}
    main_keys = {r.key for r in main_rows if r.status == "ok"}
    rows: list[SpeedupRow] = []
    missing_in_baseline = [r.key for r in main_rows if r.status == "ok" and r.key not in base]
    missing_in_main = [k for k in base if k not in main_keys]
    dropped: list[str] = []
    for m in main_rows:
        if m.status != "ok" or m.key not in base:
            continue
        b = base[m.key]
        if not m.convolution_ns_mean or not b.convolution_ns_mean \
                or not m.operation_ns_mean or not b.operation_ns_mean:
            dropped.append(m.key)
            continue
        ratios: dict[Phase, float | None] = {}
        for p in Phase:
            mm, bb = m.phase_ns_mean[p], b.phase_ns_mean[p]
            ratios[p] = bb / mm if mm > 0 and bb > 0 else None
        rows.append(SpeedupRow(
            key=m.key,
            flops=flop_count(parse_key(m.key)),
            operation_speedup=b.operation_ns_mean / m.operation_ns_mean,
            convolution_speedup=b.convolution_ns_mean / m.convolution_ns_mean,
            phase_ratio=ratios))
    if not rows:
        raise ValueError("empty join: no ok-status keys shared by both results files")
    return SpeedupJoin(rows=rows, missing_in_main=sorted(missing_in_main),
                       missing_in_baseline=missing_in_baseline, dropped_degenerate=dropped)


def write_speedup_csv(join: SpeedupJoin, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SPEEDUP_HEADER)
        for r in join.rows:
            w.writerow([r.key, r.flops, _fmt(r.operation_speedup), _fmt(r.convolution_speedup)]
                       + [_fmt(r.phase_ratio[p]) for p in Phase])
    if join.missing_in_main or join.missing_in_baseline or join.dropped_degenerate:
        side = Path(str(path) + ".reconciliation.txt")
        with open(side, "w", encoding="utf-8") as fh:
            for k in join.missing_in_baseline:
                fh.write(f"missing_in_baseline {k}\n")
            for k in join.missing_in_main:
                fh.write(f"missing_in_main {k}\n")
            for k in join.dropped_degenerate:
                fh.write(f"zero_time_scope {k}\n")


@dataclass
class PhaseComparison:
    n_faster: int = 0
    mean_speedup_pct: float | None = None
    n_slower: int = 0
    mean_slowdown_pct: float | None = None


@dataclass
class Summary:
    n: int
    faster_fraction: float
    phases: dict[Phase, PhaseComparison]


def summarize(rows: list[SpeedupRow]) -> Summary:
    """Fraction of operations where main wins (convolution scope), and
    per-phase average win/loss percentages.

    A phase ratio r > 1 contributes (r - 1) * 100 to the phase's speedup
    average; r < 1 contributes (1/r - 1) * 100 to its slowdown average, i.e.
    "packing 79.5% slower" means main spent 1.795x the baseline's time.
    """
    faster = sum(1 for r in rows if r.convolution_speedup > 1.0)
    phases: dict[Phase, PhaseComparison] = {}
    for p in Phase:
        cmp = PhaseComparison()
        ups = [r.phase_ratio[p] for r in rows if (r.phase_ratio.get(p) or 0) > 1.0]
        downs = [r.phase_ratio[p] for r in rows
                 if r.phase_ratio.get(p) is not None and r.phase_ratio[p] < 1.0]
        cmp.n_faster = len(ups)
        cmp.n_slower = len(downs)
        if ups:
            cmp.mean_speedup_pct = sum((r - 1.0) * 100.0 for r in ups) / len(ups)
        if downs:
            cmp.mean_slowdown_pct = sum((1.0 / r - 1.0) * 100.0 for r in downs) / len(downs)
        phases[p] = cmp
    return Summary(n=len(rows), faster_fraction=faster / len(rows) if rows else 0.0,
                   phases=phases)


def summary_text(s: Summary) -> str:
    lines = [
        f"operations compared: {s.n}",
        f"main faster (convolution scope): {s.faster_fraction * 100:.1f}%",
        "",
        f"{'phase':<16} {'faster':>7} {'avg speedup':>12} {'slower':>7} {'avg slowdown':>13}",
    ]
    for p in Phase:
        c = s.phases[p]
        up = f"{c.mean_speedup_pct:.2f}%" if c.mean_speedup_pct is not None else "-"
        down = f"{c.mean_slowdown_pct:.2f}%" if c.mean_slowdown_pct is not None else "-"
        lines.append(f"{PHASE_COLUMNS[p]:<16} {c.n_faster:>7} {up:>12} {c.n_slower:>7} {down:>13}")
    return "\n".join(lines) + "\n"


@dataclass
class BreakdownRow:
    index: int
    key: str
    side: str  # main | baseline
    phase_ms: dict[Phase, float]
    operation_ms: float


def breakdown_dataset(main_rows: list[ResultRow],
                      baseline_rows: list[ResultRow]) -> list[BreakdownRow]:
    """Per joined key, two rows of per-phase mean milliseconds (main, then
    baseline), indexed by the operation's position in the main results file,
    which follows operation-set order."""
    base = {r.key: r for r in baseline_rows if r.status == "ok"}
    out: list[BreakdownRow] = []
    for idx, m in enumerate(main_rows):
        if m.status != "ok" or m.key not in base or m.phase_ns_mean is None:
            continue
        b = base[m.key]
        if b.phase_ns_mean is None:
            continue
        for side, r in (("main", m), ("baseline", b)):
            out.append(BreakdownRow(
                index=idx, key=m.key, side=side,
                phase_ms={p: r.phase_ns_mean[p] / 1e6 for p in Phase},
                operation_ms=r.operation_ns_mean / 1e6))
    return out


def write_breakdown_csv(rows: list[BreakdownRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(BREAKDOWN_HEADER)
        for r in rows:
            w.writerow([r.index, r.key, r.side]
                       + [_fmt(r.phase_ms[p]) for p in Phase]
                       + [_fmt(r.operation_ms)])
