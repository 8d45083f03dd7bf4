"""convbench command line: run sweeps, filter/inspect operation sets, build reports.

Exit codes: 0 success, 2 any correctness-mode comparison failure, 3 I/O or
schema error (argparse usage errors exit 64 so they cannot be mistaken for
correctness failures).
"""

from __future__ import annotations

import argparse
import logging
import sys

from .convset import ConvSet, ConvSetError, make_filter
from .harness import RunConfig, convset_exec
from .report import (
    ResultsSchemaError,
    breakdown_dataset,
    compute_speedups,
    read_results_csv,
    summarize,
    summary_text,
    write_breakdown_csv,
    write_results_csv,
    write_speedup_csv,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CORRECTNESS = 2
EXIT_IO = 3
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # keep exit code 2 reserved for correctness failures
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_filter_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--filter", metavar="CLASSES",
                   help="comma list of pointwise,grouped,dilated,rectangular,regular")
    p.add_argument("--exclude-padded", action="store_true")
    p.add_argument("--min-flops", type=int)
    p.add_argument("--max-flops", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="convbench")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a sweep over a convolution set")
    run.add_argument("--convset", required=True)
    run.add_argument("--mode", required=True, choices=["main", "baseline", "correctness"])
    run.add_argument("--data", default="random", choices=["random", "constant"])
    run.add_argument("--constant-value", type=float, default=1.0)
    run.add_argument("--warmups", type=int, default=10)
    run.add_argument("--runs", type=int, default=100)
    run.add_argument("--seed", type=int, default=0)
    _add_filter_flags(run)
    run.add_argument("--out", default="results.csv")

    flt = sub.add_parser("filter", help="write a filtered copy of a convolution set")
    flt.add_argument("--convset", required=True)
    flt.add_argument("--out", required=True)
    _add_filter_flags(flt)

    st = sub.add_parser("stats", help="print class counts and shape ranges")
    st.add_argument("--convset", required=True)

    rep = sub.add_parser("report", help="join main/baseline results into comparison datasets")
    rep.add_argument("--main", required=True, dest="main_results")
    rep.add_argument("--baseline", required=True)
    rep.add_argument("--out-speedup")
    rep.add_argument("--out-breakdown")
    rep.add_argument("--out-summary")
    return parser


def _cmd_run(args) -> int:
    conv_set = ConvSet.load_csv(args.convset)
    cfg = RunConfig(
        mode=args.mode, data_gen=args.data, constant_value=args.constant_value,
        warmups=args.warmups, runs=args.runs, seed=args.seed,
        filter=make_filter(args.filter, args.exclude_padded, args.min_flops, args.max_flops))
    outcomes = convset_exec(conv_set, cfg)
    if not outcomes:
        logger.warning("no operations selected; nothing written")
        return EXIT_OK
    write_results_csv(outcomes, args.out)
    logger.info("wrote %d results to %s", len(outcomes), args.out)
    if cfg.mode == "correctness":
        bad = [o for o in outcomes
               if o.correctness_max_rel_err is not None and o.correctness_max_rel_err > cfg.rtol]
        for o in bad:
            logger.error("correctness failure: %s max_rel_err=%.3e", o.key,
                         o.correctness_max_rel_err)
        if bad:
            return EXIT_CORRECTNESS
    return EXIT_OK


def _cmd_filter(args) -> int:
    conv_set = ConvSet.load_csv(args.convset)
    spec = make_filter(args.filter, args.exclude_padded, args.min_flops, args.max_flops)
    selected = conv_set.apply_filter(spec)
    selected.save_csv(args.out)
    logger.info("kept %d of %d operations -> %s", len(selected), len(conv_set), args.out)
    return EXIT_OK


def _cmd_stats(args) -> int:
    s = ConvSet.load_csv(args.convset).stats()
    print(f"operations: {s.total}")
    print(f"  pointwise:   {s.pointwise}")
    print(f"  grouped:     {s.grouped}")
    print(f"  dilated:     {s.dilated}")
    print(f"  rectangular: {s.rectangular}")
    print(f"  regular:     {s.regular}")
    if s.total:
        print(f"input spatial:  {s.in_spatial[0]}..{s.in_spatial[1]}")
        print(f"output spatial: {s.out_spatial[0]}..{s.out_spatial[1]}")
        print(f"kernel:         {s.kernel_spatial[0]}..{s.kernel_spatial[1]}")
        print(f"channels:       {s.channels[0]}..{s.channels[1]}")
        print(f"flops:          {s.flops[0]}..{s.flops[1]}")
    return EXIT_OK


def _cmd_report(args) -> int:
    main_rows = read_results_csv(args.main_results)
    baseline_rows = read_results_csv(args.baseline)
    join = compute_speedups(main_rows, baseline_rows)
    if args.out_speedup:
        write_speedup_csv(join, args.out_speedup)
        logger.info("wrote %d speedup rows to %s", len(join.rows), args.out_speedup)
    if args.out_breakdown:
        rows = breakdown_dataset(main_rows, baseline_rows)
        write_breakdown_csv(rows, args.out_breakdown)
        logger.info("wrote %d breakdown rows to %s", len(rows), args.out_breakdown)
    text = summary_text(summarize(join.rows))
    if args.out_summary:
        with open(args.out_summary, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        print(text, end="")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(message)s")
    args = build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "filter": _cmd_filter, "stats": _cmd_stats,
                "report": _cmd_report}
    try:
        return handlers[args.command](args)
    except (OSError, ConvSetError, ResultsSchemaError) as exc:
        logger.error("%s", exc)
        return EXIT_IO
    except ValueError as exc:
        logger.error("%s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
