"""Per-phase elapsed-time accounting for convolution algorithms.

Every convolution implementation is divided into the same named phases:
two pre-convolution phases (operation analysis, data reordering), four
in-convolution phases (tiling, packing, microkernel, unpacking) and one
post-convolution reordering phase. A PhaseLedger accumulates integer
nanoseconds and call counts per phase through paired start/update calls
placed around the corresponding code regions.

Derived totals:
  operation time   = sum over all seven phases
  convolution time = sum over the four in-convolution phases

Accumulators are integers on a monotonic nanosecond clock, so the derived
sums are exact; unbalanced instrumentation (start without update, or a
snapshot while a start is pending) is a hard error because every downstream
comparison hangs off these numbers.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence


class Phase(enum.IntEnum):
    PRE_ANALYSIS = 0
    PRE_REORDER = 1
    IN_TILING = 2
    IN_PACKING = 3
    IN_MICROKERNEL = 4
    IN_UNPACKING = 5
    POST_REORDER = 6


IN_PHASES = (Phase.IN_TILING, Phase.IN_PACKING, Phase.IN_MICROKERNEL, Phase.IN_UNPACKING)

# Column-name stems used by the results CSV and derived reports.
PHASE_COLUMNS = {
    Phase.PRE_ANALYSIS: "pre_analysis",
    Phase.PRE_REORDER: "pre_reorder",
    Phase.IN_TILING: "in_tiling",
    Phase.IN_PACKING: "in_packing",
    Phase.IN_MICROKERNEL: "in_microkernel",
    Phase.IN_UNPACKING: "in_unpacking",
    Phase.POST_REORDER: "post_reorder",
}


class TimingStateError(RuntimeError):
    """Malformed instrumentation: unbalanced or misplaced start/update calls."""


@dataclass(frozen=True)
class TimingReport:
    """Immutable snapshot of a ledger. elapsed/calls are per-phase maps."""
    elapsed_ns: Mapping[Phase, int]
    calls: Mapping[Phase, int]
    operation_ns: int
    convolution_ns: int


class PhaseLedger:
    """Accumulates (elapsed ns, call count) per phase.

    Phases are independent: several may have a pending start at once, but a
    phase cannot be started twice without an intervening update. The clock
    is injectable for tests and must be monotonic, returning integer ns.
    """

    def __init__(self, clock: Callable[[], int] = time.perf_counter_ns) -> None:
        self._clock = clock
        self._elapsed = [0] * len(Phase)
        self._calls = [0] * len(Phase)
        self._pending: list[int | None] = [None] * len(Phase)

    def start(self, phase: Phase) -> None:
        if self._pending[phase] is not None:
            raise TimingStateError(f"start({phase.name}) while already started")
        self._pending[phase] = self._clock()

    def update(self, phase: Phase) -> None:
        t0 = self._pending[phase]
        if t0 is None:
            raise TimingStateError(f"update({phase.name}) without a matching start")
        self._elapsed[phase] += self._clock() - t0
        self._calls[phase] += 1
        self._pending[phase] = None

    def reset(self) -> None:
        self._elapsed = [0] * len(Phase)
        self._calls = [0] * len(Phase)
        self._pending = [None] * len(Phase)

    def snapshot(self) -> TimingReport:
        pending = [p.name for p in Phase if self._pending[p] is not None]
        if pending:
            raise TimingStateError(f"snapshot with pending starts: {', '.join(pending)}")
        elapsed = {p: self._elapsed[p] for p in Phase}
        calls = {p: self._calls[p] for p in Phase}
        return TimingReport(
            elapsed_ns=elapsed,
            calls=calls,
            operation_ns=sum(self._elapsed),
            convolution_ns=sum(self._elapsed[p] for p in IN_PHASES),
        )


@dataclass(frozen=True)
class RunStats:
    """Mean/min per phase across repeated runs of one operation.

    Call counts must agree across runs (a divergence means the workload was
    not deterministic) and are reported once. The min columns are per-phase
    minima, so the operation/convolution minima are their sums: a composite
    best case, not the best single run.
    """
    runs: int
    phase_ns_mean: Mapping[Phase, float]
    phase_ns_min: Mapping[Phase, int]
    calls: Mapping[Phase, int]
    operation_ns_mean: float
    operation_ns_min: int
    convolution_ns_mean: float
    convolution_ns_min: int


def aggregate(reports: Sequence[TimingReport]) -> RunStats:
    if not reports:
        raise ValueError("aggregate() needs at least one report")
    calls = dict(reports[0].calls)
    for i, rep in enumerate(reports[1:], start=1):
        if dict(rep.calls) != calls:
            raise ValueError(
                f"call counts diverge between run 0 and run {i}: "
                f"{calls} vs {dict(rep.calls)}")
    n = len(reports)
    mean = {p: sum(r.elapsed_ns[p] for r in reports) / n for p in Phase}
    mn = {p: min(r.elapsed_ns[p] for r in reports) for p in Phase}
    return RunStats(
        runs=n,
        phase_ns_mean=mean,
        phase_ns_min=mn,
        calls=calls,
        operation_ns_mean=sum(r.operation_ns for r in reports) / n,
        operation_ns_min=sum(mn.values()),
        convolution_ns_mean=sum(r.convolution_ns for r in reports) / n,
        convolution_ns_min=sum(mn[p] for p in IN_PHASES),
    )
