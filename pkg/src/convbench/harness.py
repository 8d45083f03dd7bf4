"""Sweep engine: iterate a filtered operation set, generate data, time runs.

Each operation gets freshly allocated buffers seeded from the run seed XORed
with a stable hash of its key, so data is deterministic per operation and
independent of which other operations are in the sweep. Warmup executions
precede the measured repetitions; every measured repetition runs on a
freshly reset ledger. One misbehaving operation never aborts the sweep.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .algos import (
    ConvInputs,
    GemmBlocking,
    UnsupportedDescriptorError,
    conv_baseline_im2col_gemm,
    conv_main_blocked_direct,
)
from .convset import ConvSet, FilterSpec
from .descriptor import ConvDescriptor, key_of
from .tensor import DEFAULT_ATOL, DEFAULT_DTYPE, DEFAULT_RTOL, allclose, fill_constant, fill_random
from .timing import PhaseLedger, RunStats, aggregate

logger = logging.getLogger(__name__)

MODES = ("main", "baseline", "correctness")
DATA_GENS = ("random", "constant")

ConvFn = Callable[[ConvInputs, PhaseLedger], np.ndarray]


@dataclass(frozen=True)
class RunConfig:
    mode: str = "baseline"
    data_gen: str = "random"
    constant_value: float = 1.0
    warmups: int = 10
    runs: int = 100
    seed: int = 0
    filter: FilterSpec = field(default_factory=FilterSpec)
    blocking: GemmBlocking = field(default_factory=GemmBlocking)
    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.data_gen not in DATA_GENS:
            raise ValueError(f"data_gen must be one of {DATA_GENS}, got {self.data_gen!r}")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.warmups < 0:
            raise ValueError("warmups must be >= 0")


@dataclass
class RunOutcome:
    key: str
    mode: str
    runs: int
    warmups: int
    status: str  # ok | skipped_unsupported | failed
    stats: RunStats | None = None
    correctness_max_rel_err: float | None = None
    detail: str | None = None


def _stable_hash64(s: str) -> int:
    return int.from_bytes(hashlib.blake2b(s.encode(), digest_size=8).digest(), "little")


def make_inputs(desc: ConvDescriptor, cfg: RunConfig, dtype=DEFAULT_DTYPE) -> ConvInputs:
    """Allocate and fill buffers for one operation, deterministically."""
    x = np.empty((desc.batch, desc.in_channels, desc.in_h, desc.in_w), dtype=dtype)
    w = np.empty((desc.out_channels, desc.in_channels // desc.groups, desc.k_h, desc.k_w),
                 dtype=dtype)
    b = np.empty(desc.out_channels, dtype=dtype) if desc.has_bias else None
    if cfg.data_gen == "random":
        base = (cfg.seed ^ _stable_hash64(key_of(desc))) & 0xFFFFFFFFFFFFFFFF
        fill_random(x, base)
        fill_random(w, (base + 1) & 0xFFFFFFFFFFFFFFFF)
        if b is not None:
            fill_random(b, (base + 2) & 0xFFFFFFFFFFFFFFFF)
    else:
        fill_constant(x, cfg.constant_value)
        fill_constant(w, cfg.constant_value)
        if b is not None:
            fill_constant(b, cfg.constant_value)
    return ConvInputs(desc=desc, input=x, weights=w, bias=b)


def _main_algo(cfg: RunConfig) -> ConvFn:
    return lambda inputs, ledger: conv_main_blocked_direct(inputs, ledger)


def _baseline_algo(cfg: RunConfig) -> ConvFn:
    return lambda inputs, ledger: conv_baseline_im2col_gemm(inputs, ledger, cfg.blocking)


def run_single(desc: ConvDescriptor, cfg: RunConfig,
               main_fn: ConvFn | None = None,
               baseline_fn: ConvFn | None = None) -> RunOutcome:
    """One sweep iteration. main_fn/baseline_fn override the stock algorithms
    (the way a benchmark subclass would supply its own implementations)."""
    key = key_of(desc)
    main_fn = main_fn if main_fn is not None else _main_algo(cfg)
    baseline_fn = baseline_fn if baseline_fn is not None else _baseline_algo(cfg)
    # In correctness mode the measured algorithm is the one under test.
    timed_fn = baseline_fn if cfg.mode == "baseline" else main_fn
    try:
        inputs = make_inputs(desc, cfg)
        ledger = PhaseLedger()
        for _ in range(cfg.warmups):
            ledger.reset()
            timed_fn(inputs, ledger)
        reports = []
        for _ in range(cfg.runs):
            ledger.reset()
            timed_fn(inputs, ledger)
            reports.append(ledger.snapshot())
        outcome = RunOutcome(key=key, mode=cfg.mode, runs=cfg.runs, warmups=cfg.warmups,
                             status="ok", stats=aggregate(reports))
        if cfg.mode == "correctness":
            # One unmeasured execution per side; the baseline output is the
            # reference operand of the comparison.
            got = main_fn(inputs, PhaseLedger())
            want = baseline_fn(inputs, PhaseLedger())
            _, max_rel_err = allclose(got, want, cfg.rtol, cfg.atol)
            outcome.correctness_max_rel_err = max_rel_err
        return outcome
    except UnsupportedDescriptorError as exc:
        return RunOutcome(key=key, mode=cfg.mode, runs=cfg.runs, warmups=cfg.warmups,
                          status="skipped_unsupported", detail=str(exc))
    except MemoryError:
        return RunOutcome(key=key, mode=cfg.mode, runs=cfg.runs, warmups=cfg.warmups,
                          status="failed", detail="allocation failure")
    except Exception as exc:  # sweep robustness: record, don't abort
        logger.warning("operation %s failed: %s", key, exc)
        return RunOutcome(key=key, mode=cfg.mode, runs=cfg.runs, warmups=cfg.warmups,
                          status="failed", detail=str(exc))


def convset_exec(conv_set: ConvSet, cfg: RunConfig,
                 main_fn: ConvFn | None = None,
                 baseline_fn: ConvFn | None = None) -> list[RunOutcome]:
    """Run every operation surviving cfg.filter, in set order."""
    selected = conv_set.apply_filter(cfg.filter)
    if len(selected) == 0:
        logger.warning("filter selected no operations (set size %d)", len(conv_set))
        return []
    outcomes = []
    for i, desc in enumerate(selected):
        logger.info("[%d/%d] %s", i + 1, len(selected), key_of(desc))
        outcomes.append(run_single(desc, cfg, main_fn=main_fn, baseline_fn=baseline_fn))
    return outcomes
