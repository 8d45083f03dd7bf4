"""convbench: phase-instrumented benchmarking of 2D-convolution algorithms."""

from .algos import (
    CacheParams,
    ConvInputs,
    GemmBlocking,
    UnsupportedDescriptorError,
    conv_baseline_im2col_gemm,
    conv_direct_naive,
    conv_main_blocked_direct,
    gemm,
    im2col_transform,
)
from .convset import ConvSet, ConvSetError, ConvSetStats, FilterSpec, make_filter
from .descriptor import (
    ConvDescriptor,
    ConvFlags,
    InvalidDescriptorError,
    classify,
    flop_count,
    key_of,
    output_shape,
    parse_key,
)
from .harness import RunConfig, RunOutcome, convset_exec, make_inputs, run_single
from .report import (
    ResultRow,
    SpeedupRow,
    breakdown_dataset,
    compute_speedups,
    read_results_csv,
    summarize,
    write_results_csv,
)
from .tensor import allclose, fill_constant, fill_random
from .timing import IN_PHASES, Phase, PhaseLedger, TimingReport, TimingStateError, aggregate

__version__ = "0.1.0"
