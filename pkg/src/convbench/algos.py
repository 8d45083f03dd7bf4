"""Convolution algorithm implementations.

Three routes over the same descriptor space:

* conv_baseline_im2col_gemm -- the packed-GEMM baseline: one pre-convolution
  im2col reorder, then a cache-blocked GEMM with panel packing and a
  register-tile microkernel, all phase-instrumented.
* conv_direct_naive -- uninstrumented direct reference; the correctness
  oracle. Supports the full descriptor space (stride, padding, dilation,
  groups, rectangular kernels).
* conv_main_blocked_direct -- a tiled direct convolution exercising all four
  in-convolution phases (tiling, per-tile input packing, microkernel,
  accumulator write-back); the framework's stand-in "main" algorithm.

All routes accumulate in float64 and store results in the element type, so
any two of them agree to within a final-rounding ulp. Plain float32
accumulation was measured to diverge between summation orders by more than
the default comparison tolerances once reduction depth exceeds a few
hundred terms, which would make cross-algorithm correctness checks flaky
rather than meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .descriptor import ConvDescriptor, output_shape
from .timing import Phase, PhaseLedger

_ACCUM = np.float64


class UnsupportedDescriptorError(ValueError):
    """The selected algorithm cannot execute this descriptor."""


@dataclass
class ConvInputs:
    """Activation/weight/bias buffers tied to their descriptor."""
    desc: ConvDescriptor
    input: np.ndarray
    weights: np.ndarray
    bias: np.ndarray | None = None

    def __post_init__(self) -> None:
        d = self.desc
        want_in = (d.batch, d.in_channels, d.in_h, d.in_w)
        want_w = (d.out_channels, d.in_channels // d.groups, d.k_h, d.k_w)
        if self.input.shape != want_in:
            raise ValueError(f"input shape {self.input.shape}, descriptor wants {want_in}")
        if self.weights.shape != want_w:
            raise ValueError(f"weights shape {self.weights.shape}, descriptor wants {want_w}")
        if d.has_bias:
            if self.bias is None or self.bias.shape != (d.out_channels,):
                raise ValueError(f"descriptor has bias, need vector of length {d.out_channels}")
        elif self.bias is not None:
            raise ValueError("bias buffer given but descriptor has no bias")


@dataclass(frozen=True)
class GemmBlocking:
    """Cache-block (mc, kc, nc) and register-tile (mr, nr) sizes, in elements."""
    mc: int = 128
    kc: int = 256
    nc: int = 512
    mr: int = 8
    nr: int = 8

    def __post_init__(self) -> None:
        if min(self.mc, self.kc, self.nc, self.mr, self.nr) < 1:
            raise ValueError("blocking sizes must be >= 1")
        if self.mc % self.mr != 0:
            raise ValueError(f"mc={self.mc} not a multiple of mr={self.mr}")
        if self.nc % self.nr != 0:
            raise ValueError(f"nc={self.nc} not a multiple of nr={self.nr}")


@dataclass(frozen=True)
class CacheParams:
    """Cache-size inputs to the blocked-direct tile planner (bytes)."""
    l1_bytes: int = 32 * 1024
    l2_bytes: int = 1024 * 1024


def _alloc_output(inputs: ConvInputs) -> np.ndarray:
    """Output buffer in the element type; bias is folded into initialization."""
    d = inputs.desc
    oh, ow = output_shape(d)
    out = np.empty((d.batch, d.out_channels, oh, ow), dtype=inputs.input.dtype)
    if inputs.bias is not None:
        out[:] = inputs.bias.reshape(1, -1, 1, 1)
    else:
        out.fill(0)
    return out


def im2col_transform(inputs: ConvInputs) -> np.ndarray:
    """Unroll input patches into a ((C/g)*k_h*k_w per group, stacked group-major)
    x (n*out_h*out_w) matrix.

    Row (c, ky, kx), column (n, oy, ox) holds
    input[n, c, oy*stride_h + ky*dil_h - pad_h, ox*stride_w + kx*dil_w - pad_w],
    zero where the tap falls outside the input. Group handling is implicit:
    rows are ordered by global channel, so group g occupies a contiguous row
    block.
    """
    d = inputs.desc
    oh, ow = output_shape(d)
    xp = np.pad(inputs.input, ((0, 0), (0, 0), (d.pad_h, d.pad_h), (d.pad_w, d.pad_w)))
    cols = np.empty((d.in_channels, d.k_h, d.k_w, d.batch, oh, ow), dtype=inputs.input.dtype)
    for ky in range(d.k_h):
        y0 = ky * d.dil_h
        for kx in range(d.k_w):
            x0 = kx * d.dil_w
            patch = xp[:, :,
                       y0:y0 + (oh - 1) * d.stride_h + 1:d.stride_h,
                       x0:x0 + (ow - 1) * d.stride_w + 1:d.stride_w]
            cols[:, ky, kx] = patch.transpose(1, 0, 2, 3)
    return cols.reshape(d.in_channels * d.k_h * d.k_w, d.batch * oh * ow)


def _pack_a_panels(block: np.ndarray, mr: int) -> np.ndarray:
    """Row panels of mr rows, zero-padded tail, float64."""
    m, k = block.shape
    panels = -(-m // mr)
    buf = np.zeros((panels * mr, k), dtype=_ACCUM)
    buf[:m] = block
    return buf.reshape(panels, mr, k)


def _pack_b_panels(block: np.ndarray, nr: int) -> np.ndarray:
    """Column panels of nr columns, zero-padded tail, float64."""
    k, n = block.shape
    panels = -(-n // nr)
    buf = np.zeros((k, panels * nr), dtype=_ACCUM)
    buf[:, :n] = block
    return np.ascontiguousarray(buf.reshape(k, panels, nr).swapaxes(0, 1))


def gemm(a: np.ndarray, b: np.ndarray, c_out: np.ndarray,
         blocking: GemmBlocking, ledger: PhaseLedger) -> None:
    """c_out = a @ b + c_out's initial contents, cache-blocked BLIS style.

    Operand panels are packed inside the block loop (timed as in-packing),
    each mr x nr register-tile product is timed as the microkernel, block
    bookkeeping as tiling, and the accumulator write-back as unpacking.
    The caller pre-initializes c_out (zeros or bias).
    """
    m, k = a.shape
    kb, n = b.shape
    if kb != k:
        raise ValueError(f"inner dims disagree: {a.shape} @ {b.shape}")
    if c_out.shape != (m, n):
        raise ValueError(f"c_out shape {c_out.shape}, expected {(m, n)}")
    mc, kc, nc, mr, nr = blocking.mc, blocking.kc, blocking.nc, blocking.mr, blocking.nr
    acc = c_out.astype(_ACCUM)
    for jc in range(0, n, nc):
        for pc in range(0, k, kc):
            ledger.start(Phase.IN_PACKING)
            bp = _pack_b_panels(b[pc:pc + kc, jc:jc + nc], nr)
            ledger.update(Phase.IN_PACKING)
            for ic in range(0, m, mc):
                ledger.start(Phase.IN_PACKING)
                ap = _pack_a_panels(a[ic:ic + mc, pc:pc + kc], mr)
                ledger.update(Phase.IN_PACKING)
                ledger.start(Phase.IN_TILING)
                tiles = [(ir, jr) for jr in range(bp.shape[0]) for ir in range(ap.shape[0])]
                ledger.update(Phase.IN_TILING)
                for ir, jr in tiles:
                    r0 = ic + ir * mr
                    c0 = jc + jr * nr
                    rh = min(mr, m - r0)
                    rw = min(nr, n - c0)
                    ledger.start(Phase.IN_MICROKERNEL)
                    tile = ap[ir] @ bp[jr]
                    acc[r0:r0 + rh, c0:c0 + rw] += tile[:rh, :rw]
                    ledger.update(Phase.IN_MICROKERNEL)
    ledger.start(Phase.IN_UNPACKING)
    c_out[:] = acc
    ledger.update(Phase.IN_UNPACKING)


def conv_baseline_im2col_gemm(inputs: ConvInputs, ledger: PhaseLedger,
                              blocking: GemmBlocking | None = None) -> np.ndarray:
    """Im2col + packed GEMM. The single im2col call is the only
    pre-convolution reorder; weights are viewed as a matrix zero-copy and the
    GEMM writes straight into contiguous NCHW output views, so there is no
    post-convolution reorder for any batch or group count."""
    d = inputs.desc
    blocking = blocking if blocking is not None else GemmBlocking()
    oh, ow = output_shape(d)
    fpg = d.out_channels // d.groups
    kdim = (d.in_channels // d.groups) * d.k_h * d.k_w

    ledger.start(Phase.PRE_REORDER)
    cols = im2col_transform(inputs)
    ledger.update(Phase.PRE_REORDER)

    out = _alloc_output(inputs)
    wmat = inputs.weights.reshape(d.out_channels, kdim)
    for gi in range(d.groups):
        a = wmat[gi * fpg:(gi + 1) * fpg]
        rows = slice(gi * kdim, (gi + 1) * kdim)
        for n in range(d.batch):
            cview = out[n, gi * fpg:(gi + 1) * fpg].reshape(fpg, oh * ow)
            gemm(a, cols[rows, n * oh * ow:(n + 1) * oh * ow], cview, blocking, ledger)
    return out


def conv_direct_naive(inputs: ConvInputs, accum_dtype=_ACCUM) -> np.ndarray:
    """Plain direct convolution, no instrumentation; the correctness oracle.

    out[n,f,oy,ox] = bias[f] + sum_{c,ky,kx} x[n, goff+c, oy*sh+ky*dh-ph,
    ox*sw+kx*dw-pw] * w[f,c,ky,kx], out-of-bounds taps contributing zero.
    """
    d = inputs.desc
    oh, ow = output_shape(d)
    cpg = d.in_channels // d.groups
    fpg = d.out_channels // d.groups
    xp = np.pad(inputs.input, ((0, 0), (0, 0), (d.pad_h, d.pad_h), (d.pad_w, d.pad_w)))
    out = np.zeros((d.batch, d.out_channels, oh, ow), dtype=accum_dtype)
    w = inputs.weights.astype(accum_dtype)
    for gi in range(d.groups):
        xg = xp[:, gi * cpg:(gi + 1) * cpg].astype(accum_dtype)
        og = out[:, gi * fpg:(gi + 1) * fpg]
        wg = w[gi * fpg:(gi + 1) * fpg]
        for ky in range(d.k_h):
            y0 = ky * d.dil_h
            for kx in range(d.k_w):
                x0 = kx * d.dil_w
                patch = xg[:, :,
                           y0:y0 + (oh - 1) * d.stride_h + 1:d.stride_h,
                           x0:x0 + (ow - 1) * d.stride_w + 1:d.stride_w]
                tap = np.tensordot(patch, wg[:, :, ky, kx], axes=([1], [1]))
                og += tap.transpose(0, 3, 1, 2)
    if inputs.bias is not None:
        out += inputs.bias.astype(accum_dtype).reshape(1, -1, 1, 1)
    return out.astype(inputs.input.dtype)


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


@dataclass(frozen=True)
class _TilePlan:
    tile_h: int
    tile_w: int
    f_rows: int


def _plan_tiles(desc: ConvDescriptor, oh: int, ow: int, cache: CacheParams) -> _TilePlan:
    # Keep the packed input tile within half the L2 and the weight row chunk
    # near the L1; both are soft targets, clamped to real extents.
    kdim = desc.in_channels * desc.k_h * desc.k_w
    budget_cols = max(1, cache.l2_bytes // (2 * 8 * kdim))
    tile_w = min(ow, max(1, min(budget_cols, 64)))
    tile_h = min(oh, max(1, budget_cols // tile_w))
    f_rows = min(desc.out_channels, max(8, cache.l1_bytes // (16 * kdim)))
    return _TilePlan(tile_h=tile_h, tile_w=tile_w, f_rows=f_rows)


def conv_main_blocked_direct(inputs: ConvInputs, ledger: PhaseLedger,
                             cache: CacheParams | None = None) -> np.ndarray:
    """Tiled direct convolution; the framework's reference "main" algorithm.

    Walks cache-sized tiles of the output. Per tile: the needed input window
    is packed into a (C*k_h*k_w) x tile_positions layout straight from the
    unpadded input (boundary taps stay zero), a row-blocked kernel
    accumulates output channels in chunks, and each chunk is written back to
    NCHW. Tile-size selection runs once up front from the descriptor and
    cache sizes. Grouped and dilated descriptors are not supported.
    """
    d = inputs.desc
    if d.groups != 1 or d.dil_h != 1 or d.dil_w != 1:
        raise UnsupportedDescriptorError(
            f"blocked direct requires groups == 1 and dilation == 1, "
            f"got groups={d.groups}, dilation=({d.dil_h}, {d.dil_w})")
    cache = cache if cache is not None else CacheParams()
    oh, ow = output_shape(d)
    kh, kw, sh, sw, ph, pw = d.k_h, d.k_w, d.stride_h, d.stride_w, d.pad_h, d.pad_w
    kdim = d.in_channels * kh * kw

    ledger.start(Phase.PRE_ANALYSIS)
    plan = _plan_tiles(d, oh, ow, cache)
    ledger.update(Phase.PRE_ANALYSIS)

    ledger.start(Phase.PRE_REORDER)
    wmat = np.ascontiguousarray(inputs.weights.reshape(d.out_channels, kdim), dtype=_ACCUM)
    ledger.update(Phase.PRE_REORDER)

    out = _alloc_output(inputs)
    x = inputs.input
    for n in range(d.batch):
        for y0 in range(0, oh, plan.tile_h):
            for x0 in range(0, ow, plan.tile_w):
                ledger.start(Phase.IN_TILING)
                y1 = min(y0 + plan.tile_h, oh)
                x1 = min(x0 + plan.tile_w, ow)
                th, tw = y1 - y0, x1 - x0
                ledger.update(Phase.IN_TILING)

                ledger.start(Phase.IN_PACKING)
                patch = np.zeros((d.in_channels, kh, kw, th, tw), dtype=_ACCUM)
                for ky in range(kh):
                    oy_lo = max(y0, _ceil_div(ph - ky, sh))
                    oy_hi = min(y1, (d.in_h - 1 + ph - ky) // sh + 1)
                    if oy_lo >= oy_hi:
                        continue
                    iy = oy_lo * sh + ky - ph
                    for kx in range(kw):
                        ox_lo = max(x0, _ceil_div(pw - kx, sw))
                        ox_hi = min(x1, (d.in_w - 1 + pw - kx) // sw + 1)
                        if ox_lo >= ox_hi:
                            continue
                        ix = ox_lo * sw + kx - pw
                        patch[:, ky, kx, oy_lo - y0:oy_hi - y0, ox_lo - x0:ox_hi - x0] = \
                            x[n, :,
                              iy:iy + (oy_hi - oy_lo - 1) * sh + 1:sh,
                              ix:ix + (ox_hi - ox_lo - 1) * sw + 1:sw]
                pmat = patch.reshape(kdim, th * tw)
                ledger.update(Phase.IN_PACKING)

                for f0 in range(0, d.out_channels, plan.f_rows):
                    f1 = min(f0 + plan.f_rows, d.out_channels)
                    ledger.start(Phase.IN_MICROKERNEL)
                    acc = wmat[f0:f1] @ pmat
                    ledger.update(Phase.IN_MICROKERNEL)
                    ledger.start(Phase.IN_UNPACKING)
                    out[n, f0:f1, y0:y1, x0:x1] += acc.reshape(f1 - f0, th, tw)
                    ledger.update(Phase.IN_UNPACKING)
    return out
