"""Dense NCHW buffers, deterministic data generation, numeric comparison.

Tensors are plain C-contiguous numpy arrays: activations are 4D (n, c, h, w),
weights 4D (f, c/groups, k_h, k_w), matrices 2D row-major. float32 is the
default element type; float64 is used for oracle cross-checks.
"""

from __future__ import annotations

import numpy as np

DEFAULT_DTYPE = np.float32
# Reassociation between summation orders of different algorithms motivates the
# loose relative tolerance; atol covers exact-zero reference elements.
DEFAULT_RTOL = 1e-4
DEFAULT_ATOL = 1e-6


def alloc_tensor(n: int, c: int, h: int, w: int, dtype=DEFAULT_DTYPE) -> np.ndarray:
    return np.zeros((n, c, h, w), dtype=dtype)


def alloc_matrix(rows: int, cols: int, dtype=DEFAULT_DTYPE) -> np.ndarray:
    return np.zeros((rows, cols), dtype=dtype)


def nchw_index(dims: tuple[int, int, int, int], n: int, c: int, y: int, x: int) -> int:
    """Flat buffer offset of element (n, c, y, x)."""
    _, C, H, W = dims
    return ((n * C + c) * H + y) * W + x


def fill_random(t: np.ndarray, seed: int) -> None:
    """Fill in place with i.i.d. uniform [-1, 1) values; same seed, same bits."""
    rng = np.random.default_rng(seed)
    if t.dtype == np.float32 or t.dtype == np.float64:
        t[...] = rng.random(t.shape, dtype=t.dtype) * 2 - 1
    else:
        t[...] = (rng.random(t.shape) * 2 - 1).astype(t.dtype)


def fill_constant(t: np.ndarray, v: float) -> None:
    t[...] = v


def allclose(a: np.ndarray, b: np.ndarray, rtol: float = DEFAULT_RTOL,
             atol: float = DEFAULT_ATOL) -> tuple[bool, float]:
    """Elementwise |a - b| <= atol + rtol*|b|, plus the worst relative error.

    The returned error is normalized against the mixed tolerance scale,
    max_rel_err = rtol * max(|a - b| / (atol + rtol*|b|)), so that
    pass <=> max_rel_err <= rtol and near-zero reference elements cannot
    blow the metric up. NaN or inf anywhere fails.
    """
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        return True, 0.0
    af = a.astype(np.float64, copy=False)
    bf = b.astype(np.float64, copy=False)
    if not (np.isfinite(af).all() and np.isfinite(bf).all()):
        return False, float("inf")
    ratio = np.abs(af - bf) / (atol + rtol * np.abs(bf))
    worst = float(ratio.max())
    return worst <= 1.0, rtol * worst
