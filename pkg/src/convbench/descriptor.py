"""Convolution operation records: shapes, derived quantities, and taxonomy.

A ConvDescriptor is one row of an operation set: the complete parameter
tuple of a single 2D convolution (NCHW activations, OIHW weights, symmetric
zero padding). Descriptors are immutable and validated on construction.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, fields

logger = logging.getLogger(__name__)

# Shape ranges seen across real-model operation sets; exceeding them is
# suspicious (likely a mis-parsed row) but not illegal.
LINT_MAX_SPATIAL = 1024
LINT_MAX_KERNEL = 32
LINT_MAX_CHANNELS = 12288


class InvalidDescriptorError(ValueError):
    """Raised when a descriptor's fields cannot describe a real convolution."""


@dataclass(frozen=True)
class ConvDescriptor:
    batch: int
    in_channels: int
    in_h: int
    in_w: int
    out_channels: int
    k_h: int
    k_w: int
    stride_h: int = 1
    stride_w: int = 1
    pad_h: int = 0
    pad_w: int = 0
    dil_h: int = 1
    dil_w: int = 1
    groups: int = 1
    has_bias: bool = False

    def __post_init__(self) -> None:
        for name in ("batch", "in_channels", "in_h", "in_w", "out_channels",
                     "k_h", "k_w", "stride_h", "stride_w", "dil_h", "dil_w",
                     "groups"):
            if getattr(self, name) < 1:
                raise InvalidDescriptorError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.pad_h < 0 or self.pad_w < 0:
            raise InvalidDescriptorError(f"padding must be >= 0, got ({self.pad_h}, {self.pad_w})")
        if self.in_channels % self.groups != 0:
            raise InvalidDescriptorError(
                f"in_channels={self.in_channels} not divisible by groups={self.groups}")
        if self.out_channels % self.groups != 0:
            raise InvalidDescriptorError(
                f"out_channels={self.out_channels} not divisible by groups={self.groups}")
        output_shape(self)  # raises if either output dim would be < 1
        if max(self.in_h, self.in_w) > LINT_MAX_SPATIAL:
            logger.warning("descriptor input spatial %dx%d exceeds %d", self.in_h, self.in_w,
                           LINT_MAX_SPATIAL)
        if max(self.k_h, self.k_w) > LINT_MAX_KERNEL:
            logger.warning("descriptor kernel %dx%d exceeds %d", self.k_h, self.k_w,
                           LINT_MAX_KERNEL)
        if max(self.in_channels, self.out_channels) > LINT_MAX_CHANNELS:
            logger.warning("descriptor channels (%d, %d) exceed %d", self.in_channels,
                           self.out_channels, LINT_MAX_CHANNELS)


@dataclass(frozen=True)
class ConvFlags:
    """Operation taxonomy. `regular` means none of the other four apply."""
    pointwise: bool
    grouped: bool
    dilated: bool
    rectangular: bool
    regular: bool

    def names(self) -> frozenset[str]:
        return frozenset(f.name for f in fields(self) if getattr(self, f.name))


def output_shape(desc: ConvDescriptor) -> tuple[int, int]:
    """Spatial dims of the output tensor (floor semantics)."""
    out_h = (desc.in_h + 2 * desc.pad_h - desc.dil_h * (desc.k_h - 1) - 1) // desc.stride_h + 1
    out_w = (desc.in_w + 2 * desc.pad_w - desc.dil_w * (desc.k_w - 1) - 1) // desc.stride_w + 1
    if out_h < 1 or out_w < 1:
        raise InvalidDescriptorError(
            f"kernel does not fit: output would be {out_h}x{out_w} "
            f"for input {desc.in_h}x{desc.in_w}")
    return out_h, out_w


def key_of(desc: ConvDescriptor) -> str:
    """Canonical identifying key; injective over the full field tuple."""
    return (f"n{desc.batch}"
            f"_c{desc.in_channels}x{desc.in_h}x{desc.in_w}"
            f"_f{desc.out_channels}x{desc.k_h}x{desc.k_w}"
            f"_s{desc.stride_h}x{desc.stride_w}"
            f"_p{desc.pad_h}x{desc.pad_w}"
            f"_d{desc.dil_h}x{desc.dil_w}"
            f"_g{desc.groups}"
            f"_b{1 if desc.has_bias else 0}")


_KEY_RE = re.compile(
    r"^n(\d+)_c(\d+)x(\d+)x(\d+)_f(\d+)x(\d+)x(\d+)"
    r"_s(\d+)x(\d+)_p(\d+)x(\d+)_d(\d+)x(\d+)_g(\d+)_b([01])$")


def parse_key(key: str) -> ConvDescriptor:
    """Inverse of key_of. Raises InvalidDescriptorError on malformed keys."""
    m = _KEY_RE.match(key)
    if m is None:
        raise InvalidDescriptorError(f"malformed key: {key!r}")
    v = [int(g) for g in m.groups()]
    return ConvDescriptor(
        batch=v[0], in_channels=v[1], in_h=v[2], in_w=v[3],
        out_channels=v[4], k_h=v[5], k_w=v[6],
        stride_h=v[7], stride_w=v[8], pad_h=v[9], pad_w=v[10],
        dil_h=v[11], dil_w=v[12], groups=v[13], has_bias=bool(v[14]))


def classify(desc: ConvDescriptor) -> ConvFlags:
    pointwise = desc.k_h == 1 and desc.k_w == 1
    grouped = desc.groups > 1
    dilated = desc.dil_h > 1 or desc.dil_w > 1
    rectangular = desc.k_h != desc.k_w
    return ConvFlags(
        pointwise=pointwise,
        grouped=grouped,
        dilated=dilated,
        rectangular=rectangular,
        regular=not (pointwise or grouped or dilated or rectangular),
    )


def flop_count(desc: ConvDescriptor) -> int:
    """Total FLOPs with a multiply-accumulate counted as 2, bias adds as 1 each."""
    out_h, out_w = output_shape(desc)
    outputs = desc.batch * desc.out_channels * out_h * out_w
    macs_per_output = (desc.in_channels // desc.groups) * desc.k_h * desc.k_w
    flops = 2 * outputs * macs_per_output
    if desc.has_bias:
        flops += outputs
    return flops
