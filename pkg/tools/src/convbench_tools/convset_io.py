"""Writer for the convbench operation-set CSV wire format.

This package talks to convbench only through its published file formats and
CLI, so the schema (column order, the identifying-key layout, and the
derived out_h/out_w/flops columns) is reproduced here from the documented
contract. convbench re-derives and cross-checks all of it on load.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from pathlib import Path

CONVSET_HEADER = [
    "key", "batch", "in_channels", "in_h", "in_w", "out_channels", "k_h", "k_w",
    "stride_h", "stride_w", "pad_h", "pad_w", "dil_h", "dil_w", "groups",
    "has_bias", "out_h", "out_w", "flops",
]


@dataclass(frozen=True)
class ConvShape:
    """One convolution operation's shape tuple, as the schema orders it."""
    batch: int
    in_channels: int
    in_h: int
    in_w: int
    out_channels: int
    k_h: int
    k_w: int
    stride_h: int
    stride_w: int
    pad_h: int
    pad_w: int
    dil_h: int
    dil_w: int
    groups: int
    has_bias: bool

    def out_shape(self) -> tuple[int, int]:
        oh = (self.in_h + 2 * self.pad_h - self.dil_h * (self.k_h - 1) - 1) // self.stride_h + 1
        ow = (self.in_w + 2 * self.pad_w - self.dil_w * (self.k_w - 1) - 1) // self.stride_w + 1
        return oh, ow

    def flops(self) -> int:
        oh, ow = self.out_shape()
        outputs = self.batch * self.out_channels * oh * ow
        total = 2 * outputs * (self.in_channels // self.groups) * self.k_h * self.k_w
        return total + outputs if self.has_bias else total

    def key(self) -> str:
        return (f"n{self.batch}"
                f"_c{self.in_channels}x{self.in_h}x{self.in_w}"
                f"_f{self.out_channels}x{self.k_h}x{self.k_w}"
                f"_s{self.stride_h}x{self.stride_w}"
                f"_p{self.pad_h}x{self.pad_w}"
                f"_d{self.dil_h}x{self.dil_w}"
                f"_g{self.groups}"
                f"_b{1 if self.has_bias else 0}")

    def classes(self) -> set[str]:
        pointwise = self.k_h == 1 and self.k_w == 1
        flags = set()
        if pointwise:
            flags.add("pointwise")
        if self.groups > 1:
            flags.add("grouped")
        if self.dil_h > 1 or self.dil_w > 1:
            flags.add("dilated")
        if self.k_h != self.k_w:
            flags.add("rectangular")
        if not flags:
            flags.add("regular")
        return flags


def write_convset_csv(shapes: list[ConvShape], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CONVSET_HEADER)
        for s in shapes:
            oh, ow = s.out_shape()
            rec = [s.key()]
            rec += [int(getattr(s, f.name)) for f in fields(s)]
            rec += [oh, ow, s.flops()]
            w.writerow(rec)
