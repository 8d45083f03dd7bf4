"""Deduplicated, filterable store of convolution descriptors with CSV persistence."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .descriptor import (
    ConvDescriptor,
    InvalidDescriptorError,
    classify,
    flop_count,
    key_of,
    output_shape,
)

logger = logging.getLogger(__name__)

CSV_HEADER = [
    "key", "batch", "in_channels", "in_h", "in_w", "out_channels", "k_h", "k_w",
    "stride_h", "stride_w", "pad_h", "pad_w", "dil_h", "dil_w", "groups",
    "has_bias", "out_h", "out_w", "flops",
]

CLASS_NAMES = frozenset({"pointwise", "grouped", "dilated", "rectangular", "regular"})


class ConvSetError(Exception):
    """Base class for operation-set persistence errors."""


class ConvSetSchemaError(ConvSetError):
    def __init__(self, message: str, missing_columns: list[str] | None = None):
        super().__init__(message)
        self.missing_columns = missing_columns or []


class ConvSetParseError(ConvSetError):
    def __init__(self, message: str, row: int):
        super().__init__(f"row {row}: {message}")
        self.row = row


@dataclass(frozen=True)
class FilterSpec:
    """Selects a subset of a ConvSet.

    Empty `classes` means all classes. `strides`, when given, keeps only
    entries whose stride_h and stride_w are both in the set.
    """
    classes: frozenset[str] = frozenset()
    exclude_padded: bool = False
    min_flops: int | None = None
    max_flops: int | None = None
    strides: frozenset[int] | None = None

    def __post_init__(self) -> None:
        unknown = set(self.classes) - CLASS_NAMES
        if unknown:
            raise ValueError(f"unknown filter classes: {sorted(unknown)}")

    def matches(self, desc: ConvDescriptor) -> bool:
        if self.classes and not (classify(desc).names() & self.classes):
            return False
        if self.exclude_padded and (desc.pad_h != 0 or desc.pad_w != 0):
            return False
        if self.strides is not None and not (
                desc.stride_h in self.strides and desc.stride_w in self.strides):
            return False
        if self.min_flops is not None or self.max_flops is not None:
            f = flop_count(desc)
            if self.min_flops is not None and f < self.min_flops:
                return False
            if self.max_flops is not None and f > self.max_flops:
                return False
        return True


@dataclass
class ConvSetStats:
    total: int = 0
    pointwise: int = 0
    grouped: int = 0
    dilated: int = 0
    rectangular: int = 0
    regular: int = 0
    in_spatial: tuple[int, int] = (0, 0)
    out_spatial: tuple[int, int] = (0, 0)
    kernel_spatial: tuple[int, int] = (0, 0)
    channels: tuple[int, int] = (0, 0)
    flops: tuple[int, int] = (0, 0)


class ConvSet:
    """Insertion-ordered collection of descriptors, unique by identifying key."""

    def __init__(self) -> None:
        self.entries: list[ConvDescriptor] = []
        self._index: dict[str, int] = {}

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[ConvDescriptor]:
        return iter(self.entries)

    def __contains__(self, key: str) -> bool:
        return key in self._index

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ConvSet) and self.entries == other.entries

    def insert_unique(self, desc: ConvDescriptor) -> bool:
        """Append desc unless its key is already present. Returns True if appended."""
        key = key_of(desc)
        if key in self._index:
            return False
        self._index[key] = len(self.entries)
        self.entries.append(desc)
        return True

    def apply_filter(self, spec: FilterSpec) -> "ConvSet":
        out = ConvSet()
        for desc in self.entries:
            if spec.matches(desc):
                out.insert_unique(desc)
        return out

    def stats(self) -> ConvSetStats:
        s = ConvSetStats(total=len(self.entries))
        if not self.entries:
            return s
        in_sp, out_sp, k_sp, ch, fl = [], [], [], [], []
        for desc in self.entries:
            flags = classify(desc)
            s.pointwise += flags.pointwise
            s.grouped += flags.grouped
            s.dilated += flags.dilated
            s.rectangular += flags.rectangular
            s.regular += flags.regular
            oh, ow = output_shape(desc)
            in_sp += [desc.in_h, desc.in_w]
            out_sp += [oh, ow]
            k_sp += [desc.k_h, desc.k_w]
            ch += [desc.in_channels, desc.out_channels]
            fl.append(flop_count(desc))
        s.in_spatial = (min(in_sp), max(in_sp))
        s.out_spatial = (min(out_sp), max(out_sp))
        s.kernel_spatial = (min(k_sp), max(k_sp))
        s.channels = (min(ch), max(ch))
        s.flops = (min(fl), max(fl))
        return s

    def save_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            for desc in self.entries:
                oh, ow = output_shape(desc)
                w.writerow([
                    key_of(desc), desc.batch, desc.in_channels, desc.in_h, desc.in_w,
                    desc.out_channels, desc.k_h, desc.k_w, desc.stride_h, desc.stride_w,
                    desc.pad_h, desc.pad_w, desc.dil_h, desc.dil_w, desc.groups,
                    1 if desc.has_bias else 0, oh, ow, flop_count(desc),
                ])

    @classmethod
    def load_csv(cls, path: str | Path) -> "ConvSet":
        """Load and validate an operation-set CSV.

        Every row is re-derived: the key and the out_h/out_w/flops columns must
        match what the shape fields imply, guarding against stale or hand-edited
        exports. Key-duplicate rows are dropped (with a logged count).
        """
        out = cls()
        duplicates = 0
        with open(path, "r", newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ConvSetSchemaError(f"{path}: empty file, expected header")
            if header != CSV_HEADER:
                missing = [c for c in CSV_HEADER if c not in header]
                raise ConvSetSchemaError(
                    f"{path}: bad header; missing columns {missing}" if missing
                    else f"{path}: header columns out of order or extra columns present",
                    missing_columns=missing)
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(CSV_HEADER):
                    raise ConvSetParseError(
                        f"expected {len(CSV_HEADER)} fields, got {len(row)}", row=lineno)
                try:
                    vals = [int(x) for x in row[1:]]
                except ValueError as exc:
                    raise ConvSetParseError(str(exc), row=lineno) from exc
                if vals[14] not in (0, 1):
                    raise ConvSetParseError(f"has_bias must be 0 or 1, got {vals[14]}",
                                            row=lineno)
                try:
                    desc = ConvDescriptor(
                        batch=vals[0], in_channels=vals[1], in_h=vals[2], in_w=vals[3],
                        out_channels=vals[4], k_h=vals[5], k_w=vals[6],
                        stride_h=vals[7], stride_w=vals[8], pad_h=vals[9], pad_w=vals[10],
                        dil_h=vals[11], dil_w=vals[12], groups=vals[13],
                        has_bias=bool(vals[14]))
                except InvalidDescriptorError as exc:
                    raise ConvSetParseError(str(exc), row=lineno) from exc
                if key_of(desc) != row[0]:
                    raise ConvSetParseError(
                        f"key {row[0]!r} does not match fields ({key_of(desc)!r})",
                        row=lineno)
                oh, ow = output_shape(desc)
                if (oh, ow, flop_count(desc)) != (vals[15], vals[16], vals[17]):
                    raise ConvSetParseError(
                        f"derived columns (out_h,out_w,flops)=({vals[15]},{vals[16]},{vals[17]}) "
                        f"disagree with recomputed ({oh},{ow},{flop_count(desc)})", row=lineno)
                if not out.insert_unique(desc):
                    duplicates += 1
        if duplicates:
            logger.info("%s: dropped %d duplicate rows", path, duplicates)
        return out


def make_filter(classes: str | None = None, exclude_padded: bool = False,
                min_flops: int | None = None, max_flops: int | None = None) -> FilterSpec:
    """Build a FilterSpec from CLI-style arguments (classes as a comma list)."""
    names = frozenset(c.strip() for c in classes.split(",") if c.strip()) if classes else frozenset()
    return FilterSpec(classes=names, exclude_padded=exclude_padded,
                      min_flops=min_flops, max_flops=max_flops)


__all__ = [
    "CSV_HEADER", "CLASS_NAMES", "ConvSet", "ConvSetError", "ConvSetParseError",
    "ConvSetSchemaError", "ConvSetStats", "FilterSpec", "make_filter",
]
