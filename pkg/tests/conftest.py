from __future__ import annotations

import random

import pytest

from convbench.descriptor import ConvDescriptor, InvalidDescriptorError, key_of


class FakeClock:
    """Deterministic monotonic integer-nanosecond clock for ledger tests."""

    def __init__(self, t: int = 0):
        self.t = t

    def __call__(self) -> int:
        return self.t

    def advance(self, d: int) -> None:
        self.t += d


KERNELS = [(1, 1), (3, 3), (5, 5), (7, 7), (3, 1), (1, 7)]
STRIDES = [1, 2]
PADS = [0, 1, 3]
DILATIONS = [1, 2]
GROUP_KINDS = ["none", "two", "depthwise"]
CHANNELS = [1, 3, 8, 16, 64]


def sample_descriptors(n: int, seed: int = 0, spatial: tuple[int, int] = (13, 24),
                       supported_only: bool = False) -> list[ConvDescriptor]:
    """Deterministic random corpus over the full benchmark parameter grid.

    Spatial extents are kept small so loop-free reference convolutions stay
    cheap; every axis value above still gets exercised.
    """
    rng = random.Random(seed)
    seen: set[str] = set()
    out: list[ConvDescriptor] = []
    while len(out) < n:
        k_h, k_w = rng.choice(KERNELS)
        stride = rng.choice(STRIDES)
        pad = rng.choice(PADS)
        dil = rng.choice(DILATIONS)
        kind = rng.choice(GROUP_KINDS)
        c = rng.choice(CHANNELS)
        if supported_only:
            kind, dil = "none", 1
        if kind == "none":
            groups = 1
            f = rng.choice([2, 4, 8, 16])
        elif kind == "two":
            groups = 2
            if c % 2:
                continue
            f = rng.choice([2, 4, 8, 16])
        else:
            groups = c
            f = c * rng.choice([1, 2])
        h = rng.randint(*spatial)
        w = rng.randint(*spatial)
        try:
            desc = ConvDescriptor(
                batch=1, in_channels=c, in_h=h, in_w=w, out_channels=f,
                k_h=k_h, k_w=k_w, stride_h=stride, stride_w=stride,
                pad_h=pad, pad_w=pad, dil_h=dil, dil_w=dil, groups=groups,
                has_bias=rng.random() < 0.5)
        except InvalidDescriptorError:
            continue
        key = key_of(desc)
        if key in seen:
            continue
        seen.add(key)
        out.append(desc)
    return out


@pytest.fixture
def fake_clock() -> FakeClock:
    return FakeClock()


@pytest.fixture
def small_corpus() -> list[ConvDescriptor]:
    return sample_descriptors(12, seed=7, spatial=(9, 14))
