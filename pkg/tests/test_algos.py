from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from convbench.algos import (
    CacheParams,
    ConvInputs,
    GemmBlocking,
    UnsupportedDescriptorError,
    _ceil_div,
    _plan_tiles,
    conv_baseline_im2col_gemm,
    conv_direct_naive,
    conv_main_blocked_direct,
    gemm,
    im2col_transform,
)
from convbench.descriptor import ConvDescriptor, output_shape
from convbench.harness import RunConfig, make_inputs
from convbench.tensor import allclose
from convbench.timing import IN_PHASES, Phase, PhaseLedger
from conftest import sample_descriptors
from oracles import conv_loops, matmul_loops


def rand_inputs(desc: ConvDescriptor, seed: int = 0) -> ConvInputs:
    return make_inputs(desc, RunConfig(seed=seed))


def d(**kw) -> ConvDescriptor:
    base = dict(batch=1, in_channels=2, in_h=6, in_w=6, out_channels=3, k_h=3, k_w=3)
    base.update(kw)
    return ConvDescriptor(**base)


class TestIm2col:
    def test_pointwise_is_a_reshape(self):
        desc = d(k_h=1, k_w=1, in_channels=3, in_h=4, in_w=5, batch=2)
        inp = rand_inputs(desc)
        cols = im2col_transform(inp)
        want = inp.input.transpose(1, 0, 2, 3).reshape(3, 2 * 4 * 5)
        assert cols.shape == want.shape
        assert (cols == want).all()

    def test_full_kernel_single_column(self):
        desc = d(in_channels=2, in_h=3, in_w=3)
        inp = rand_inputs(desc)
        cols = im2col_transform(inp)
        assert cols.shape == (2 * 9, 1)
        # rows ordered (channel, ky, kx)
        want = inp.input[0].reshape(-1)
        assert (cols[:, 0] == want).all()

    def test_padded_corner_zero_count(self):
        # 2x2 input, 3x3 kernel, pad 1: count out-of-bounds taps per corner
        # by brute force and compare against the materialized columns.
        desc = d(in_channels=1, in_h=2, in_w=2, pad_h=1, pad_w=1)
        inp = rand_inputs(desc)
        cols = im2col_transform(inp)
        oh, ow = output_shape(desc)
        assert (oh, ow) == (2, 2)
        for oy in (0, 1):
            for ox in (0, 1):
                oob = sum(
                    1
                    for ky in range(3) for kx in range(3)
                    if not (0 <= oy + ky - 1 < 2 and 0 <= ox + kx - 1 < 2))
                col = cols[:, oy * ow + ox]
                assert oob == 5
                assert (col == 0).sum() == oob

    def test_stride_dilation_groups_match_definition(self):
        desc = d(in_channels=4, out_channels=4, groups=2, in_h=9, in_w=8,
                 stride_h=2, stride_w=1, pad_h=1, pad_w=0, dil_h=2, dil_w=1)
        inp = rand_inputs(desc)
        cols = im2col_transform(inp)
        oh, ow = output_shape(desc)
        x = inp.input
        for c in range(4):
            for ky in range(3):
                for kx in range(3):
                    row = (c * 3 + ky) * 3 + kx
                    for oy in range(oh):
                        for ox in range(ow):
                            iy = oy * 2 + ky * 2 - 1
                            ix = ox + kx
                            want = x[0, c, iy, ix] if 0 <= iy < 9 and 0 <= ix < 8 else 0.0
                            assert cols[row, oy * ow + ox] == want


class TestGemm:
    def test_identity_left_operand(self):
        rng = np.random.default_rng(0)
        b = rng.random((6, 9), dtype=np.float32)
        c = np.zeros((6, 9), dtype=np.float32)
        gemm(np.eye(6, dtype=np.float32), b, c, GemmBlocking(mc=4, kc=3, nc=4, mr=2, nr=2),
             PhaseLedger())
        assert np.array_equal(c, b)

    def test_scalar_product(self):
        a = np.array([[3.0]], dtype=np.float32)
        b = np.array([[-2.0]], dtype=np.float32)
        c = np.zeros((1, 1), dtype=np.float32)
        gemm(a, b, c, GemmBlocking(), PhaseLedger())
        assert c[0, 0] == -6.0

    def test_against_triple_loop_oracle(self):
        rng = np.random.default_rng(1)
        a = (rng.random((17, 13), dtype=np.float32) * 2 - 1)
        b = (rng.random((13, 19), dtype=np.float32) * 2 - 1)
        c = np.zeros((17, 19), dtype=np.float32)
        gemm(a, b, c, GemmBlocking(mc=8, kc=4, nc=8, mr=4, nr=2), PhaseLedger())
        want = matmul_loops(a, b).astype(np.float32)
        ok, _ = allclose(c, want, rtol=1e-5, atol=0.0)
        assert ok

    def test_caller_initialization_is_added(self):
        a = np.ones((2, 2), dtype=np.float32)
        b = np.ones((2, 2), dtype=np.float32)
        c = np.full((2, 2), 10.0, dtype=np.float32)
        gemm(a, b, c, GemmBlocking(), PhaseLedger())
        assert (c == 12.0).all()

    def test_dim_mismatch(self):
        with pytest.raises(ValueError, match="inner dims"):
            gemm(np.zeros((2, 3), np.float32), np.zeros((2, 3), np.float32),
                 np.zeros((2, 3), np.float32), GemmBlocking(), PhaseLedger())
        with pytest.raises(ValueError, match="c_out"):
            gemm(np.zeros((2, 3), np.float32), np.zeros((3, 4), np.float32),
                 np.zeros((2, 3), np.float32), GemmBlocking(), PhaseLedger())

    def test_phase_usage(self):
        rng = np.random.default_rng(2)
        a = rng.random((9, 5), dtype=np.float32)
        b = rng.random((5, 7), dtype=np.float32)
        led = PhaseLedger()
        gemm(a, b, np.zeros((9, 7), np.float32), GemmBlocking(mc=4, kc=2, nc=4, mr=2, nr=2), led)
        rep = led.snapshot()
        assert rep.calls[Phase.IN_PACKING] >= 2
        assert rep.calls[Phase.IN_MICROKERNEL] >= 1
        assert rep.calls[Phase.IN_TILING] >= 1
        assert rep.calls[Phase.IN_UNPACKING] == 1
        assert rep.calls[Phase.PRE_REORDER] == 0

    def test_blocking_validation(self):
        with pytest.raises(ValueError):
            GemmBlocking(mc=10, mr=4)
        with pytest.raises(ValueError):
            GemmBlocking(nc=10, nr=4)
        with pytest.raises(ValueError):
            GemmBlocking(kc=0)


class TestNaive:
    def test_pointwise_scaling(self):
        desc = d(in_channels=1, out_channels=1, k_h=1, k_w=1, has_bias=True)
        inp = rand_inputs(desc)
        out = conv_direct_naive(inp)
        want = inp.weights[0, 0, 0, 0] * inp.input[:, :1] + inp.bias[0]
        ok, _ = allclose(out, want.astype(np.float32))
        assert ok

    def test_zero_input_broadcasts_bias(self):
        desc = d(has_bias=True)
        inp = rand_inputs(desc)
        inp.input[:] = 0
        out = conv_direct_naive(inp)
        assert (out == inp.bias.reshape(1, -1, 1, 1)).all()

    def test_depthwise_channels_are_independent(self):
        desc = d(in_channels=2, out_channels=2, groups=2)
        inp = rand_inputs(desc)
        base = conv_direct_naive(inp)
        perturbed = ConvInputs(desc=desc, input=inp.input.copy(), weights=inp.weights)
        perturbed.input[:, 0] += 1.0
        out = conv_direct_naive(perturbed)
        assert (out[:, 1] == base[:, 1]).all()
        assert (out[:, 0] != base[:, 0]).any()

    def test_matches_literal_loop_reference(self, small_corpus):
        for desc in small_corpus[:6]:
            inp = rand_inputs(desc)
            got = conv_direct_naive(inp)
            want = conv_loops(desc, inp.input, inp.weights, inp.bias)
            ok, err = allclose(got, want)
            assert ok, (desc, err)


class TestBaseline:
    def test_all_ones_counts_taps(self):
        desc = d(in_channels=1, out_channels=1, in_h=5, in_w=5, has_bias=True)
        x = np.ones((1, 1, 5, 5), dtype=np.float32)
        w = np.ones((1, 1, 3, 3), dtype=np.float32)
        b = np.full(1, 0.5, dtype=np.float32)
        out = conv_baseline_im2col_gemm(ConvInputs(desc=desc, input=x, weights=w, bias=b),
                                        PhaseLedger())
        assert (out == 9.5).all()

    def test_matches_naive_on_random_suite(self):
        for desc in sample_descriptors(5, seed=21, spatial=(8, 12)):
            inp = rand_inputs(desc)
            got = conv_baseline_im2col_gemm(inp, PhaseLedger())
            ok, err = allclose(got, conv_direct_naive(inp))
            assert ok, (desc, err)

    def test_instrumentation_contract(self):
        inp = rand_inputs(d(batch=2))
        led = PhaseLedger()
        conv_baseline_im2col_gemm(inp, led)
        rep = led.snapshot()
        assert rep.calls[Phase.PRE_REORDER] == 1
        assert rep.calls[Phase.IN_PACKING] >= 1
        assert rep.calls[Phase.POST_REORDER] == 0
        assert rep.convolution_ns > 0

    def test_blocking_independence(self):
        desc = d(in_channels=8, out_channels=16, in_h=14, in_w=11, stride_h=2,
                 stride_w=2, pad_h=1, pad_w=1, has_bias=True)
        inp = rand_inputs(desc)
        outs = [conv_baseline_im2col_gemm(inp, PhaseLedger(), blocking=blk)
                for blk in (GemmBlocking(),
                            GemmBlocking(mc=16, kc=8, nc=24, mr=4, nr=8),
                            GemmBlocking(mc=8, kc=64, nc=8, mr=2, nr=2))]
        for other in outs[1:]:
            ok, _ = allclose(outs[0], other)
            assert ok


class TestBlockedDirect:
    def test_matches_naive_on_supported_suite(self):
        for desc in sample_descriptors(8, seed=31, spatial=(8, 14), supported_only=True):
            inp = rand_inputs(desc)
            got = conv_main_blocked_direct(inp, PhaseLedger())
            ok, err = allclose(got, conv_direct_naive(inp))
            assert ok, (desc, err)

    def test_rejects_grouped_and_dilated(self):
        with pytest.raises(UnsupportedDescriptorError):
            conv_main_blocked_direct(
                rand_inputs(d(in_channels=4, out_channels=4, groups=2)), PhaseLedger())
        with pytest.raises(UnsupportedDescriptorError):
            conv_main_blocked_direct(
                rand_inputs(d(in_h=9, in_w=9, dil_h=2, dil_w=2)), PhaseLedger())

    def test_all_in_phases_and_no_post_reorder(self):
        inp = rand_inputs(d(in_h=12, in_w=12, out_channels=8))
        led = PhaseLedger()
        conv_main_blocked_direct(inp, led)
        rep = led.snapshot()
        for p in IN_PHASES:
            assert rep.calls[p] >= 1, p
        assert rep.calls[Phase.PRE_ANALYSIS] == 1
        assert rep.calls[Phase.POST_REORDER] == 0
        assert rep.convolution_ns > 0

    def test_packing_calls_equal_tile_count(self):
        desc = d(batch=2, in_channels=3, out_channels=8, in_h=20, in_w=20,
                 stride_h=2, stride_w=2)
        cache = CacheParams(l1_bytes=1024, l2_bytes=8192)  # force several tiles
        oh, ow = output_shape(desc)
        plan = _plan_tiles(desc, oh, ow, cache)
        tiles = desc.batch * _ceil_div(oh, plan.tile_h) * _ceil_div(ow, plan.tile_w)
        led = PhaseLedger()
        conv_main_blocked_direct(rand_inputs(desc), led, cache=cache)
        rep = led.snapshot()
        assert tiles > 1
        assert rep.calls[Phase.IN_PACKING] == tiles
        assert rep.elapsed_ns[Phase.IN_PACKING] > 0

    def test_stride_and_padding_edges(self):
        # boundary tiles where most taps fall outside the input
        desc = d(in_channels=1, out_channels=2, in_h=7, in_w=5, k_h=5, k_w=5,
                 pad_h=3, pad_w=3, stride_h=2, stride_w=2, has_bias=True)
        inp = rand_inputs(desc)
        got = conv_main_blocked_direct(inp, PhaseLedger())
        ok, err = allclose(got, conv_direct_naive(inp))
        assert ok, err


class TestProperties:
    def test_linearity_in_the_input(self):
        for desc in sample_descriptors(4, seed=41, spatial=(8, 12)):
            if desc.has_bias:
                desc = replace(desc, has_bias=False)
            inp = rand_inputs(desc)
            doubled = ConvInputs(desc=desc, input=2 * inp.input, weights=inp.weights)
            ok, _ = allclose(conv_baseline_im2col_gemm(doubled, PhaseLedger()),
                             2 * conv_baseline_im2col_gemm(inp, PhaseLedger()))
            assert ok

    def test_snapshot_always_balanced_after_runs(self, small_corpus):
        for desc in small_corpus[:4]:
            led = PhaseLedger()
            conv_baseline_im2col_gemm(rand_inputs(desc), led)
            rep = led.snapshot()  # raises if any start is left pending
            assert rep.operation_ns == sum(rep.elapsed_ns.values())


class TestConvInputs:
    def test_shape_validation(self):
        desc = d()
        good = rand_inputs(desc)
        with pytest.raises(ValueError, match="input shape"):
            ConvInputs(desc=desc, input=good.input[:, :1], weights=good.weights)
        with pytest.raises(ValueError, match="weights shape"):
            ConvInputs(desc=desc, input=good.input, weights=good.weights[:, :, :1])

    def test_bias_presence_must_match(self):
        desc = d(has_bias=True)
        inp = rand_inputs(desc)
        with pytest.raises(ValueError, match="bias"):
            ConvInputs(desc=desc, input=inp.input, weights=inp.weights, bias=None)
        desc2 = d()
        inp2 = rand_inputs(desc2)
        with pytest.raises(ValueError, match="bias"):
            ConvInputs(desc=desc2, input=inp2.input, weights=inp2.weights,
                       bias=np.zeros(3, np.float32))
