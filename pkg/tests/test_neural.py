"""Attention blocks, Adam, and the gradient checker.

The 2-token attention oracle re-derives the softmax weights with scalar
arithmetic, independent of the tensor engine.
"""

import math

import numpy as np
import pytest

from eyetrans.errors import ShapeMismatch
from eyetrans.nn import (AdamState, AttentionParams, DecoderBlock, EncoderBlock,
                         ModelConfig, adam_step, causal_blocked, grad_check,
                         multi_head_attention, padding_blocked,
                         scaled_dot_attention)
from eyetrans.tensor import (Tape, Tensor, _record, layer_norm, matmul, mul,
                             relu, tsum)

RNG = np.random.default_rng(99)


def rng_for(seed):
    return np.random.Generator(np.random.PCG64(seed))


class TestScaledDotAttention:
    def test_single_position_returns_v(self):
        q = Tensor(RNG.normal(size=(1, 4)))
        k = Tensor(RNG.normal(size=(1, 4)))
        v = Tensor(RNG.normal(size=(1, 4)))
        out = scaled_dot_attention(q, k, v)
        assert np.allclose(out.data, v.data)

    def test_equal_scores_average_v(self):
        q = Tensor(np.zeros((3, 4)))  # all scores zero -> uniform weights
        k = Tensor(RNG.normal(size=(5, 4)))
        v = Tensor(RNG.normal(size=(5, 4)))
        out = scaled_dot_attention(q, k, v)
        assert np.allclose(out.data, np.tile(v.data.mean(0), (3, 1)), atol=1e-6)

    def test_two_token_closed_form(self):
        # hand computation with scalars, d_k = 1
        q = Tensor(np.array([[1.0], [2.0]], dtype=np.float32))
        k = Tensor(np.array([[0.5], [-1.0]], dtype=np.float32))
        v = Tensor(np.array([[10.0], [20.0]], dtype=np.float32))
        out = scaled_dot_attention(q, k, v).data
        # row 0: scores (0.5, -1.0); w00 = e^0.5/(e^0.5+e^-1)
        w00 = math.exp(0.5) / (math.exp(0.5) + math.exp(-1.0))
        row0 = w00 * 10.0 + (1 - w00) * 20.0
        # row 1: scores (1.0, -2.0)
        w10 = math.exp(1.0) / (math.exp(1.0) + math.exp(-2.0))
        row1 = w10 * 10.0 + (1 - w10) * 20.0
        assert out[0, 0] == pytest.approx(row0, rel=1e-6)
        assert out[1, 0] == pytest.approx(row1, rel=1e-6)

    def test_mask_blocks_positions(self):
        q = Tensor(RNG.normal(size=(2, 4)))
        k = Tensor(RNG.normal(size=(3, 4)))
        v = Tensor(RNG.normal(size=(3, 4)))
        blocked = np.array([[False, True, False], [False, True, False]])
        out = scaled_dot_attention(q, k, v, blocked)
        # row1 of v must not contribute: recompute without it
        out2 = scaled_dot_attention(
            Tensor(q.data), Tensor(k.data[[0, 2]]), Tensor(v.data[[0, 2]]))
        assert np.allclose(out.data, out2.data, atol=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            scaled_dot_attention(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 4))),
                                 Tensor(np.ones((2, 4))))


class TestMultiHead:
    def test_single_head_degeneracy(self):
        params = AttentionParams(8, 1, rng_for(1), np.float32)
        x = Tensor(RNG.normal(size=(1, 5, 8)).astype(np.float32))
        out = multi_head_attention(x, params)
        q = matmul(x, Tensor(params.W_q.data))
        k = matmul(x, Tensor(params.W_k.data))
        v = matmul(x, Tensor(params.W_v.data))
        ref = matmul(scaled_dot_attention(q, k, v), Tensor(params.W_o.data))
        assert np.allclose(out.data, ref.data, atol=1e-6)

    def test_output_shape(self):
        params = AttentionParams(32, 4, rng_for(2), np.float32)
        x = Tensor(RNG.normal(size=(3, 7, 32)).astype(np.float32))
        assert multi_head_attention(x, params).shape == (3, 7, 32)

    def test_zero_input_zero_output(self):
        params = AttentionParams(8, 2, rng_for(3), np.float32)
        x = Tensor(np.zeros((2, 4, 8), dtype=np.float32))
        assert np.all(multi_head_attention(x, params).data == 0.0)

    def test_heads_are_dk_slices(self):
        with pytest.raises(ShapeMismatch):
            AttentionParams(10, 4, rng_for(4), np.float32)


class TestBlocks:
    def test_layer_norm_row_stats(self):
        g = Tensor(np.ones(16, dtype=np.float32))
        b = Tensor(np.zeros(16, dtype=np.float32))
        y = layer_norm(Tensor(RNG.normal(size=(5, 16)).astype(np.float32)), g, b).data
        assert np.allclose(y.mean(-1), 0.0, atol=1e-6)
        assert np.allclose(y.var(-1), 1.0, atol=1e-3)

    def test_stacked_blocks_preserve_shape(self):
        cfg = ModelConfig(d=32, n_heads=4, n_encoder_layers=4, n_classes=5)
        rng = rng_for(7)
        blocks = [EncoderBlock(cfg, rng, np.float32) for _ in range(4)]
        x = Tensor(RNG.normal(size=(2, 9, 32)).astype(np.float32))
        for blk in blocks:
            x = blk(x)
        assert x.shape == (2, 9, 32)

    def test_causal_mask_blocks_future(self):
        cfg = ModelConfig(d=16, n_heads=2, n_encoder_layers=1,
                          n_decoder_layers=1, n_classes=2, vocab_size=9)
        rng = rng_for(8)
        block = DecoderBlock(cfg, rng, np.float32)
        enc = Tensor(RNG.normal(size=(1, 5, 16)).astype(np.float32))
        y1 = RNG.normal(size=(1, 6, 16)).astype(np.float32)
        y2 = y1.copy()
        y2[0, 4:] += 3.0  # change positions 4..5 only
        blocked = causal_blocked(6)[None, None]
        o1 = block(Tensor(y1), enc, self_blocked=blocked).data
        o2 = block(Tensor(y2), enc, self_blocked=blocked).data
        assert np.allclose(o1[0, :4], o2[0, :4], atol=1e-6)
        assert not np.allclose(o1[0, 4:], o2[0, 4:], atol=1e-3)

    def test_cross_attention_reads_encoder(self):
        cfg = ModelConfig(d=16, n_heads=2, n_encoder_layers=1,
                          n_decoder_layers=1, n_classes=2, vocab_size=9)
        block = DecoderBlock(cfg, rng_for(9), np.float32)
        y = Tensor(RNG.normal(size=(1, 3, 16)).astype(np.float32))
        e1 = RNG.normal(size=(1, 4, 16)).astype(np.float32)
        e2 = e1 + 1.0
        o1 = block(y, Tensor(e1)).data
        o2 = block(y, Tensor(e2)).data
        assert not np.allclose(o1, o2, atol=1e-4)

    def test_literal_qk_from_decoder_flag(self):
        cfg = ModelConfig(d=16, n_heads=2, n_encoder_layers=1,
                          n_decoder_layers=1, n_classes=2, vocab_size=9,
                          cross_qk_from_decoder=True)
        block = DecoderBlock(cfg, rng_for(10), np.float32)
        y = Tensor(RNG.normal(size=(1, 4, 16)).astype(np.float32))
        enc = Tensor(RNG.normal(size=(1, 4, 16)).astype(np.float32))
        assert block(y, enc).shape == (1, 4, 16)
        with pytest.raises(ShapeMismatch):
            block(y, Tensor(RNG.normal(size=(1, 5, 16)).astype(np.float32)))

    def test_padding_blocked_shape(self):
        mask = np.array([[1.0, 1.0, 0.0]])
        blocked = padding_blocked(mask)
        assert blocked.shape == (1, 1, 1, 3)
        assert blocked[0, 0, 0].tolist() == [False, False, True]


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        p = Tensor(np.array([1.0, 2.0], dtype=np.float32), requires_grad=True)
        p.grad = np.zeros(2, dtype=np.float32)
        state = AdamState()
        adam_step({"p": p}, state, lr=1e-3)
        assert np.array_equal(p.data, np.array([1.0, 2.0], dtype=np.float32))

    def test_first_step_closed_form(self):
        # g=1 at t=1: m_hat = v_hat = 1 -> delta = -lr/(1+eps) ~= -lr
        p = Tensor(np.array([0.5], dtype=np.float32), requires_grad=True)
        p.grad = np.ones(1, dtype=np.float32)
        adam_step({"p": p}, AdamState(), lr=1e-3)
        assert p.data[0] == pytest.approx(0.5 - 1e-3, abs=1e-9)

    def test_quadratic_descent(self):
        theta = Tensor(np.array([1.0], dtype=np.float32), requires_grad=True)
        state = AdamState()
        values = []
        for _ in range(100):
            with Tape() as tape:
                loss = tsum(mul(theta, theta))
            tape.backward(loss)
            values.append(abs(float(theta.data[0])))
            adam_step({"t": theta}, state, lr=1e-2)
            theta.zero_grad()
        assert all(b < a for a, b in zip(values, values[1:]))


class TestGradCheck:
    def test_linear_model_near_machine_precision(self):
        w = Tensor(RNG.normal(size=(4, 3)).astype(np.float64), requires_grad=True)
        x = Tensor(RNG.normal(size=(2, 4)))

        report = grad_check(lambda: tsum(matmul(x, w)), {"w": w}, eps=1e-6,
                            max_coords_per_param=12)
        assert report.max_rel_error < 1e-9
        assert report.n_checked == 12

    def test_full_models_within_tolerance(self):
        from eyetrans.cli import run_gradcheck

        reports = run_gradcheck(max_coords_per_param=3)
        for kind, rep in reports.items():
            assert rep.max_rel_error <= 1e-3, (kind, rep)

    def test_relu_kink_coordinates_skipped(self):
        theta = Tensor(np.zeros(1, dtype=np.float64), requires_grad=True)
        report = grad_check(lambda: tsum(relu(theta)), {"t": theta}, eps=1e-5)
        assert report.n_skipped_kinks == 1
        assert report.n_checked == 0

    def test_detects_wrong_gradient(self):
        # an op with a deliberately sign-flipped backward rule must fail
        w = Tensor(RNG.normal(size=(3,)).astype(np.float64), requires_grad=True)

        def bad_square(x):
            out = Tensor(x.data * x.data)
            return _record(out, (x,), lambda g: (-2.0 * g * x.data,))

        report = grad_check(lambda: tsum(bad_square(w)), {"w": w}, eps=1e-6)
        assert report.max_rel_error > 1e-1
