"""Autodiff engine: hand oracles for forwards, finite differences for grads.

Every gradient assertion compares against finite_diff_grad in float64 — the
engine's independent oracle — never against saved outputs of the engine
itself.
"""

import numpy as np
import pytest

from signseq import autodiff as ad
from signseq.autodiff import (
    MASK_FILL,
    BadProbability,
    DetachedLoss,
    EmptyMask,
    Graph,
    NotScalar,
    ShapeMismatch,
    Tensor,
    backward,
    finite_diff_grad,
)
from signseq.rng import CounterRng


def rel_err(got: np.ndarray, want: np.ndarray) -> float:
    scale = np.maximum(np.maximum(np.abs(got), np.abs(want)), 1e-6)
    return float((np.abs(got - want) / scale).max())


def check_grads(build, *xs, tol=1e-5):
    """build(*tensors) -> scalar Tensor; FD-check every input."""
    tensors = [Tensor(x, requires_grad=True, dtype=np.float64) for x in xs]
    with Graph() as g:
        loss = build(*tensors)
    grads = backward(loss, g)
    for i, t in enumerate(tensors):
        def f(v, i=i):
            probe = [Tensor(x.data) for x in tensors]
            probe[i] = v
            return build(*probe)
        fd = finite_diff_grad(f, t)
        assert rel_err(grads[t], fd) < tol, f"input {i}"


class TestTensor:
    def test_rank_cap(self):
        with pytest.raises(ShapeMismatch):
            Tensor(np.zeros((2, 2, 2, 2)))

    def test_dtype_coercion(self):
        assert Tensor([1, 2, 3]).dtype == np.float32
        assert Tensor(np.zeros(3, dtype=np.float64)).dtype == np.float64

    def test_item_requires_scalar(self):
        with pytest.raises(NotScalar):
            Tensor([1.0, 2.0]).item()


class TestForwardOracles:
    def test_matmul_identity(self):
        m = np.arange(9.0).reshape(3, 3)
        out = ad.matmul(Tensor(np.eye(3)), Tensor(m))
        assert np.allclose(out.data, m)

    def test_matmul_hand_case(self):
        out = ad.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[5.0], [6.0]]))
        assert np.array_equal(out.data, [[17.0], [39.0]])

    def test_matmul_shape_error(self):
        with pytest.raises(ShapeMismatch):
            ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))

    def test_softmax_uniform(self):
        out = ad.softmax(Tensor([[0.0, 0.0, 0.0, 0.0]]))
        assert np.allclose(out.data, 0.25)

    def test_softmax_hand_values(self):
        # exp([1,2,3]) / sum, evaluated by hand
        out = ad.softmax(Tensor([1.0, 2.0, 3.0], dtype=np.float64))
        want = [0.09003057317038046, 0.24472847105479764, 0.6652409557748219]
        assert np.abs(out.data - want).max() < 1e-12

    def test_softmax_shift_invariance(self):
        x = np.random.default_rng(1).uniform(-2, 2, (4, 6))
        for c in (1.0, -3.5, 100.0, -100.0):
            a = ad.softmax(Tensor(x, dtype=np.float64)).data
            b = ad.softmax(Tensor(x + c, dtype=np.float64)).data
            assert np.abs(a - b).max() < 1e-6

    def test_softmax_rows_sum_to_one(self):
        x = np.random.default_rng(2).uniform(-50, 50, (8, 5))
        out = ad.softmax(Tensor(x)).data
        assert np.abs(out.sum(axis=-1) - 1.0).max() < 1e-6
        assert out.min() > 0.0 and out.max() < 1.0

    def test_layer_norm_constant_row(self):
        out = ad.layer_norm(Tensor([[5.0, 5.0, 5.0, 5.0]]),
                            Tensor(np.ones(4)), Tensor(np.zeros(4)), eps=1e-5)
        assert np.abs(out.data).max() < 1e-3

    def test_layer_norm_gain_zero_gives_bias(self):
        x = np.random.default_rng(3).uniform(-2, 2, (3, 6))
        bias = np.arange(6.0)
        out = ad.layer_norm(Tensor(x), Tensor(np.zeros(6)), Tensor(bias), eps=1e-5)
        assert np.allclose(out.data, np.tile(bias, (3, 1)))

    def test_layer_norm_hand_values(self):
        # mean 2.5, population std sqrt(1.25)
        out = ad.layer_norm(Tensor([[1.0, 2.0, 3.0, 4.0]], dtype=np.float64),
                            Tensor(np.ones(4), dtype=np.float64),
                            Tensor(np.zeros(4), dtype=np.float64), eps=0.0)
        want = [-1.3416407864998738, -0.4472135954999579,
                0.4472135954999579, 1.3416407864998738]
        assert np.abs(out.data - want).max() < 1e-12

    def test_layer_norm_statistics(self):
        x = np.random.default_rng(4).uniform(-2, 2, (16, 32))
        out = ad.layer_norm(Tensor(x, dtype=np.float64),
                            Tensor(np.ones(32), dtype=np.float64),
                            Tensor(np.zeros(32), dtype=np.float64), eps=1e-9).data
        assert np.abs(out.mean(axis=-1)).max() < 1e-5
        assert np.abs(out.var(axis=-1) - 1.0).max() < 1e-3

    def test_dropout_p0_and_eval_identity(self):
        x = Tensor(np.random.default_rng(5).uniform(-1, 1, (4, 4)))
        rng = CounterRng(0)
        assert np.array_equal(ad.dropout(x, 0.0, True, rng).data, x.data)
        assert np.array_equal(ad.dropout(x, 0.9, False, rng).data, x.data)

    def test_dropout_preserves_expectation(self):
        x = Tensor(np.ones(100_000))
        out = ad.dropout(x, 0.2, True, CounterRng(42)).data
        assert 0.99 < out.mean() < 1.01
        survivors = out[out != 0.0]
        assert np.allclose(survivors, 1.0 / 0.8)

    def test_dropout_bad_probability(self):
        x = Tensor(np.ones(4))
        for p in (-0.1, 1.0, 1.5):
            with pytest.raises(BadProbability):
                ad.dropout(x, p, True, CounterRng(0))

    def test_mask_fill_zeroes_softmax_weight(self):
        x = Tensor(np.random.default_rng(6).uniform(-2, 2, (3, 5)))
        allowed = np.array([True, True, False, True, False])
        masked = ad.mask_fill(x, np.tile(allowed, (3, 1)))
        probs = ad.softmax(masked).data
        assert np.all(probs[:, ~allowed] == 0.0)      # exactly zero
        assert np.abs(probs.sum(axis=-1) - 1.0).max() < 1e-6
        assert np.all(np.isfinite(masked.data))

    def test_masked_mean_rows_empty_mask(self):
        x = Tensor(np.zeros((2, 3, 4)))
        mask = np.array([[True, False, False], [False, False, False]])
        with pytest.raises(EmptyMask):
            ad.masked_mean_rows(x, mask)

    def test_finite_diff_on_linear_is_exact(self):
        x = np.random.default_rng(7).uniform(-2, 2, (3, 3))
        fd = finite_diff_grad(lambda t: ad.sum_all(t), Tensor(x, dtype=np.float64))
        assert np.abs(fd - 1.0).max() < 1e-9

    def test_finite_diff_square(self):
        fd = finite_diff_grad(lambda t: ad.sum_all(ad.mul(t, t)),
                              Tensor([3.0], dtype=np.float64))
        assert abs(fd[0] - 6.0) < 1e-8


class TestBackward:
    def test_sum_gives_ones(self):
        w = Tensor(np.random.default_rng(8).uniform(-1, 1, (2, 3)),
                   requires_grad=True, dtype=np.float64)
        with Graph() as g:
            loss = ad.sum_all(w)
        assert np.array_equal(backward(loss, g)[w], np.ones((2, 3)))

    def test_quadratic_hand_grad(self):
        w = Tensor([[1.0, -2.0]], requires_grad=True, dtype=np.float64)
        with Graph() as g:
            loss = ad.sum_all(ad.mul(w, w))
        assert np.array_equal(backward(loss, g)[w], [[2.0, -4.0]])

    def test_not_scalar(self):
        w = Tensor(np.ones((2, 2)), requires_grad=True)
        with Graph() as g:
            y = ad.mul(w, w)
        with pytest.raises(NotScalar):
            backward(y, g)

    def test_detached_loss(self):
        w = Tensor(np.ones(3), requires_grad=True)
        with Graph() as g:
            ad.sum_all(w)
        stray = Tensor(np.array(1.0), requires_grad=True)
        with pytest.raises(DetachedLoss):
            backward(stray, g)

    def test_reused_tensor_accumulates(self):
        # y = sum(x*x + x) -> dy/dx = 2x + 1
        x = Tensor([1.0, 2.0, -3.0], requires_grad=True, dtype=np.float64)
        with Graph() as g:
            loss = ad.sum_all(ad.add(ad.mul(x, x), x))
        assert np.allclose(backward(loss, g)[x], [3.0, 5.0, -5.0])

    def test_determinism_bitwise(self):
        def run():
            rng = CounterRng(77)
            x = Tensor(rng.uniform((4, 6)) - 0.5, requires_grad=True, dtype=np.float64)
            w = Tensor(rng.uniform((6, 3)) - 0.5, requires_grad=True, dtype=np.float64)
            with Graph() as g:
                h = ad.relu(ad.matmul(x, w))
                loss = ad.sum_all(ad.mul(ad.softmax(h), h))
            grads = backward(loss, g)
            return grads[x].copy(), grads[w].copy()
        ax, aw = run()
        bx, bw = run()
        assert np.array_equal(ax, bx) and np.array_equal(aw, bw)


class TestGradOracle:
    """Finite-difference cross-checks, op by op, on random inputs in [-2, 2]."""

    def setup_method(self):
        self.rng = np.random.default_rng(99)

    def u(self, *shape):
        return self.rng.uniform(-2, 2, shape)

    def test_add(self):
        check_grads(lambda a, b: ad.sum_all(ad.mul(ad.add(a, b), ad.add(a, b))),
                    self.u(3, 4), self.u(3, 4))

    def test_add_bias(self):
        check_grads(lambda x, b: ad.sum_all(ad.mul(ad.add_bias(x, b),
                                                   ad.add_bias(x, b))),
                    self.u(2, 3, 4), self.u(4))

    def test_mul(self):
        check_grads(lambda a, b: ad.sum_all(ad.mul(a, b)), self.u(3, 4), self.u(3, 4))

    def test_scale(self):
        check_grads(lambda a: ad.sum_all(ad.mul(ad.scale(a, -2.5), a)), self.u(5))

    def test_relu(self):
        x = self.u(4, 5)
        x[np.abs(x) < 0.1] += 0.5    # keep clear of the kink
        check_grads(lambda a: ad.sum_all(ad.mul(ad.relu(a), a)), x)

    def test_matmul_2d(self):
        check_grads(lambda a, b: ad.sum_all(ad.mul(ad.matmul(a, b), ad.matmul(a, b))),
                    self.u(4, 5), self.u(5, 2))

    def test_matmul_batched_times_2d(self):
        check_grads(lambda a, w: ad.sum_all(ad.mul(ad.matmul(a, w), ad.matmul(a, w))),
                    self.u(2, 3, 4), self.u(4, 3))

    def test_matmul_batched_times_batched(self):
        check_grads(lambda a, b: ad.sum_all(ad.mul(ad.matmul(a, b), ad.matmul(a, b))),
                    self.u(2, 3, 4), self.u(2, 4, 3))

    def test_transpose_last(self):
        check_grads(lambda a, b: ad.sum_all(ad.matmul(a, ad.transpose_last(b))),
                    self.u(2, 3, 4), self.u(2, 3, 4))

    def test_reshape(self):
        check_grads(lambda a: ad.sum_all(ad.mul(ad.reshape(a, (6, 2)),
                                                ad.reshape(a, (6, 2)))),
                    self.u(3, 4))

    def test_slice_and_concat(self):
        def build(a):
            lo = ad.slice_last(a, 0, 2)
            hi = ad.slice_last(a, 2, 5)
            back = ad.concat_last([ad.mul(hi, hi), lo])
            return ad.sum_all(ad.mul(back, back))
        check_grads(build, self.u(3, 5))

    def test_softmax_grad(self):
        check_grads(lambda a: ad.sum_all(ad.mul(ad.softmax(a), a)), self.u(4, 6))

    def test_log_softmax_grad(self):
        check_grads(lambda a: ad.sum_all(ad.mul(ad.log_softmax(a), a)), self.u(4, 6))

    def test_log_softmax_matches_log_of_softmax(self):
        x = Tensor(self.u(5, 7), dtype=np.float64)
        assert np.abs(ad.log_softmax(x).data - np.log(ad.softmax(x).data)).max() < 1e-12

    def test_layer_norm_grad(self):
        def build(x, gain, bias):
            y = ad.layer_norm(x, gain, bias, eps=1e-8)
            return ad.sum_all(ad.mul(y, y))
        check_grads(build, self.u(4, 6), self.u(6), self.u(6))

    def test_mask_fill_grad(self):
        allowed = np.array([[True, True, False, True]] * 3)
        def build(x):
            return ad.sum_all(ad.mul(ad.softmax(ad.mask_fill(x, allowed)), x))
        check_grads(build, self.u(3, 4))

    def test_masked_mean_rows_grad(self):
        mask = np.array([[True, True, False], [True, False, False]])
        def build(x):
            pooled = ad.masked_mean_rows(x, mask)
            return ad.sum_all(ad.mul(pooled, pooled))
        check_grads(build, self.u(2, 3, 4))

    def test_softmax_matmul_composite(self):
        # oracle cross-check at 1e-5 on the composite
        check_grads(lambda a, b: ad.sum_all(ad.mul(ad.softmax(ad.matmul(a, b)),
                                                   ad.matmul(a, b))),
                    self.u(4, 5), self.u(5, 3), tol=1e-5)
