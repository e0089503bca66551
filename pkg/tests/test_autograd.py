import numpy as np
import pytest

from spectran import dct
from spectran.autograd import (Tensor, concat, embedding, gelu, log_softmax,
                               no_grad, softmax, spectral_filter,
                               upsample_nearest)


def numeric_grad(f, x, eps=1e-6):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + eps
        up = f()
        x[i] = orig - eps
        down = f()
        x[i] = orig
        g[i] = (up - down) / (2 * eps)
        it.iternext()
    return g


def check_op(build, x):
    """Compare analytic and finite-difference gradients of sum(build(t))."""
    t = Tensor(x, requires_grad=True)

    def scalar():
        return float(build(Tensor(x)).data.sum())

    out = build(t)
    out.backward(np.ones_like(out.data))
    expected = numeric_grad(scalar, x)
    assert np.allclose(t.grad, expected, atol=1e-6), \
        np.abs(t.grad - expected).max()


class TestBasicOps:
    def test_add_mul(self):
        rng = np.random.default_rng(0)
        check_op(lambda t: t * 3.0 + t * t, rng.standard_normal((3, 4)))

    def test_matmul(self):
        rng = np.random.default_rng(1)
        w = rng.standard_normal((4, 5))
        check_op(lambda t: t @ w, rng.standard_normal((3, 4)))

    def test_batched_matmul_broadcast(self):
        rng = np.random.default_rng(2)
        w = rng.standard_normal((2, 4, 5))
        check_op(lambda t: t @ w, rng.standard_normal((2, 3, 4)))

    def test_reshape_swap(self):
        rng = np.random.default_rng(3)
        check_op(lambda t: (t.reshape(2, 6).swapaxes(0, 1)) * 2.0,
                 rng.standard_normal((3, 4)))

    def test_getitem(self):
        rng = np.random.default_rng(4)
        check_op(lambda t: t[:, 1:3] * t[:, 0:2], rng.standard_normal((2, 4)))

    def test_reductions(self):
        rng = np.random.default_rng(5)
        check_op(lambda t: t.sum(axis=1) * t.mean(axis=1),
                 rng.standard_normal((3, 4)))

    def test_elementwise(self):
        rng = np.random.default_rng(6)
        x = np.abs(rng.standard_normal((3, 3))) + 0.5
        check_op(lambda t: t.exp() + t.log() + t.tanh(), x)

    def test_pow(self):
        rng = np.random.default_rng(7)
        x = np.abs(rng.standard_normal((4,))) + 0.5
        check_op(lambda t: (t ** -0.5) + (t ** 2), x)

    def test_gelu(self):
        rng = np.random.default_rng(8)
        check_op(gelu, rng.standard_normal((3, 5)))

    def test_softmax(self):
        rng = np.random.default_rng(9)
        check_op(lambda t: softmax(t, axis=-1) * np.arange(5.0),
                 rng.standard_normal((2, 5)))

    def test_log_softmax(self):
        rng = np.random.default_rng(10)
        check_op(lambda t: log_softmax(t, axis=-1)[:, 1],
                 rng.standard_normal((3, 4)))

    def test_concat(self):
        rng = np.random.default_rng(11)
        check_op(lambda t: concat([t * 2.0, t * -1.0], axis=0),
                 rng.standard_normal((2, 3)))

    def test_grad_accumulates_across_uses(self):
        x = Tensor(np.array([2.0]), requires_grad=True)
        y = x * 3.0 + x * 5.0
        y.backward(np.ones(1))
        assert x.grad[0] == pytest.approx(8.0)


class TestEmbeddingAndStructured:
    def test_embedding_lookup_and_grad(self):
        table = Tensor(np.arange(12.0).reshape(4, 3), requires_grad=True)
        ids = np.array([[0, 2], [2, 3]])
        out = embedding(table, ids)
        assert np.array_equal(out.data[0, 1], table.data[2])
        out.backward(np.ones_like(out.data))
        # row 2 is used twice
        assert np.array_equal(table.grad[:, 0], [1, 0, 2, 1])

    def test_embedding_out_of_range(self):
        table = Tensor(np.zeros((4, 3)))
        with pytest.raises(ValueError):
            embedding(table, np.array([[4]]))

    def test_upsample_examples(self):
        h = Tensor(np.array([[[1.0], [2.0]]]))
        assert upsample_nearest(h, 4).data[:, :, 0].tolist() == [[1, 1, 2, 2]]
        assert upsample_nearest(h, 2).data[:, :, 0].tolist() == [[1, 2]]
        h3 = Tensor(np.array([[[10.0], [20.0], [30.0]]]))
        assert upsample_nearest(h3, 5).data[0, :, 0].tolist() == \
            [10, 10, 20, 20, 30]

    def test_upsample_shrink_rejected(self):
        with pytest.raises(ValueError):
            upsample_nearest(Tensor(np.zeros((1, 4, 1))), 3)

    def test_upsample_grad(self):
        x = np.random.default_rng(1).standard_normal((1, 3, 2))
        check_op(lambda t: upsample_nearest(t, 7), x)


class TestSpectralFilter:
    def test_matches_plain_downsample(self):
        h = np.random.default_rng(0).standard_normal((2, 16, 3))
        out = spectral_filter(Tensor(h), 0.5)
        assert np.allclose(out.data, dct.spectral_downsample(h, 0.5))

    def test_backward_is_transpose_of_linear_map(self):
        # materialize the M' x N matrix explicitly and compare
        rng = np.random.default_rng(1)
        for n, r in [(8, 0.5), (12, 0.3), (64, 0.25)]:
            m = dct.retained_bins(n, r)
            basis = np.eye(n)
            lin = np.stack([dct.spectral_downsample(
                basis[i][None, :, None], r)[0, :, 0] for i in range(n)], axis=1)
            x = rng.standard_normal((1, n, 1))
            g = rng.standard_normal((1, m, 1))
            t = Tensor(x, requires_grad=True)
            out = spectral_filter(t, r)
            out.backward(g)
            assert np.allclose(t.grad[0, :, 0], lin.T @ g[0, :, 0], atol=1e-10)

    def test_grad_numeric(self):
        x = np.random.default_rng(2).standard_normal((1, 10, 2))
        check_op(lambda t: spectral_filter(t, 0.4), x)


class TestNoGrad:
    def test_no_tape_inside_context(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with no_grad():
            y = x * 2.0
        assert not y.requires_grad
        with pytest.raises(RuntimeError):
            y.backward(np.ones(3))

    def test_tape_restored_after_context(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with no_grad():
            pass
        y = (x * 2.0).sum()
        y.backward()
        assert np.allclose(x.grad, 2.0)
