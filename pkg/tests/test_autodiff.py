import numpy as np
import pytest
import scipy.sparse as sp

from deformsynth.neuralnet.autodiff import (
    Adam,
    Tensor,
    concat,
    init_uniform,
    layer_norm,
    softmax,
    spmm,
)


def check_grads(build_loss, tensors, h=1e-5, tol=1e-6, rng=None):
    """Central finite differences against the reverse-mode gradients."""
    for t in tensors:
        t.grad = None
    loss = build_loss()
    loss.backward()
    for t in tensors:
        assert t.grad is not None, "missing gradient"
        flat = t.data.reshape(-1)
        n = flat.size
        idxs = range(n) if n <= 64 else rng.choice(n, size=32, replace=False)
        for k in idxs:
            orig = flat[k]
            flat[k] = orig + h
            f1 = float(build_loss().data)
            flat[k] = orig - h
            f2 = float(build_loss().data)
            flat[k] = orig
            fd = (f1 - f2) / (2 * h)
            an = t.grad.reshape(-1)[k]
            assert abs(an - fd) / max(1.0, abs(an), abs(fd)) < tol


def scalarize(out, seed=0):
    w = np.random.default_rng(seed).normal(size=out.data.shape)
    return (out * w).sum()


class TestElementwise:
    def test_add_mul_broadcast(self):
        rng = np.random.default_rng(1)
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(4,)), requires_grad=True)
        check_grads(lambda: scalarize((a + b) * b + a * 2.0 - b), [a, b])

    def test_div_pow(self):
        rng = np.random.default_rng(2)
        a = Tensor(rng.normal(size=(5,)) + 3.0, requires_grad=True)
        b = Tensor(rng.normal(size=(5,)) + 3.0, requires_grad=True)
        check_grads(lambda: scalarize(a / b + a**2 + b**0.5), [a, b])

    def test_tanh_exp(self):
        rng = np.random.default_rng(3)
        a = Tensor(rng.normal(size=(6,)), requires_grad=True)
        check_grads(lambda: scalarize(a.tanh() + (a * 0.1).exp()), [a])

    def test_neg_sub(self):
        rng = np.random.default_rng(4)
        a = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
        check_grads(lambda: scalarize(-a - (b - a)), [a, b])


class TestMatmul:
    def test_plain(self):
        rng = np.random.default_rng(5)
        a = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
        check_grads(lambda: scalarize(a @ b), [a, b])

    def test_batched_with_broadcast(self):
        rng = np.random.default_rng(6)
        a = Tensor(rng.normal(size=(2, 4, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
        check_grads(lambda: scalarize(a @ b), [a, b])

    def test_batched_both(self):
        rng = np.random.default_rng(7)
        a = Tensor(rng.normal(size=(2, 8, 4, 2)), requires_grad=True)
        b = Tensor(rng.normal(size=(2, 8, 2, 4)), requires_grad=True)
        check_grads(lambda: scalarize(a @ b), [a, b], rng=rng)


class TestShapeOps:
    def test_reshape_transpose_getitem_concat(self):
        rng = np.random.default_rng(8)
        a = Tensor(rng.normal(size=(4, 6)), requires_grad=True)
        b = Tensor(rng.normal(size=(2, 6)), requires_grad=True)

        def build():
            x = a.reshape(2, 2, 6).transpose((1, 0, 2)).reshape(4, 6)
            y = concat([x[:2], b], axis=0)
            return scalarize(y[1:, 2:])

        check_grads(build, [a, b])

    def test_sum_mean_axes(self):
        rng = np.random.default_rng(9)
        a = Tensor(rng.normal(size=(3, 4, 2)), requires_grad=True)
        check_grads(
            lambda: scalarize(a.sum(axis=1))
            + scalarize(a.mean(axis=0))
            + scalarize(a.sum(axis=2, keepdims=True) * a),
            [a],
        )


class TestFusedOps:
    def test_softmax(self):
        rng = np.random.default_rng(10)
        a = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
        check_grads(lambda: scalarize(softmax(a, axis=-1)), [a])
        s = softmax(a, axis=-1)
        np.testing.assert_allclose(s.data.sum(axis=-1), 1.0, atol=1e-12)

    def test_layer_norm(self):
        rng = np.random.default_rng(11)
        x = Tensor(rng.normal(size=(4, 6)), requires_grad=True)
        g = Tensor(rng.normal(size=(6,)) + 1.0, requires_grad=True)
        b = Tensor(rng.normal(size=(6,)), requires_grad=True)
        check_grads(lambda: scalarize(layer_norm(x, g, b)), [x, g, b], tol=1e-5)

    def test_spmm_batched(self):
        rng = np.random.default_rng(12)
        S = sp.csr_matrix(np.array([[0, 0.5, 0.5], [1.0, 0, 0], [0.25, 0.75, 0]]))
        x = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
        check_grads(lambda: scalarize(spmm(S, x)), [x])
        np.testing.assert_allclose(
            spmm(S, x).data[1], S @ x.data[1], atol=1e-14
        )


class TestEngine:
    def test_grad_accumulates_over_reuse(self):
        a = Tensor(np.array([2.0]), requires_grad=True)
        loss = (a * a + a).sum()  # d/da = 2a + 1 = 5
        loss.backward()
        assert a.grad[0] == pytest.approx(5.0, abs=1e-12)

    def test_detach_blocks_gradient(self):
        a = Tensor(np.array([3.0]), requires_grad=True)
        loss = (a.detach() * a).sum()
        loss.backward()
        assert a.grad[0] == pytest.approx(3.0, abs=1e-12)

    def test_adam_deterministic(self):
        def run():
            rng = np.random.default_rng(0)
            p = Tensor(rng.normal(size=(4,)), requires_grad=True)
            opt = Adam({"p": p}, lr=1e-2)
            for _ in range(50):
                opt.zero_grad()
                loss = ((p - 1.5) ** 2).sum()
                loss.backward()
                opt.step()
            return p.data.copy()

        assert run().tobytes() == run().tobytes()

    def test_adam_converges_on_quadratic(self):
        p = Tensor(np.zeros(3), requires_grad=True)
        opt = Adam({"p": p}, lr=0.05)
        target = np.array([1.0, -2.0, 0.5])
        for _ in range(800):
            opt.zero_grad()
            loss = ((p - target) ** 2).sum()
            loss.backward()
            opt.step()
        np.testing.assert_allclose(p.data, target, atol=1e-4)

    def test_init_uniform_bound(self):
        rng = np.random.default_rng(13)
        w = init_uniform(rng, (100, 50), fan_in=50)
        assert np.abs(w).max() <= 1.0 / np.sqrt(50)
