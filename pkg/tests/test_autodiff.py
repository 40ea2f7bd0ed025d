"""Autodiff op tests: values, finite-difference gradients, Adam, and tape
semantics.

central_difference_grads is the independent gradient oracle used here
and by the acceptance suite: it re-evaluates the forward function with
perturbed 64-bit inputs and never touches the reverse-mode code path.
"""

import numpy as np
import pytest

from protolens import autodiff as ad
from protolens.autodiff import Adam, ShapeError, Tape, Tensor, adam_step, backward, clip_gradients


def central_difference_grads(build_loss, leaves, h=1e-5):
    """Numerical gradient of a scalar-valued rebuild function (64-bit)."""
    grads = []
    for leaf in leaves:
        assert leaf.data.dtype == np.float64, "gradient checks require float64"
        grad = np.zeros_like(leaf.data)
        flat = leaf.data.reshape(-1)
        grad_flat = grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            plus = float(build_loss().data)
            flat[i] = original - h
            minus = float(build_loss().data)
            flat[i] = original
            grad_flat[i] = (plus - minus) / (2.0 * h)
        grads.append(grad)
    return grads


def assert_grads_close(analytic, numeric, rel=1e-4):
    for a, n in zip(analytic, numeric):
        denom = np.maximum(1.0, np.abs(a) + np.abs(n))
        np.testing.assert_array_less(np.abs(a - n) / denom, rel)


def check_op(build_loss, leaves, rel=1e-4):
    """Reverse-mode gradients must match central differences."""
    with Tape() as tape:
        loss = build_loss()
    analytic = tape.gradients(loss, leaves)
    numeric = central_difference_grads(build_loss, leaves)
    assert_grads_close(analytic, numeric, rel)


def rand_tensor(rng, *shape):
    return Tensor(rng.standard_normal(shape), dtype=np.float64)


def weighted_sum(out, weights: Tensor) -> Tensor:
    """Random-cotangent scalarization so every output element matters."""
    return ad.sum_all(ad.mul(out, weights))


class TestForwardValues:
    def test_softmax_symmetry(self):
        out = ad.softmax(Tensor([0.0, 0.0]))
        np.testing.assert_allclose(out.data, [0.5, 0.5])

    def test_sigmoid_tanh_at_zero(self):
        assert ad.sigmoid(Tensor([0.0])).data[0] == pytest.approx(0.5)
        assert ad.tanh(Tensor([0.0])).data[0] == 0.0

    def test_matmul_identity(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((3, 3))
        out = ad.matmul(Tensor(np.eye(3), dtype=np.float64), Tensor(a, dtype=np.float64))
        np.testing.assert_allclose(out.data, a)

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            logits = Tensor(rng.standard_normal((4, 7)) * 10, dtype=np.float64)
            out = ad.softmax(logits, axis=-1)
            np.testing.assert_allclose(out.data.sum(axis=-1), 1.0, atol=1e-6)
            assert (out.data >= 0).all()

    def test_softmax_shift_invariance(self):
        rng = np.random.default_rng(2)
        logits = rng.standard_normal(9)
        a = ad.softmax(Tensor(logits, dtype=np.float64)).data
        b = ad.softmax(Tensor(logits + 123.0, dtype=np.float64)).data
        np.testing.assert_allclose(a, b, atol=1e-6)

    def test_softmax_extreme_logits_stable(self):
        out = ad.softmax(Tensor([1000.0, 0.0, -1000.0], dtype=np.float64))
        assert np.isfinite(out.data).all()
        assert out.data[0] == pytest.approx(1.0)

    def test_cross_entropy_matches_log_softmax(self):
        rng = np.random.default_rng(3)
        logits = rng.standard_normal(5)
        loss = ad.cross_entropy(Tensor(logits, dtype=np.float64), 2)
        expected = -np.log(np.exp(logits)[2] / np.exp(logits).sum())
        assert float(loss.data) == pytest.approx(expected)


class TestShapeErrors:
    def test_matmul_mismatch(self):
        with pytest.raises(ShapeError, match="matmul"):
            ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_add_mismatch(self):
        with pytest.raises(ShapeError, match="add"):
            ad.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))

    def test_mul_mismatch(self):
        with pytest.raises(ShapeError, match="mul"):
            ad.mul(Tensor(np.zeros(3)), Tensor(np.zeros(4)))

    def test_non_scalar_loss(self):
        with Tape() as tape:
            out = ad.add(Tensor(np.zeros(3)), Tensor(np.ones(3)))
        with pytest.raises(ValueError, match="scalar"):
            backward(tape, out)

    def test_nested_tape_rejected(self):
        with Tape():
            with pytest.raises(RuntimeError):
                with Tape():
                    pass

    def test_gather_out_of_range(self):
        with pytest.raises(IndexError):
            ad.embedding_gather(Tensor(np.zeros((3, 2))), np.array([3]))


class TestGradients:
    def test_sigmoid_derivative_at_zero(self):
        x = Tensor(np.zeros(1), dtype=np.float64)
        with Tape() as tape:
            loss = ad.sum_all(ad.sigmoid(x))
        (grad,) = tape.gradients(loss, [x])
        assert grad[0] == pytest.approx(0.25)

    def test_cross_entropy_closed_form(self):
        # d loss / d logits = softmax(logits) - one_hot(target)
        rng = np.random.default_rng(4)
        for _ in range(20):
            logits = Tensor(rng.standard_normal(5), dtype=np.float64)
            target = int(rng.integers(0, 5))
            with Tape() as tape:
                loss = ad.cross_entropy(logits, target)
            (grad,) = tape.gradients(loss, [logits])
            probs = np.exp(logits.data) / np.exp(logits.data).sum()
            one_hot = np.eye(5)[target]
            np.testing.assert_allclose(grad, probs - one_hot, atol=1e-12)

            numeric = central_difference_grads(
                lambda: ad.cross_entropy(logits, target), [logits]
            )
            assert_grads_close([grad], numeric)

    def test_matmul(self):
        rng = np.random.default_rng(5)
        a, b, w = rand_tensor(rng, 4, 3), rand_tensor(rng, 3, 5), rand_tensor(rng, 4, 5)
        check_op(lambda: weighted_sum(ad.matmul(a, b), w), [a, b])

    def test_bmm(self):
        rng = np.random.default_rng(6)
        a, b, w = rand_tensor(rng, 2, 3, 4), rand_tensor(rng, 2, 4, 5), rand_tensor(rng, 2, 3, 5)
        check_op(lambda: weighted_sum(ad.bmm(a, b), w), [a, b])

    def test_add_same_shape(self):
        rng = np.random.default_rng(7)
        a, b, w = rand_tensor(rng, 4, 4), rand_tensor(rng, 4, 4), rand_tensor(rng, 4, 4)
        check_op(lambda: weighted_sum(ad.add(a, b), w), [a, b])

    def test_add_bias_row(self):
        rng = np.random.default_rng(8)
        a, b, w = rand_tensor(rng, 5, 3), rand_tensor(rng, 3), rand_tensor(rng, 5, 3)
        check_op(lambda: weighted_sum(ad.add(a, b), w), [a, b])

    def test_mul(self):
        rng = np.random.default_rng(9)
        a, b, w = rand_tensor(rng, 6), rand_tensor(rng, 6), rand_tensor(rng, 6)
        check_op(lambda: weighted_sum(ad.mul(a, b), w), [a, b])

    def test_scale(self):
        rng = np.random.default_rng(10)
        a, w = rand_tensor(rng, 3, 3), rand_tensor(rng, 3, 3)
        check_op(lambda: weighted_sum(ad.scale(a, -2.5), w), [a])

    def test_concat(self):
        rng = np.random.default_rng(11)
        a, b = rand_tensor(rng, 2, 3), rand_tensor(rng, 2, 4)
        w = rand_tensor(rng, 2, 7)
        check_op(lambda: weighted_sum(ad.concat([a, b], axis=1), w), [a, b])

    def test_stack(self):
        rng = np.random.default_rng(12)
        a, b, c = (rand_tensor(rng, 2, 3) for _ in range(3))
        w = rand_tensor(rng, 2, 3, 3)
        check_op(lambda: weighted_sum(ad.stack([a, b, c], axis=1), w), [a, b, c])

    def test_reshape(self):
        rng = np.random.default_rng(13)
        a, w = rand_tensor(rng, 4, 6), rand_tensor(rng, 2, 12)
        check_op(lambda: weighted_sum(ad.reshape(a, (2, 12)), w), [a])

    def test_sigmoid_tanh_softmax(self):
        rng = np.random.default_rng(14)
        for op in (ad.sigmoid, ad.tanh, ad.softmax):
            a, w = rand_tensor(rng, 3, 5), rand_tensor(rng, 3, 5)
            check_op(lambda: weighted_sum(op(a), w), [a])

    def test_softmax_other_axis(self):
        rng = np.random.default_rng(15)
        a, w = rand_tensor(rng, 3, 5), rand_tensor(rng, 3, 5)
        check_op(lambda: weighted_sum(ad.softmax(a, axis=0), w), [a])

    def test_embedding_gather(self):
        rng = np.random.default_rng(16)
        table = rand_tensor(rng, 6, 4)
        ids = np.array([0, 2, 2, 5])  # repeated id exercises accumulation
        w = rand_tensor(rng, 4, 4)
        check_op(lambda: weighted_sum(ad.embedding_gather(table, ids), w), [table])

    def test_cross_entropy_batched(self):
        rng = np.random.default_rng(17)
        logits = rand_tensor(rng, 4, 6)
        targets = np.array([1, 0, 5, 3])
        w = rand_tensor(rng, 4)
        check_op(lambda: weighted_sum(ad.cross_entropy(logits, targets), w), [logits])

    def test_fanout_accumulation(self):
        rng = np.random.default_rng(18)
        a = rand_tensor(rng, 3, 3)
        check_op(lambda: ad.sum_all(ad.mul(a, a)), [a])

    def test_random_op_chains(self):
        # small random compositions over random shapes up to 8x8
        rng = np.random.default_rng(19)
        for _ in range(10):
            n, m = (int(v) for v in rng.integers(2, 9, size=2))
            a, b = rand_tensor(rng, n, m), rand_tensor(rng, m, n)
            w = rand_tensor(rng, n, n)

            def build():
                out = ad.tanh(ad.matmul(a, b))
                out = ad.add(out, ad.softmax(ad.matmul(a, b), axis=-1))
                return weighted_sum(out, w)

            check_op(build, [a, b])


class TestTapeDeterminism:
    def test_bit_identical_replay(self):
        def run():
            rng = np.random.default_rng(123)
            a = Tensor(rng.standard_normal((4, 4)), dtype=np.float32)
            b = Tensor(rng.standard_normal((4, 4)), dtype=np.float32)
            with Tape() as tape:
                loss = ad.sum_all(ad.tanh(ad.matmul(a, b)))
            grads = tape.gradients(loss, [a, b])
            return float(loss.data), grads

        loss1, grads1 = run()
        loss2, grads2 = run()
        assert loss1 == loss2
        for g1, g2 in zip(grads1, grads2):
            assert np.array_equal(g1, g2)

    def test_no_tape_records_nothing(self):
        out = ad.matmul(Tensor(np.eye(2)), Tensor(np.ones((2, 2))))
        assert out._vjp is None


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        p = Tensor(np.ones(4), dtype=np.float32)
        before = p.data.copy()
        Adam().step([p], [np.zeros(4, dtype=np.float32)])
        np.testing.assert_array_equal(p.data, before)

    def test_first_step_is_signed_learning_rate(self):
        # m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
        lr = 1e-3
        p = Tensor(np.array([1.0, 1.0]), dtype=np.float64)
        g = np.array([0.5, -2.0])
        Adam(learning_rate=lr).step([p], [g])
        delta = p.data - 1.0
        np.testing.assert_allclose(delta, [-lr, lr], rtol=1e-6)

    def test_two_runs_identical(self):
        rng = np.random.default_rng(20)
        grads = [rng.standard_normal(5).astype(np.float32) for _ in range(10)]

        def run():
            p = Tensor(np.ones(5), dtype=np.float32)
            opt = Adam(learning_rate=0.01)
            for g in grads:
                opt.step([p], [g])
            return p.data

        assert np.array_equal(run(), run())

    def test_functional_wrapper(self):
        p = Tensor(np.ones(2), dtype=np.float32)
        state = Adam()
        out = adam_step([p], [np.ones(2, dtype=np.float32)], state)
        assert out is state
        assert state.step_count == 1


class TestClipGradients:
    def test_clips_to_max_norm(self):
        grads = [np.array([3.0, 4.0])]
        norm = clip_gradients(grads, 1.0)
        assert norm == pytest.approx(5.0)
        assert np.linalg.norm(grads[0]) == pytest.approx(1.0)

    def test_leaves_small_gradients(self):
        grads = [np.array([0.3, 0.4])]
        clip_gradients(grads, 5.0)
        np.testing.assert_allclose(grads[0], [0.3, 0.4])
