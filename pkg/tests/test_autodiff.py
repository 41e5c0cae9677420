import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cross import autodiff as ad
from oracles import finite_diff_grad, max_rel_err

GRAD_TOL = 1e-4


def _rand(rng, *shape):
    return rng.standard_normal(shape)


def _scalarize(out: ad.Tensor, rng) -> ad.Tensor:
    """Reduce an op output to a scalar with fixed random weights so every
    output entry contributes to the gradient."""
    w = ad.Tensor(rng.standard_normal(out.shape))
    return ad.tsum(ad.mul(out, w))


def _check_grads(make_inputs, build, seed):
    """Compare analytic grads against central finite differences."""
    rng = np.random.default_rng(seed)
    arrays = make_inputs(rng)
    tensors = [ad.Tensor(a, requires_grad=True) for a in arrays]
    wrng = np.random.default_rng(seed + 1)

    loss = _scalarize(build(*tensors), np.random.default_rng(seed + 1))
    ad.backward(loss)
    analytic = [t.grad.copy() for t in tensors]

    def f():
        ts = [ad.Tensor(a, requires_grad=False) for a in arrays]
        return float(_scalarize(build(*ts), np.random.default_rng(seed + 1)).data)

    numeric = finite_diff_grad(f, arrays)
    for a, n in zip(analytic, numeric):
        assert max_rel_err(a, n) < GRAD_TOL
    del wrng


OP_CASES = {
    "add": (lambda rng: [_rand(rng, 3, 4), _rand(rng, 3, 4)], lambda a, b: ad.add(a, b)),
    "sub": (lambda rng: [_rand(rng, 3, 4), _rand(rng, 3, 4)], lambda a, b: ad.sub(a, b)),
    "mul": (lambda rng: [_rand(rng, 3, 4), _rand(rng, 3, 4)], lambda a, b: ad.mul(a, b)),
    "div": (lambda rng: [_rand(rng, 3, 4), _rand(rng, 3, 4) + 3.0], lambda a, b: ad.div(a, b)),
    "neg": (lambda rng: [_rand(rng, 3, 4)], ad.neg),
    "scale": (lambda rng: [_rand(rng, 3, 4)], lambda a: ad.scale(a, 2.5)),
    "matmul": (lambda rng: [_rand(rng, 3, 4), _rand(rng, 4, 5)], lambda a, b: ad.matmul(a, b)),
    "transpose": (lambda rng: [_rand(rng, 3, 4)], ad.transpose),
    "reshape": (lambda rng: [_rand(rng, 3, 4)], lambda a: ad.reshape(a, (6, 2))),
    "concat0": (lambda rng: [_rand(rng, 2, 4), _rand(rng, 3, 4)],
                lambda a, b: ad.concat([a, b], axis=0)),
    "concat1": (lambda rng: [_rand(rng, 3, 2), _rand(rng, 3, 4)],
                lambda a, b: ad.concat([a, b], axis=1)),
    "slice": (lambda rng: [_rand(rng, 5, 6)], lambda a: ad.slice_axis(a, 1, 2, 5)),
    "take_rows": (lambda rng: [_rand(rng, 5, 3)],
                  lambda a: ad.take_rows(a, np.array([0, 2, 2, 4]))),
    "gather_cols": (lambda rng: [_rand(rng, 4, 5)],
                    lambda a: ad.gather_cols(a, np.array([[0, 3], [1, 1], [4, 2], [2, 0]]))),
    "repeat_rows": (lambda rng: [_rand(rng, 3, 4)], lambda a: ad.repeat_rows(a, 3)),
    "segment_sum": (lambda rng: [_rand(rng, 6, 4)], lambda a: ad.segment_sum(a, 2)),
    "repeat_cols": (lambda rng: [_rand(rng, 4, 1)], lambda a: ad.repeat_cols(a, 5)),
    "sum": (lambda rng: [_rand(rng, 3, 4)], ad.tsum),
    "sum_axis0": (lambda rng: [_rand(rng, 3, 4)], lambda a: ad.sum_axis(a, 0)),
    "sum_axis1": (lambda rng: [_rand(rng, 3, 4)], lambda a: ad.sum_axis(a, 1)),
    "mean": (lambda rng: [_rand(rng, 3, 4)], ad.tmean),
    "sigmoid": (lambda rng: [_rand(rng, 3, 4)], ad.sigmoid),
    "tanh": (lambda rng: [_rand(rng, 3, 4)], ad.tanh),
    "relu": (lambda rng: [_rand(rng, 3, 4) + 0.05 * np.sign(_rand(rng, 3, 4))], ad.relu),
    "exp": (lambda rng: [_rand(rng, 3, 4)], ad.exp),
    "log": (lambda rng: [np.abs(_rand(rng, 3, 4)) + 0.5], ad.log),
    "sqrt": (lambda rng: [np.abs(_rand(rng, 3, 4)) + 0.5], ad.sqrt),
    "minimum": (lambda rng: [_rand(rng, 3, 4), _rand(rng, 3, 4)],
                lambda a, b: ad.minimum(a, b)),
    "maximum": (lambda rng: [_rand(rng, 3, 4), _rand(rng, 3, 4)],
                lambda a, b: ad.maximum(a, b)),
    "clip": (lambda rng: [_rand(rng, 3, 4) * 2.0], lambda a: ad.clip(a, -1.0, 1.0)),
    "softmax": (lambda rng: [_rand(rng, 3, 5)], lambda a: ad.softmax(a, axis=-1)),
    "softmax_t": (lambda rng: [_rand(rng, 3, 5)],
                  lambda a: ad.softmax(a, axis=-1, temperature=0.31)),
    "softmax_ax0": (lambda rng: [_rand(rng, 3, 5)], lambda a: ad.softmax(a, axis=0)),
    "layer_norm": (lambda rng: [_rand(rng, 3, 6)], ad.layer_norm),
    "glu": (lambda rng: [_rand(rng, 3, 8)], ad.glu),
    "cosine": (lambda rng: [_rand(rng, 4, 6), _rand(rng, 4, 6)],
               lambda a, b: ad.cosine_similarity(a, b)),
    "mse": (lambda rng: [_rand(rng, 3, 4), _rand(rng, 3, 4)], lambda a, b: ad.mse(a, b)),
}


@pytest.mark.parametrize("seed", range(2))
@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_op_gradients_match_finite_differences(name, seed):
    make_inputs, build = OP_CASES[name]
    _check_grads(make_inputs, build, seed=1000 * seed + hash(name) % 997)


@pytest.mark.parametrize("seed", range(8))
def test_composite_chain_gradients(seed):
    """A deep composite touching most of the op family at once."""

    def make_inputs(rng):
        return [_rand(rng, 4, 6), _rand(rng, 6, 8), _rand(rng, 4, 8), _rand(rng, 4, 8)]

    def build(x, w, u, v):
        h = ad.relu(ad.matmul(x, w))
        g = ad.glu(ad.concat([h, u], axis=1))
        s = ad.softmax(ad.mul(g, v), axis=-1, temperature=0.7)
        n = ad.layer_norm(ad.add(s, ad.tanh(g)))
        c = ad.cosine_similarity(n, v)
        return ad.add(ad.tmean(ad.sigmoid(n)), ad.tsum(c))

    _check_grads(make_inputs, build, seed=seed)


def test_softmax_uniform_on_equal_logits():
    out = ad.softmax(ad.Tensor([0.0, 0.0, 0.0]), axis=-1, temperature=1.0)
    np.testing.assert_allclose(out.data, [1 / 3, 1 / 3, 1 / 3], atol=1e-15)


def test_glu_zero_gate_halves_value():
    out = ad.glu(ad.Tensor([2.0, 4.0, 0.0, 0.0]))
    np.testing.assert_allclose(out.data, [1.0, 2.0], atol=1e-15)


def test_cosine_orthogonal_is_zero():
    out = ad.cosine_similarity(ad.Tensor([[1.0, 0.0]]), ad.Tensor([[0.0, 1.0]]))
    assert abs(out.data[0, 0]) < 1e-12


def test_backward_sum_gives_ones():
    x = ad.Tensor([1.0, 2.0, 3.0], requires_grad=True)
    ad.backward(ad.tsum(x))
    np.testing.assert_array_equal(x.grad, [1.0, 1.0, 1.0])


def test_backward_mse_against_zero():
    x = ad.Tensor([2.0], requires_grad=True)
    ad.backward(ad.mse(x, ad.Tensor([0.0])))
    np.testing.assert_allclose(x.grad, [4.0], atol=1e-12)


def test_backward_accumulates_without_zeroing():
    x = ad.Tensor([1.0, 2.0], requires_grad=True)
    ad.backward(ad.tsum(x))
    ad.backward(ad.tsum(x))
    np.testing.assert_array_equal(x.grad, [2.0, 2.0])


def test_backward_rejects_non_scalar_root():
    x = ad.Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ad.ShapeError, match="scalar"):
        ad.backward(ad.scale(x, 2.0))


def test_backward_deterministic_bitwise():
    rng = np.random.default_rng(7)
    a = rng.standard_normal((5, 5))
    b = rng.standard_normal((5, 5))

    def run():
        ta = ad.Tensor(a, requires_grad=True)
        tb = ad.Tensor(b, requires_grad=True)
        h = ad.softmax(ad.matmul(ta, tb), axis=-1)
        ad.backward(ad.tsum(ad.mul(h, ad.layer_norm(ta))))
        return ta.grad.copy(), tb.grad.copy()

    ga1, gb1 = run()
    ga2, gb2 = run()
    assert np.array_equal(ga1, ga2)
    assert np.array_equal(gb1, gb2)


def test_shape_mismatch_names_op_and_shapes():
    a = ad.Tensor(np.zeros((2, 3)))
    b = ad.Tensor(np.zeros((3, 3)))
    with pytest.raises(ad.ShapeError, match=r"add.*\(2, 3\).*\(3, 3\)"):
        ad.add(a, b)
    with pytest.raises(ad.ShapeError, match="matmul"):
        ad.matmul(a, ad.Tensor(np.zeros((2, 2))))


def test_no_grad_suppresses_graph():
    x = ad.Tensor([1.0, 2.0], requires_grad=True)
    with ad.no_grad():
        y = ad.tsum(ad.sigmoid(x))
    assert not y.requires_grad
    assert y._parents == ()


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(min_value=-30, max_value=30), min_size=2, max_size=9))
def test_softmax_rows_sum_to_one_and_positive(logits):
    out = ad.softmax(ad.Tensor([logits]), axis=-1).data
    assert abs(out.sum() - 1.0) < 1e-12
    assert (out > 0).all()


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_layer_norm_row_statistics(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((4, 32)) * rng.uniform(0.5, 3.0)
    out = ad.layer_norm(ad.Tensor(x)).data
    assert np.abs(out.mean(axis=-1)).max() < 1e-9
    assert np.abs(out.var(axis=-1) - 1.0).max() < 1e-6


class TestAdam:
    def test_first_step_magnitude_is_learning_rate(self):
        p = ad.Tensor(np.zeros(4), requires_grad=True)
        opt = ad.Adam([p], lr=0.01)
        p.grad = np.array([10.0, -3.0, 0.5, 100.0])
        opt.step()
        # With |g| >> eps the bias-corrected first step is lr * sign(g).
        np.testing.assert_allclose(np.abs(p.data), 0.01, rtol=1e-6)
        assert opt.step_count == 1

    def test_zero_grad_leaves_params_unchanged(self):
        p = ad.Tensor([1.0, -2.0], requires_grad=True)
        opt = ad.Adam([p], lr=0.1)
        p.grad = np.zeros(2)
        opt.step()
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_repeated_identical_steps_shrink(self):
        # Scalar Adam by hand: with constant gradient the bias-corrected
        # ratio m_hat/sqrt(v_hat) stays ~1, and the second step is never
        # larger than the first.
        p = ad.Tensor([0.0], requires_grad=True)
        opt = ad.Adam([p], lr=0.05)
        p.grad = np.array([2.0])
        opt.step()
        d1 = abs(p.data[0])
        before = p.data[0]
        p.grad = np.array([2.0])
        opt.step()
        d2 = abs(p.data[0] - before)
        assert d2 <= d1 + 1e-15

    def test_missing_grad_rejected(self):
        p = ad.Tensor([0.0], requires_grad=True)
        q = ad.Tensor([0.0], requires_grad=True)
        p.grad = np.array([1.0])
        opt = ad.Adam([p, q], lr=0.1)
        with pytest.raises(ValueError, match="no gradient"):
            opt.step()

    def test_matches_scalar_adam_by_hand(self):
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        p = ad.Tensor([1.0], requires_grad=True)
        opt = ad.Adam([p], lr=lr, beta1=b1, beta2=b2, eps=eps)
        x, m, v = 1.0, 0.0, 0.0
        for t, g in enumerate([0.3, -1.2, 0.7], start=1):
            p.grad = np.array([g])
            opt.step()
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            x -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
            np.testing.assert_allclose(p.data, [x], atol=1e-14)


class TestClipGradNorm:
    def _params(self, *grads):
        out = []
        for g in grads:
            p = ad.Tensor(np.zeros_like(np.asarray(g, dtype=float)), requires_grad=True)
            p.grad = np.asarray(g, dtype=float)
            out.append(p)
        return out

    def test_below_threshold_unchanged(self):
        params = self._params([3.0], [4.0])
        norm = ad.clip_grad_norm(params, 10.0)
        assert norm == pytest.approx(5.0)
        assert params[0].grad[0] == 3.0 and params[1].grad[0] == 4.0

    def test_above_threshold_scaled(self):
        params = self._params([20.0])
        norm = ad.clip_grad_norm(params, 10.0)
        assert norm == pytest.approx(20.0)
        np.testing.assert_allclose(params[0].grad, [10.0])

    def test_zero_grads(self):
        params = self._params([0.0, 0.0])
        assert ad.clip_grad_norm(params, 10.0) == 0.0
        np.testing.assert_array_equal(params[0].grad, [0.0, 0.0])
