"""Tests for the reverse-mode autodiff engine."""

import numpy as np
import pytest

from src import numgrad as ng
from src.errors import ConfigError, DomainError, GraphError, ShapeError
from src.numgrad import Tensor


def numeric_grad(fn, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central differences of scalar fn(x) in float64."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        plus = fn(x)
        flat[i] = old - eps
        minus = fn(x)
        flat[i] = old
        grad.reshape(-1)[i] = (plus - minus) / (2 * eps)
    return grad


def check_grad(op, *shapes, seed: int = 0, positive: bool = False):
    """Compare autodiff and numeric gradients of sum(op(*inputs) * w)."""
    rng = np.random.default_rng(seed)
    arrays = [rng.standard_normal(s) for s in shapes]
    if positive:
        arrays = [np.abs(a) + 0.5 for a in arrays]
    tensors = [Tensor(a, requires_grad=True, dtype=np.float64) for a in arrays]
    out = op(*tensors)
    weights = rng.standard_normal(out.shape)
    ng.backward(ng.reduce_sum(out * Tensor(weights, dtype=np.float64)))

    for k, a in enumerate(arrays):
        def scalar(v, k=k):
            args = [Tensor(v if j == k else arrays[j], dtype=np.float64) for j in range(len(arrays))]
            return float(np.sum(op(*args).data * weights))

        expected = numeric_grad(scalar, a.copy())
        np.testing.assert_allclose(tensors[k].grad, expected, rtol=1e-5, atol=1e-7)


class TestTensor:
    def test_defaults_to_float32(self):
        assert Tensor([1, 2, 3]).dtype == np.float32

    def test_keeps_float64(self):
        assert Tensor(np.zeros(3)).dtype == np.float64

    def test_dims(self):
        assert Tensor(np.zeros((2, 3))).dims == [2, 3]

    def test_item_of_scalar(self):
        assert Tensor(2.5).item() == 2.5

    def test_astype_is_fresh_leaf(self):
        x = Tensor(np.ones(3, dtype=np.float32), requires_grad=True)
        y = x.astype(np.float64)
        assert y.dtype == np.float64
        assert y.requires_grad
        assert y.is_leaf


class TestElementwiseGradients:
    @pytest.mark.parametrize("op", [ng.add, ng.sub, ng.mul])
    def test_binary(self, op):
        check_grad(op, (3, 4), (3, 4))

    def test_broadcast_add(self):
        check_grad(ng.add, (2, 3, 4), (4,))

    def test_broadcast_mul_keepdim(self):
        check_grad(ng.mul, (3, 4), (3, 1))

    def test_div(self):
        check_grad(ng.div, (3, 4), (3, 4), positive=True)

    def test_exp(self):
        check_grad(ng.exp, (5,))

    def test_log(self):
        check_grad(ng.log, (5,), positive=True)

    def test_sqrt(self):
        check_grad(ng.sqrt, (5,), positive=True)

    def test_gelu(self):
        check_grad(ng.gelu, (4, 5))

    def test_power(self):
        check_grad(lambda x: ng.power(x, 3.0), (6,))

    def test_scale(self):
        check_grad(lambda x: ng.scale(x, -2.5), (3, 2))

    def test_elementwise_dispatch(self):
        a, b = Tensor([1.0, 2.0]), Tensor([3.0, 4.0])
        np.testing.assert_array_equal(ng.elementwise("add", a, b).data, [4.0, 6.0])

    def test_elementwise_unknown(self):
        with pytest.raises(ShapeError):
            ng.elementwise("tanh", Tensor([1.0]))


class TestShapeGradients:
    def test_reduce_sum_axis(self):
        check_grad(lambda x: ng.reduce_sum(x, axis=1), (3, 4, 2))

    def test_reduce_mean_keepdims(self):
        check_grad(lambda x: ng.reduce_mean(x, axis=(0, 2), keepdims=True), (3, 4, 2))

    def test_reshape(self):
        check_grad(lambda x: ng.reshape(x, (6, 4)), (2, 3, 4))

    def test_transpose(self):
        check_grad(lambda x: ng.transpose(x, (2, 0, 1)), (2, 3, 4))

    def test_getitem_fancy_repeats(self):
        # repeated rows must accumulate
        check_grad(lambda x: ng.getitem(x, np.array([0, 2, 0])), (3, 4))

    def test_concat(self):
        check_grad(lambda a, b: ng.concat([a, b], axis=1), (2, 3), (2, 5))


class TestLinearAlgebraGradients:
    def test_matmul(self):
        check_grad(ng.matmul, (3, 4), (4, 5))

    def test_batched_matmul_broadcast(self):
        check_grad(ng.matmul, (2, 3, 4), (4, 5))

    def test_linear(self):
        check_grad(ng.linear, (2, 3, 4), (4, 6), (6,))

    def test_softmax(self):
        check_grad(lambda x: ng.softmax(x, axis=-1), (3, 5))

    def test_logsumexp_masked(self):
        mask = np.array([[True, False, True, True], [False, True, True, False]])
        check_grad(lambda x: ng.logsumexp(x, axis=1, where=mask), (2, 4))

    def test_layernorm(self):
        check_grad(ng.layernorm, (3, 6), (6,), (6,))

    def test_l2_normalize(self):
        check_grad(lambda x: ng.l2_normalize(x, axis=-1), (3, 5))

    def test_conv2d_stride2_padded(self):
        check_grad(
            lambda x, w, b: ng.conv2d(x, w, b, stride=2, padding=1),
            (2, 6, 6, 3), (3, 3, 3, 4), (4,),
        )

    def test_cross_entropy(self):
        labels = np.array([0, 2, 1])
        check_grad(lambda x: ng.cross_entropy(x, labels), (3, 4))


class TestForwardValues:
    def test_softmax_rows_sum_to_one(self):
        x = Tensor(np.random.default_rng(1).standard_normal((4, 7)) * 50)
        np.testing.assert_allclose(ng.softmax(x).data.sum(axis=-1), 1.0, rtol=1e-6)

    def test_softmax_shift_invariant(self):
        x = np.random.default_rng(4).standard_normal((3, 6))
        for c in (-20.0, 3.5, 700.0):
            np.testing.assert_allclose(ng.softmax(Tensor(x + c)).data, ng.softmax(Tensor(x)).data, rtol=1e-10)

    def test_logsumexp_large_values_stable(self):
        x = Tensor(np.array([1000.0, 1000.0]))
        assert ng.logsumexp(x).item() == pytest.approx(1000.0 + np.log(2.0))

    def test_layernorm_constant_row_maps_to_beta(self):
        x = Tensor(np.full((2, 4), 3.0))
        beta = Tensor(np.arange(4.0))
        out = ng.layernorm(x, Tensor(np.ones(4)), beta)
        np.testing.assert_allclose(out.data, np.tile(np.arange(4.0), (2, 1)))

    def test_gelu_exact(self):
        assert ng.gelu(Tensor(np.array([1.0]))).item() == pytest.approx(0.8413447460685429)

    def test_conv2d_identity_kernel(self):
        x = np.random.default_rng(0).standard_normal((1, 5, 5, 2))
        w = np.zeros((3, 3, 2, 2))
        w[1, 1] = np.eye(2)
        out = ng.conv2d(Tensor(x), Tensor(w), padding=1)
        np.testing.assert_allclose(out.data, x)

    def test_conv2d_output_size(self):
        out = ng.conv2d(Tensor(np.zeros((1, 8, 8, 3))), Tensor(np.zeros((3, 3, 3, 5))), stride=2, padding=1)
        assert out.dims == [1, 4, 4, 5]


class TestErrors:
    def test_add_incompatible(self):
        with pytest.raises(ShapeError):
            ng.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4,))))

    def test_matmul_inner_mismatch(self):
        with pytest.raises(ShapeError):
            ng.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))))

    def test_reshape_bad_dims(self):
        with pytest.raises(ShapeError):
            ng.reshape(Tensor(np.zeros(6)), (4, 2))

    def test_log_negative(self):
        with pytest.raises(DomainError):
            ng.log(Tensor([-1.0]))

    def test_sqrt_negative(self):
        with pytest.raises(DomainError):
            ng.sqrt(Tensor([-0.5]))

    def test_backward_non_scalar(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(GraphError):
            ng.backward(x * 2.0)

    def test_backward_twice(self):
        x = Tensor(np.ones(3), requires_grad=True)
        loss = ng.reduce_sum(x * x)
        ng.backward(loss)
        with pytest.raises(GraphError):
            ng.backward(loss)

    def test_backward_without_grad(self):
        with pytest.raises(GraphError):
            ng.backward(ng.reduce_sum(Tensor(np.ones(3))))


class TestGraph:
    def test_shared_subexpression_accumulates(self):
        x = Tensor(np.array([2.0]), requires_grad=True)
        y = x * x
        ng.backward(ng.reduce_sum(y + y))
        np.testing.assert_allclose(x.grad, [8.0])

    def test_grads_accumulate_across_losses(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        ng.backward(ng.reduce_sum(x))
        ng.backward(ng.reduce_sum(x))
        np.testing.assert_allclose(x.grad, [2.0, 2.0])

    def test_zero_grad(self):
        x = Tensor(np.array([1.0]), requires_grad=True)
        ng.backward(ng.reduce_sum(x))
        ng.zero_grad([x])
        assert x.grad is None

    def test_trace_topological(self):
        x = Tensor(np.ones(2), requires_grad=True)
        loss = ng.reduce_sum(ng.exp(x) * x)
        graph = ng.backward(loss)
        position = {id(t): i for i, t in enumerate(graph.tensors)}
        for t in graph.tensors:
            for p in t._parents:
                if p.requires_grad:
                    assert position[id(p)] < position[id(t)]
        assert [t for t in graph.tensors if t.is_leaf] == [x]
        assert len(graph) == len(graph.tensors)

    def test_no_grad_records_nothing(self):
        x = Tensor(np.ones(2), requires_grad=True)
        with ng.no_grad():
            y = x * 3.0
        assert not y.requires_grad
        assert y.is_leaf

    def test_deep_chain_no_recursion_limit(self):
        x = Tensor(np.array([1.0]), requires_grad=True)
        y = x
        for _ in range(5000):
            y = y + 0.0
        ng.backward(ng.reduce_sum(y))
        np.testing.assert_allclose(x.grad, [1.0])


class TestAdam:
    def test_first_step_moves_by_lr(self):
        # bias-corrected first step is lr·sign(g) up to eps
        p = {"w": np.array([1.0, -1.0])}
        g = {"w": np.array([0.5, -3.0])}
        new, _ = ng.adam_step(p, g, {}, lr=0.1, step=1)
        np.testing.assert_allclose(new["w"], [0.9, -0.9], atol=1e-6)

    def test_missing_grad_unchanged(self):
        p = {"w": np.array([1.0]), "b": np.array([2.0])}
        new, _ = ng.adam_step(p, {"w": np.array([1.0])}, {}, lr=0.1, step=1)
        assert new["b"][0] == 2.0

    def test_bad_step(self):
        with pytest.raises(ConfigError):
            ng.adam_step({}, {}, {}, step=0)

    def test_minimizes_quadratic(self):
        w = Tensor(np.array([3.0, -2.0]), requires_grad=True)
        opt = ng.Adam({"w": w}, lr=0.1)
        for _ in range(300):
            ng.backward(ng.reduce_sum(w * w))
            opt.step()
            opt.zero_grad()
        assert np.all(np.abs(w.data) < 0.1)
        assert opt.step_count == 300

    def test_resume_from_state_dict(self):
        def run(opt, w, steps):
            for _ in range(steps):
                ng.backward(ng.reduce_sum(w * w * w))
                opt.step()
                opt.zero_grad()

        w = Tensor(np.array([1.5, -0.5]), requires_grad=True)
        straight = ng.Adam({"w": w}, lr=0.05)
        run(straight, w, 10)

        w1 = Tensor(np.array([1.5, -0.5]), requires_grad=True)
        first = ng.Adam({"w": w1}, lr=0.05)
        run(first, w1, 4)
        w2 = Tensor(w1.data.copy(), requires_grad=True)
        resumed = ng.Adam({"w": w2}, lr=0.05)
        resumed.load_state_dict(first.state_dict())
        run(resumed, w2, 6)

        assert resumed.step_count == 10
        np.testing.assert_array_equal(w2.data, w.data)

    def test_state_dict_shape_mismatch(self):
        opt = ng.Adam({"w": Tensor(np.zeros(3), requires_grad=True)})
        with pytest.raises(ShapeError):
            opt.load_state_dict({"step": 1, "moments": {"w": (np.zeros(2), np.zeros(2))}})
