import numpy as np
import pytest

from metaimpute.exceptions import ContractError, DimensionError, GraphError, NumericError
from metaimpute.ndgrad import (
    backward,
    constant,
    elementwise,
    masked_reduce,
    matmul,
    parameter,
    reduce_mean,
    reduce_sum,
    reshape,
    softplus,
    transpose,
)
from metaimpute.ndgrad.gradcheck import check_gradients


def test_parameter_and_constant():
    p = parameter([1.0, 2.0])
    c = constant([1.0, 2.0])
    assert p.requires_grad and p.is_leaf
    assert not c.requires_grad
    assert p.tensor.dtype == np.float64
    assert (p + c).requires_grad
    assert not (c + c).requires_grad


def test_elementwise_forward():
    a = parameter([[1.0, -2.0], [3.0, 4.0]])
    b = constant([[2.0, 2.0], [2.0, 2.0]])
    np.testing.assert_allclose((a + b).tensor, [[3, 0], [5, 6]])
    np.testing.assert_allclose((a - b).tensor, [[-1, -4], [1, 2]])
    np.testing.assert_allclose((a * b).tensor, [[2, -4], [6, 8]])
    np.testing.assert_allclose((a / b).tensor, [[0.5, -1], [1.5, 2]])
    np.testing.assert_allclose(a.relu().tensor, [[1, 0], [3, 4]])
    np.testing.assert_allclose(a.square().tensor, [[1, 4], [9, 16]])


def test_broadcast_gradient_sums_back():
    x = parameter(np.ones((3, 4)))
    bias = parameter(np.zeros(4))
    backward((x + bias).sum())
    np.testing.assert_allclose(bias.grad, [3.0, 3.0, 3.0, 3.0])
    np.testing.assert_allclose(x.grad, np.ones((3, 4)))


def test_incompatible_shapes():
    with pytest.raises(DimensionError):
        parameter(np.ones((2, 3))) + parameter(np.ones((4, 3)))
    with pytest.raises(DimensionError):
        matmul(parameter(np.ones((2, 3))), parameter(np.ones((2, 3))))


def test_division_by_zero():
    with pytest.raises(NumericError):
        parameter([1.0]) / constant([0.0])


def test_unknown_op():
    with pytest.raises(ContractError):
        elementwise("pow", parameter([1.0]), parameter([2.0]))  # type: ignore[arg-type]


def test_matmul_batch_gradient():
    """
    [N, M, C] @ [C, D] accumulates the weight gradient over N and M.
    """
    x = constant(np.ones((2, 3, 4)))
    w = parameter(np.ones((4, 5)))
    out = matmul(x, w)
    assert out.shape == (2, 3, 5)
    backward(out.sum())
    np.testing.assert_allclose(w.grad, np.full((4, 5), 6.0))


def test_backward_requires_scalar():
    with pytest.raises(GraphError):
        backward(parameter([1.0, 2.0]) * 2.0)


def test_backward_twice():
    x = parameter([1.0, 2.0])
    loss = (x * x).sum()
    backward(loss)
    with pytest.raises(GraphError):
        backward(loss)


def test_gradients_accumulate_across_graphs():
    x = parameter([1.0, 2.0])
    backward((x * 3.0).sum())
    backward((x * 2.0).sum())
    np.testing.assert_allclose(x.grad, [5.0, 5.0])
    x.zero_grad()
    assert x.grad is None


def test_shared_subexpression():
    """
    A node used twice receives the sum of both gradients.
    """
    x = parameter([2.0])
    y = x * x
    backward((y + y).sum())
    np.testing.assert_allclose(x.grad, [8.0])


def test_item():
    assert parameter([[3.0]]).item() == 3.0
    with pytest.raises(DimensionError):
        parameter([1.0, 2.0]).item()


def test_softplus_is_stable():
    x = parameter([-1000.0, 0.0, 1000.0])
    out = softplus(x)
    np.testing.assert_allclose(out.tensor, [0.0, np.log(2.0), 1000.0])
    backward(out.sum())
    np.testing.assert_allclose(x.grad, [0.0, 0.5, 1.0])


def test_reshape_and_transpose():
    x = parameter(np.arange(6.0))
    with pytest.raises(DimensionError):
        reshape(x, (4, 2))
    m = reshape(x, (2, 3))
    assert transpose(m).shape == (3, 2)
    assert m.T.shape == (3, 2)
    with pytest.raises(DimensionError):
        transpose(x)


def test_reduce_mean_empty_axis():
    with pytest.raises(DimensionError):
        reduce_mean(parameter(np.zeros((0, 3))), axis=0)


@pytest.fixture
def masked_input():
    z = np.arange(12.0).reshape(2, 3, 2)
    mask = np.array([[1.0, 0.0, 1.0], [0.0, 0.0, 1.0]])
    return z, mask


def test_masked_reduce_rows(masked_input):
    z, mask = masked_input
    out = masked_reduce(constant(z), mask, "rows").tensor
    assert out.shape == (3, 2)
    np.testing.assert_allclose(out[0], z[0, 0])
    np.testing.assert_allclose(out[1], [0.0, 0.0])  # no observed entry
    np.testing.assert_allclose(out[2], (z[0, 2] + z[1, 2]) / 2)


def test_masked_reduce_cols(masked_input):
    z, mask = masked_input
    out = masked_reduce(constant(z), mask, "cols").tensor
    assert out.shape == (2, 2)
    np.testing.assert_allclose(out[0], (z[0, 0] + z[0, 2]) / 2)
    np.testing.assert_allclose(out[1], z[1, 2])


def test_masked_reduce_all(masked_input):
    z, mask = masked_input
    out = masked_reduce(constant(z), mask, "all").tensor
    np.testing.assert_allclose(out, (z[0, 0] + z[0, 2] + z[1, 2]) / 3)
    empty = masked_reduce(constant(z), np.zeros((2, 3)), "all").tensor
    np.testing.assert_allclose(empty, [0.0, 0.0])


def test_masked_reduce_gradient_skips_unobserved(masked_input):
    z, mask = masked_input
    x = parameter(z)
    backward(masked_reduce(x, mask, "rows").sum())
    np.testing.assert_allclose(x.grad[:, :, 0], [[1.0, 0.0, 0.5], [0.0, 0.0, 0.5]])


def test_masked_reduce_validates(masked_input):
    z, mask = masked_input
    with pytest.raises(DimensionError):
        masked_reduce(constant(z), mask.T, "rows")
    with pytest.raises(ContractError):
        masked_reduce(constant(z), mask * 2, "rows")
    with pytest.raises(ContractError):
        masked_reduce(constant(z), mask, "diagonal")  # type: ignore[arg-type]


@pytest.mark.parametrize("axis", ["rows", "cols", "all"])
def test_masked_reduce_gradcheck(axis, rng):
    z = parameter(rng.normal(size=(3, 4, 2)))
    mask = (rng.random((3, 4)) < 0.6).astype(float)
    weights = constant(rng.normal(size=masked_reduce(z, mask, axis).shape))
    errors = check_gradients(lambda: (masked_reduce(z, mask, axis) * weights).sum(), {"z": z})
    assert errors["z"] < 1e-6


def test_composite_gradcheck(rng):
    a = parameter(rng.normal(size=(3, 4)))
    b = parameter(rng.normal(size=(4, 2)))
    c = parameter(rng.normal(size=(2,)))

    def loss():
        h = (matmul(a, b) + c).relu()
        return reduce_sum(softplus(h) * h) / 3.0 - reduce_mean(b.square())

    errors = check_gradients(loss, {"a": a, "b": b, "c": c})
    assert max(errors.values()) < 1e-5


def test_array_on_the_left():
    x = parameter([1.0, 2.0])
    out = np.array([3.0, 3.0]) - x
    np.testing.assert_allclose(out.tensor, [2.0, 1.0])
    backward(out.sum())
    np.testing.assert_allclose(x.grad, [-1.0, -1.0])


def test_getitem_gradient():
    w = parameter(np.arange(8.0).reshape(2, 2, 2))
    backward(w[:, :, 1].sum())
    np.testing.assert_allclose(w.grad[:, :, 1], np.ones((2, 2)))
    np.testing.assert_allclose(w.grad[:, :, 0], np.zeros((2, 2)))
