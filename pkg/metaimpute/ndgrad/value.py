"""
A small reverse-mode automatic differentiation engine over dense 64-bit arrays.

Every operation returns a new :class:`Value` that remembers its parents and the
rule for pushing a gradient back to them. Calling :func:`backward` on a scalar
result walks the graph once in reverse topological order.

>>> x = parameter([[1.0, 2.0], [3.0, 4.0]])
>>> loss = (x @ constant([[1.0], [1.0]])).sum()
>>> backward(loss)
>>> x.grad
array([[1., 1.],
       [1., 1.]])
"""

from typing import (
    Callable,
    Iterable,
    List,
    Literal,
    Optional,
    Sequence,
    Set,
    Tuple,
    Union,
)

import numpy as np
import numpy.typing as npt
from typing_extensions import TypeAlias

from metaimpute.exceptions import ContractError, DimensionError, GraphError, NumericError

#: Dense row-major array of 64-bit floats. Shape and element count always agree.
Tensor: TypeAlias = npt.NDArray[np.float64]

#: Anything that can be turned into a :class:`Value`.
Operand: TypeAlias = Union["Value", Tensor, float, int, Sequence[float]]

#: Which positions a masked average runs over. ``"rows"`` averages each column
#: over its rows, ``"cols"`` averages each row over its columns.
Axis: TypeAlias = Literal["rows", "cols", "all"]

ElementwiseOp: TypeAlias = Literal["add", "sub", "mul", "div", "relu", "square"]

BackwardRule: TypeAlias = Callable[[Tensor], Sequence[Optional[Tensor]]]


class Value:
    """
    A node in the computation graph.

    Leaves are created with :func:`parameter` (gradients wanted) or
    :func:`constant` (no gradients). Everything else is produced by operations.
    """

    __slots__ = ("tensor", "grad", "requires_grad", "parents", "_rule", "_op", "_spent")

    # ndarray <op> Value falls through to the reflected Value operator
    __array_ufunc__ = None

    #: Forward result.
    tensor: Tensor

    #: Accumulated gradient, allocated on first use. Same shape as ``tensor``.
    grad: Optional[Tensor]

    def __init__(
        self,
        tensor: Operand,
        requires_grad: bool = False,
        parents: Tuple["Value", ...] = (),
        rule: Optional[BackwardRule] = None,
        op: str = "",
    ) -> None:
        self.tensor = np.asarray(tensor, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.parents = parents if requires_grad else ()
        self._rule = rule if requires_grad else None
        self._op = op
        self._spent = False

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Value(shape={self.shape}{flag}{', op=' + self._op if self._op else ''})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.tensor.shape)

    @property
    def ndim(self) -> int:
        return int(self.tensor.ndim)

    @property
    def is_leaf(self) -> bool:
        return self._rule is None

    @property
    def T(self) -> "Value":
        return transpose(self)

    def item(self) -> float:
        if self.tensor.size != 1:
            raise DimensionError(f"item() needs a single element, got shape {self.shape}")
        return float(self.tensor.reshape(()))

    def detach(self) -> "Value":
        """
        Return a constant holding a copy of this node's tensor.
        """
        return Value(self.tensor.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def _accumulate(self, grad: Tensor) -> None:
        if grad.shape != self.tensor.shape:
            raise DimensionError(
                f"gradient shape {grad.shape} does not match value shape {self.shape}"
                f" (op {self._op or 'leaf'})"
            )
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64)
        else:
            self.grad = self.grad + grad

    # Operator overloads delegate to the module-level functions.

    def __add__(self, other: Operand) -> "Value":
        return elementwise("add", self, other)

    def __radd__(self, other: Operand) -> "Value":
        return elementwise("add", other, self)

    def __sub__(self, other: Operand) -> "Value":
        return elementwise("sub", self, other)

    def __rsub__(self, other: Operand) -> "Value":
        return elementwise("sub", other, self)

    def __mul__(self, other: Operand) -> "Value":
        return elementwise("mul", self, other)

    def __rmul__(self, other: Operand) -> "Value":
        return elementwise("mul", other, self)

    def __truediv__(self, other: Operand) -> "Value":
        return elementwise("div", self, other)

    def __rtruediv__(self, other: Operand) -> "Value":
        return elementwise("div", other, self)

    def __neg__(self) -> "Value":
        return _unary("neg", self, -self.tensor, lambda g: -g)

    def __matmul__(self, other: Operand) -> "Value":
        return matmul(self, other)

    def __rmatmul__(self, other: Operand) -> "Value":
        return matmul(other, self)

    def __getitem__(self, index: object) -> "Value":
        a = self
        out = a.tensor[index]  # type: ignore[index]

        def rule(g: Tensor) -> Sequence[Optional[Tensor]]:
            full = np.zeros_like(a.tensor)
            np.add.at(full, index, g)  # type: ignore[arg-type]
            return (full,)

        return _node(out, (a,), rule, "getitem")

    def sum(self, axis: Optional[int] = None) -> "Value":
        return reduce_sum(self, axis)

    def mean(self, axis: Optional[int] = None) -> "Value":
        return reduce_mean(self, axis)

    def reshape(self, *shape: int) -> "Value":
        return reshape(self, shape)

    def relu(self) -> "Value":
        return elementwise("relu", self)

    def square(self) -> "Value":
        return elementwise("square", self)


def parameter(tensor: Operand) -> Value:
    """
    Create a leaf whose gradient will be accumulated by :func:`backward`.
    """
    return Value(np.array(tensor, dtype=np.float64), requires_grad=True)


def constant(tensor: Operand) -> Value:
    """
    Create a leaf that never receives a gradient.
    """
    return Value(np.array(tensor, dtype=np.float64), requires_grad=False)


def as_value(x: Operand) -> Value:
    return x if isinstance(x, Value) else constant(x)


def _node(
    tensor: Tensor,
    parents: Tuple[Value, ...],
    rule: BackwardRule,
    op: str,
) -> Value:
    requires_grad = any(p.requires_grad for p in parents)
    return Value(tensor, requires_grad=requires_grad, parents=parents, rule=rule, op=op)


def _unary(op: str, a: Value, out: Tensor, rule: Callable[[Tensor], Tensor]) -> Value:
    return _node(out, (a,), lambda g: (rule(g),), op)


def _unbroadcast(grad: Tensor, shape: Tuple[int, ...]) -> Tensor:
    """
    Sum ``grad`` down to ``shape``, undoing numpy broadcasting.
    """
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Value, b: Value) -> Tuple[int, ...]:
    try:
        return tuple(np.broadcast_shapes(a.shape, b.shape))
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast")


def elementwise(op: ElementwiseOp, a: Operand, b: Optional[Operand] = None) -> Value:
    """
    Apply an elementwise operation with its backward rule.

    Binary operations (``add``, ``sub``, ``mul``, ``div``) follow numpy
    broadcasting; gradients are summed back to each operand's shape.
    Unary operations (``relu``, ``square``) ignore ``b``.

    Raises:
        DimensionError: if the operands do not broadcast.
        NumericError: if ``div`` meets an exact zero in the denominator.
    """
    x = as_value(a)
    if op == "relu":
        return _unary("relu", x, np.maximum(x.tensor, 0.0), lambda g: g * (x.tensor > 0))
    if op == "square":
        return _unary("square", x, x.tensor * x.tensor, lambda g: 2.0 * x.tensor * g)

    if b is None:
        raise ContractError(f"{op} needs two operands")
    y = as_value(b)
    _broadcast_shape(op, x, y)
    xs, ys = x.shape, y.shape

    if op == "add":
        return _node(
            x.tensor + y.tensor,
            (x, y),
            lambda g: (_unbroadcast(g, xs), _unbroadcast(g, ys)),
            op,
        )
    if op == "sub":
        return _node(
            x.tensor - y.tensor,
            (x, y),
            lambda g: (_unbroadcast(g, xs), _unbroadcast(-g, ys)),
            op,
        )
    if op == "mul":
        return _node(
            x.tensor * y.tensor,
            (x, y),
            lambda g: (
                _unbroadcast(g * y.tensor, xs),
                _unbroadcast(g * x.tensor, ys),
            ),
            op,
        )
    if op == "div":
        if np.any(y.tensor == 0.0):
            raise NumericError("division by zero")
        return _node(
            x.tensor / y.tensor,
            (x, y),
            lambda g: (
                _unbroadcast(g / y.tensor, xs),
                _unbroadcast(-g * x.tensor / (y.tensor * y.tensor), ys),
            ),
            op,
        )
    raise ContractError(f"unknown elementwise op {op!r}")


def relu(a: Operand) -> Value:
    return elementwise("relu", a)


def square(a: Operand) -> Value:
    return elementwise("square", a)


def softplus(a: Operand) -> Value:
    """
    ``log(1 + exp(a))``, computed without overflow.
    """
    x = as_value(a)
    sigmoid = 0.5 * (1.0 + np.tanh(0.5 * x.tensor))
    return _unary("softplus", x, np.logaddexp(0.0, x.tensor), lambda g: g * sigmoid)


def matmul(a: Operand, b: Operand) -> Value:
    """
    Matrix product ``a @ b`` where ``b`` is two-dimensional and ``a`` may carry
    leading batch dimensions (``[..., K] @ [K, M] -> [..., M]``).

    Raises:
        DimensionError: if the inner dimensions disagree.
    """
    x, y = as_value(a), as_value(b)
    if x.ndim < 2 or y.ndim != 2 or x.shape[-1] != y.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {x.shape} by {y.shape}")
    k, m = y.shape

    def rule(g: Tensor) -> Sequence[Optional[Tensor]]:
        ga = g @ y.tensor.T if x.requires_grad else None
        gb = x.tensor.reshape(-1, k).T @ g.reshape(-1, m) if y.requires_grad else None
        return (ga, gb)

    return _node(np.matmul(x.tensor, y.tensor), (x, y), rule, "matmul")


def transpose(a: Operand) -> Value:
    x = as_value(a)
    if x.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got shape {x.shape}")
    return _unary("transpose", x, x.tensor.T, lambda g: g.T)


def reshape(a: Operand, shape: Sequence[int]) -> Value:
    x = as_value(a)
    try:
        out = x.tensor.reshape(tuple(shape))
    except ValueError:
        raise DimensionError(f"cannot reshape {x.shape} into {tuple(shape)}")
    return _unary("reshape", x, out, lambda g: g.reshape(x.shape))


def reduce_sum(a: Operand, axis: Optional[int] = None) -> Value:
    x = as_value(a)
    if axis is None:
        return _unary(
            "sum", x, np.asarray(x.tensor.sum()), lambda g: np.full(x.shape, float(g))
        )
    out = x.tensor.sum(axis=axis)
    return _unary(
        "sum",
        x,
        out,
        lambda g: np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),
    )


def reduce_mean(a: Operand, axis: Optional[int] = None) -> Value:
    x = as_value(a)
    count = x.tensor.size if axis is None else x.shape[axis]
    if count == 0:
        raise DimensionError(f"mean over an empty axis of shape {x.shape}")
    return reduce_sum(x, axis) * (1.0 / count)


def masked_reduce(z: Operand, mask: Tensor, axis: Axis) -> Value:
    """
    Average ``z[n, m, :]`` over observed positions (``mask[n, m] == 1``).

    * ``axis="rows"``: result ``[M, C]``, each column averaged over its rows.
    * ``axis="cols"``: result ``[N, C]``, each row averaged over its columns.
    * ``axis="all"``: result ``[C]``, averaged over the whole matrix.

    A row, column or matrix with no observed entries averages to 0, and the
    backward pass only reaches observed positions.

    Raises:
        DimensionError: if ``mask`` is not ``z.shape[:2]``.
        ContractError: if ``mask`` has entries other than 0 and 1.
    """
    x = as_value(z)
    b = np.asarray(mask, dtype=np.float64)
    if x.ndim != 3 or b.shape != x.shape[:2]:
        raise DimensionError(f"masked_reduce: value {x.shape} and mask {b.shape}")
    if not np.all((b == 0.0) | (b == 1.0)):
        raise ContractError("mask entries must be 0 or 1")

    weighted = b[:, :, None] * x.tensor
    if axis == "rows":
        count = b.sum(axis=0)
        weights = b / np.where(count > 0, count, 1.0)[None, :]
        out = weighted.sum(axis=0) / np.where(count > 0, count, 1.0)[:, None]

        def rule(g: Tensor) -> Sequence[Optional[Tensor]]:
            return (weights[:, :, None] * g[None, :, :],)

    elif axis == "cols":
        count = b.sum(axis=1)
        weights = b / np.where(count > 0, count, 1.0)[:, None]
        out = weighted.sum(axis=1) / np.where(count > 0, count, 1.0)[:, None]

        def rule(g: Tensor) -> Sequence[Optional[Tensor]]:
            return (weights[:, :, None] * g[:, None, :],)

    elif axis == "all":
        total = float(b.sum())
        denominator = total if total > 0 else 1.0
        weights = b / denominator
        out = weighted.sum(axis=(0, 1)) / denominator

        def rule(g: Tensor) -> Sequence[Optional[Tensor]]:
            return (weights[:, :, None] * g[None, None, :],)

    else:
        raise ContractError(f"unknown axis {axis!r}")

    return _node(out, (x,), rule, f"masked_reduce[{axis}]")


def _topological_order(root: Value) -> List[Value]:
    """
    Nodes that require gradients, each parent listed before its children.
    """
    order: List[Value] = []
    visited: Set[int] = set()
    stack: List[Tuple[Value, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Value) -> None:
    """
    Accumulate ``d loss / d leaf`` into ``leaf.grad`` for every leaf that
    requires gradients. Leaf gradients add up across calls on different graphs;
    call :meth:`Value.zero_grad` on the leaves to start over.

    Raises:
        GraphError: if ``loss`` is not a scalar, or if this graph was already
            differentiated.
    """
    if loss.tensor.size != 1:
        raise GraphError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if loss._spent:
        raise GraphError("backward() was already called on this graph")
    loss._spent = True
    if not loss.requires_grad:
        return

    order = _topological_order(loss)
    loss._accumulate(np.ones_like(loss.tensor))
    for node in reversed(order):
        if node._rule is None or node.grad is None:
            continue
        grads = node._rule(node.grad)
        for parent, grad in zip(node.parents, grads):
            if grad is not None and parent.requires_grad:
                parent._accumulate(np.asarray(grad, dtype=np.float64))
        if node is not loss:
            # interior gradients are not needed once pushed to the parents
            node.grad = None


def zero_grad(values: Iterable[Value]) -> None:
    for value in values:
        value.zero_grad()
