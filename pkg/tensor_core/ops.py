"""Differentiable operations on Tensors.

Each operation computes its result with numpy and, when any input requires
gradients, records a backward rule on the inputs' tape. Binary operations
broadcast one-sidedly: the smaller operand is stretched along leading or
size-1 axes to the shape of the larger, and the result always has one of
the operand shapes. Mutual broadcasting such as (3, 1) with (4,) is a
ShapeError. Gradients are summed back over broadcast axes.
"""

from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import expit

from tensor_core.tensor import Tensor, as_tensor, check_finite, common_tape
from utils.errors import DomainError, ShapeError

Operand = Union[Tensor, np.ndarray, float, int]


def _result(data: np.ndarray, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    check_finite(data, op)
    tape = common_tape(parents)
    if tape is None:
        return Tensor(data)
    return tape.record(data, parents, backward, op)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor):
    try:
        shape = np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast")
    if shape != a.shape and shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} broadcast against each other to {shape}")
    return shape


def constant(value) -> Tensor:
    return Tensor(value)


def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), backward, "add")


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(a.data - b.data, (a, b), backward, "sub")


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), backward, "mul")


def div(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    if np.any(b.data == 0):
        raise ZeroDivisionError("div: divisor contains zeros")
    out = a.data / b.data

    def backward(g):
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)

    return _result(out, (a, b), backward, "div")


def neg(a: Operand) -> Tensor:
    a = as_tensor(a)
    return _result(-a.data, (a,), lambda g: (-g,), "neg")


def exp(a: Operand) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,), "exp")


def cos(a: Operand) -> Tensor:
    a = as_tensor(a)
    return _result(np.cos(a.data), (a,), lambda g: (-g * np.sin(a.data),), "cos")


def sqrt(a: Operand) -> Tensor:
    """Square root; the derivative at exactly zero is taken as zero."""
    a = as_tensor(a)
    if np.any(a.data < 0):
        raise DomainError("sqrt: negative input")
    out = np.sqrt(a.data)

    def backward(g):
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, g / (2.0 * safe), 0.0),)

    return _result(out, (a,), backward, "sqrt")


def square(a: Operand) -> Tensor:
    a = as_tensor(a)
    return _result(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,), "square")


def abs_(a: Operand) -> Tensor:
    a = as_tensor(a)
    return _result(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),), "abs")


def silu(a: Operand) -> Tensor:
    """SiLU activation x * sigmoid(x)."""
    a = as_tensor(a)
    sig = expit(a.data)

    def backward(g):
        return (g * (sig * (1.0 + a.data * (1.0 - sig))),)

    return _result(a.data * sig, (a,), backward, "silu")


_UNARY = {"neg": neg, "exp": exp, "cos": cos, "sqrt": sqrt, "square": square, "abs": abs_, "silu": silu}
_BINARY = {"add": add, "sub": sub, "mul": mul, "div": div}


def elementwise(kind: str, a: Operand, b: Optional[Operand] = None) -> Tensor:
    """Dispatch an elementwise operation by name."""
    if kind in _BINARY:
        if b is None:
            raise ShapeError(f"{kind} needs two operands")
        return _BINARY[kind](a, b)
    if kind in _UNARY:
        return _UNARY[kind](a)
    raise ValueError(f"Unknown elementwise operation {kind!r}")


def matmul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _result(a.data @ b.data, (a, b), backward, "matmul")


def transpose(a: Operand, axes: Optional[Sequence[int]] = None) -> Tensor:
    a = as_tensor(a)
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _result(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),), "transpose")


def reshape(a: Operand, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeError(f"reshape: cannot view {a.shape} as {tuple(shape)}")
    return _result(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def concat(tensors: Sequence[Operand], axis: int = -1) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as e:
        raise ShapeError(f"concat: {e}")
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(out, parts, backward, "concat")


def reduce_sum(a: Operand, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(np.asarray(out), (a,), backward, "reduce_sum")


def _check_ids(ids: np.ndarray, n: int, op: str) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ShapeError(f"{op}: index array must be 1-D, got shape {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise IndexError(f"{op}: index out of range [0, {n})")
    return ids


def _scatter_rows(values: np.ndarray, ids: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n,) + values.shape[1:], dtype=values.dtype)
    # np.add.at applies updates in input order, so summation order is fixed
    np.add.at(out, ids, values)
    return out


def segment_sum(a: Operand, segment_ids, num_segments: int) -> Tensor:
    """Sum rows of ``a`` that share a segment id; empty segments are zero rows."""
    a = as_tensor(a)
    if a.ndim == 0:
        raise ShapeError("segment_sum needs at least one dimension")
    ids = _check_ids(segment_ids, num_segments, "segment_sum")
    if ids.shape[0] != a.shape[0]:
        raise ShapeError(f"segment_sum: {ids.shape[0]} ids for {a.shape[0]} rows")
    out = _scatter_rows(a.data, ids, num_segments)
    return _result(out, (a,), lambda g: (g[ids],), "segment_sum")


def take(a: Operand, indices) -> Tensor:
    """Gather rows of ``a`` along the leading axis."""
    a = as_tensor(a)
    ids = _check_ids(indices, a.shape[0], "take")
    n = a.shape[0]
    return _result(a.data[ids], (a,), lambda g: (_scatter_rows(g, ids, n),), "take")


def mask(a: Operand, keep) -> Tensor:
    """Multiply by a constant 0/1 mask; masked entries get zero gradient."""
    a = as_tensor(a)
    keep = np.asarray(keep, dtype=a.data.dtype)
    return _result(a.data * keep, (a,), lambda g: (_unbroadcast(g * keep, a.shape),), "mask")
