from __future__ import annotations

from typing import Any, Sequence

import numpy as np

from ..exceptions import ShapeMismatchError, SingularMetricError
from ..types import FloatArray
from .array import Array, apply_primitive, register_rule
from .enums import OpKind

__all__ = [
    'add', 'sub', 'mul', 'div', 'neg',
    'matmul', 'einsum',

    'tanh', 'exp', 'log', 'sqrt', 'square', 'softplus', 'clip',

    'reduce_sum', 'reduce_mean', 'variance',

    'concat', 'take', 'transpose', 'reshape', 'broadcast',

    'inv', 'logdet'
]


def _check_elementwise(kind: OpKind, a: FloatArray, b: FloatArray) -> None:
    if a.shape != b.shape and a.ndim and b.ndim:
        raise ShapeMismatchError(
            'Cannot {kind} shapes {a} and {b}; only equal shapes or a scalar operand are allowed!',
            kind.value, a=a.shape, b=b.shape, kind=kind.value
        )


def _reduce_to(grad: FloatArray, shape: tuple[int, ...]) -> FloatArray:
    if grad.shape == shape:
        return grad

    return np.asarray(grad.sum()).reshape(shape)


def _expand(grad: FloatArray, shape: tuple[int, ...], axis: int | None) -> FloatArray:
    if axis is not None:
        grad = np.expand_dims(grad, axis)

    return np.broadcast_to(grad, shape)


def _swap(a: FloatArray) -> FloatArray:
    return np.swapaxes(a, -1, -2)


# Elementwise arithmetic

def _add(a: FloatArray, b: FloatArray) -> FloatArray:
    _check_elementwise(OpKind.ADD, a, b)
    return a + b


def _sub(a: FloatArray, b: FloatArray) -> FloatArray:
    _check_elementwise(OpKind.SUB, a, b)
    return a - b


def _mul(a: FloatArray, b: FloatArray) -> FloatArray:
    _check_elementwise(OpKind.MUL, a, b)
    return a * b


def _div(a: FloatArray, b: FloatArray) -> FloatArray:
    _check_elementwise(OpKind.DIV, a, b)
    return a / b


register_rule(OpKind.ADD, _add, lambda g, v, out: (_reduce_to(g, v[0].shape), _reduce_to(g, v[1].shape)))
register_rule(OpKind.SUB, _sub, lambda g, v, out: (_reduce_to(g, v[0].shape), _reduce_to(-g, v[1].shape)))
register_rule(
    OpKind.MUL, _mul,
    lambda g, v, out: (_reduce_to(g * v[1], v[0].shape), _reduce_to(g * v[0], v[1].shape))
)
register_rule(
    OpKind.DIV, _div,
    lambda g, v, out: (_reduce_to(g / v[1], v[0].shape), _reduce_to(-g * v[0] / (v[1] * v[1]), v[1].shape))
)
register_rule(OpKind.NEG, np.negative, lambda g, v, out: (-g, ))


# Unary functions

register_rule(OpKind.TANH, np.tanh, lambda g, v, out: (g * (1.0 - out * out), ))
register_rule(OpKind.EXP, np.exp, lambda g, v, out: (g * out, ))
register_rule(OpKind.LOG, np.log, lambda g, v, out: (g / v[0], ))
register_rule(OpKind.SQRT, np.sqrt, lambda g, v, out: (g * 0.5 / out, ))
register_rule(OpKind.SQUARE, np.square, lambda g, v, out: (g * 2.0 * v[0], ))
register_rule(
    OpKind.SOFTPLUS, lambda a: np.logaddexp(0.0, a),
    lambda g, v, out: (g * 0.5 * (1.0 + np.tanh(0.5 * v[0])), )
)
register_rule(
    OpKind.CLIP, lambda a, low, high: np.clip(a, low, high),
    lambda g, v, out, low, high: (g * ((v[0] >= low) & (v[0] <= high)), )
)


# Matrix products

def _matmul(a: FloatArray, b: FloatArray) -> FloatArray:
    if a.ndim < 2 or b.ndim < 2 or a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError('Cannot matmul shapes {a} and {b}!', OpKind.MATMUL.value, a=a.shape, b=b.shape)

    return a @ b


register_rule(OpKind.MATMUL, _matmul, lambda g, v, out: (g @ _swap(v[1]), _swap(v[0]) @ g))


def _parse_einsum(subscripts: str) -> tuple[str, str, str]:
    expr = subscripts.replace(' ', '')

    if '->' not in expr or '.' in expr:
        raise ShapeMismatchError('Einsum needs explicit "->" output and no ellipsis: "{s}"', 'einsum', s=subscripts)

    operands, output = expr.split('->')
    parts = operands.split(',')

    if len(parts) != 2:
        raise ShapeMismatchError('Einsum takes exactly two operands: "{s}"', 'einsum', s=subscripts)

    a, b = parts

    for sub in (a, b, output):
        if len(set(sub)) != len(sub):
            raise ShapeMismatchError('Repeated index inside one operand: "{s}"', 'einsum', s=subscripts)

    if not set(a) <= set(b) | set(output) or not set(b) <= set(a) | set(output):
        raise ShapeMismatchError(
            'Every operand index must appear in the output or the other operand: "{s}"', 'einsum', s=subscripts
        )

    if not set(output) <= set(a) | set(b):
        raise ShapeMismatchError('Unknown output index: "{s}"', 'einsum', s=subscripts)

    return a, b, output


def _einsum(a: FloatArray, b: FloatArray, subscripts: str) -> FloatArray:
    sa, sb, so = _parse_einsum(subscripts)

    if a.ndim != len(sa) or b.ndim != len(sb):
        raise ShapeMismatchError(
            'Einsum "{s}" does not match shapes {a} and {b}!', 'einsum', s=subscripts, a=a.shape, b=b.shape
        )

    try:
        return np.einsum(f'{sa},{sb}->{so}', a, b)
    except ValueError as e:
        raise ShapeMismatchError(
            'Einsum "{s}" does not match shapes {a} and {b}!', 'einsum', e, s=subscripts, a=a.shape, b=b.shape
        ) from e


def _einsum_vjp(g: FloatArray, v: tuple[FloatArray, ...], out: FloatArray, subscripts: str) -> tuple[FloatArray, ...]:
    sa, sb, so = _parse_einsum(subscripts)

    return np.einsum(f'{so},{sb}->{sa}', g, v[1]), np.einsum(f'{so},{sa}->{sb}', g, v[0])


register_rule(OpKind.EINSUM, _einsum, _einsum_vjp)


# Reductions

def _sum_vjp(g: FloatArray, v: tuple[FloatArray, ...], out: FloatArray, axis: int | None) -> tuple[FloatArray]:
    return (_expand(g, v[0].shape, axis), )


def _mean_vjp(g: FloatArray, v: tuple[FloatArray, ...], out: FloatArray, axis: int | None) -> tuple[FloatArray]:
    n = v[0].size if axis is None else v[0].shape[axis]

    return (_expand(g / n, v[0].shape, axis), )


def _variance_vjp(g: FloatArray, v: tuple[FloatArray, ...], out: FloatArray, axis: int | None) -> tuple[FloatArray]:
    a = v[0]
    n = a.size if axis is None else a.shape[axis]
    centred = a - np.mean(a, axis=axis, keepdims=True)

    return (_expand(g, a.shape, axis) * (2.0 / n) * centred, )


def _reduction(func: Any) -> Any:
    def forward(a: FloatArray, axis: int | None) -> FloatArray:
        if (a.size if axis is None else a.shape[axis]) == 0:
            raise ShapeMismatchError('Cannot reduce over an empty axis!', func.__name__)

        return np.asarray(func(a, axis=axis))

    return forward


register_rule(OpKind.SUM, _reduction(np.sum), _sum_vjp)
register_rule(OpKind.MEAN, _reduction(np.mean), _mean_vjp)
register_rule(OpKind.VARIANCE, _reduction(np.var), _variance_vjp)


# Shape manipulation

def _concat(*values: FloatArray, axis: int) -> FloatArray:
    first = values[0]

    for value in values[1:]:
        if value.ndim != first.ndim or np.delete(value.shape, axis).tolist() != np.delete(first.shape, axis).tolist():
            raise ShapeMismatchError(
                'Cannot concat shapes {a} and {b} along axis {axis}!', 'concat', a=first.shape, b=value.shape, axis=axis
            )

    return np.concatenate(values, axis=axis)


def _concat_vjp(g: FloatArray, v: tuple[FloatArray, ...], out: FloatArray, axis: int) -> tuple[FloatArray, ...]:
    splits = np.cumsum([value.shape[axis] for value in v])[:-1]

    return tuple(np.split(g, splits, axis=axis))


def _take_vjp(g: FloatArray, v: tuple[FloatArray, ...], out: FloatArray, index: Any) -> tuple[FloatArray]:
    grad = np.zeros(v[0].shape, np.float64)
    np.add.at(grad, index, g)

    return (grad, )


def _transpose_vjp(
    g: FloatArray, v: tuple[FloatArray, ...], out: FloatArray, axes: tuple[int, ...] | None
) -> tuple[FloatArray]:
    if axes is None:
        return (np.transpose(g), )

    return (np.transpose(g, np.argsort(axes)), )


def _reshape(a: FloatArray, shape: tuple[int, ...]) -> FloatArray:
    if int(np.prod(shape)) != a.size:
        raise ShapeMismatchError('Cannot reshape {a} into {b}!', 'reshape', a=a.shape, b=shape)

    return a.reshape(shape)


def _broadcast(a: FloatArray, shape: tuple[int, ...]) -> FloatArray:
    try:
        return np.broadcast_to(a, shape)
    except ValueError as e:
        raise ShapeMismatchError('Cannot broadcast {a} to {b}!', 'broadcast', e, a=a.shape, b=shape)


def _broadcast_vjp(
    g: FloatArray, v: tuple[FloatArray, ...], out: FloatArray, shape: tuple[int, ...]
) -> tuple[FloatArray]:
    target = v[0].shape
    grad = g.sum(axis=tuple(range(g.ndim - len(target))))
    expanded = tuple(i for i, (s, t) in enumerate(zip(target, grad.shape)) if s == 1 and t != 1)

    return (grad.sum(axis=expanded, keepdims=True).reshape(target), )


register_rule(OpKind.CONCAT, _concat, _concat_vjp)
register_rule(OpKind.SLICE, lambda a, index: a[index], _take_vjp)
register_rule(OpKind.TRANSPOSE, lambda a, axes: np.transpose(a, axes), _transpose_vjp)
register_rule(OpKind.RESHAPE, _reshape, lambda g, v, out, shape: (g.reshape(v[0].shape), ))
register_rule(OpKind.BROADCAST, _broadcast, _broadcast_vjp)


# Linear algebra

def _check_square(a: FloatArray, name: str) -> None:
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ShapeMismatchError('{name} needs square matrices, got shape {shape}!', name, name=name, shape=a.shape)


def _inv(a: FloatArray) -> FloatArray:
    _check_square(a, 'inv')

    try:
        return np.linalg.inv(a)
    except np.linalg.LinAlgError as e:
        raise SingularMetricError('Matrix is singular!', 'inv', e)


def _logdet(a: FloatArray) -> FloatArray:
    _check_square(a, 'logdet')

    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as e:
        raise SingularMetricError('Matrix is not positive-definite!', 'logdet', e)

    return 2.0 * np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(axis=-1)


def _logdet_vjp(g: FloatArray, v: tuple[FloatArray, ...], out: FloatArray) -> tuple[FloatArray]:
    return (np.asarray(g)[..., None, None] * _swap(np.linalg.inv(v[0])), )


register_rule(OpKind.INV, _inv, lambda g, v, out: (-(_swap(out) @ g @ _swap(out)), ))
register_rule(OpKind.LOGDET, _logdet, _logdet_vjp)


# Public functional surface

def add(a: Any, b: Any) -> Array:
    return apply_primitive(OpKind.ADD, a, b)


def sub(a: Any, b: Any) -> Array:
    return apply_primitive(OpKind.SUB, a, b)


def mul(a: Any, b: Any) -> Array:
    return apply_primitive(OpKind.MUL, a, b)


def div(a: Any, b: Any) -> Array:
    return apply_primitive(OpKind.DIV, a, b)


def neg(a: Any) -> Array:
    return apply_primitive(OpKind.NEG, a)


def matmul(a: Any, b: Any) -> Array:
    """Matrix product over the last two axes. Leading axes must be identical."""

    return apply_primitive(OpKind.MATMUL, a, b)


def einsum(subscripts: str, a: Any, b: Any) -> Array:
    """
    Two-operand Einstein summation with an explicit output, e.g. ``'nkl,nijl->nkij'``.

    Every index of an operand must appear in the output or in the other operand.
    """

    return apply_primitive(OpKind.EINSUM, a, b, subscripts=subscripts)


def tanh(a: Any) -> Array:
    return apply_primitive(OpKind.TANH, a)


def exp(a: Any) -> Array:
    return apply_primitive(OpKind.EXP, a)


def log(a: Any) -> Array:
    return apply_primitive(OpKind.LOG, a)


def sqrt(a: Any) -> Array:
    return apply_primitive(OpKind.SQRT, a)


def square(a: Any) -> Array:
    return apply_primitive(OpKind.SQUARE, a)


def softplus(a: Any) -> Array:
    return apply_primitive(OpKind.SOFTPLUS, a)


def clip(a: Any, low: float, high: float) -> Array:
    """Clamp into ``[low, high]``. The gradient is zero where the input lies outside the band."""

    return apply_primitive(OpKind.CLIP, a, low=float(low), high=float(high))


def reduce_sum(a: Any, axis: int | None = None) -> Array:
    return apply_primitive(OpKind.SUM, a, axis=axis)


def reduce_mean(a: Any, axis: int | None = None) -> Array:
    return apply_primitive(OpKind.MEAN, a, axis=axis)


def variance(a: Any, axis: int | None = None) -> Array:
    """Population variance, dividing by N."""

    return apply_primitive(OpKind.VARIANCE, a, axis=axis)


def concat(arrays: Sequence[Any], axis: int = 0) -> Array:
    if not arrays:
        raise ShapeMismatchError('Nothing to concatenate!', concat)

    return apply_primitive(OpKind.CONCAT, *arrays, axis=axis)


def take(a: Any, index: Any) -> Array:
    """Index with anything numpy accepts: slices, integers, integer arrays."""

    return apply_primitive(OpKind.SLICE, a, index=index)


def transpose(a: Any, axes: Sequence[int] | None = None) -> Array:
    return apply_primitive(OpKind.TRANSPOSE, a, axes=None if axes is None else tuple(axes))


def reshape(a: Any, shape: Sequence[int]) -> Array:
    return apply_primitive(OpKind.RESHAPE, a, shape=tuple(shape))


def broadcast(a: Any, shape: Sequence[int]) -> Array:
    """Explicitly expand to ``shape``; the gradient sums over the expanded axes."""

    return apply_primitive(OpKind.BROADCAST, a, shape=tuple(shape))


def inv(a: Any) -> Array:
    """Batched matrix inverse over the last two axes."""

    return apply_primitive(OpKind.INV, a)


def logdet(a: Any) -> Array:
    """Batched log-determinant of symmetric positive-definite matrices, through their Cholesky factors."""

    return apply_primitive(OpKind.LOGDET, a)
