from __future__ import annotations

from typing import Any, Callable, NamedTuple, Sequence

import numpy as np

from ..exceptions import CustomIndexError, CustomValueError, NonFiniteError
from ..types import FloatArray
from .enums import OpKind
from .tape import Tape, active_tape

__all__ = [
    'Array',

    'Rule', 'register_rule',

    'apply_primitive', 'as_array', 'constant'
]


class Rule(NamedTuple):
    """Forward evaluation and vector-Jacobian product of one primitive."""

    forward: Callable[..., FloatArray]
    """Called as ``forward(*values, **attrs)``."""

    vjp: Callable[..., tuple[FloatArray | None, ...]]
    """Called as ``vjp(grad, values, out, **attrs)``; returns one partial per input."""


_RULES = dict[OpKind, Rule]()


def register_rule(kind: OpKind, forward: Callable[..., FloatArray], vjp: Callable[..., Any]) -> None:
    _RULES[kind] = Rule(forward, vjp)


class Array:
    """
    Immutable dense float64 value.

    Every Array holds finite values only; building one from NaN or infinity raises :py:class:`NonFiniteError`.
    Arrays produced while a :py:class:`Tape` is recording remember their node so gradients can flow back.
    """

    __slots__ = ('_data', '_tape', '_node')

    __array_ufunc__ = None

    _data: FloatArray
    _tape: Tape | None
    _node: int | None

    def __init__(self, data: Any) -> None:
        if isinstance(data, Array):
            data = data._data

        value = np.array(data, dtype=np.float64)

        if not np.isfinite(value).all():
            raise NonFiniteError('Arrays must hold finite values only!', Array)

        value.flags.writeable = False

        self._data, self._tape, self._node = value, None, None

    @classmethod
    def _wrap(cls, data: FloatArray, tape: Tape | None = None, node: int | None = None) -> Array:
        self = object.__new__(cls)

        if data.flags.writeable:
            data.flags.writeable = False

        self._data, self._tape, self._node = data, tape, node

        return self

    @property
    def data(self) -> FloatArray:
        """Read-only view of the values."""

        return self._data

    @property
    def shape(self) -> tuple[int, ...]:
        return self._data.shape

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return self._data.size

    @property
    def tracked(self) -> bool:
        """Whether this value was recorded on a tape."""

        return self._node is not None

    @property
    def T(self) -> Array:
        return self.transpose()

    def numpy(self) -> FloatArray:
        """Writable copy of the values."""

        return self._data.copy()

    def item(self) -> float:
        if self._data.size != 1:
            raise CustomValueError('Only single-element arrays convert to float!', self.item)

        return float(self._data.reshape(()))

    def __float__(self) -> float:
        return self.item()

    def __len__(self) -> int:
        if not self._data.ndim:
            raise CustomIndexError('A scalar Array has no length!', self.__len__)

        return len(self._data)

    def __repr__(self) -> str:
        tag = ', tracked' if self.tracked else ''

        return f'Array({np.array2string(self._data, precision=6)}{tag})'

    def __add__(self, other: Any) -> Array:
        return apply_primitive(OpKind.ADD, self, other)

    def __radd__(self, other: Any) -> Array:
        return apply_primitive(OpKind.ADD, other, self)

    def __sub__(self, other: Any) -> Array:
        return apply_primitive(OpKind.SUB, self, other)

    def __rsub__(self, other: Any) -> Array:
        return apply_primitive(OpKind.SUB, other, self)

    def __mul__(self, other: Any) -> Array:
        return apply_primitive(OpKind.MUL, self, other)

    def __rmul__(self, other: Any) -> Array:
        return apply_primitive(OpKind.MUL, other, self)

    def __truediv__(self, other: Any) -> Array:
        return apply_primitive(OpKind.DIV, self, other)

    def __rtruediv__(self, other: Any) -> Array:
        return apply_primitive(OpKind.DIV, other, self)

    def __neg__(self) -> Array:
        return apply_primitive(OpKind.NEG, self)

    def __matmul__(self, other: Any) -> Array:
        return apply_primitive(OpKind.MATMUL, self, other)

    def __rmatmul__(self, other: Any) -> Array:
        return apply_primitive(OpKind.MATMUL, other, self)

    def __getitem__(self, index: Any) -> Array:
        return apply_primitive(OpKind.SLICE, self, index=index)

    def sum(self, axis: int | None = None) -> Array:
        return apply_primitive(OpKind.SUM, self, axis=axis)

    def mean(self, axis: int | None = None) -> Array:
        return apply_primitive(OpKind.MEAN, self, axis=axis)

    def var(self, axis: int | None = None) -> Array:
        return apply_primitive(OpKind.VARIANCE, self, axis=axis)

    def transpose(self, axes: Sequence[int] | None = None) -> Array:
        return apply_primitive(OpKind.TRANSPOSE, self, axes=None if axes is None else tuple(axes))

    def reshape(self, *shape: int) -> Array:
        return apply_primitive(OpKind.RESHAPE, self, shape=tuple(shape))


def as_array(value: Any) -> Array:
    """Return ``value`` if it already is an Array, otherwise build a constant from it."""

    return value if isinstance(value, Array) else Array(value)


def constant(value: Any) -> Array:
    """Untracked copy of ``value``; gradients never flow through it."""

    return Array(value.data if isinstance(value, Array) else value)


def apply_primitive(kind: OpKind | str, *inputs: Any, **attrs: Any) -> Array:
    """
    Evaluate one primitive and record it on the active tape.

    Inputs recorded on the active tape are linked to the new node; anything else,
    including Arrays recorded on another tape, enters as a constant.
    The node is only recorded when at least one input is linked.

    :param kind:        Primitive to apply.
    :param inputs:      Operands. Non-Array operands are converted with :py:func:`as_array`.
    :param attrs:       Static attributes of the primitive (axis, shape, subscripts...).

    :raises ShapeMismatchError:     Operands do not conform.
    :raises NonFiniteError:         The result holds a NaN or infinity.
    """

    kind = OpKind.from_param(kind, apply_primitive)

    if (rule := _RULES.get(kind)) is None:
        raise CustomValueError('No rule registered for primitive "{kind}"!', apply_primitive, kind=kind.value)

    arrays = tuple(as_array(value) for value in inputs)
    values = tuple(array._data for array in arrays)

    with np.errstate(all='ignore'):
        out = np.asarray(rule.forward(*values, **attrs), dtype=np.float64)

    if not np.isfinite(out).all():
        raise NonFiniteError('Primitive "{kind}" produced a non-finite value!', apply_primitive, kind=kind.value)

    tape = active_tape()

    if tape is None:
        return Array._wrap(out)

    links = tuple(array._node if array._tape is tape else None for array in arrays)

    if all(link is None for link in links):
        return Array._wrap(out)

    def vjp(grad: FloatArray) -> tuple[FloatArray | None, ...]:
        with np.errstate(all='ignore'):
            return tuple(rule.vjp(grad, values, out, **attrs))

    return Array._wrap(out, tape, tape.record(kind, links, vjp, out.shape))
