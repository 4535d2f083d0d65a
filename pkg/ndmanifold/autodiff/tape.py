from __future__ import annotations

from contextvars import ContextVar, Token
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Callable, Mapping

import numpy as np

from ..exceptions import CustomKeyError, CustomRuntimeError, ShapeMismatchError
from ..types import FloatArray
from .enums import OpKind

if TYPE_CHECKING:
    from .array import Array
    from .params import ParamStore

__all__ = [
    'Node', 'Tape',

    'active_tape', 'backward'
]

VJPFunc = Callable[[FloatArray], tuple[FloatArray | None, ...]]

_active: ContextVar[Tape | None] = ContextVar('ndmanifold_active_tape', default=None)


def active_tape() -> Tape | None:
    """Tape currently recording in this context, if any."""

    return _active.get()


@dataclass(slots=True, frozen=True)
class Node:
    """One recorded operation. Inputs reference earlier node indices, or None for constants."""

    kind: OpKind
    inputs: tuple[int | None, ...]
    vjp: VJPFunc | None
    shape: tuple[int, ...]


class Tape:
    """
    Ordered record of primitive operations.

    Nodes are appended as operations execute, so every node's inputs precede it.
    Use as a context manager to make it the recording tape:

    .. code-block:: python

        with Tape() as tape:
            theta = tape.watch('theta', [1.0, 2.0])
            loss = (theta * theta).sum()

        grads = tape.backward(loss)
    """

    __slots__ = ('nodes', 'leaves', '_token')

    def __init__(self) -> None:
        self.nodes = list[Node]()
        self.leaves = dict[str, int]()
        self._token: Token[Tape | None] | None = None

    def __enter__(self) -> Tape:
        if self._token is not None:
            raise CustomRuntimeError('This tape is already recording!', self.__enter__)

        self._token = _active.set(self)

        return self

    def __exit__(self, *args: Any) -> None:
        if self._token is not None:
            _active.reset(self._token)
            self._token = None

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, kind: OpKind, inputs: tuple[int | None, ...], vjp: VJPFunc | None, shape: tuple[int, ...]) -> int:
        """Append a node and return its index."""

        self.nodes.append(Node(kind, inputs, vjp, shape))

        return len(self.nodes) - 1

    def watch(self, name: str, value: Any) -> Array:
        """
        Register a named parameter and return it as a tracked Array.

        :param name:    Unique parameter name, used as the key of the gradients returned by :py:meth:`backward`.
        :param value:   Parameter value.
        """

        from .array import Array

        if name in self.leaves:
            raise CustomKeyError('Parameter "{name}" is already watched!', self.watch, name=name)

        data = value.data if isinstance(value, Array) else value
        array = Array(data)

        index = self.record(OpKind.LEAF, (), None, array.shape)
        self.leaves[name] = index

        return Array._wrap(array.data, self, index)

    def watch_store(self, store: ParamStore | Mapping[str, Any]) -> dict[str, Array]:
        """Watch every entry of a parameter store, keeping its order."""

        return {name: self.watch(name, value) for name, value in store.items()}

    def backward(self, root: Array) -> dict[str, FloatArray]:
        """
        Reverse pass from a scalar root.

        Partials are accumulated in reverse node order, so identical tapes give bit-identical results.

        :param root:    Scalar output. Constants (untracked) give zero gradients everywhere.

        :return:        Gradient for every watched parameter, keyed by name. Unused parameters get exact zeros.
        """

        if root.shape != ():
            raise ShapeMismatchError(
                'The root must be a scalar, got shape {shape}!', self.backward, shape=root.shape
            )

        grads: list[FloatArray | None] = [None] * len(self.nodes)

        if root._tape is self and root._node is not None:
            grads[root._node] = np.ones((), np.float64)

            for index in range(root._node, -1, -1):
                grad = grads[index]

                if grad is None:
                    continue

                node = self.nodes[index]

                if node.vjp is None:
                    continue

                for source, partial in zip(node.inputs, node.vjp(grad)):
                    if source is None or partial is None:
                        continue

                    current = grads[source]
                    grads[source] = partial if current is None else current + partial

        out = dict[str, FloatArray]()

        for name, index in self.leaves.items():
            grad = grads[index]
            shape = self.nodes[index].shape

            out[name] = np.zeros(shape, np.float64) if grad is None else np.array(grad, np.float64).reshape(shape)

        return out


def backward(tape: Tape, root: Array) -> dict[str, FloatArray]:
    """Functional form of :py:meth:`Tape.backward`."""

    return tape.backward(root)
