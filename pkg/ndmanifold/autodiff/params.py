from __future__ import annotations

from typing import Any, Iterable, Iterator, Mapping

import numpy as np

from ..exceptions import CustomKeyError, NonFiniteError, ShapeMismatchError
from ..types import FloatArray
from .array import Array

__all__ = [
    'ParamStore'
]


class ParamStore(Mapping[str, FloatArray]):
    """
    Named parameter arrays with a stable iteration order.

    Names are unique and iteration follows insertion order, so :py:meth:`flatten`
    and :py:meth:`unflatten` agree on the layout and round-trip bit-exactly.
    Stored arrays are read-only copies.
    """

    __slots__ = ('_values', )

    def __init__(self, items: Mapping[str, Any] | Iterable[tuple[str, Any]] = ()) -> None:
        self._values = dict[str, FloatArray]()

        for name, value in (items.items() if isinstance(items, Mapping) else items):
            self.add(name, value)

    def add(self, name: str, value: Any) -> None:
        """Register a new parameter. Duplicate names are rejected."""

        if name in self._values:
            raise CustomKeyError('Parameter "{name}" already exists!', self.add, name=name)

        self._values[name] = self._freeze(name, value)

    @staticmethod
    def _freeze(name: str, value: Any) -> FloatArray:
        array = np.array(value.data if isinstance(value, Array) else value, dtype=np.float64)

        if not np.isfinite(array).all():
            raise NonFiniteError('Parameter "{name}" holds non-finite values!', ParamStore, name=name)

        array.flags.writeable = False

        return array

    def __getitem__(self, name: str) -> FloatArray:
        try:
            return self._values[name]
        except KeyError:
            raise CustomKeyError('Unknown parameter "{name}"!', self.__getitem__, name=name) from None

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def __repr__(self) -> str:
        shapes = ', '.join(f'{name}: {value.shape}' for name, value in self._values.items())

        return f'ParamStore({shapes})'

    @property
    def size(self) -> int:
        """Total number of scalar parameters."""

        return sum(value.size for value in self._values.values())

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {name: value.shape for name, value in self._values.items()}

    def copy(self) -> ParamStore:
        return ParamStore(self._values)

    def flatten(self) -> FloatArray:
        """Concatenate all parameters into one vector, in iteration order."""

        if not self._values:
            return np.zeros(0, np.float64)

        return np.concatenate([value.ravel() for value in self._values.values()])

    def flatten_grads(self, grads: Mapping[str, Any]) -> FloatArray:
        """Flatten a gradient mapping with this store's layout. Missing entries count as zeros."""

        parts = list[FloatArray]()

        for name, value in self._values.items():
            if name in grads:
                grad = np.asarray(grads[name], np.float64)

                if grad.shape != value.shape:
                    raise ShapeMismatchError(
                        'Gradient of "{name}" has shape {a}, expected {b}!', self.flatten_grads,
                        name=name, a=grad.shape, b=value.shape
                    )

                parts.append(grad.ravel())
            else:
                parts.append(np.zeros(value.size, np.float64))

        return np.concatenate(parts) if parts else np.zeros(0, np.float64)

    def unflatten(self, vector: Any) -> ParamStore:
        """Build a store with this layout from a flat vector."""

        flat = np.asarray(vector, np.float64)

        if flat.shape != (self.size, ):
            raise ShapeMismatchError(
                'Expected a vector of {n} entries, got shape {shape}!', self.unflatten, n=self.size, shape=flat.shape
            )

        out = ParamStore()
        offset = 0

        for name, value in self._values.items():
            out.add(name, flat[offset:offset + value.size].reshape(value.shape))
            offset += value.size

        return out

    def with_values(self, **changes: Any) -> ParamStore:
        """Copy with some entries replaced. Shapes must not change."""

        out = ParamStore()

        for name, value in self._values.items():
            if name in changes:
                new = np.asarray(changes.pop(name), np.float64)

                if new.shape != value.shape:
                    raise ShapeMismatchError(
                        'New value of "{name}" has shape {a}, expected {b}!', self.with_values,
                        name=name, a=new.shape, b=value.shape
                    )

                value = new

            out.add(name, value)

        if changes:
            raise CustomKeyError('Unknown parameters: {names}', self.with_values, names=', '.join(changes))

        return out

    def perturbed(self, rng: np.random.Generator, scale: float = 1.0) -> ParamStore:
        """Copy with independent N(0, scale²) noise added to every entry."""

        return ParamStore(
            (name, value + scale * rng.standard_normal(value.shape)) for name, value in self._values.items()
        )
