"""
This module implements affine coupling layers and their invertible stacks
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Mapping, NamedTuple, Sequence

import numpy as np

from .autodiff import Array, ParamStore, as_array, clip, concat, exp, reduce_sum, take
from .exceptions import CustomValueError, NonFiniteError, ShapeMismatchError
from .mlp import MLP

__all__ = [
    'CouplingLayer', 'CoordinateStack',

    'StackResult',

    'mask_for',

    'coupling_forward', 'coupling_inverse',
    'stack_forward', 'stack_inverse'
]


def mask_for(d: int, index: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """
    Passive and active coordinates of the ``index``-th layer of a width-``d`` stack.

    The passive half holds ``ceil(d/2)`` coordinates starting at ``index * floor(d/2)`` (mod d),
    so even widths alternate halves and odd widths rotate through every coordinate.
    """

    if d < 2:
        raise CustomValueError('Coupling layers need at least two coordinates, got d={d}!', mask_for, d=d)

    offset = index * (d // 2)
    passive = tuple(sorted((offset + j) % d for j in range(-(-d // 2))))

    return passive, tuple(i for i in range(d) if i not in passive)


def _as_batch(x: Any, d: int, func: Any) -> tuple[Array, bool]:
    array = as_array(x)

    if array.ndim == 1 and array.shape[0] == d:
        return array.reshape(1, d), True

    if array.ndim == 2 and array.shape[1] == d:
        return array, False

    raise ShapeMismatchError(
        'Expected a point of width {d} or a batch (N, {d}), got {shape}!', func, d=d, shape=array.shape
    )


@dataclass(frozen=True)
class CouplingLayer:
    """
    Affine coupling transform.

    Passive coordinates are copied; active ones become ``x_a * exp(s(x_p)) + t(x_p)``
    with the scale logits ``s`` clamped to ``[-scale_clamp, scale_clamp]``.
    """

    d: int
    passive: tuple[int, ...]
    prefix: str = 'coupling'
    hidden: tuple[int, ...] = (16, 16)
    scale_clamp: float = 5.0

    @classmethod
    def for_index(
        cls, d: int, index: int, prefix: str | None = None, hidden: Sequence[int] = (16, 16), scale_clamp: float = 5.0
    ) -> CouplingLayer:
        """Layer with the rotating mask of position ``index`` in a stack."""

        passive, _ = mask_for(d, index)

        return cls(d, passive, prefix or f'layer{index}.coupling', tuple(hidden), scale_clamp)

    def __post_init__(self) -> None:
        if not self.passive or len(self.passive) >= self.d or not set(self.passive) <= set(range(self.d)):
            raise CustomValueError(
                'Invalid passive coordinates {p} for d={d}!', CouplingLayer, p=self.passive, d=self.d
            )

    @cached_property
    def active(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.d) if i not in self.passive)

    @cached_property
    def _unpermute(self) -> np.ndarray:
        return np.argsort(np.array(self.passive + self.active))

    @cached_property
    def scale_net(self) -> MLP:
        return MLP(f'{self.prefix}.scale', (len(self.passive), *self.hidden, len(self.active)))

    @cached_property
    def shift_net(self) -> MLP:
        return MLP(f'{self.prefix}.shift', (len(self.passive), *self.hidden, len(self.active)))

    def param_names(self) -> list[str]:
        return self.scale_net.param_names() + self.shift_net.param_names()

    def init_params(self, store: ParamStore, rng: np.random.Generator) -> None:
        """Add parameters with zeroed output layers, so the layer starts as the identity."""

        self.scale_net.init_params(store, rng)
        self.shift_net.init_params(store, rng)

    def _scale_shift(self, params: Mapping[str, Any], xp: Array) -> tuple[Array, Array]:
        try:
            logits = self.scale_net(params, xp)
        except NonFiniteError as e:
            raise NonFiniteError('Scale logits are not finite (parameter blow-up)!', self.prefix, e) from e

        return clip(logits, -self.scale_clamp, self.scale_clamp), self.shift_net(params, xp)

    def _split(self, x: Array) -> tuple[Array, Array]:
        return take(x, (slice(None), np.array(self.passive))), take(x, (slice(None), np.array(self.active)))

    def _join(self, passive: Array, active: Array) -> Array:
        return take(concat([passive, active], axis=1), (slice(None), self._unpermute))

    def forward(self, params: Mapping[str, Any], x: Array) -> tuple[Array, Array]:
        """Map a batch ``(N, d)`` to its new chart. Returns the coordinates and per-point log-determinants."""

        xp, xa = self._split(x)
        s, t = self._scale_shift(params, xp)

        return self._join(xp, xa * exp(s) + t), reduce_sum(s, axis=1)

    def inverse(self, params: Mapping[str, Any], z: Array) -> Array:
        """Exact algebraic inverse of :py:meth:`forward` on a batch."""

        zp, za = self._split(z)
        s, t = self._scale_shift(params, zp)

        return self._join(zp, (za - t) * exp(-s))


class StackResult(NamedTuple):
    y: Array
    """Final chart coordinates."""

    charts: list[Array]
    """Coordinates in every chart, the input first and ``y`` last."""

    logdet: Array
    """Summed log-determinant per point."""


@dataclass(frozen=True)
class CoordinateStack:
    """Ordered composition of coupling layers of a shared width."""

    layers: tuple[CouplingLayer, ...] = field(default_factory=tuple)
    d: int = 2

    def __post_init__(self) -> None:
        if any(layer.d != self.d for layer in self.layers):
            raise CustomValueError('Every layer of a stack must share width d={d}!', CoordinateStack, d=self.d)

    @classmethod
    def build(
        cls, d: int, n_layers: int, hidden: Sequence[int] = (16, 16), scale_clamp: float = 5.0
    ) -> CoordinateStack:
        return cls(tuple(CouplingLayer.for_index(d, i, None, hidden, scale_clamp) for i in range(n_layers)), d)

    def __len__(self) -> int:
        return len(self.layers)

    def init_params(self, store: ParamStore, rng: np.random.Generator) -> None:
        for layer in self.layers:
            layer.init_params(store, rng)

    def forward(self, params: Mapping[str, Any], x: Array) -> StackResult:
        charts = [x]
        total: Array | None = None

        for layer in self.layers:
            z, logdet = layer.forward(params, charts[-1])
            charts.append(z)
            total = logdet if total is None else total + logdet

        if total is None:
            total = Array(np.zeros(x.shape[0]))

        return StackResult(charts[-1], charts, total)

    def inverse(self, params: Mapping[str, Any], y: Array) -> Array:
        x = y

        for layer in reversed(self.layers):
            x = layer.inverse(params, x)

        return x


def coupling_forward(layer: CouplingLayer, params: Mapping[str, Any], x: Any) -> tuple[Array, Array]:
    """
    Apply one coupling layer to a point ``(d,)`` or a batch ``(N, d)``.

    :return:    New coordinates and log-determinant, a scalar for a single point.
    """

    batch, single = _as_batch(x, layer.d, coupling_forward)
    z, logdet = layer.forward(params, batch)

    return (z.reshape(layer.d), logdet.reshape()) if single else (z, logdet)


def coupling_inverse(layer: CouplingLayer, params: Mapping[str, Any], z: Any) -> Array:
    batch, single = _as_batch(z, layer.d, coupling_inverse)
    x = layer.inverse(params, batch)

    return x.reshape(layer.d) if single else x


def stack_forward(stack: CoordinateStack, params: Mapping[str, Any], x: Any) -> StackResult:
    """Apply every layer in order, keeping each chart's coordinates and the summed log-determinant."""

    batch, single = _as_batch(x, stack.d, stack_forward)
    result = stack.forward(params, batch)

    if not single:
        return result

    return StackResult(
        result.y.reshape(stack.d), [chart.reshape(stack.d) for chart in result.charts], result.logdet.reshape()
    )


def stack_inverse(stack: CoordinateStack, params: Mapping[str, Any], y: Any) -> Array:
    batch, single = _as_batch(y, stack.d, stack_inverse)
    x = stack.inverse(params, batch)

    return x.reshape(stack.d) if single else x
