from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from .autodiff import Array, ParamStore, as_array, broadcast, tanh
from .exceptions import CustomValueError, ShapeMismatchError
from .types import FloatArray

__all__ = [
    'MLP'
]


@dataclass(frozen=True)
class MLP:
    """
    Fully connected tanh network stored in a :py:class:`ParamStore` under ``{prefix}.W{i}`` / ``{prefix}.b{i}``.

    The last layer is affine; every hidden layer applies tanh.
    """

    prefix: str
    """Parameter name prefix."""

    sizes: tuple[int, ...]
    """Layer widths, input first and output last."""

    def __post_init__(self) -> None:
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise CustomValueError('An MLP needs at least an input and an output width!', MLP, self.sizes)

    @property
    def depth(self) -> int:
        return len(self.sizes) - 1

    def param_names(self) -> list[str]:
        return [name for i in range(self.depth) for name in (f'{self.prefix}.W{i}', f'{self.prefix}.b{i}')]

    def init_params(
        self, store: ParamStore, rng: np.random.Generator,
        out_weight_scale: float = 0.0, out_bias: Any = None
    ) -> None:
        """
        Add freshly initialized parameters to ``store``.

        Hidden weights are drawn from N(0, 1/fan_in), biases start at zero.

        :param store:               Store receiving the parameters.
        :param rng:                 Random generator.
        :param out_weight_scale:    Multiplier on the output layer's N(0, 1/fan_in) weights. 0 zeroes them.
        :param out_bias:            Output bias. Defaults to zeros.
        """

        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            weight = rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)
            bias = np.zeros(fan_out)

            if i == self.depth - 1:
                weight = out_weight_scale * weight

                if out_bias is not None:
                    bias = np.broadcast_to(np.asarray(out_bias, np.float64), (fan_out, )).copy()

            store.add(f'{self.prefix}.W{i}', weight)
            store.add(f'{self.prefix}.b{i}', bias)

    def __call__(self, params: Mapping[str, Any], x: Array) -> Array:
        """Evaluate on a batch of shape ``(N, sizes[0])``."""

        h = as_array(x)

        if h.ndim != 2 or h.shape[1] != self.sizes[0]:
            raise ShapeMismatchError(
                'Expected a batch of width {d}, got shape {shape}!', self.prefix, d=self.sizes[0], shape=h.shape
            )

        n = h.shape[0]

        for i in range(self.depth):
            h = h @ params[f'{self.prefix}.W{i}'] + broadcast(params[f'{self.prefix}.b{i}'], (n, self.sizes[i + 1]))

            if i < self.depth - 1:
                h = tanh(h)

        return h

    def evaluate(self, params: Mapping[str, Any], x: FloatArray) -> FloatArray:
        """Same map as :py:meth:`__call__` on plain arrays, without recording anything."""

        h = np.asarray(x, np.float64)

        for i in range(self.depth):
            weight, bias = (_plain(params[f'{self.prefix}.{kind}{i}']) for kind in 'Wb')
            h = h @ weight + bias

            if i < self.depth - 1:
                h = np.tanh(h)

        return h


def _plain(value: Any) -> FloatArray:
    return value.data if isinstance(value, Array) else np.asarray(value, np.float64)
