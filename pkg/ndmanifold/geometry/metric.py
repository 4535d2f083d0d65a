from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import e, log
from typing import Any, Mapping, Sequence

import numpy as np
import scipy.linalg as la

from ..autodiff import (
    Array, ParamStore, as_array, broadcast, einsum, exp, logdet, matmul, softplus, take, transpose
)
from ..exceptions import CustomValueError, ShapeMismatchError, SingularMetricError
from ..mlp import MLP
from ..types import CustomStrEnum, FloatArray

__all__ = [
    'DiagTransform',

    'MetricTensor', 'MetricNet',

    'metric_at', 'metric_from_factor',

    'inner_product', 'norm', 'angle',

    'volume_element', 'volume_elements'
]

_SYMMETRY_TOL = 1e-12

_SOFTPLUS_SHIFT = log(e - 1.0) - 1.0


class DiagTransform(CustomStrEnum):
    """How the raw diagonal outputs of a metric net become diagonal entries of its factor."""

    SOFTPLUS = 'softplus'
    """``softplus(u + log(e - 1) - 1)``: always positive, and a raw output of 1 gives exactly 1."""

    IDENTITY = 'identity'
    """Raw output as is. Lets tests hand-set any factor, zero included."""


@dataclass(frozen=True, eq=False)
class MetricTensor:
    """
    Symmetric positive-definite matrix ``g_ij`` at one point.

    Construction checks symmetry and runs a Cholesky factorization.

    :raises ShapeMismatchError:     Not a square matrix.
    :raises SingularMetricError:    Not symmetric, or not positive-definite.
    """

    entries: FloatArray

    def __post_init__(self) -> None:
        g = np.array(self.entries, dtype=np.float64)

        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ShapeMismatchError(
                'A metric must be a square matrix, got shape {shape}!', MetricTensor, shape=g.shape
            )

        if not np.isfinite(g).all():
            raise SingularMetricError('Metric holds non-finite entries!', MetricTensor)

        if np.max(np.abs(g - g.T), initial=0.0) > _SYMMETRY_TOL * max(1.0, np.max(np.abs(g), initial=0.0)):
            raise SingularMetricError('Metric is not symmetric!', MetricTensor)

        try:
            chol = la.cholesky(g, lower=True)
        except la.LinAlgError as err:
            raise SingularMetricError('Metric is not positive-definite!', MetricTensor, err) from err

        g.flags.writeable = False
        chol.flags.writeable = False

        object.__setattr__(self, 'entries', g)
        object.__setattr__(self, '_chol', chol)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def cholesky(self) -> FloatArray:
        """Lower Cholesky factor."""

        return self._chol  # type: ignore[attr-defined,no-any-return]

    def inverse(self) -> FloatArray:
        return la.cho_solve((self.cholesky, True), np.eye(self.dim))

    def eigenvalues(self) -> FloatArray:
        return la.eigvalsh(self.entries)


@dataclass(frozen=True)
class MetricNet:
    """
    Auxiliary network producing a metric at every point.

    The MLP emits the ``d(d+1)/2`` lower-triangular entries of a factor ``L`` in row-major order;
    the metric is ``L Lᵀ + eps I``, so its smallest eigenvalue is at least ``eps``.
    """

    d: int
    prefix: str = 'metric'
    hidden: tuple[int, ...] = (16, 16)
    eps: float = 1e-3
    diag: DiagTransform = DiagTransform.SOFTPLUS

    def __post_init__(self) -> None:
        if self.d < 1:
            raise CustomValueError('Metric dimension must be positive, got {d}!', MetricNet, d=self.d)

        if not self.eps >= 0:
            raise CustomValueError('The metric floor must be non-negative, got {eps}!', MetricNet, eps=self.eps)

        object.__setattr__(self, 'diag', DiagTransform.from_param(self.diag, MetricNet))

    @property
    def n_outputs(self) -> int:
        return self.d * (self.d + 1) // 2

    @cached_property
    def mlp(self) -> MLP:
        return MLP(self.prefix, (self.d, *self.hidden, self.n_outputs))

    @cached_property
    def _layout(self) -> tuple[FloatArray, FloatArray, FloatArray, FloatArray]:
        rows, cols = np.tril_indices(self.d)
        on_diag = rows == cols

        diag_cols, off_cols = np.flatnonzero(on_diag), np.flatnonzero(~on_diag)

        scatter_diag = np.zeros((diag_cols.size, self.d, self.d))
        scatter_diag[np.arange(diag_cols.size), rows[on_diag], cols[on_diag]] = 1.0

        scatter_off = np.zeros((off_cols.size, self.d, self.d))
        scatter_off[np.arange(off_cols.size), rows[~on_diag], cols[~on_diag]] = 1.0

        return diag_cols, off_cols, scatter_diag, scatter_off

    def param_names(self) -> list[str]:
        return self.mlp.param_names()

    def init_params(self, store: ParamStore, rng: np.random.Generator, init_scale: float = 0.0) -> None:
        """
        Add parameters so that ``L`` starts at the identity.

        :param store:       Store receiving the parameters.
        :param rng:         Random generator.
        :param init_scale:  Scale of the output-layer weights. 0 gives a constant metric ``(1 + eps) I``.
        """

        bias = np.zeros(self.n_outputs)
        bias[self._layout[0]] = 1.0

        self.mlp.init_params(store, rng, init_scale, bias)

    def factor(self, params: Mapping[str, Any], points: Any) -> Array:
        """Lower-triangular factors ``(N, d, d)`` for a batch of points ``(N, d)``."""

        raw = self.mlp(params, points)
        diag_cols, off_cols, scatter_diag, scatter_off = self._layout

        diag = take(raw, (slice(None), diag_cols))

        if self.diag is DiagTransform.SOFTPLUS:
            diag = softplus(diag + _SOFTPLUS_SHIFT)

        factor = einsum('nk,kij->nij', diag, scatter_diag)

        if off_cols.size:
            factor = factor + einsum('nk,kij->nij', take(raw, (slice(None), off_cols)), scatter_off)

        return factor

    def metric(self, params: Mapping[str, Any], points: Any) -> Array:
        """Metrics ``(N, d, d)`` for a batch of points ``(N, d)``, symmetrized exactly."""

        factor = self.factor(params, points)
        n = factor.shape[0]

        g = matmul(factor, transpose(factor, (0, 2, 1)))

        if self.eps:
            g = g + broadcast(self.eps * np.eye(self.d), (n, self.d, self.d))

        return (g + transpose(g, (0, 2, 1))) * 0.5

    def metric_values(self, params: Mapping[str, Any], points: FloatArray) -> FloatArray:
        """:py:meth:`metric` on plain arrays, for evaluations that need no gradients."""

        raw = self.mlp.evaluate(params, points)
        diag_cols, off_cols, scatter_diag, scatter_off = self._layout

        diag = raw[:, diag_cols]

        if self.diag is DiagTransform.SOFTPLUS:
            diag = np.logaddexp(0.0, diag + _SOFTPLUS_SHIFT)

        factor = np.einsum('nk,kij->nij', diag, scatter_diag)

        if off_cols.size:
            factor = factor + np.einsum('nk,kij->nij', raw[:, off_cols], scatter_off)

        g = factor @ np.transpose(factor, (0, 2, 1)) + self.eps * np.eye(self.d)

        return 0.5 * (g + np.transpose(g, (0, 2, 1)))


def metric_at(net: MetricNet, params: Mapping[str, Any], x: Any) -> MetricTensor:
    """
    Evaluate a metric net at a single point.

    :param net:         Metric network.
    :param params:      Parameters, as a :py:class:`ParamStore` or a mapping of arrays.
    :param x:           Point of shape ``(d,)``.
    """

    point = as_array(x)

    if point.shape != (net.d, ):
        raise ShapeMismatchError('Expected a point of width {d}, got {shape}!', metric_at, d=net.d, shape=point.shape)

    return MetricTensor(net.metric(params, point.reshape(1, net.d)).data[0])


def metric_from_factor(factor: Any, eps: float = 0.0) -> MetricTensor:
    """``L Lᵀ + eps I`` for a hand-given factor."""

    chol = np.asarray(factor, np.float64)
    g = chol @ chol.T + eps * np.eye(chol.shape[0])

    return MetricTensor(0.5 * (g + g.T))


def _vector(value: Any, dim: int, func: Any) -> FloatArray:
    vec = np.asarray(value, np.float64)

    if vec.shape != (dim, ):
        raise ShapeMismatchError('Expected a vector of length {d}, got shape {shape}!', func, d=dim, shape=vec.shape)

    return vec


def inner_product(g: MetricTensor, v: Any, w: Any) -> float:
    """``Vᵀ g W``."""

    return float(_vector(v, g.dim, inner_product) @ g.entries @ _vector(w, g.dim, inner_product))


def norm(g: MetricTensor, v: Any) -> float:
    return float(np.sqrt(inner_product(g, v, v)))


def angle(g: MetricTensor, v: Any, w: Any) -> float:
    """Angle between two non-zero vectors as measured by ``g``, in radians."""

    denom = norm(g, v) * norm(g, w)

    if denom == 0.0:
        raise CustomValueError('The angle with a zero vector is undefined!', angle)

    return float(np.arccos(np.clip(inner_product(g, v, w) / denom, -1.0, 1.0)))


def volume_element(g: MetricTensor | Any) -> float:
    """``sqrt(det g)`` as the product of the Cholesky diagonal."""

    if not isinstance(g, MetricTensor):
        g = MetricTensor(np.asarray(g, np.float64))

    return float(np.prod(np.diagonal(g.cholesky)))


def volume_elements(g: Array | Sequence[Any]) -> Array:
    """Differentiable ``sqrt(det g)`` over a batch of metrics ``(N, d, d)``."""

    return exp(logdet(g) * 0.5)
