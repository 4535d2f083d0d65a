from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Mapping

import numpy as np

from ..autodiff import Array, ParamStore, as_array
from ..exceptions import ShapeMismatchError
from ..types import CustomStrEnum, FloatArray
from .metric import MetricNet, MetricTensor

__all__ = [
    'MetricField',
    'NetMetricField', 'ClosedFormField',

    'ReferenceField',

    'euclidean_field'
]


class MetricField(ABC):
    """Smooth assignment of a metric to every point of a chart."""

    dim: int

    @abstractmethod
    def metric(self, points: Array) -> Array:
        """Metrics ``(N, d, d)`` at a batch of points ``(N, d)``. Differentiable when the field has parameters."""

    def metric_values(self, points: FloatArray) -> FloatArray:
        """Metrics on plain arrays, outside any tape."""

        return self.metric(Array(points)).data

    def at(self, x: Any) -> MetricTensor:
        """Metric at a single point ``(d,)``."""

        point = as_array(x)

        if point.shape != (self.dim, ):
            raise ShapeMismatchError(
                'Expected a point of width {d}, got {shape}!', self.at, d=self.dim, shape=point.shape
            )

        return MetricTensor(self.metric(point.reshape(1, self.dim)).data[0])

    def __call__(self, x: Any) -> MetricTensor:
        return self.at(x)


class NetMetricField(MetricField):
    """Field backed by a metric net and its parameters."""

    def __init__(self, net: MetricNet, params: ParamStore | Mapping[str, Any]) -> None:
        self.net = net
        self.dim = net.d
        self.params = params

    def metric(self, points: Array) -> Array:
        return self.net.metric(self.params, points)

    def metric_values(self, points: FloatArray) -> FloatArray:
        return self.net.metric_values(self.params, points)

    def __repr__(self) -> str:
        return f'NetMetricField({self.net.prefix!r}, d={self.dim})'


@dataclass(frozen=True)
class ClosedFormField(MetricField):
    """Field given by a vectorized formula ``(N, d) -> (N, d, d)``."""

    name: str
    dim: int  # type: ignore[misc]
    formula: Callable[[FloatArray], FloatArray]

    def metric(self, points: Array) -> Array:
        pts = as_array(points)

        if pts.ndim != 2 or pts.shape[1] != self.dim:
            raise ShapeMismatchError(
                'Expected a batch of width {d}, got shape {shape}!', self.name, d=self.dim, shape=pts.shape
            )

        return Array(self.formula(pts.data))

    def metric_values(self, points: FloatArray) -> FloatArray:
        return np.asarray(self.formula(np.asarray(points, np.float64)), np.float64)


def _diagonal(*entries: FloatArray) -> FloatArray:
    n = entries[0].shape[0]
    out = np.zeros((n, len(entries), len(entries)))

    for i, entry in enumerate(entries):
        out[:, i, i] = entry

    return out


def euclidean_field(d: int = 2) -> ClosedFormField:
    """Identity metric in ``d`` dimensions."""

    return ClosedFormField(f'euclidean{d}', d, lambda pts: np.broadcast_to(np.eye(d), (pts.shape[0], d, d)).copy())


class ReferenceField(CustomStrEnum):
    """Two-dimensional fields with known scalar curvature, for validating the geometry kernel."""

    EUCLIDEAN = 'euclidean'
    """Identity metric. Flat."""

    POLAR = 'polar'
    """Flat plane in polar coordinates ``(r, θ)``: ``diag(1, r²)``."""

    SPHERE = 'sphere'
    """Unit sphere in colatitude/longitude ``(θ, φ)``: ``diag(1, sin²θ)``."""

    POINCARE = 'poincare'
    """Poincaré half-plane ``(x, y)``, ``y > 0``: ``diag(1/y², 1/y²)``."""

    @property
    def scalar_curvature(self) -> float:
        """Exact Ricci scalar, the same at every point."""

        return {'euclidean': 0.0, 'polar': 0.0, 'sphere': 2.0, 'poincare': -2.0}[self.value]

    @property
    def field(self) -> ClosedFormField:
        if self is ReferenceField.EUCLIDEAN:
            return euclidean_field(2)

        if self is ReferenceField.POLAR:
            return ClosedFormField('polar', 2, lambda p: _diagonal(np.ones(p.shape[0]), p[:, 0] ** 2))

        if self is ReferenceField.SPHERE:
            return ClosedFormField('sphere', 2, lambda p: _diagonal(np.ones(p.shape[0]), np.sin(p[:, 0]) ** 2))

        return ClosedFormField('poincare', 2, lambda p: _diagonal(1.0 / p[:, 1] ** 2, 1.0 / p[:, 1] ** 2))
