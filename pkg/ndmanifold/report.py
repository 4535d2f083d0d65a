from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from os import PathLike
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .autodiff import Array
from .exceptions import CustomValueError
from .geometry import CURVATURE_STEP, MetricField, ricci_batch, volume_elements
from .model import NDMModel, embed_inputs

__all__ = [
    'LayerGeometry', 'GeometryReport',

    'geometry_report', 'field_report'
]


@dataclass(frozen=True)
class LayerGeometry:
    """Statistics of one layer's geometry over a point set. Curvature and volume share the points."""

    layer: int
    n_points: int
    r_mean: float
    r_min: float
    r_max: float
    vol_mean: float
    vol_var: float

    @classmethod
    def from_values(cls, layer: int, r: Any, vol: Any) -> LayerGeometry:
        r, vol = np.asarray(r, np.float64), np.asarray(vol, np.float64)

        return cls(
            layer, int(r.size), float(r.mean()), float(r.min()), float(r.max()),
            float(vol.mean()), float(vol.var())
        )


@dataclass(frozen=True)
class GeometryReport:
    """Per-layer curvature and volume statistics."""

    layers: tuple[LayerGeometry, ...]
    source: str = 'model'

    def to_dict(self) -> dict[str, Any]:
        return {'source': self.source, 'layers': [asdict(layer) for layer in self.layers]}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> GeometryReport:
        return cls(tuple(LayerGeometry(**layer) for layer in data['layers']), data.get('source', 'model'))

    def to_json(self, path: str | PathLike[str]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + '\n', 'utf-8')

    @classmethod
    def from_json(cls, path: str | PathLike[str]) -> GeometryReport:
        return cls.from_dict(json.loads(Path(path).read_text('utf-8')))


def geometry_report(model: NDMModel, inputs: Any, h: float = CURVATURE_STEP, source: str = 'model') -> GeometryReport:
    """
    Geometry of every layer of a model, each at its incoming coordinates of ``inputs``.

    :param model:       Model.
    :param inputs:      Task inputs, zero-padded to the chart width if narrower.
    :param h:           Curvature difference step.
    """

    points = embed_inputs(inputs, model.d)

    if not points.shape[0]:
        raise CustomValueError('Need at least one point for a geometry report!', geometry_report)

    charts = model.stack.forward(model.params, Array(points)).charts
    layers = list[LayerGeometry]()

    for i, (layer, chart) in enumerate(zip(model.layers, charts)):
        res = ricci_batch(model.metric_field(i), chart, h)
        layers.append(LayerGeometry.from_values(i, res.scalar.data, volume_elements(res.metric).data))

    return GeometryReport(tuple(layers), source)


def field_report(
    field: MetricField, points: Sequence[Any] | Any, h: float = CURVATURE_STEP, source: str = 'field'
) -> GeometryReport:
    """Single-layer report of a metric field over the given points ``(N, d)``."""

    pts = np.atleast_2d(np.asarray(points, np.float64))
    res = ricci_batch(field, pts, h)

    return GeometryReport((LayerGeometry.from_values(0, res.scalar.data, volume_elements(res.metric).data), ), source)
