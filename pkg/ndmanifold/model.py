from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Mapping, NamedTuple

import numpy as np

from .autodiff import Array, ParamStore, as_array, broadcast, take
from .coupling import CoordinateStack, CouplingLayer
from .exceptions import CustomIndexError, CustomKeyError, CustomValueError, ShapeMismatchError
from .geometry import CURVATURE_STEP, CurvatureResult, MetricNet, NetMetricField, ricci_batch, volume_elements
from .types import FloatArray

if TYPE_CHECKING:
    from .config import TrainConfig

__all__ = [
    'ManifoldLayer', 'LinearHead', 'NDMModel',

    'ForwardResult',

    'embed_inputs',
    'layer_geometry',
    'ndm_forward'
]


@dataclass(frozen=True)
class ManifoldLayer:
    """
    One chart transition with its metric.

    Both paths read the same incoming coordinates; only the coupling feeds the next chart.
    """

    coupling: CouplingLayer
    metric_net: MetricNet


@dataclass(frozen=True)
class LinearHead:
    """Affine readout from the final chart to the task outputs."""

    d: int
    out_dim: int
    prefix: str = 'head'

    def param_names(self) -> list[str]:
        return [f'{self.prefix}.W', f'{self.prefix}.b']

    def init_params(self, store: ParamStore, rng: np.random.Generator) -> None:
        scale = np.sqrt(2.0 / (self.d + self.out_dim))

        store.add(f'{self.prefix}.W', scale * rng.standard_normal((self.d, self.out_dim)))
        store.add(f'{self.prefix}.b', np.zeros(self.out_dim))

    def __call__(self, params: Mapping[str, Any], x: Array) -> Array:
        n = x.shape[0]

        return x @ params[f'{self.prefix}.W'] + broadcast(params[f'{self.prefix}.b'], (n, self.out_dim))


@dataclass(frozen=True, eq=False)
class NDMModel:
    """Stack of manifold layers followed by a linear head, with its parameters."""

    layers: tuple[ManifoldLayer, ...]
    head: LinearHead
    params: ParamStore

    def __post_init__(self) -> None:
        expected = self.param_names()

        if list(self.params) != expected:
            raise CustomKeyError(
                'Parameters don\'t match the architecture: expected {n} named entries in model order!',
                NDMModel, n=len(expected)
            )

        if any(layer.coupling.d != self.d or layer.metric_net.d != self.d for layer in self.layers):
            raise CustomValueError('Every layer must have width {d}!', NDMModel, d=self.d)

    @classmethod
    def build(
        cls, d: int, n_layers: int, out_dim: int, *, hidden: int = 16, eps: float = 1e-3,
        share_metric_net: bool = False, metric_init_scale: float = 0.0,
        rng: np.random.Generator | int | None = None
    ) -> NDMModel:
        """
        Build a model with fresh parameters.

        Couplings start as the identity; metric nets start at ``L = I`` with output weights
        scaled by ``metric_init_scale`` (0 gives a flat start); the head is random.

        :param d:                   Chart width.
        :param n_layers:            Number of manifold layers.
        :param out_dim:             Head output width.
        :param hidden:              Hidden width of every sub-network.
        :param eps:                 Metric floor.
        :param share_metric_net:    One metric net for all layers.
        :param metric_init_scale:   Output-weight scale of the metric nets.
        :param rng:                 Generator or seed for the initialization.
        """

        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        widths = (hidden, hidden)
        store = ParamStore()

        shared = MetricNet(d, 'metric', widths, eps) if share_metric_net else None
        layers = list[ManifoldLayer]()

        for i in range(n_layers):
            coupling = CouplingLayer.for_index(d, i, hidden=widths)
            coupling.init_params(store, rng)

            if shared is None:
                metric_net = MetricNet(d, f'layer{i}.metric', widths, eps)
                metric_net.init_params(store, rng, metric_init_scale)
            else:
                metric_net = shared

            layers.append(ManifoldLayer(coupling, metric_net))

        if shared is not None and n_layers:
            shared.init_params(store, rng, metric_init_scale)

        head = LinearHead(d, out_dim)
        head.init_params(store, rng)

        return cls(tuple(layers), head, store)

    @classmethod
    def from_config(cls, config: TrainConfig, rng: np.random.Generator | int | None = None) -> NDMModel:
        return cls.build(
            config.d, config.n_layers, config.out_dim, hidden=config.hidden, eps=config.eps,
            share_metric_net=config.share_metric_net, metric_init_scale=config.metric_init_scale,
            rng=config.seed if rng is None else rng
        )

    @property
    def d(self) -> int:
        return self.head.d

    @property
    def stack(self) -> CoordinateStack:
        return CoordinateStack(tuple(layer.coupling for layer in self.layers), self.d)

    @property
    def metric_nets(self) -> list[MetricNet]:
        """Distinct metric nets in layer order."""

        nets = list[MetricNet]()

        for layer in self.layers:
            if all(layer.metric_net is not net for net in nets):
                nets.append(layer.metric_net)

        return nets

    def param_names(self) -> list[str]:
        names = list[str]()
        shared = len(self.metric_nets) == 1 and len(self.layers) > 1

        for layer in self.layers:
            names += layer.coupling.param_names()

            if not shared:
                names += layer.metric_net.param_names()

        if shared:
            names += self.metric_nets[0].param_names()

        return names + self.head.param_names()

    def metric_param_names(self) -> list[str]:
        return [name for net in self.metric_nets for name in net.param_names()]

    def with_params(self, params: ParamStore) -> NDMModel:
        """Same architecture, new parameter values. Names and shapes must match."""

        if params.shapes() != self.params.shapes():
            raise ShapeMismatchError('Parameter layout doesn\'t match the model!', self.with_params)

        return NDMModel(self.layers, self.head, params)

    def metric_field(self, index: int, params: Mapping[str, Any] | None = None) -> NetMetricField:
        """Metric field of the ``index``-th layer's incoming chart."""

        if not 0 <= index < len(self.layers):
            raise CustomIndexError(
                'Layer index {i} out of range for {n} layers!', self.metric_field, i=index, n=len(self.layers)
            )

        return NetMetricField(self.layers[index].metric_net, self.params if params is None else params)


class ForwardResult(NamedTuple):
    outputs: Array
    """Head outputs ``(N, out_dim)``."""

    charts: list[Array]
    """Coordinates in every chart, input first."""

    curvatures: list[Array] | None
    """Ricci scalars per layer on the geometry subsample, when requested."""

    volumes: list[Array] | None
    """Volume elements per layer on the same points, when requested."""


def embed_inputs(inputs: Any, d: int) -> FloatArray:
    """Zero-pad task inputs ``(N, k)`` (or ``(N,)``) into the first chart ``(N, d)``."""

    x = np.asarray(inputs, np.float64)

    if x.ndim == 1:
        x = x[:, None]

    if x.ndim != 2 or x.shape[1] > d:
        raise ShapeMismatchError(
            'Can\'t embed inputs of shape {shape} into width {d}!', embed_inputs, shape=x.shape, d=d
        )

    if x.shape[1] == d:
        return x

    return np.concatenate([x, np.zeros((x.shape[0], d - x.shape[1]))], axis=1)


def layer_geometry(
    model: NDMModel, charts: list[Array], params: Mapping[str, Any],
    subsample: int | None = None, h: float = CURVATURE_STEP
) -> list[CurvatureResult]:
    """
    Ricci scalar and metric of every layer at its incoming coordinates.

    :param subsample:   Use the first ``subsample`` points of each chart. None uses all of them.
    """

    results = list[CurvatureResult]()

    for layer, chart in zip(model.layers, charts):
        points = chart if subsample is None else take(chart, slice(0, min(subsample, chart.shape[0])))
        results.append(ricci_batch(NetMetricField(layer.metric_net, params), points, h))

    return results


def ndm_forward(
    model: NDMModel, batch: Any, want_geometry: bool = False, *,
    params: Mapping[str, Any] | None = None, subsample: int | None = 16, h: float = CURVATURE_STEP
) -> ForwardResult:
    """
    Thread a batch through every chart and the head, optionally measuring each layer's geometry.

    :param model:           Model.
    :param batch:           Points ``(N, d)`` in the first chart.
    :param want_geometry:   Also return per-layer Ricci scalars and volume elements.
    :param params:          Parameters to use instead of the model's own (e.g. tracked ones).
    :param subsample:       Geometry points per layer, the first ones of the batch.
    :param h:               Curvature difference step.

    :raises ShapeMismatchError:     Empty batch or wrong width.
    """

    values = model.params if params is None else params
    x = as_array(batch)

    if x.ndim != 2 or x.shape[1] != model.d or x.shape[0] == 0:
        raise ShapeMismatchError(
            'Expected a non-empty batch (N, {d}), got shape {shape}!', ndm_forward, d=model.d, shape=x.shape
        )

    stacked = model.stack.forward(values, x)
    outputs = model.head(values, stacked.y)

    if not want_geometry:
        return ForwardResult(outputs, stacked.charts, None, None)

    geometry = layer_geometry(model, stacked.charts, values, subsample, h)

    return ForwardResult(
        outputs, stacked.charts,
        [res.scalar for res in geometry],
        [volume_elements(res.metric) for res in geometry]
    )
