"""
This module implements the training loop and its artefacts
"""

from __future__ import annotations

import csv
import json
import logging
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Mapping, Sequence

import numpy as np

from .autodiff import Array, Tape
from .checkpoint import save_checkpoint
from .config import TrainConfig
from .datasets import Task, make_dataset
from .exceptions import GeometryNotSimplifiedWarning, NonFiniteError, TrainingDivergedError
from .geometry import volume_elements
from .losses import LossBreakdown, TaskLoss, accuracy, curvature_loss, task_loss, total_loss, volume_loss
from .model import NDMModel, embed_inputs, layer_geometry, ndm_forward
from .optim import FisherApprox, UpdateKind, UpdateRule, empirical_fisher, step
from .report import GeometryReport, geometry_report
from .types import FloatArray

__all__ = [
    'METRIC_COLUMNS',

    'MetricsRow', 'TrainResult', 'Trainer',

    'train', 'read_metrics'
]

logger = logging.getLogger(__name__)

METRIC_COLUMNS = (
    'step', 'l_task', 'l_curv', 'l_vol', 'l_geo', 'l_total', 'accuracy', 'grad_norm', 'metricnet_grad_norm'
)


def _cell(value: float | None) -> str:
    return '' if value is None else repr(float(value))


def _parse(cell: str) -> float | None:
    return None if cell == '' else float(cell)


@dataclass(frozen=True)
class MetricsRow:
    """One line of the metrics file. Geometry columns are None on steps without geometry."""

    step: int
    l_task: float
    l_curv: float | None
    l_vol: float | None
    l_geo: float | None
    l_total: float
    accuracy: float | None
    grad_norm: float
    metricnet_grad_norm: float

    def as_csv(self) -> list[str]:
        return [str(self.step)] + [_cell(getattr(self, name)) for name in METRIC_COLUMNS[1:]]

    @classmethod
    def from_csv(cls, row: Mapping[str, str]) -> MetricsRow:
        values = {name: _parse(row[name]) for name in METRIC_COLUMNS[1:]}

        return cls(int(row['step']), **values)  # type: ignore[arg-type]


@dataclass
class TrainResult:
    model: NDMModel
    """Model after the last step."""

    history: list[MetricsRow]
    """One row per step."""

    report: GeometryReport | None
    """Final geometry over the first ``eval_points`` training points, None without layers."""

    summary: dict[str, Any] = field(default_factory=dict)
    """Final metrics and the geometry flag."""

    output_dir: Path | None = None
    """Where artefacts were written, if anywhere."""

    @property
    def geometry_flagged(self) -> bool:
        return bool(self.summary.get('geometry_flagged', False))


@contextmanager
def _diverges_as(component: str, step: int) -> Iterator[None]:
    try:
        yield
    except NonFiniteError as e:
        raise TrainingDivergedError(
            'Non-finite {component} at step {step}!', train, e, component=component, step=step
        ) from e


def read_metrics(path: str | Path) -> list[MetricsRow]:
    with open(path, newline='', encoding='utf-8') as f:
        return [MetricsRow.from_csv(row) for row in csv.DictReader(f)]


class Trainer:
    """
    Runs the training loop of one config.

    The seed is split into independent streams for the data, the initialization and the minibatches,
    so every run of the same config follows the exact same path.
    """

    def __init__(self, config: TrainConfig) -> None:
        self.config = config
        self.task = Task.from_param(config.task, Trainer)
        self.loss_kind = TaskLoss.for_task(self.task.value)

        data_seed, init_seed, batch_seed = np.random.SeedSequence(config.seed).spawn(3)

        dataset = make_dataset(self.task, config.n_train, np.random.default_rng(data_seed), config.noise)

        self.inputs = embed_inputs(dataset.inputs, config.d)
        self.targets = dataset.targets
        self.model = NDMModel.from_config(config, np.random.default_rng(init_seed))
        self.batch_rng = np.random.default_rng(batch_seed)

        self.rule = UpdateRule(config.optimizer, config.lr, config.cg_max_iters, config.cg_tol)
        self.history = list[MetricsRow]()

    def sample_batch(self) -> np.ndarray:
        n = self.inputs.shape[0]

        return self.batch_rng.choice(n, size=min(self.config.batch_size, n), replace=False)

    def wants_geometry(self, step_index: int) -> bool:
        return bool(self.model.layers) and step_index % self.config.geometry_every == 0

    def objective(
        self, params: Mapping[str, Any], inputs: FloatArray, targets: Any, with_geometry: bool, step_index: int = 0
    ) -> tuple[Array, LossBreakdown | None, Array]:
        """
        Evaluate the loss on a batch.

        :return:    The scalar to differentiate, the breakdown when geometry was evaluated, and the outputs.
        """

        cfg = self.config

        with _diverges_as('l_task', step_index):
            fwd = ndm_forward(self.model, inputs, params=params)
            l_task = task_loss(fwd.outputs, targets, self.loss_kind)

        if not with_geometry:
            return l_task, None, fwd.outputs

        with _diverges_as('l_curv', step_index):
            geometry = layer_geometry(self.model, fwd.charts, params, cfg.geometry_subsample, cfg.curvature_h)
            l_curv = curvature_loss([res.scalar for res in geometry])

        with _diverges_as('l_vol', step_index):
            l_vol = volume_loss([volume_elements(res.metric) for res in geometry])

        if not np.isfinite(cfg.w_curv * l_curv.item() + cfg.w_vol * l_vol.item()):
            raise TrainingDivergedError(
                'Non-finite {component} at step {step}!', train, component='l_geo', step=step_index
            )

        with _diverges_as('l_total', step_index):
            breakdown = total_loss(l_task, l_curv, l_vol, cfg.lam, cfg.w_curv, cfg.w_vol)

        return breakdown.l_total, breakdown, fwd.outputs

    def per_sample_gradients(self, indices: Sequence[int], step_index: int = 0) -> FloatArray:
        """Flattened task-loss gradient of every sample, one backward pass each."""

        params = self.model.params
        rows = list[FloatArray]()

        for i in indices:
            with Tape() as tape:
                root, _, _ = self.objective(
                    tape.watch_store(params), self.inputs[i:i + 1], self.targets[i:i + 1], False, step_index
                )

            rows.append(params.flatten_grads(tape.backward(root)))

        return np.stack(rows)

    def step(self, step_index: int) -> MetricsRow:
        """Run one optimizer step and return its metrics row."""

        indices = self.sample_batch()
        inputs, targets = self.inputs[indices], self.targets[indices]
        with_geometry = self.wants_geometry(step_index)
        params = self.model.params

        with Tape() as tape:
            root, breakdown, outputs = self.objective(
                tape.watch_store(params), inputs, targets, with_geometry, step_index
            )

        grads = tape.backward(root)
        grad_vec = params.flatten_grads(grads)

        if not np.isfinite(grad_vec).all():
            raise TrainingDivergedError(
                'Non-finite gradient of {component} at step {step}!', self.step, component='l_total', step=step_index
            )

        metric_names = self.model.metric_param_names()
        metric_grad = np.concatenate([grads[name].ravel() for name in metric_names]) if metric_names else np.zeros(0)

        fisher: FisherApprox | None = None

        if self.rule.kind is UpdateKind.NATURAL:
            fisher = empirical_fisher(self.per_sample_gradients(indices, step_index), self.config.damping)

        new_theta = step(self.rule, params.flatten(), grad_vec, fisher)
        self.model = self.model.with_params(params.unflatten(new_theta))

        acc = accuracy(outputs, targets) if self.task.is_classification else None

        losses: tuple[float | None, ...]

        if breakdown is None:
            losses = (root.item(), None, None, None, root.item())
        else:
            losses = breakdown.values()

        return MetricsRow(
            step_index, *losses, acc,  # type: ignore[arg-type]
            float(np.linalg.norm(grad_vec)), float(np.linalg.norm(metric_grad))
        )

    def evaluate(self) -> dict[str, float]:
        """Task metric on the full training set."""

        outputs = ndm_forward(self.model, self.inputs).outputs

        if self.task.is_classification:
            return {'final_accuracy': accuracy(outputs, self.targets)}

        return {'final_mse': task_loss(outputs, self.targets, TaskLoss.MSE).item()}

    def geometry_flag(self) -> tuple[float | None, float | None, bool]:
        """Initial and final recorded geometric loss, and whether a regularized run ended above its start."""

        geo = [row.l_geo for row in self.history if row.l_geo is not None]

        if not geo:
            return None, None, False

        first, last = geo[0], geo[-1]

        return first, last, self.config.lam > 0 and last > first

    def run(self, write: bool = True) -> TrainResult:
        """
        Train for ``config.steps`` steps.

        :param write:   Write ``metrics.csv``, ``checkpoint.json``, ``geometry_report.json`` and ``summary.json``
                        into ``config.output_dir``.
        """

        cfg = self.config
        out_dir = Path(cfg.output_dir) if write else None

        logger.info(
            'Training %s: d=%d, %d layers, %d parameters, %s, lam=%s, %d steps, seed %d',
            cfg.task, cfg.d, cfg.n_layers, self.model.params.size, cfg.optimizer, cfg.lam, cfg.steps, cfg.seed
        )

        writer = None

        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            metrics_file = open(out_dir / 'metrics.csv', 'w', newline='', encoding='utf-8')
            writer = csv.writer(metrics_file, lineterminator='\n')
            writer.writerow(METRIC_COLUMNS)

        try:
            for step_index in range(cfg.steps):
                row = self.step(step_index)
                self.history.append(row)

                if writer is not None:
                    writer.writerow(row.as_csv())

                if step_index % cfg.log_every == 0 or step_index == cfg.steps - 1:
                    logger.info(
                        'step %5d  l_total=%.6f  l_task=%.6f  l_geo=%s  accuracy=%s', step_index, row.l_total,
                        row.l_task, _cell(row.l_geo) or '-', _cell(row.accuracy) or '-'
                    )
        finally:
            if writer is not None:
                metrics_file.close()

        report = None

        if self.model.layers:
            report = geometry_report(self.model, self.inputs[:cfg.eval_points], cfg.curvature_h)

        first, last, flagged = self.geometry_flag()

        if flagged:
            warnings.warn(
                f'Geometric loss rose from {first:.6g} to {last:.6g} despite lam={cfg.lam}',
                GeometryNotSimplifiedWarning, stacklevel=2
            )

        summary: dict[str, Any] = {
            'task': cfg.task,
            'steps': cfg.steps,
            'n_params': self.model.params.size,
            **self.evaluate(),
            'l_geo_initial': first,
            'l_geo_final': last,
            'geometry_flagged': flagged
        }

        if out_dir is not None:
            save_checkpoint(out_dir / 'checkpoint.json', self.model, cfg)

            if report is not None:
                report.to_json(out_dir / 'geometry_report.json')

            (out_dir / 'summary.json').write_text(json.dumps(summary, indent=2) + '\n', 'utf-8')

        logger.info('Finished: %s', ', '.join(f'{k}={v}' for k, v in summary.items() if k.startswith('final')))

        return TrainResult(self.model, list(self.history), report, summary, out_dir)


def train(config: TrainConfig, *, write: bool = True) -> TrainResult:
    """
    Train a model from scratch.

    Each step samples a minibatch, evaluates the task loss and, on geometry steps, the per-layer curvature
    and volume losses, backpropagates the total and applies the configured update.

    :param config:      Run configuration.
    :param write:       Write the run's artefacts into ``config.output_dir``.

    :raises TrainingDivergedError:  A loss component became non-finite; the error names it.
    """

    return Trainer(config).run(write)
