from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from os import PathLike
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .exceptions import ConfigError

__all__ = [
    'TASKS', 'OPTIMIZERS',

    'TrainConfig'
]

TASKS = ('two_moons', 'sinusoid')
OPTIMIZERS = ('sgd', 'natural')


@dataclass(frozen=True)
class TrainConfig:
    """
    Everything a training run depends on. Identical configs give bit-identical runs.

    The JSON form mirrors the field names exactly.
    """

    d: int = 2
    """Chart width."""

    n_layers: int = 4
    """Number of manifold layers."""

    hidden: int = 16
    """Width of the two hidden layers of every coupling and metric net."""

    task: str = 'two_moons'
    """``two_moons`` (classification) or ``sinusoid`` (regression)."""

    n_train: int = 512
    """Training set size."""

    noise: float | None = None
    """Dataset noise level. None uses the task's default."""

    lam: float = 0.1
    """Weight of the geometric loss."""

    w_curv: float = 1.0
    """Weight of the curvature term inside the geometric loss."""

    w_vol: float = 1.0
    """Weight of the volume term inside the geometric loss."""

    eps: float = 1e-3
    """Metric floor: every metric is at least ``eps I``."""

    optimizer: str = 'sgd'
    """``sgd`` or ``natural``."""

    lr: float = 0.05
    """Learning rate."""

    damping: float = 1e-3
    """Damping of the empirical Fisher."""

    cg_max_iters: int = 50
    """Conjugate gradient iteration cap."""

    cg_tol: float = 1e-8
    """Conjugate gradient relative residual tolerance."""

    batch_size: int = 64
    """Minibatch size."""

    steps: int = 2000
    """Number of optimizer steps."""

    seed: int = 7
    """Seed of every random stream of the run."""

    geometry_subsample: int = 16
    """Points per layer on which curvature and volume are evaluated."""

    geometry_every: int = 1
    """Evaluate the geometric loss every this many steps."""

    curvature_h: float = 1e-3
    """Difference step of the curvature stencil."""

    metric_init_scale: float = 0.3
    """Scale of the metric nets' output weights at init. 0 starts from a flat metric."""

    share_metric_net: bool = False
    """Use one metric net for every layer."""

    eval_points: int = 256
    """Training points used for the final geometry report."""

    log_every: int = 100
    """Log a progress line every this many steps."""

    output_dir: str = 'runs/ndm'
    """Directory receiving the run's artefacts."""

    def __post_init__(self) -> None:
        self.validate()

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> TrainConfig:
        """
        Build from a mapping of field names. Unknown keys are rejected.

        :raises ConfigError:    Unknown keys, wrong types, or out-of-range values.
        """

        if unknown := sorted(set(data) - set(cls.field_names())):
            raise ConfigError('Unknown config fields: {names}', cls.from_dict, names=', '.join(unknown))

        values = dict[str, Any]()

        for f in fields(cls):
            if f.name in data:
                values[f.name] = cls._coerce(f.name, f.default, data[f.name])

        return cls(**values)

    @staticmethod
    def _coerce(name: str, default: Any, value: Any) -> Any:
        if value is None:
            if name == 'noise':
                return None

            raise ConfigError('"{name}" can\'t be null!', TrainConfig, name=name)

        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError('"{name}" must be a boolean, got {v!r}!', TrainConfig, name=name, v=value)

            return value

        if isinstance(default, int):
            if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
                raise ConfigError('"{name}" must be an integer, got {v!r}!', TrainConfig, name=name, v=value)

            return int(value)

        if isinstance(default, float) or name == 'noise':
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError('"{name}" must be a number, got {v!r}!', TrainConfig, name=name, v=value)

            return float(value)

        if not isinstance(value, str):
            raise ConfigError('"{name}" must be a string, got {v!r}!', TrainConfig, name=name, v=value)

        return value

    @classmethod
    def from_json(cls, path: str | PathLike[str]) -> TrainConfig:
        try:
            data = json.loads(Path(path).read_text('utf-8'))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError('Can\'t read config "{path}"!', cls.from_json, e, path=path) from e

        if not isinstance(data, dict):
            raise ConfigError('Config "{path}" must hold a JSON object!', cls.from_json, path=path)

        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self, path: str | PathLike[str]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + '\n', 'utf-8')

    def replace(self, **changes: Any) -> TrainConfig:
        """Copy with some fields changed, validated again."""

        if unknown := sorted(set(changes) - set(self.field_names())):
            raise ConfigError('Unknown config fields: {names}', self.replace, names=', '.join(unknown))

        return replace(self, **changes)

    @property
    def out_dim(self) -> int:
        """Width of the head's output for the task."""

        return 2 if self.task == 'two_moons' else 1

    @property
    def input_dim(self) -> int:
        return 2 if self.task == 'two_moons' else 1

    def validate(self) -> None:
        """
        Check every documented range.

        :raises ConfigError:    The first violated constraint.
        """

        checks: list[tuple[bool, str]] = [
            (self.task in TASKS, f'task must be one of {", ".join(TASKS)}'),
            (self.optimizer in OPTIMIZERS, f'optimizer must be one of {", ".join(OPTIMIZERS)}'),
            (self.d >= 2, 'd must be at least 2'),
            (self.d >= self.input_dim, 'd must be at least the input width of the task'),
            (self.n_layers >= 0, 'n_layers must be non-negative'),
            (self.hidden >= 1, 'hidden must be positive'),
            (self.n_train >= 1, 'n_train must be positive'),
            (self.noise is None or (np.isfinite(self.noise) and self.noise >= 0), 'noise must be non-negative'),
            (all(np.isfinite(w) and w >= 0 for w in (self.lam, self.w_curv, self.w_vol)),
             'lam, w_curv and w_vol must be finite and non-negative'),
            (np.isfinite(self.eps) and self.eps > 0, 'eps must be positive'),
            (np.isfinite(self.lr) and self.lr > 0, 'lr must be positive'),
            (np.isfinite(self.damping) and self.damping >= 0, 'damping must be non-negative'),
            (self.cg_max_iters >= 1, 'cg_max_iters must be positive'),
            (np.isfinite(self.cg_tol) and self.cg_tol > 0, 'cg_tol must be positive'),
            (self.batch_size >= 1, 'batch_size must be positive'),
            (self.steps >= 0, 'steps must be non-negative'),
            (self.seed >= 0, 'seed must be non-negative'),
            (self.geometry_subsample >= 1, 'geometry_subsample must be positive'),
            (self.geometry_every >= 1, 'geometry_every must be positive'),
            (np.isfinite(self.curvature_h) and self.curvature_h > 0, 'curvature_h must be positive'),
            (np.isfinite(self.metric_init_scale) and self.metric_init_scale >= 0,
             'metric_init_scale must be non-negative'),
            (self.eval_points >= 1, 'eval_points must be positive'),
            (self.log_every >= 1, 'log_every must be positive'),
            (bool(self.output_dir), 'output_dir can\'t be empty')
        ]

        for ok, message in checks:
            if not ok:
                raise ConfigError(message + '!', TrainConfig)
