"""
This module contains the toy datasets
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .exceptions import CustomValueError
from .types import CustomStrEnum, FloatArray, IntArray

__all__ = [
    'Task',
    'Dataset',

    'make_dataset'
]


class Task(CustomStrEnum):
    """Synthetic learning problems."""

    TWO_MOONS = 'two_moons'
    """Two interleaved half-circles in the plane, labels 0 and 1. Default noise 0.1."""

    SINUSOID = 'sinusoid'
    """``y = sin x`` for ``x`` uniform in ``[-π, π]``. Default noise 0.05."""

    @property
    def default_noise(self) -> float:
        return 0.1 if self is Task.TWO_MOONS else 0.05

    @property
    def is_classification(self) -> bool:
        return self is Task.TWO_MOONS


class Dataset(NamedTuple):
    inputs: FloatArray
    """Inputs ``(n, input_dim)``."""

    targets: FloatArray | IntArray
    """Integer labels ``(n,)`` or regression targets ``(n,)``."""


def _two_moons(n: int, noise: float, rng: np.random.Generator) -> Dataset:
    n_outer = n // 2
    n_inner = n - n_outer

    t_outer = np.linspace(0.0, np.pi, n_outer)
    t_inner = np.linspace(0.0, np.pi, n_inner)

    inputs = np.concatenate([
        np.stack([np.cos(t_outer), np.sin(t_outer)], axis=1),
        np.stack([1.0 - np.cos(t_inner), 0.5 - np.sin(t_inner)], axis=1)
    ])
    labels = np.concatenate([np.zeros(n_outer, np.int64), np.ones(n_inner, np.int64)])

    if noise:
        inputs = inputs + noise * rng.standard_normal(inputs.shape)

    order = rng.permutation(n)

    return Dataset(inputs[order], labels[order])


def _sinusoid(n: int, noise: float, rng: np.random.Generator) -> Dataset:
    x = rng.uniform(-np.pi, np.pi, n)
    y = np.sin(x)

    if noise:
        y = y + noise * rng.standard_normal(n)

    return Dataset(x[:, None], y)


def make_dataset(task: Task | str, n: int, seed: int | np.random.Generator = 0, noise: float | None = None) -> Dataset:
    """
    Draw a synthetic dataset.

    :param task:        Task name.
    :param n:           Number of samples. Two moons splits them ``n // 2`` / ``n - n // 2`` between classes.
    :param seed:        Seed or generator. The same seed always gives the same data.
    :param noise:       Gaussian noise level. Defaults to the task's own.

    :raises CustomValueError:   Unknown task, or ``n < 1``.
    """

    task = Task.from_param(task, make_dataset)

    if n < 1:
        raise CustomValueError('Need at least one sample, got n={n}!', make_dataset, n=n)

    sigma = task.default_noise if noise is None else float(noise)

    if sigma < 0:
        raise CustomValueError('Noise must be non-negative, got {s}!', make_dataset, s=sigma)

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    if task is Task.TWO_MOONS:
        return _two_moons(n, sigma, rng)

    return _sinusoid(n, sigma, rng)
