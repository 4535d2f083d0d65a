"""
This module contains the task and geometric losses
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, ClassVar, Sequence

import numpy as np

from .autodiff import Array, as_array, broadcast, concat, einsum, exp, log, reduce_mean, reduce_sum, reshape, square
from .exceptions import CustomIndexError, CustomValueError, ShapeMismatchError
from .types import CustomStrEnum

__all__ = [
    'TaskLoss',

    'LossBreakdown',

    'task_loss', 'curvature_loss', 'volume_loss', 'total_loss',

    'accuracy'
]


class TaskLoss(CustomStrEnum):
    """Supervised objective applied to the head's outputs."""

    CROSS_ENTROPY = 'cross_entropy'
    """Softmax cross-entropy on logits ``(N, C)`` against integer labels ``(N,)``."""

    MSE = 'mse'
    """Mean squared error, averaged over every entry."""

    @classmethod
    def for_task(cls, task: str) -> TaskLoss:
        return cls.CROSS_ENTROPY if task == 'two_moons' else cls.MSE


@dataclass(frozen=True)
class LossBreakdown:
    """
    Components of one evaluation of the objective.

    ``l_geo = w_curv * l_curv + w_vol * l_vol`` and ``l_total = l_task + lam * l_geo``.
    """

    COLUMNS: ClassVar[tuple[str, ...]] = ('l_task', 'l_curv', 'l_vol', 'l_geo', 'l_total')

    l_task: Array
    l_curv: Array
    l_vol: Array
    l_geo: Array
    l_total: Array

    def values(self) -> tuple[float, ...]:
        """Plain floats in :py:attr:`COLUMNS` order."""

        return tuple(getattr(self, name).item() for name in self.COLUMNS)


def _cross_entropy(logits: Array, labels: Any) -> Array:
    if logits.ndim != 2:
        raise ShapeMismatchError('Logits must be (N, C), got {shape}!', task_loss, shape=logits.shape)

    n, classes = logits.shape
    targets = np.asarray(labels)

    if targets.shape != (n, ):
        raise ShapeMismatchError('Expected {n} labels, got shape {shape}!', task_loss, n=n, shape=targets.shape)

    if not np.issubdtype(targets.dtype, np.integer):
        if not np.all(targets == np.round(targets)):
            raise CustomValueError('Class labels must be integers!', task_loss)

        targets = targets.astype(np.int64)

    if targets.size and (targets.min() < 0 or targets.max() >= classes):
        raise CustomIndexError('Labels must lie in [0, {c})!', task_loss, c=classes)

    # Shift by the detached row max before exponentiating.
    shift = np.max(logits.data, axis=1)
    shifted = logits - broadcast(shift[:, None], (n, classes))

    log_norm = log(reduce_sum(exp(shifted), axis=1))
    picked = einsum('nc,nc->n', shifted, np.eye(classes)[targets])

    return reduce_mean(log_norm - picked)


def task_loss(predictions: Any, targets: Any, kind: TaskLoss | str = TaskLoss.CROSS_ENTROPY) -> Array:
    """
    Batch-mean supervised loss.

    :param predictions:     Logits ``(N, C)`` for cross-entropy. For MSE, values shaped like ``targets``,
                            or ``(N, 1)`` against flat targets ``(N,)``.
    :param targets:         Integer labels ``(N,)``, or regression targets.
    :param kind:            Loss to apply.

    :raises CustomIndexError:       A label is out of range.
    :raises ShapeMismatchError:     Shapes don't match, or the batch is empty.
    """

    kind = TaskLoss.from_param(kind, task_loss)
    pred = as_array(predictions)

    if not pred.size:
        raise ShapeMismatchError('Cannot compute a loss over an empty batch!', task_loss)

    if kind is TaskLoss.CROSS_ENTROPY:
        return _cross_entropy(pred, targets)

    target = np.asarray(targets, np.float64)

    # One regression output per row may be matched against flat targets.
    if pred.ndim == 2 and pred.shape[1] == 1 and target.shape == pred.shape[:1]:
        target = target[:, None]

    if target.shape != pred.shape:
        raise ShapeMismatchError('Predictions {a} and targets {b} differ!', task_loss, a=pred.shape, b=target.shape)

    return reduce_mean(square(pred - target))


def _groups(values: Any, func: Any) -> list[Array]:
    """Split geometric values into per-layer flat arrays. A flat sequence of numbers is one layer."""

    if isinstance(values, (Array, np.ndarray)):
        items = [values]
    else:
        items = list(values)

        if items and all(np.isscalar(item) for item in items):
            items = [np.array(items, np.float64)]

    groups = [as_array(item) for item in items]

    if not groups or any(group.size == 0 for group in groups):
        raise CustomValueError('Cannot compute a geometric loss over an empty batch!', func)

    return [reshape(group, (group.size, )) for group in groups]


def curvature_loss(r_values: Array | Sequence[Any]) -> Array:
    """
    Mean of ``R²`` over every (layer, sample) pair.

    :param r_values:    Ricci scalars of one layer, or a sequence with one array per layer.
    """

    groups = _groups(r_values, curvature_loss)
    pooled = groups[0] if len(groups) == 1 else concat(groups, axis=0)

    return reduce_mean(square(pooled))


def volume_loss(vol_values: Array | Sequence[Any]) -> Array:
    """
    Population variance of the volume element within each layer, averaged over layers.

    A single-sample layer contributes zero.

    :param vol_values:  Volume elements of one layer, or a sequence with one array per layer.

    :raises CustomValueError:   Empty input, or a non-positive volume.
    """

    groups = _groups(vol_values, volume_loss)

    for group in groups:
        if not np.all(group.data > 0):
            raise CustomValueError('Volume elements must be positive!', volume_loss)

    total = groups[0].var()

    for group in groups[1:]:
        total = total + group.var()

    return total * (1.0 / len(groups))


def total_loss(
    l_task: Any, l_curv: Any, l_vol: Any, lam: float, w_curv: float = 1.0, w_vol: float = 1.0
) -> LossBreakdown:
    """
    Combine the task loss with the weighted geometric terms.

    :param l_task:      Task loss.
    :param l_curv:      Curvature loss.
    :param l_vol:       Volume loss.
    :param lam:         Weight of the geometric loss.
    :param w_curv:      Weight of the curvature loss inside the geometric loss.
    :param w_vol:       Weight of the volume loss inside the geometric loss.

    :raises CustomValueError:   A weight is negative or not finite.
    """

    for name, weight in (('lam', lam), ('w_curv', w_curv), ('w_vol', w_vol)):
        if not (np.isfinite(weight) and weight >= 0):
            raise CustomValueError('"{name}" must be a finite non-negative weight, got {w}!', total_loss,
                                   name=name, w=weight)

    task, curv, vol = as_array(l_task), as_array(l_curv), as_array(l_vol)

    for name, value in (('l_task', task), ('l_curv', curv), ('l_vol', vol)):
        if value.shape != ():
            raise ShapeMismatchError('"{name}" must be a scalar, got shape {shape}!', total_loss,
                                     name=name, shape=value.shape)

    geo = curv * float(w_curv) + vol * float(w_vol)
    total = task + geo * float(lam)

    return LossBreakdown(task, curv, vol, geo, total)


def accuracy(predictions: Any, targets: Any) -> float:
    """Fraction of rows whose arg-max logit equals the label."""

    logits = predictions.data if isinstance(predictions, Array) else np.asarray(predictions)
    labels = np.asarray(targets)

    if logits.ndim != 2 or labels.shape != (logits.shape[0], ) or not labels.size:
        raise ShapeMismatchError('Expected logits (N, C) and N labels!', accuracy)

    return float(np.mean(np.argmax(logits, axis=1) == labels))
