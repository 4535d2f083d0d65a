"""
This module implements finite-difference Christoffel symbols and Ricci scalars
"""

from __future__ import annotations

from typing import Any, NamedTuple

import numpy as np

from ..autodiff import Array, as_array, broadcast, concat, einsum, inv, reshape, take, transpose
from ..exceptions import CustomValueError, NonFiniteError, ShapeMismatchError, SingularMetricError
from ..types import FloatArray
from .fields import MetricField

__all__ = [
    'ChristoffelResult', 'CurvatureResult',

    'CHRISTOFFEL_STEP', 'CURVATURE_STEP',

    'christoffel_batch', 'christoffel_values', 'ricci_batch',
    'christoffel', 'ricci_scalar'
]

CHRISTOFFEL_STEP = 1e-4
"""Default difference step for Christoffel symbols used on their own (geodesics)."""

CURVATURE_STEP = 1e-3
"""Default difference step for curvature, which differences twice."""


class ChristoffelResult(NamedTuple):
    gamma: Array
    """``Γ[n, k, i, j] = Γᵏ_ij`` at every point."""

    metric: Array
    """Metric ``(N, d, d)`` at every point."""

    inverse: Array
    """Inverse metric ``(N, d, d)`` at every point."""


class CurvatureResult(NamedTuple):
    scalar: Array
    """Ricci scalar ``(N,)``."""

    metric: Array
    """Metric ``(N, d, d)`` at the same points."""


def _stencil(points: Array, h: float) -> Array:
    """
    Centre and ``±h`` neighbours along every axis, stacked block-wise.

    Row ``s * N + n`` holds point ``n`` shifted by offset ``s``, where the offsets are
    ``0, +h e_0, ..., +h e_{d-1}, -h e_0, ..., -h e_{d-1}``.
    """

    n, d = points.shape
    shifts = np.concatenate([np.eye(d), -np.eye(d)]) * h

    return concat([points] + [points + broadcast(shift, (n, d)) for shift in shifts], axis=0)


def _central(values: Array, d: int, h: float) -> Array:
    """Central differences of stencil values ``(2d+1, N, ...)`` as ``(N, d, ...)``."""

    plus = take(values, slice(1, d + 1))
    minus = take(values, slice(d + 1, 2 * d + 1))
    diff = (plus - minus) * (0.5 / h)

    axes = (1, 0) + tuple(range(2, values.ndim))

    return transpose(diff, axes)


def _check_inputs(field: MetricField, points: Any, h: float, func: Any) -> Array:
    if not h > 0:
        raise CustomValueError('Difference step must be positive, got {h}!', func, h=h)

    pts = as_array(points)

    if pts.ndim != 2 or pts.shape[1] != field.dim or pts.shape[0] == 0:
        raise ShapeMismatchError(
            'Expected a non-empty batch of width {d}, got shape {shape}!', func, d=field.dim, shape=pts.shape
        )

    return pts


def _check_spd(g: Array, func: Any) -> None:
    try:
        np.linalg.cholesky(g.data)
    except np.linalg.LinAlgError as e:
        raise SingularMetricError('Metric is not positive-definite near the evaluation point!', func, e) from e


def christoffel_batch(field: MetricField, points: Any, h: float = CHRISTOFFEL_STEP) -> ChristoffelResult:
    """
    Christoffel symbols of the second kind at a batch of points.

    Metric derivatives come from central differences with step ``h``; every operation is a
    differentiable primitive, so gradients flow through the stencil to the field's parameters.
    The result is symmetrized in its lower indices.

    :param field:       Metric field.
    :param points:      Points ``(N, d)``.
    :param h:           Difference step.

    :raises SingularMetricError:    The metric is not positive-definite somewhere on the stencil.
    """

    pts = _check_inputs(field, points, h, christoffel_batch)
    n, d = pts.shape

    try:
        stacked = field.metric(_stencil(pts, h))
    except NonFiniteError as e:
        raise SingularMetricError('Metric is not finite near the evaluation point!', christoffel_batch, e) from e

    _check_spd(stacked, christoffel_batch)

    g_all = reshape(stacked, (2 * d + 1, n, d, d))
    g = take(g_all, 0)
    g_inv = inv(g)

    # dg[n, l, i, j] = ∂_l g_ij
    dg = _central(g_all, d, h)

    # [n, i, j, l] = ∂_i g_jl + ∂_j g_il - ∂_l g_ij
    lowered = dg + transpose(dg, (0, 2, 1, 3)) - transpose(dg, (0, 2, 3, 1))

    gamma = einsum('nkl,nijl->nkij', g_inv, lowered) * 0.5
    gamma = (gamma + transpose(gamma, (0, 1, 3, 2))) * 0.5

    return ChristoffelResult(gamma, g, g_inv)


def christoffel_values(
    field: MetricField, point: FloatArray, h: float = CHRISTOFFEL_STEP
) -> tuple[FloatArray, FloatArray]:
    """
    Christoffel symbols ``[k, i, j]`` and metric at one point, on plain arrays.

    Same stencil as :py:func:`christoffel_batch` without recording anything, for callers that only need values.

    :raises SingularMetricError:    The metric is not finite or not positive-definite on the stencil.
    """

    d = field.dim
    shifts = np.concatenate([np.zeros((1, d)), np.eye(d), -np.eye(d)]) * h

    try:
        with np.errstate(all='ignore'):
            g_all = field.metric_values(np.asarray(point, np.float64)[None, :] + shifts)
    except NonFiniteError as e:
        raise SingularMetricError('Metric is not finite near the evaluation point!', christoffel_values, e) from e

    if not np.isfinite(g_all).all():
        raise SingularMetricError('Metric is not finite near the evaluation point!', christoffel_values)

    try:
        np.linalg.cholesky(g_all)
    except np.linalg.LinAlgError as e:
        raise SingularMetricError(
            'Metric is not positive-definite near the evaluation point!', christoffel_values, e
        ) from e

    g = g_all[0]
    dg = (g_all[1:d + 1] - g_all[d + 1:]) * (0.5 / h)

    lowered = dg + np.transpose(dg, (1, 0, 2)) - np.transpose(dg, (1, 2, 0))
    gamma = 0.5 * np.einsum('kl,ijl->kij', np.linalg.inv(g), lowered)

    return 0.5 * (gamma + np.transpose(gamma, (0, 2, 1))), g


def ricci_batch(field: MetricField, points: Any, h: float = CURVATURE_STEP) -> CurvatureResult:
    """
    Ricci scalar at a batch of points.

    Christoffel symbols are evaluated on a ``±h`` stencil around each point and differenced again,
    so the metric must stay positive-definite within ``2h`` of every point.
    With ``R^a_bcd = ∂_c Γ^a_db - ∂_d Γ^a_cb + Γ^a_ce Γ^e_db - Γ^a_de Γ^e_cb``,
    the Ricci tensor is ``R_bd = R^a_bad`` and the scalar is ``g^bd R_bd``.

    :param field:       Metric field.
    :param points:      Points ``(N, d)``.
    :param h:           Difference step, shared by both levels of differencing.
    """

    pts = _check_inputs(field, points, h, ricci_batch)
    n, d = pts.shape
    size = 2 * d + 1

    inner = christoffel_batch(field, _stencil(pts, h), h)

    gamma_all = reshape(inner.gamma, (size, n, d, d, d))
    gamma = take(gamma_all, 0)

    # dgamma[n, m, k, i, j] = ∂_m Γᵏ_ij
    dgamma = _central(gamma_all, d, h)

    eye = np.eye(d)
    trace = einsum('nrkl,rk->nl', gamma, eye)

    ricci = (
        einsum('nrkvs,rk->nsv', dgamma, eye)
        - einsum('nvrks,rk->nsv', dgamma, eye)
        + einsum('nl,nlvs->nsv', trace, gamma)
        - einsum('nrvl,nlrs->nsv', gamma, gamma)
    )

    g = take(reshape(inner.metric, (size, n, d, d)), 0)
    g_inv = take(reshape(inner.inverse, (size, n, d, d)), 0)

    return CurvatureResult(einsum('nsv,nsv->n', g_inv, ricci), g)


def _point_or_batch(field: MetricField, x: Any, func: Any) -> tuple[Array, bool]:
    pts = as_array(x)

    if pts.shape == (field.dim, ):
        return pts.reshape(1, field.dim), True

    if pts.ndim != 2:
        raise ShapeMismatchError(
            'Expected a point ({d},) or a batch (N, {d}), got shape {shape}!', func, d=field.dim, shape=pts.shape
        )

    return pts, False


def christoffel(field: MetricField, x: Any, h: float = CHRISTOFFEL_STEP) -> Array:
    """
    Christoffel symbols ``Γᵏ_ij`` indexed ``[k, i, j]`` at a point, or ``[n, k, i, j]`` over a batch.

    :param field:       Metric field.
    :param x:           Point ``(d,)`` or batch ``(N, d)``.
    :param h:           Difference step for the metric derivatives.
    """

    pts, single = _point_or_batch(field, x, christoffel)
    gamma = christoffel_batch(field, pts, h).gamma

    return take(gamma, 0) if single else gamma


def ricci_scalar(field: MetricField, x: Any, h: float = CURVATURE_STEP) -> Array:
    """Ricci scalar at a point (scalar) or over a batch ``(N,)``."""

    pts, single = _point_or_batch(field, x, ricci_scalar)
    scalar = ricci_batch(field, pts, h).scalar

    return take(scalar, 0) if single else scalar
