from __future__ import annotations

from typing import Any, Callable, Mapping

import numpy as np

from ..exceptions import CustomValueError, NonFiniteError
from ..types import FloatArray
from .array import Array
from .params import ParamStore
from .tape import Tape

__all__ = [
    'ScalarFunc',

    'default_step',
    'value_and_grad',
    'finite_diff_grad', 'directional_fd', 'projected_error', 'jacobian_fd',
    'relative_error'
]

ScalarFunc = Callable[[Mapping[str, Any]], Any]
"""Scalar function of named parameters. Receives tracked Arrays under AD and plain arrays under finite differences."""


def default_step(theta: Any) -> FloatArray:
    """Central-difference step ``1e-5 * max(1, |theta|)``."""

    return 1e-5 * np.maximum(1.0, np.abs(np.asarray(theta, np.float64)))


def _evaluate(f: ScalarFunc, params: Mapping[str, Any], func: Any) -> float:
    value = f(params)
    scalar = value.item() if isinstance(value, Array) else float(np.asarray(value))

    if not np.isfinite(scalar):
        raise NonFiniteError('Function evaluation is not finite!', func)

    return scalar


def value_and_grad(f: ScalarFunc, params: ParamStore) -> tuple[float, dict[str, FloatArray]]:
    """Evaluate ``f`` on a fresh tape and return its value and reverse-mode gradients."""

    with Tape() as tape:
        root = f(tape.watch_store(params))

    if not isinstance(root, Array):
        root = Array(root)

    return root.item(), tape.backward(root)


def finite_diff_grad(f: ScalarFunc, params: ParamStore, h: float | None = None) -> dict[str, FloatArray]:
    """
    Central-difference gradient, one coordinate at a time.

    :param f:           Scalar function of the parameters.
    :param params:      Point of evaluation.
    :param h:           Fixed step. Defaults to :py:func:`default_step` per coordinate.

    :return:            Gradient estimate per parameter name.
    """

    if h is not None and not h > 0:
        raise CustomValueError('Step must be positive, got {h}!', finite_diff_grad, h=h)

    flat = params.flatten()
    steps = default_step(flat) if h is None else np.full(flat.shape, float(h))
    grad = np.zeros_like(flat)

    for i in range(flat.size):
        plus, minus = flat.copy(), flat.copy()
        plus[i] += steps[i]
        minus[i] -= steps[i]

        f_plus = _evaluate(f, params.unflatten(plus), finite_diff_grad)
        f_minus = _evaluate(f, params.unflatten(minus), finite_diff_grad)

        grad[i] = (f_plus - f_minus) / (plus[i] - minus[i])

    layout = params.unflatten(grad)

    return {name: layout[name].copy() for name in layout}


def directional_fd(f: ScalarFunc, params: ParamStore, direction: FloatArray, h: float = 1e-5) -> float:
    """Central difference of ``f`` along a flat ``direction`` in parameter space."""

    flat = params.flatten()

    f_plus = _evaluate(f, params.unflatten(flat + h * direction), directional_fd)
    f_minus = _evaluate(f, params.unflatten(flat - h * direction), directional_fd)

    return (f_plus - f_minus) / (2.0 * h)


def projected_error(
    f: ScalarFunc, params: ParamStore, grad: FloatArray, directions: FloatArray, h: float = 1e-5, floor: float = 1e-6
) -> float:
    """
    Relative error between a flat gradient and central differences, projected on several directions at once.

    The projections along the rows of ``directions`` are compared as one vector.

    :param f:           Scalar function of the parameters.
    :param params:      Point of evaluation.
    :param grad:        Flat gradient to verify.
    :param directions:  Directions ``(k, P)`` in flat parameter space.
    :param h:           Difference step along each direction.
    :param floor:       Smallest denominator of the relative error.
    """

    dirs = np.atleast_2d(np.asarray(directions, np.float64))

    if dirs.shape[1] != np.size(grad):
        raise CustomValueError('Directions must have {n} columns!', projected_error, n=np.size(grad))

    exact = dirs @ np.asarray(grad, np.float64)
    approx = np.array([directional_fd(f, params, u, h) for u in dirs])

    return relative_error(exact, approx, floor)


def jacobian_fd(f: Callable[[FloatArray], Any], x: Any, h: float = 1e-6) -> FloatArray:
    """
    Central-difference Jacobian of a vector map.

    :return:    Matrix of shape ``(len(f(x)), len(x))``.
    """

    def _call(at: FloatArray) -> FloatArray:
        value = f(at)

        return np.asarray(value.data if isinstance(value, Array) else value, np.float64).ravel()

    point = np.asarray(x, np.float64)
    columns = list[FloatArray]()

    for i in range(point.size):
        plus, minus = point.copy(), point.copy()
        plus[i] += h
        minus[i] -= h

        columns.append((_call(plus) - _call(minus)) / (2.0 * h))

    jac = np.stack(columns, axis=1)

    if not np.isfinite(jac).all():
        raise NonFiniteError('Jacobian estimate is not finite!', jacobian_fd)

    return jac


def relative_error(a: Any, b: Any, floor: float = 1e-12) -> float:
    """``|a - b| / max(|a|, |b|, floor)`` in the 2-norm."""

    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)

    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))
