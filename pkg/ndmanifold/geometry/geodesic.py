"""
This module implements geodesic integration
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Iterator

import numpy as np
from scipy.integrate import trapezoid

from ..exceptions import CustomValueError, NonFiniteError, ShapeMismatchError, SingularMetricError
from ..types import FloatArray
from .curvature import CHRISTOFFEL_STEP, christoffel_values
from .fields import MetricField

__all__ = [
    'GeodesicPath',

    'geodesic_integrate',

    'curve_length'
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GeodesicPath:
    """Uniformly sampled geodesic."""

    t: FloatArray
    """Sample times ``(n + 1,)``."""

    x: FloatArray
    """Positions ``(n + 1, d)``."""

    v: FloatArray
    """Velocities ``(n + 1, d)``."""

    speed: FloatArray
    """Metric speed ``sqrt(g(v, v))`` at every sample."""

    @property
    def endpoint(self) -> FloatArray:
        return self.x[-1]

    @property
    def energy(self) -> FloatArray:
        """``g(v, v)`` at every sample, conserved along a geodesic."""

        return self.speed ** 2

    def speed_drift(self) -> float:
        """Largest relative change of ``g(v, v)`` from its initial value."""

        energy = self.energy

        if energy[0] == 0.0:
            return float(np.max(np.abs(energy)))

        return float(np.max(np.abs(energy - energy[0])) / energy[0])

    def rows(self) -> Iterator[list[float]]:
        """``(t, x..., speed)`` per sample."""

        for t, x, speed in zip(self.t, self.x, self.speed):
            yield [float(t), *map(float, x), float(speed)]


def _vector(value: Any, d: int, name: str) -> FloatArray:
    vec = np.array(value, dtype=np.float64)

    if vec.shape != (d, ):
        raise ShapeMismatchError('{name} must have length {d}, got shape {shape}!', geodesic_integrate,
                                 name=name, d=d, shape=vec.shape)

    if not np.isfinite(vec).all():
        raise NonFiniteError('{name} must be finite!', geodesic_integrate, name=name)

    return vec


def geodesic_integrate(
    field: MetricField, x0: Any, v0: Any, T: float = 1.0, n: int = 1000, h: float = CHRISTOFFEL_STEP
) -> GeodesicPath:
    """
    Integrate the geodesic equation ``ẍᵏ = -Γᵏ_ij ẋⁱ ẋʲ`` with classical fourth-order Runge-Kutta.

    :param field:       Metric field.
    :param x0:          Start point ``(d,)``.
    :param v0:          Start velocity ``(d,)``.
    :param T:           Duration. Negative values integrate backwards.
    :param n:           Number of uniform steps.
    :param h:           Difference step for the Christoffel symbols.

    :raises SingularMetricError:    The metric breaks down along the path; ``t`` holds the failing time.
    """

    d = field.dim
    x, v = _vector(x0, d, 'x0'), _vector(v0, d, 'v0')

    if n < 1:
        raise CustomValueError('At least one step is needed, got n={n}!', geodesic_integrate, n=n)

    if not np.isfinite(T):
        raise CustomValueError('Duration must be finite, got {T}!', geodesic_integrate, T=T)

    if not h > 0:
        raise CustomValueError('Difference step must be positive, got {h}!', geodesic_integrate, h=h)

    dt = T / n
    times = np.linspace(0.0, T, n + 1)

    def accel(at: FloatArray, vel: FloatArray, t: float) -> tuple[FloatArray, FloatArray]:
        try:
            gamma, g = christoffel_values(field, at, h)
        except SingularMetricError as e:
            raise SingularMetricError('Metric singularity along the geodesic!', geodesic_integrate, e, t=t) from e

        return -np.einsum('kij,i,j->k', gamma, vel, vel), g

    xs, vs, speeds = [x.copy()], [v.copy()], list[float]()

    for step in range(n):
        t = float(times[step])

        a1, g = accel(x, v, t)
        speeds.append(float(np.sqrt(v @ g @ v)))

        a2, _ = accel(x + 0.5 * dt * v, v + 0.5 * dt * a1, t + 0.5 * dt)
        v2 = v + 0.5 * dt * a1

        a3, _ = accel(x + 0.5 * dt * v2, v + 0.5 * dt * a2, t + 0.5 * dt)
        v3 = v + 0.5 * dt * a2

        a4, _ = accel(x + dt * v3, v + dt * a3, t + dt)
        v4 = v + dt * a3

        x = x + dt / 6.0 * (v + 2.0 * v2 + 2.0 * v3 + v4)
        v = v + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)

        if not (np.isfinite(x).all() and np.isfinite(v).all()):
            raise NonFiniteError('Geodesic state became non-finite at t={t}!', geodesic_integrate, t=t + dt)

        xs.append(x)
        vs.append(v)

    _, g = accel(x, v, float(times[-1]))
    speeds.append(float(np.sqrt(v @ g @ v)))

    path = GeodesicPath(times, np.stack(xs), np.stack(vs), np.array(speeds))

    logger.debug('Integrated geodesic over T=%s in %d steps, speed drift %.3e', T, n, path.speed_drift())

    return path


def curve_length(path: GeodesicPath) -> float:
    """Length of a sampled curve under its metric (trapezoidal rule over the speed)."""

    return float(abs(trapezoid(path.speed, path.t)))
