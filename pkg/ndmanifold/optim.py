"""
This module implements the Fisher operator, conjugate gradient and parameter updates
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple, Sequence

import numpy as np

from .exceptions import CGBreakdownError, CGNotConvergedWarning, CustomValueError, NonFiniteError, ShapeMismatchError
from .types import CustomStrEnum, FloatArray

__all__ = [
    'FisherMode', 'UpdateKind',

    'FisherApprox', 'UpdateRule', 'CGResult',

    'empirical_fisher', 'cg_solve', 'natural_direction', 'step'
]

logger = logging.getLogger(__name__)


class FisherMode(CustomStrEnum):
    """Curvature model used to precondition natural-gradient steps."""

    IDENTITY = 'identity'
    """``G = I``. With zero damping the natural step reduces to plain gradient descent."""

    EMPIRICAL = 'empirical'
    """``G = (1/B) Σ u_b u_bᵀ`` over per-sample gradients ``u_b``."""


class UpdateKind(CustomStrEnum):
    SGD = 'sgd'
    """``θ' = θ - η ∇L``."""

    NATURAL = 'natural'
    """``θ' = θ - η (G + γI)⁻¹ ∇L``, the solve done by conjugate gradient."""


def _vector(value: Any, name: str, func: Any) -> FloatArray:
    vec = np.asarray(value, np.float64)

    if vec.ndim != 1:
        raise ShapeMismatchError('{name} must be a flat vector, got shape {shape}!', func, name=name, shape=vec.shape)

    if not np.isfinite(vec).all():
        raise NonFiniteError('{name} holds non-finite values!', func, name=name)

    return vec


@dataclass(frozen=True, eq=False)
class FisherApprox:
    """
    Matrix-free operator ``v -> G v + damping * v``.

    The per-sample gradients are kept as rows; the full matrix is never formed by :py:meth:`matvec`.
    """

    mode: FisherMode
    damping: float
    dim: int
    grads: FloatArray = field(default_factory=lambda: np.zeros((0, 0)))

    def __post_init__(self) -> None:
        if not (np.isfinite(self.damping) and self.damping >= 0):
            raise CustomValueError('Damping must be non-negative, got {d}!', FisherApprox, d=self.damping)

        if self.mode is FisherMode.EMPIRICAL and (self.grads.ndim != 2 or self.grads.shape[1] != self.dim):
            raise ShapeMismatchError('Per-sample gradients must be (B, {n})!', FisherApprox, n=self.dim)

    @classmethod
    def identity(cls, dim: int, damping: float = 0.0) -> FisherApprox:
        return cls(FisherMode.IDENTITY, damping, dim)

    @property
    def batch_size(self) -> int:
        return int(self.grads.shape[0]) if self.mode is FisherMode.EMPIRICAL else 0

    def matvec(self, v: Any) -> FloatArray:
        vec = np.asarray(v, np.float64)

        if vec.shape != (self.dim, ):
            raise ShapeMismatchError('Expected a vector of {n} entries, got {shape}!', self.matvec,
                                     n=self.dim, shape=vec.shape)

        if self.mode is FisherMode.IDENTITY:
            out = vec.copy()
        else:
            out = self.grads.T @ (self.grads @ vec) / self.grads.shape[0]

        if self.damping:
            out = out + self.damping * vec

        return out

    __call__ = matvec

    def dense(self) -> FloatArray:
        """Materialized operator. Only sensible for small parameter counts."""

        return np.stack([self.matvec(column) for column in np.eye(self.dim)], axis=1)


@dataclass(frozen=True)
class UpdateRule:
    kind: UpdateKind = UpdateKind.SGD
    lr: float = 0.05
    max_iters: int = 50
    tol: float = 1e-8

    def __post_init__(self) -> None:
        object.__setattr__(self, 'kind', UpdateKind.from_param(self.kind, UpdateRule))

        if not (np.isfinite(self.lr) and self.lr > 0):
            raise CustomValueError('Learning rate must be finite and positive, got {lr}!', UpdateRule, lr=self.lr)

        if self.max_iters < 1 or not self.tol > 0:
            raise CustomValueError('Invalid conjugate gradient settings!', UpdateRule, (self.max_iters, self.tol))


class CGResult(NamedTuple):
    x: FloatArray
    """Approximate solution."""

    iterations: int
    """Iterations performed."""

    residual: float
    """Relative residual ``‖A x - b‖ / ‖b‖`` as tracked by the recursion."""

    converged: bool
    """Whether the tolerance was met."""


def empirical_fisher(per_sample_grads: Sequence[Any] | FloatArray, damping: float = 1e-3) -> FisherApprox:
    """
    Empirical Fisher operator ``v -> (1/B) Σ u_b (u_bᵀ v) + damping * v``.

    :param per_sample_grads:    Flattened gradient of the task loss for every sample in the batch.
    :param damping:             Damping added to the diagonal.

    :raises CustomValueError:   Empty batch.
    :raises NonFiniteError:     Non-finite gradients.
    """

    if len(per_sample_grads) == 0:
        raise CustomValueError('Need at least one per-sample gradient!', empirical_fisher)

    rows = [_vector(u, 'Per-sample gradient', empirical_fisher) for u in per_sample_grads]

    if len({row.size for row in rows}) != 1:
        raise ShapeMismatchError('Per-sample gradients have different lengths!', empirical_fisher)

    grads = np.stack(rows)
    grads.flags.writeable = False

    return FisherApprox(FisherMode.EMPIRICAL, float(damping), grads.shape[1], grads)


def cg_solve(
    fisher: FisherApprox | Callable[[FloatArray], FloatArray], b: Any, max_iters: int = 50, tol: float = 1e-8
) -> CGResult:
    """
    Solve ``A x = b`` for a symmetric positive-definite operator by conjugate gradient.

    Hitting ``max_iters`` emits :py:class:`CGNotConvergedWarning` and returns the current iterate.

    :param fisher:      Operator, or any callable computing ``A v``.
    :param b:           Right-hand side.
    :param max_iters:   Iteration cap.
    :param tol:         Relative residual tolerance.

    :raises CGBreakdownError:   A search direction with ``pᵀ A p <= 0``, i.e. the operator is not positive-definite.
    """

    rhs = _vector(b, 'Right-hand side', cg_solve)
    matvec = fisher.matvec if isinstance(fisher, FisherApprox) else fisher

    x = np.zeros_like(rhs)
    b_norm = float(np.sqrt(rhs @ rhs))

    if b_norm == 0.0:
        return CGResult(x, 0, 0.0, True)

    r = rhs.copy()
    p = r.copy()
    rs = float(r @ r)
    residual = 1.0

    for iteration in range(1, max_iters + 1):
        ap = np.asarray(matvec(p), np.float64)
        curvature = float(p @ ap)

        if not (np.isfinite(curvature) and curvature > 0):
            raise CGBreakdownError(
                'Non-positive curvature p·Ap={c} at iteration {i}!', cg_solve, c=curvature, i=iteration
            )

        alpha = rs / curvature
        x = x + alpha * p
        r = r - alpha * ap

        rs_new = float(r @ r)
        residual = float(np.sqrt(rs_new)) / b_norm

        if residual <= tol:
            logger.debug('CG converged in %d iterations (residual %.3e)', iteration, residual)

            return CGResult(x, iteration, residual, True)

        p = r + (rs_new / rs) * p
        rs = rs_new

    warnings.warn(
        f'Conjugate gradient stopped after {max_iters} iterations with residual {residual:.3e}',
        CGNotConvergedWarning, stacklevel=2
    )

    return CGResult(x, max_iters, residual, False)


def natural_direction(fisher: FisherApprox, gradient: Any, rule: UpdateRule | None = None) -> FloatArray:
    """Preconditioned direction ``(G + γI)⁻¹ ∇L``."""

    rule = rule or UpdateRule(UpdateKind.NATURAL)

    return cg_solve(fisher, gradient, rule.max_iters, rule.tol).x


def step(rule: UpdateRule, theta: Any, gradient: Any, fisher: FisherApprox | None = None) -> FloatArray:
    """
    One parameter update.

    :param rule:        Update rule.
    :param theta:       Flat parameter vector.
    :param gradient:    Flat gradient, same length as ``theta``.
    :param fisher:      Operator for natural steps. Required when ``rule.kind`` is natural, ignored otherwise.

    :return:            Updated flat parameters.
    """

    params = _vector(theta, 'theta', step)
    grad = _vector(gradient, 'gradient', step)

    if params.shape != grad.shape:
        raise ShapeMismatchError('theta {a} and gradient {b} differ!', step, a=params.shape, b=grad.shape)

    if rule.kind is UpdateKind.SGD:
        return params - rule.lr * grad

    if fisher is None:
        raise CustomValueError('Natural-gradient steps need a Fisher operator!', step)

    if fisher.dim != params.size:
        raise ShapeMismatchError('Fisher dimension {a} differs from {b} parameters!', step, a=fisher.dim, b=params.size)

    return params - rule.lr * natural_direction(fisher, grad, rule)
