"""
This module contains the gradient and closed-form oracle checks
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Callable, Iterable

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .autodiff import ParamStore, projected_error, relative_error, value_and_grad
from .autodiff.gradcheck import ScalarFunc, jacobian_fd
from .coupling import CoordinateStack, stack_forward, stack_inverse
from .datasets import Task, make_dataset
from .exceptions import CustomError
from .geometry import (
    MetricNet, ReferenceField, christoffel, geodesic_integrate, metric_at, metric_from_factor, ricci_scalar,
    volume_element, volume_elements
)
from .losses import curvature_loss, task_loss, total_loss, volume_loss
from .model import NDMModel, layer_geometry, ndm_forward
from .optim import cg_solve

__all__ = [
    'CheckResult',

    'GRADCHECK_COMPONENTS',

    'run_gradcheck', 'run_oracles',

    'exit_code'
]

logger = logging.getLogger(__name__)

GRADCHECK_COMPONENTS = ('l_task', 'l_curv', 'l_vol', 'l_total')


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one named check."""

    name: str
    passed: bool
    error: float
    """Worst measured error, in the check's own unit."""

    tolerance: float
    detail: str = ''

    def __str__(self) -> str:
        status = 'ok' if self.passed else 'FAIL'

        return f'[{status}] {self.name}: error {self.error:.3e} (tolerance {self.tolerance:.0e}) {self.detail}'.rstrip()


def _judge(name: str, error: float, tolerance: float, detail: str = '') -> CheckResult:
    result = CheckResult(name, bool(np.isfinite(error) and error < tolerance), float(error), tolerance, detail)

    logger.log(logging.INFO if result.passed else logging.ERROR, '%s', result)

    return result


def _guarded(name: str, tolerance: float, check: Callable[[], CheckResult]) -> CheckResult:
    try:
        return check()
    except CustomError as e:
        return _judge(name, float('inf'), tolerance, str(e))


def exit_code(results: Iterable[CheckResult]) -> int:
    """0 when every check passed, 1 otherwise."""

    return 0 if all(result.passed for result in results) else 1


def _component(
    model: NDMModel, inputs: Any, targets: Any, name: str, lam: float, h: float
) -> ScalarFunc:
    def loss(params: Any) -> Any:
        fwd = ndm_forward(model, inputs, params=params)
        l_task = task_loss(fwd.outputs, targets)

        if name == 'l_task':
            return l_task

        geometry = layer_geometry(model, fwd.charts, params, None, h)
        l_curv = curvature_loss([res.scalar for res in geometry])
        l_vol = volume_loss([volume_elements(res.metric) for res in geometry])

        if name == 'l_curv':
            return l_curv

        if name == 'l_vol':
            return l_vol

        return total_loss(l_task, l_curv, l_vol, lam).l_total

    return loss


def run_gradcheck(
    seed: int = 0, draws: int = 100, directions: int = 6,
    tolerance: float = 1e-4, step: float = 1e-5, curvature_h: float = 2e-2
) -> list[CheckResult]:
    """
    Compare reverse-mode gradients of every loss component against central differences.

    Uses a two-layer model of width 2 on a small two-moons batch. Every draw perturbs the parameters
    and compares the directional derivatives along random unit directions, taken together as one vector.

    :param seed:            Seed of the parameter draws, directions and data.
    :param draws:           Number of random parameter draws.
    :param directions:      Random directions per draw and component.
    :param tolerance:       Largest accepted relative error.
    :param step:            Finite-difference step in parameter space.
    :param curvature_h:     Stencil step of the curvature computation.

    :return:                One result per loss component.
    """

    rng = np.random.default_rng(seed)
    data = make_dataset(Task.TWO_MOONS, 8, rng)
    model = NDMModel.build(2, 2, 2, hidden=4, metric_init_scale=0.3, rng=rng)

    worst = dict.fromkeys(GRADCHECK_COMPONENTS, 0.0)
    failures = dict[str, str]()

    for draw in range(draws):
        params = model.params.perturbed(rng, 0.1)

        for name in GRADCHECK_COMPONENTS:
            if name in failures:
                continue

            loss = _component(model, data.inputs, data.targets, name, 0.1, curvature_h)

            try:
                _, grads = value_and_grad(loss, params)
                flat = params.flatten_grads(grads)

                basis = rng.standard_normal((directions, flat.size))
                basis /= np.linalg.norm(basis, axis=1, keepdims=True)

                worst[name] = max(worst[name], projected_error(loss, params, flat, basis, step))
            except CustomError as e:
                failures[name] = f'draw {draw}: {e}'

        logger.debug('gradcheck draw %d: %s', draw, worst)

    return [
        _judge(f'gradient {name}', float('inf') if name in failures else worst[name], tolerance,
               failures.get(name, f'over {draws} draws'))
        for name in GRADCHECK_COMPONENTS
    ]


def _curvature_oracles() -> list[CheckResult]:
    cases = [
        (ReferenceField.EUCLIDEAN, (0.3, -0.2), 1e-8, False),
        (ReferenceField.POLAR, (2.0, 0.0), 1e-5, False),
        (ReferenceField.SPHERE, (np.pi / 4, 0.3), 1e-3, True),
        (ReferenceField.POINCARE, (0.0, 1.0), 1e-3, True)
    ]

    results = list[CheckResult]()

    for ref, point, tol, relative in cases:
        def check(
            ref: ReferenceField = ref, point: Any = point, tol: float = tol, relative: bool = relative
        ) -> CheckResult:
            value = ricci_scalar(ref.field, point).item()
            exact = ref.scalar_curvature
            err = abs(value - exact) / abs(exact) if relative else abs(value)

            return _judge(f'ricci {ref.value}', err, tol, f'R={value:.9g}, exact {exact:g}')

        results.append(_guarded(f'ricci {ref.value}', tol, check))

    return results


def _christoffel_oracle() -> CheckResult:
    def check() -> CheckResult:
        gamma = christoffel(ReferenceField.POLAR.field, (2.0, 0.0)).data

        exact = np.zeros((2, 2, 2))
        exact[0, 1, 1] = -2.0
        exact[1, 0, 1] = exact[1, 1, 0] = 0.5

        return _judge('christoffel polar', float(np.max(np.abs(gamma - exact))), 1e-6)

    return _guarded('christoffel polar', 1e-6, check)


def _geodesic_oracles() -> list[CheckResult]:
    def straight() -> CheckResult:
        path = geodesic_integrate(ReferenceField.EUCLIDEAN.field, (0.0, 0.0), (1.0, 0.0))

        return _judge('geodesic euclidean endpoint', float(np.max(np.abs(path.endpoint - (1.0, 0.0)))), 1e-8)

    def equator() -> CheckResult:
        path = geodesic_integrate(ReferenceField.SPHERE.field, (np.pi / 2, 0.0), (0.0, 1.0))

        return _judge('geodesic sphere equator', float(np.max(np.abs(path.x[:, 0] - np.pi / 2))), 1e-6)

    def circle() -> CheckResult:
        field = ReferenceField.POINCARE.field
        radii = [
            np.hypot(path.x[:, 0], path.x[:, 1])
            for path in (geodesic_integrate(field, (0.0, 1.0), (1.0, 0.0), T=sign) for sign in (1.0, -1.0))
        ]

        return _judge('geodesic poincare circle', float(np.max(np.abs(np.concatenate(radii) - 1.0))), 1e-4)

    results = [
        _guarded('geodesic euclidean endpoint', 1e-8, straight),
        _guarded('geodesic sphere equator', 1e-6, equator),
        _guarded('geodesic poincare circle', 1e-4, circle)
    ]

    starts = {
        ReferenceField.EUCLIDEAN: ((0.0, 0.0), (1.0, 0.5)),
        ReferenceField.SPHERE: ((np.pi / 3, 0.0), (0.3, 1.0)),
        ReferenceField.POINCARE: ((0.0, 1.0), (1.0, 0.2))
    }

    for ref, (x0, v0) in starts.items():
        def drift(ref: ReferenceField = ref, x0: Any = x0, v0: Any = v0) -> CheckResult:
            return _judge(f'geodesic {ref.value} speed', geodesic_integrate(ref.field, x0, v0).speed_drift(), 1e-4)

        results.append(_guarded(f'geodesic {ref.value} speed', 1e-4, drift))

    return results


def _volume_oracle() -> CheckResult:
    cases = [
        (np.eye(2), 1.0),
        (np.diag([4.0, 9.0]), 6.0),
        (metric_from_factor([[2.0, 0.0], [1.0, 1.0]]).entries, 2.0)
    ]

    err = max(abs(volume_element(g) - exact) for g, exact in cases)

    return _judge('volume element', err, 1e-12)


def _cg_oracle(seed: int = 0, trials: int = 20) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0

    for trial in range(trials):
        k = 2 + trial % 7
        m = rng.standard_normal((k, k))
        a = m.T @ m + np.eye(k)
        b = rng.standard_normal(k)

        x = cg_solve(lambda v, a=a: a @ v, b, max_iters=10 * k, tol=1e-12).x
        worst = max(worst, relative_error(x, cho_solve(cho_factor(a), b)))

    return _judge('cg vs dense solve', worst, 1e-6, f'{trials} systems, k <= 8')


def _metric_fuzz(seed: int = 0, draws: int = 100, points: int = 10, eps: float = 1e-3) -> CheckResult:
    rng = np.random.default_rng(seed)
    net = MetricNet(2, eps=eps)
    base = ParamStore()
    net.init_params(base, rng, 1.0)

    lowest = np.inf

    for _ in range(draws):
        params = base.perturbed(rng, 1.0)

        for x in 3.0 * rng.standard_normal((points, 2)):
            lowest = min(lowest, float(metric_at(net, params, x).eigenvalues()[0]))

    return _judge('metric positive-definite', max(0.0, eps - lowest), 1e-12,
                  f'smallest eigenvalue {lowest:.6g} over {draws * points} draws')


def _invertibility_oracle(seed: int = 0, n_points: int = 1000) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    inverse_err, logdet_err = 0.0, 0.0

    for d in (2, 4, 6):
        stack = CoordinateStack.build(d, 4)
        store = ParamStore()
        stack.init_params(store, rng)
        params = store.perturbed(rng, 0.3)

        x = rng.standard_normal((n_points, d))
        y = stack_forward(stack, params, x).y
        inverse_err = max(inverse_err, float(np.max(np.abs(stack_inverse(stack, params, y).data - x))))

        for point in x[:5]:
            jac = jacobian_fd(lambda p: stack_forward(stack, params, p).y, point)
            exact = stack_forward(stack, params, point).logdet.item()
            logdet_err = max(logdet_err, relative_error(np.linalg.slogdet(jac)[1], exact, 1e-3))

    return [
        _judge('coupling inverse', inverse_err, 1e-10, f'{n_points} points per width'),
        _judge('coupling logdet', logdet_err, 1e-5)
    ]


def run_oracles() -> list[CheckResult]:
    """Closed-form geometry, volume, solver and invertibility checks."""

    return [
        *_curvature_oracles(),
        _christoffel_oracle(),
        *_geodesic_oracles(),
        _guarded('volume element', 1e-12, _volume_oracle),
        _guarded('cg vs dense solve', 1e-6, _cg_oracle),
        _guarded('metric positive-definite', 1e-12, _metric_fuzz),
        *_invertibility_oracle()
    ]
