from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from ndmanifold import (
    CoordinateStack, CouplingLayer, CustomValueError, ParamStore, ShapeMismatchError, coupling_forward,
    coupling_inverse, jacobian_fd, mask_for, relative_error, stack_forward, stack_inverse
)


def _constant_layer(index: int = 0, prefix: str | None = None) -> tuple[CouplingLayer, ParamStore]:
    """Width-2 layer whose nets output ``s = log 2`` and ``t = 1`` everywhere."""

    layer = CouplingLayer.for_index(2, index, prefix, hidden=(4, ))
    store = ParamStore()
    layer.init_params(store, np.random.default_rng(0))

    return layer, store.with_values(**{
        f'{layer.prefix}.scale.b1': [np.log(2.0)], f'{layer.prefix}.shift.b1': [1.0]
    })


def _random_stack(d: int, n_layers: int, rng: np.random.Generator) -> tuple[CoordinateStack, ParamStore]:
    stack = CoordinateStack.build(d, n_layers, hidden=(8, 8))
    store = ParamStore()
    stack.init_params(store, rng)

    return stack, store.perturbed(rng, 0.3)


@pytest.mark.parametrize('d, index, passive', [
    (2, 0, (0, )), (2, 1, (1, )), (4, 0, (0, 1)), (4, 1, (2, 3)), (3, 0, (0, 1)), (3, 1, (1, 2)), (3, 2, (0, 2))
])
def test_mask_rotation(d: int, index: int, passive: tuple[int, ...]) -> None:
    assert mask_for(d, index)[0] == passive


def test_odd_width_activates_every_coordinate() -> None:
    active = set[int]()

    for index in range(5):
        active |= set(mask_for(5, index)[1])

    assert active == set(range(5))


def test_mask_needs_two_coordinates() -> None:
    with pytest.raises(CustomValueError):
        mask_for(1, 0)


def test_identity_at_initialization(rng: np.random.Generator) -> None:
    layer = CouplingLayer.for_index(4, 0)
    store = ParamStore()
    layer.init_params(store, rng)
    x = rng.standard_normal(4)

    z, logdet = coupling_forward(layer, store, x)

    assert_array_equal(z.data, x)
    assert logdet.item() == 0.0
    assert_array_equal(coupling_inverse(layer, store, x).data, x)


def test_constant_nets_by_hand() -> None:
    layer, params = _constant_layer()

    z, logdet = coupling_forward(layer, params, [3.0, 5.0])

    assert_allclose(z.data, [3.0, 11.0], rtol=1e-15)
    assert logdet.item() == pytest.approx(np.log(2.0), rel=1e-15)
    assert_allclose(coupling_inverse(layer, params, [3.0, 11.0]).data, [3.0, 5.0], rtol=1e-15)


def test_constant_nets_match_jacobian() -> None:
    layer, params = _constant_layer()
    jac = jacobian_fd(lambda x: coupling_forward(layer, params, x)[0], [3.0, 5.0])

    assert np.log(abs(np.linalg.det(jac))) == pytest.approx(np.log(2.0), rel=1e-6)


@pytest.mark.parametrize('d', [2, 3, 4, 6])
def test_round_trip(d: int, rng: np.random.Generator) -> None:
    stack, params = _random_stack(d, 4, rng)
    x = 2.0 * rng.standard_normal((1000, d))

    result = stack_forward(stack, params, x)

    assert np.max(np.abs(stack_inverse(stack, params, result.y).data - x)) < 1e-10

    for layer, chart, following in zip(stack.layers, result.charts, result.charts[1:]):
        assert np.max(np.abs(coupling_inverse(layer, params, following).data - chart.data)) < 1e-10


@pytest.mark.parametrize('d', [2, 4, 6])
def test_logdet_matches_jacobian(d: int, rng: np.random.Generator) -> None:
    layer = CouplingLayer.for_index(d, 1, hidden=(8, 8))
    store = ParamStore()
    layer.init_params(store, rng)
    params = store.perturbed(rng, 0.3)

    for x in rng.standard_normal((50, d)):
        _, logdet = coupling_forward(layer, params, x)
        jac = jacobian_fd(lambda p: coupling_forward(layer, params, p)[0], x)

        assert relative_error(np.linalg.slogdet(jac)[1], logdet.item(), 1e-3) < 1e-5


def test_jacobian_estimates_converge_at_second_order(rng: np.random.Generator) -> None:
    stack, params = _random_stack(4, 4, rng)
    x = rng.standard_normal(4)

    def jac(h: float) -> np.ndarray:
        return jacobian_fd(lambda p: stack_forward(stack, params, p).y, x, h)

    coarse, mid, fine = jac(4e-2), jac(2e-2), jac(1e-2)
    ratio = np.max(np.abs(coarse - mid)) / np.max(np.abs(mid - fine))

    assert 3.5 < ratio < 4.5


def test_empty_stack(rng: np.random.Generator) -> None:
    x = rng.standard_normal(3)
    result = stack_forward(CoordinateStack((), 3), {}, x)

    assert_array_equal(result.y.data, x)
    assert len(result.charts) == 1
    assert result.logdet.item() == 0.0


def test_identity_stack(rng: np.random.Generator) -> None:
    stack = CoordinateStack.build(2, 4)
    store = ParamStore()
    stack.init_params(store, rng)
    x = rng.standard_normal((10, 2))

    result = stack_forward(stack, store, x)

    assert_array_equal(result.y.data, x)
    assert_array_equal(result.logdet.data, np.zeros(10))
    assert len(result.charts) == 5


def test_logdet_is_additive() -> None:
    first, p0 = _constant_layer(0, 'a')
    second, p1 = _constant_layer(1, 'b')
    stack = CoordinateStack((first, second), 2)
    params = ParamStore({**p0, **p1})

    result = stack_forward(stack, params, [0.5, -1.0])
    jac = jacobian_fd(lambda x: stack_forward(stack, params, x).y, [0.5, -1.0])

    assert result.logdet.item() == pytest.approx(2.0 * np.log(2.0), rel=1e-15)
    assert np.linalg.slogdet(jac)[1] == pytest.approx(2.0 * np.log(2.0), rel=1e-6)


def test_scale_is_clamped() -> None:
    layer, params = _constant_layer()
    params = params.with_values(**{'layer0.coupling.scale.b1': [50.0]})

    z, logdet = coupling_forward(layer, params, [0.0, 1.0])

    assert logdet.item() == 5.0
    assert z.data[1] == pytest.approx(np.exp(5.0) + 1.0)


def test_width_mismatch() -> None:
    layer, params = _constant_layer()

    with pytest.raises(ShapeMismatchError):
        coupling_forward(layer, params, [1.0, 2.0, 3.0])

    with pytest.raises(CustomValueError):
        CoordinateStack((layer, CouplingLayer.for_index(3, 1)), 2)
