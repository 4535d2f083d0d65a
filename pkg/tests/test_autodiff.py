from __future__ import annotations

from typing import Any, Callable

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from ndmanifold import (
    Array, CouplingLayer, CustomKeyError, NonFiniteError, OpKind, ParamStore, ShapeMismatchError,
    SingularMetricError, Tape, apply_primitive, as_array, backward, broadcast, clip, concat, coupling_forward,
    einsum, exp, finite_diff_grad, inv, jacobian_fd, log, logdet, matmul, projected_error, reduce_mean, reduce_sum,
    relative_error, reshape, softplus, sqrt, square, take, tanh, transpose, value_and_grad, variance
)


def test_tanh_at_origin() -> None:
    assert apply_primitive(OpKind.TANH, 0.0).item() == 0.0


def test_matmul_identity() -> None:
    m = [[1.0, 2.0], [3.0, 4.0]]

    assert_array_equal(matmul(m, np.eye(2)).data, m)


def test_population_variance() -> None:
    assert variance([1.0, 3.0]).item() == 1.0


def test_scalar_operands_broadcast() -> None:
    assert_array_equal((Array([1.0, 2.0]) + 1.0).data, [2.0, 3.0])
    assert_array_equal((2.0 * Array([1.0, 2.0])).data, [2.0, 4.0])


def test_shape_mismatch() -> None:
    with pytest.raises(ShapeMismatchError):
        Array([1.0, 2.0]) + Array([1.0, 2.0, 3.0])

    with pytest.raises(ShapeMismatchError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))

    with pytest.raises(ShapeMismatchError):
        einsum('ij,jk', np.ones((2, 2)), np.ones((2, 2)))


def test_non_finite_values_rejected() -> None:
    with pytest.raises(NonFiniteError):
        Array([1.0, np.nan])

    with pytest.raises(NonFiniteError):
        log(0.0)

    with pytest.raises(NonFiniteError):
        Array(1.0) / 0.0


def test_arrays_are_immutable() -> None:
    source = np.array([1.0, 2.0])
    array = Array(source)
    source[0] = 5.0

    assert array.data[0] == 1.0

    with pytest.raises(ValueError):
        array.data[0] = 3.0


def test_backward_of_sum() -> None:
    with Tape() as tape:
        theta = tape.watch('theta', [0.3, -1.0, 2.0])
        root = theta.sum()

    assert_array_equal(backward(tape, root)['theta'], np.ones(3))


def test_backward_of_tanh_at_zero() -> None:
    with Tape() as tape:
        root = tanh(tape.watch('theta', 0.0))

    assert backward(tape, root)['theta'] == 1.0


def test_quadratic_form_gradient(rng: np.random.Generator) -> None:
    a = rng.standard_normal((4, 4))
    m = a + a.T
    params = ParamStore({'theta': rng.standard_normal((4, 1))})

    def quadratic(p: Any) -> Array:
        x = as_array(p['theta'])

        return (x.T @ m @ x).sum()

    _, grads = value_and_grad(quadratic, params)

    assert_allclose(grads['theta'], 2.0 * m @ params['theta'], rtol=1e-12, atol=1e-12)
    assert relative_error(grads['theta'], finite_diff_grad(quadratic, params)['theta']) < 1e-6


def test_non_scalar_root() -> None:
    with Tape() as tape:
        theta = tape.watch('theta', [1.0, 2.0])

        with pytest.raises(ShapeMismatchError):
            tape.backward(theta * 2.0)


def test_unused_parameter_gets_exact_zero() -> None:
    with Tape() as tape:
        used = tape.watch('used', [1.0, 2.0])
        tape.watch('unused', np.ones((2, 3)))
        root = square(used).sum()

    grads = tape.backward(root)

    assert_array_equal(grads['unused'], np.zeros((2, 3)))
    assert_array_equal(grads['used'], [2.0, 4.0])


def test_duplicate_watch() -> None:
    with Tape() as tape:
        tape.watch('theta', 1.0)

        with pytest.raises(CustomKeyError):
            tape.watch('theta', 2.0)


def test_constants_do_not_record() -> None:
    with Tape() as tape:
        theta = tape.watch('theta', 1.0)
        before = len(tape)
        Array(2.0) * 3.0

        assert len(tape) == before

        root = theta * 3.0

    assert tape.backward(root)['theta'] == 3.0


def test_backward_is_deterministic(rng: np.random.Generator) -> None:
    params = ParamStore({'w': rng.standard_normal((3, 3)), 'b': rng.standard_normal(3)})

    def f(p: Any) -> Array:
        h = tanh(einsum('ij,jk->ik', p['w'], p['w']))

        return reduce_mean(square(h)) + exp(p['b']).sum()

    first = value_and_grad(f, params)[1]
    second = value_and_grad(f, params)[1]

    for name in params:
        assert_array_equal(first[name], second[name])


def test_finite_diff_of_square() -> None:
    grads = finite_diff_grad(lambda p: as_array(p['theta']) * p['theta'], ParamStore({'theta': 3.0}), h=1e-5)

    assert grads['theta'] == pytest.approx(6.0, abs=1e-8)


def test_finite_diff_of_constant() -> None:
    grads = finite_diff_grad(lambda p: 5.0, ParamStore({'a': [1.0, 2.0], 'b': np.ones((2, 2))}))

    assert_array_equal(grads['a'], np.zeros(2))
    assert_array_equal(grads['b'], np.zeros((2, 2)))


def test_coupling_logdet_gradient(rng: np.random.Generator) -> None:
    layer = CouplingLayer.for_index(4, 0, hidden=(6, 6))
    store = ParamStore()
    layer.init_params(store, rng)
    params = store.perturbed(rng, 0.3)
    x = rng.standard_normal(4)

    def logdet_of(p: Any) -> Array:
        return coupling_forward(layer, p, x)[1]

    _, ad = value_and_grad(logdet_of, params)
    fd = finite_diff_grad(logdet_of, params)

    assert relative_error(params.flatten_grads(ad), params.flatten_grads(fd)) < 1e-4


def test_projected_error(rng: np.random.Generator) -> None:
    params = ParamStore({'w': rng.standard_normal(5)})
    a = rng.standard_normal((5, 5))

    def f(p: Any) -> Array:
        w = as_array(p['w'])

        return reduce_sum(tanh(einsum('ij,j->i', a, w)))

    _, grads = value_and_grad(f, params)
    flat = params.flatten_grads(grads)

    orthogonal = rng.standard_normal(5)
    orthogonal -= (orthogonal @ flat) / (flat @ flat) * flat
    directions = np.stack([orthogonal, *rng.standard_normal((2, 5))])

    assert projected_error(f, params, flat, directions) < 1e-8
    assert projected_error(f, params, 1.01 * flat, directions) > 1e-3


def _spd(m: Any) -> Array:
    m = as_array(m)

    return m @ m.T + np.eye(m.shape[0])


PRIMITIVES: dict[str, tuple[Callable[..., Array], dict[str, tuple[int, ...]]]] = {
    'add': (lambda a, b: a + b, {'a': (3, 4), 'b': (3, 4)}),
    'add scalar': (lambda a, b: a + b, {'a': (3, 4), 'b': ()}),
    'sub': (lambda a, b: a - b, {'a': (5, ), 'b': (5, )}),
    'mul': (lambda a, b: a * b, {'a': (2, 3), 'b': (2, 3)}),
    'div': (lambda a, b: a / b, {'a': (4, ), 'b': (4, )}),
    'neg': (lambda a: -a, {'a': (3, )}),
    'matmul': (lambda a, b: a @ b, {'a': (3, 4), 'b': (4, 2)}),
    'batched matmul': (matmul, {'a': (2, 3, 3), 'b': (2, 3, 2)}),
    'einsum': (lambda a, b: einsum('nij,nj->ni', a, b), {'a': (3, 2, 4), 'b': (3, 4)}),
    'einsum contraction': (lambda a, b: einsum('ij,ij->', a, b), {'a': (3, 4), 'b': (3, 4)}),
    'tanh': (tanh, {'a': (6, )}),
    'exp': (exp, {'a': (6, )}),
    'log': (log, {'a': (6, )}),
    'sqrt': (sqrt, {'a': (6, )}),
    'square': (square, {'a': (6, )}),
    'softplus': (softplus, {'a': (6, )}),
    'clip': (lambda a: clip(a, 0.0, 2.0), {'a': (6, )}),
    'sum': (reduce_sum, {'a': (3, 4)}),
    'sum axis': (lambda a: reduce_sum(a, axis=1), {'a': (3, 4)}),
    'mean axis': (lambda a: reduce_mean(a, axis=0), {'a': (3, 4)}),
    'variance': (variance, {'a': (8, )}),
    'variance axis': (lambda a: variance(a, axis=1), {'a': (3, 5)}),
    'concat': (lambda a, b: concat([a, b], axis=1), {'a': (3, 2), 'b': (3, 4)}),
    'take': (lambda a: take(a, (slice(None), np.array([0, 2, 2]))), {'a': (3, 4)}),
    'slice': (lambda a: a[1:, :2], {'a': (3, 4)}),
    'transpose': (lambda a: transpose(a, (2, 0, 1)), {'a': (2, 3, 4)}),
    'reshape': (lambda a: reshape(a, (4, 3)), {'a': (2, 6)}),
    'broadcast': (lambda a: broadcast(a, (2, 3)), {'a': (3, )}),
    'inv': (lambda a: inv(a + 3.0 * np.eye(3)), {'a': (3, 3)}),
    'logdet': (lambda a: logdet(_spd(a)), {'a': (3, 3)})
}


@pytest.mark.parametrize('name', list(PRIMITIVES))
def test_primitive_gradients(name: str) -> None:
    func, shapes = PRIMITIVES[name]
    rng = np.random.default_rng(list(PRIMITIVES).index(name))

    for _ in range(100):
        params = ParamStore({key: rng.uniform(0.5, 1.5, shape) for key, shape in shapes.items()})
        out_shape = func(*(Array(params[key]) for key in shapes)).shape
        weights = rng.standard_normal(out_shape)

        def scalar(p: Any) -> Array:
            return reduce_sum(func(*(as_array(p[key]) for key in shapes)) * weights)

        _, ad = value_and_grad(scalar, params)
        fd = finite_diff_grad(scalar, params, h=1e-5)

        assert relative_error(params.flatten_grads(ad), params.flatten_grads(fd)) < 1e-5


def test_clip_gradient_outside_band() -> None:
    with Tape() as tape:
        theta = tape.watch('theta', [-1.0, 0.5, 3.0])
        root = clip(theta, 0.0, 1.0).sum()

    assert_array_equal(tape.backward(root)['theta'], [0.0, 1.0, 0.0])


def test_logdet_rejects_indefinite() -> None:
    with pytest.raises(SingularMetricError):
        logdet([[1.0, 2.0], [2.0, 1.0]])


def test_param_store_round_trip(rng: np.random.Generator) -> None:
    store = ParamStore({'w': rng.standard_normal((3, 2)), 'b': rng.standard_normal(2), 's': 0.5})
    back = store.unflatten(store.flatten())

    assert list(back) == list(store)

    for name in store:
        assert_array_equal(back[name], store[name])

    assert store.size == 9

    with pytest.raises(CustomKeyError):
        store.add('w', 1.0)

    with pytest.raises(CustomKeyError):
        store['missing']

    with pytest.raises(ShapeMismatchError):
        store.with_values(b=np.zeros(3))


def test_jacobian_of_linear_map(rng: np.random.Generator) -> None:
    m = rng.standard_normal((3, 2))

    assert_allclose(jacobian_fd(lambda x: m @ x, rng.standard_normal(2)), m, atol=1e-8)
