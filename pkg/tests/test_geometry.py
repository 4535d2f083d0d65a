from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from ndmanifold import (
    ClosedFormField, CustomValueError, DiagTransform, MetricNet, MetricTensor, NetMetricField, ParamStore,
    ReferenceField, ShapeMismatchError, SingularMetricError, angle, christoffel, christoffel_values, curve_length,
    euclidean_field, geodesic_integrate, inner_product, metric_at, metric_from_factor, norm, ricci_scalar,
    volume_element, volume_elements
)


def _constant_net(bias: list[float], eps: float) -> tuple[MetricNet, ParamStore]:
    """Width-2 net whose raw outputs are ``bias`` everywhere, taken as factor entries unchanged."""

    net = MetricNet(2, hidden=(4, ), eps=eps, diag=DiagTransform.IDENTITY)
    store = ParamStore()
    net.init_params(store, np.random.default_rng(0))

    return net, store.with_values(**{'metric.b1': bias})


def _constant_field(g: list[list[float]]) -> ClosedFormField:
    return ClosedFormField('constant', 2, lambda p: np.broadcast_to(np.array(g), (p.shape[0], 2, 2)).copy())


def test_identity_factor() -> None:
    net, params = _constant_net([1.0, 0.0, 1.0], 0.01)

    assert_allclose(metric_at(net, params, (0.3, -2.0)).entries, 1.01 * np.eye(2), rtol=1e-15)


def test_hand_factor() -> None:
    net, params = _constant_net([2.0, 1.0, 1.0], 0.0)

    assert_allclose(metric_at(net, params, (1.0, 1.0)).entries, [[4.0, 2.0], [2.0, 2.0]], rtol=1e-15)
    assert_allclose(metric_from_factor([[2.0, 0.0], [1.0, 1.0]]).entries, [[4.0, 2.0], [2.0, 2.0]])


def test_zero_factor_leaves_the_floor() -> None:
    net, params = _constant_net([0.0, 0.0, 0.0], 1e-3)
    g = metric_at(net, params, (0.5, 0.5))

    assert_allclose(g.entries, 1e-3 * np.eye(2), rtol=1e-15)
    assert g.eigenvalues()[0] == pytest.approx(1e-3, rel=1e-12)


def test_softplus_start_is_flat() -> None:
    net = MetricNet(3, eps=1e-3)
    store = ParamStore()
    net.init_params(store, np.random.default_rng(0))

    assert_allclose(metric_at(net, store, (0.1, 0.2, 0.3)).entries, 1.001 * np.eye(3), rtol=1e-12)


def test_metric_is_positive_definite(rng: np.random.Generator) -> None:
    eps = 1e-3
    net = MetricNet(3, eps=eps)
    base = ParamStore()
    net.init_params(base, rng, 1.0)

    for _ in range(100):
        params = base.perturbed(rng, 1.0)
        g = net.metric(params, 3.0 * rng.standard_normal((10, 3))).data

        assert_array_equal(g, np.transpose(g, (0, 2, 1)))
        assert np.linalg.eigvalsh(g).min() >= eps * (1.0 - 1e-9)


def test_metric_tensor_validation() -> None:
    with pytest.raises(ShapeMismatchError):
        MetricTensor(np.ones((2, 3)))

    with pytest.raises(SingularMetricError):
        MetricTensor(np.array([[1.0, 0.5], [0.0, 1.0]]))

    with pytest.raises(SingularMetricError):
        MetricTensor(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_negative_floor_rejected() -> None:
    with pytest.raises(CustomValueError):
        MetricNet(2, eps=-1e-3)


@pytest.mark.parametrize('g, v, w, expected', [
    (np.eye(2), (1.0, 0.0), (1.0, 0.0), 1.0),
    (np.diag([2.0, 3.0]), (1.0, 1.0), (1.0, 1.0), 5.0),
    (np.diag([2.0, 3.0]), (1.0, 0.0), (0.0, 1.0), 0.0)
])
def test_inner_product(g: np.ndarray, v: tuple[float, ...], w: tuple[float, ...], expected: float) -> None:
    assert inner_product(MetricTensor(g), v, w) == expected


def test_norm_and_angle() -> None:
    g = MetricTensor(np.diag([4.0, 1.0]))

    assert norm(g, (1.0, 0.0)) == 2.0
    assert angle(g, (1.0, 0.0), (0.0, 1.0)) == pytest.approx(np.pi / 2)
    assert angle(g, (1.0, 0.0), (1.0, 2.0)) == pytest.approx(np.pi / 4)

    with pytest.raises(CustomValueError):
        angle(g, (0.0, 0.0), (1.0, 0.0))

    with pytest.raises(ShapeMismatchError):
        inner_product(g, (1.0, 0.0, 0.0), (1.0, 0.0))


@pytest.mark.parametrize('g, expected', [
    (np.eye(2), 1.0),
    (np.diag([4.0, 9.0]), 6.0),
    (metric_from_factor([[2.0, 0.0], [1.0, 1.0]]), 2.0)
])
def test_volume_element(g: np.ndarray | MetricTensor, expected: float) -> None:
    assert volume_element(g) == pytest.approx(expected, abs=1e-12)


def test_batched_volume_elements() -> None:
    g = np.stack([np.eye(2), np.diag([4.0, 9.0])])

    assert_allclose(volume_elements(g).data, [1.0, 6.0], rtol=1e-12)


def test_euclidean_christoffel_is_zero() -> None:
    assert_array_equal(christoffel(euclidean_field(3), (0.1, 0.2, 0.3)).data, np.zeros((3, 3, 3)))


def test_constant_christoffel_is_zero() -> None:
    gamma = christoffel(_constant_field([[2.0, 0.5], [0.5, 1.0]]), (1.0, -1.0)).data

    assert np.max(np.abs(gamma)) < 1e-12


@pytest.mark.parametrize('h', [1e-4, 5e-5])
def test_polar_christoffel(h: float) -> None:
    gamma = christoffel(ReferenceField.POLAR.field, (2.0, 0.0), h).data

    exact = np.zeros((2, 2, 2))
    exact[0, 1, 1] = -2.0
    exact[1, 0, 1] = exact[1, 1, 0] = 0.5

    assert_allclose(gamma, exact, atol=1e-6)


def test_christoffel_over_batch() -> None:
    points = np.array([[1.0, 0.0], [2.0, 0.3], [3.0, -1.0]])
    gamma = christoffel(ReferenceField.POLAR.field, points).data

    assert gamma.shape == (3, 2, 2, 2)
    assert_allclose(gamma[:, 0, 1, 1], -points[:, 0], atol=1e-6)
    assert_allclose(gamma[:, 1, 0, 1], 1.0 / points[:, 0], atol=1e-6)


def test_christoffel_converges_at_second_order() -> None:
    theta = 0.7
    exact = np.zeros((2, 2, 2))
    exact[0, 1, 1] = -np.sin(theta) * np.cos(theta)
    exact[1, 0, 1] = exact[1, 1, 0] = np.cos(theta) / np.sin(theta)

    def error(h: float) -> float:
        return float(np.max(np.abs(christoffel(ReferenceField.SPHERE.field, (theta, 0.2), h).data - exact)))

    assert error(1e-2) / error(5e-3) >= 3.5


def test_plain_christoffel_matches_recorded(random_model: object) -> None:
    field = random_model.metric_field(1)  # type: ignore[attr-defined]
    point = np.array([0.3, -0.8])

    for f in (field, ReferenceField.SPHERE.field):
        gamma, g = christoffel_values(f, point)

        assert_allclose(gamma, christoffel(f, point).data, rtol=1e-9, atol=1e-9)
        assert_allclose(g, f.metric_values(point[None, :])[0], rtol=1e-12)

    with pytest.raises(SingularMetricError):
        christoffel_values(ReferenceField.POINCARE.field, np.array([0.0, 0.0]))


@pytest.mark.parametrize('scale', [0.5, 2.0])
def test_ricci_scalar_survives_rescaling(scale: float) -> None:
    sphere = ReferenceField.SPHERE.field
    rescaled = ClosedFormField('rescaled sphere', 2, lambda p: sphere.formula(p / scale) / scale ** 2)
    point = np.array([0.9, 0.4])

    original = ricci_scalar(sphere, point).item()

    assert ricci_scalar(rescaled, scale * point).item() == pytest.approx(original, rel=1e-3)


RICCI_POINTS = {
    ReferenceField.EUCLIDEAN: ((0.3, -0.2), 1e-8),
    ReferenceField.POLAR: ((2.0, 0.0), 1e-5),
    ReferenceField.SPHERE: ((np.pi / 4, 0.3), 1e-3),
    ReferenceField.POINCARE: ((0.0, 1.0), 1e-3)
}


def test_ricci_scalar_of_reference(reference: ReferenceField) -> None:
    point, tol = RICCI_POINTS[reference]
    value = ricci_scalar(reference.field, point).item()
    exact = reference.scalar_curvature

    if exact:
        assert value == pytest.approx(exact, rel=tol)
    else:
        assert abs(value) < tol


def test_ricci_scalar_over_batch() -> None:
    points = np.array([[0.6, 0.0], [np.pi / 2, 1.0], [2.0, -0.5]])

    assert_allclose(ricci_scalar(ReferenceField.SPHERE.field, points).data, 2.0, rtol=1e-3)


def test_flat_net_field_has_no_curvature(flat_model: object) -> None:
    field = flat_model.metric_field(0)  # type: ignore[attr-defined]

    assert abs(ricci_scalar(field, (0.2, -0.4)).item()) < 1e-8
    assert isinstance(field, NetMetricField)


def test_ricci_scalar_near_a_singularity() -> None:
    with pytest.raises(SingularMetricError):
        ricci_scalar(ReferenceField.POLAR.field, (0.0, 0.0))


def test_straight_line() -> None:
    path = geodesic_integrate(euclidean_field(2), (0.0, 0.0), (1.0, 0.0), T=1.0, n=1000)

    assert_allclose(path.endpoint, (1.0, 0.0), atol=1e-8)
    assert_allclose(path.x[:, 1], 0.0, atol=1e-12)
    assert curve_length(path) == pytest.approx(1.0, abs=1e-10)
    assert path.x.shape == (1001, 2)


def test_great_circle() -> None:
    path = geodesic_integrate(ReferenceField.SPHERE.field, (np.pi / 2, 0.0), (0.0, 1.0))

    assert np.max(np.abs(path.x[:, 0] - np.pi / 2)) < 1e-6
    assert path.endpoint[1] == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize('T', [1.0, -1.0])
def test_poincare_semicircle(T: float) -> None:
    path = geodesic_integrate(ReferenceField.POINCARE.field, (0.0, 1.0), (1.0, 0.0), T=T)

    assert np.max(np.abs(np.hypot(path.x[:, 0], path.x[:, 1]) - 1.0)) < 1e-4
    assert np.sign(path.endpoint[0]) == np.sign(T)


@pytest.mark.parametrize('ref, x0, v0', [
    (ReferenceField.EUCLIDEAN, (0.0, 0.0), (1.0, 0.5)),
    (ReferenceField.SPHERE, (np.pi / 3, 0.0), (0.3, 1.0)),
    (ReferenceField.POINCARE, (0.0, 1.0), (1.0, 0.2))
])
def test_speed_is_conserved(ref: ReferenceField, x0: tuple[float, ...], v0: tuple[float, ...]) -> None:
    path = geodesic_integrate(ref.field, x0, v0)

    assert path.speed_drift() < 1e-4

    rows = list(path.rows())

    assert len(rows) == 1001
    assert rows[0] == [0.0, *x0, pytest.approx(path.speed[0])]


def test_geodesic_input_validation() -> None:
    with pytest.raises(ShapeMismatchError):
        geodesic_integrate(euclidean_field(2), (0.0, 0.0, 0.0), (1.0, 0.0))

    with pytest.raises(CustomValueError):
        geodesic_integrate(euclidean_field(2), (0.0, 0.0), (1.0, 0.0), n=0)


def test_geodesic_into_a_singularity() -> None:
    with pytest.raises(SingularMetricError):
        geodesic_integrate(ReferenceField.SPHERE.field, (0.0, 0.0), (1.0, 0.0), n=10)
