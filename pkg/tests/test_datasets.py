from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from ndmanifold import CustomValueError, Task, make_dataset


def test_two_moons_is_balanced() -> None:
    data = make_dataset('two_moons', 4, 3)

    assert data.inputs.shape == (4, 2)
    assert np.bincount(data.targets).tolist() == [2, 2]


def test_odd_split() -> None:
    assert np.bincount(make_dataset(Task.TWO_MOONS, 5, 0).targets).tolist() == [2, 3]


@pytest.mark.parametrize('task', list(Task))
def test_same_seed_same_data(task: Task) -> None:
    first, second = make_dataset(task, 64, 11), make_dataset(task, 64, 11)

    assert_array_equal(first.inputs, second.inputs)
    assert_array_equal(first.targets, second.targets)
    assert not np.array_equal(first.inputs, make_dataset(task, 64, 12).inputs)


def test_noiseless_moons_lie_on_circles() -> None:
    data = make_dataset('two_moons', 100, 0, noise=0.0)
    outer = data.inputs[data.targets == 0]
    inner = data.inputs[data.targets == 1]

    assert np.allclose(np.hypot(outer[:, 0], outer[:, 1]), 1.0)
    assert np.allclose(np.hypot(inner[:, 0] - 1.0, inner[:, 1] - 0.5), 1.0)


def test_noiseless_sinusoid() -> None:
    data = make_dataset('sinusoid', 50, 1, noise=0.0)

    assert data.inputs.shape == (50, 1)
    assert np.all(np.abs(data.inputs) <= np.pi)
    assert_array_equal(data.targets, np.sin(data.inputs[:, 0]))


def test_invalid_requests() -> None:
    with pytest.raises(CustomValueError):
        make_dataset('spirals', 10)

    with pytest.raises(CustomValueError):
        make_dataset('two_moons', 0)

    with pytest.raises(CustomValueError):
        make_dataset('two_moons', 10, noise=-1.0)
