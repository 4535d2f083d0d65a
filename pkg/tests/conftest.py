from __future__ import annotations

import numpy as np
import pytest

from ndmanifold import NDMModel, ReferenceField, TrainConfig


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def flat_model() -> NDMModel:
    """Two identity couplings with constant metrics ``(1 + eps) I``."""

    return NDMModel.build(2, 2, 2, hidden=8, metric_init_scale=0.0, rng=0)


@pytest.fixture
def random_model(rng: np.random.Generator) -> NDMModel:
    """Two-layer model with non-trivial couplings and metrics."""

    model = NDMModel.build(2, 2, 2, hidden=8, metric_init_scale=0.3, rng=rng)

    return model.with_params(model.params.perturbed(rng, 0.2))


@pytest.fixture
def tiny_config(tmp_path) -> TrainConfig:
    return TrainConfig(
        n_layers=2, hidden=4, n_train=32, batch_size=8, steps=3, geometry_subsample=4,
        eval_points=16, output_dir=str(tmp_path / 'run')
    )


@pytest.fixture(params=list(ReferenceField), ids=lambda ref: ref.value)
def reference(request: pytest.FixtureRequest) -> ReferenceField:
    return request.param
