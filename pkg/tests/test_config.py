from __future__ import annotations

import json
from pathlib import Path

import pytest

from ndmanifold import ConfigError, TrainConfig


def test_defaults() -> None:
    config = TrainConfig()

    assert (config.d, config.n_layers, config.task, config.optimizer) == (2, 4, 'two_moons', 'sgd')
    assert (config.lam, config.lr, config.seed, config.steps) == (0.1, 0.05, 7, 2000)
    assert config.out_dim == 2
    assert TrainConfig(task='sinusoid').out_dim == 1


def test_json_round_trip(tmp_path: Path) -> None:
    config = TrainConfig(lam=0.0, optimizer='natural', noise=0.2, share_metric_net=True)
    path = tmp_path / 'config.json'

    config.to_json(path)

    assert TrainConfig.from_json(path) == config


def test_partial_json(tmp_path: Path) -> None:
    path = tmp_path / 'config.json'
    path.write_text(json.dumps({'steps': 10, 'lr': 1, 'noise': None}), 'utf-8')

    config = TrainConfig.from_json(path)

    assert config.steps == 10
    assert config.lr == 1.0 and isinstance(config.lr, float)
    assert config.noise is None


@pytest.mark.parametrize('data', [
    {'stepz': 10},
    {'steps': 'many'},
    {'steps': 1.5},
    {'steps': True},
    {'lr': None},
    {'share_metric_net': 1},
    {'task': 3}
])
def test_malformed_fields(data: dict[str, object]) -> None:
    with pytest.raises(ConfigError):
        TrainConfig.from_dict(data)


@pytest.mark.parametrize('changes', [
    {'task': 'mnist'},
    {'optimizer': 'adam'},
    {'d': 1},
    {'lam': -0.1},
    {'eps': 0.0},
    {'lr': 0.0},
    {'batch_size': 0},
    {'steps': -1},
    {'geometry_every': 0},
    {'output_dir': ''}
])
def test_out_of_range(changes: dict[str, object]) -> None:
    with pytest.raises(ConfigError):
        TrainConfig(**changes)  # type: ignore[arg-type]


def test_replace_validates() -> None:
    config = TrainConfig()

    assert config.replace(steps=5).steps == 5

    with pytest.raises(ConfigError):
        config.replace(lam=-1.0)

    with pytest.raises(ConfigError):
        config.replace(learning_rate=0.1)


def test_unreadable_file(tmp_path: Path) -> None:
    with pytest.raises(ConfigError):
        TrainConfig.from_json(tmp_path / 'missing.json')

    path = tmp_path / 'list.json'
    path.write_text('[1, 2]', 'utf-8')

    with pytest.raises(ConfigError):
        TrainConfig.from_json(path)
