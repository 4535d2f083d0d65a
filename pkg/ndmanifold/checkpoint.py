from __future__ import annotations

import json
import logging
from os import PathLike
from pathlib import Path
from typing import Any

import numpy as np

from .autodiff import ParamStore
from .config import TrainConfig
from .exceptions import CheckpointError, ConfigError, CustomError
from .model import NDMModel

__all__ = [
    'CHECKPOINT_FORMAT',

    'checkpoint_document', 'save_checkpoint', 'load_checkpoint'
]

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 'ndmanifold-checkpoint'
_VERSION = 1


def checkpoint_document(model: NDMModel, config: TrainConfig) -> dict[str, Any]:
    """
    JSON-ready checkpoint: the config plus every parameter as name, shape and decimal values.

    The config's ``output_dir`` is left out, so identical runs write identical checkpoints wherever they land.

    Floats are written with their shortest round-trip representation, so loading is bit-exact.
    """

    return {
        'format': CHECKPOINT_FORMAT,
        'version': _VERSION,
        'config': {key: value for key, value in config.to_dict().items() if key != 'output_dir'},
        'params': [
            {'name': name, 'shape': list(value.shape), 'data': [float(v) for v in value.ravel()]}
            for name, value in model.params.items()
        ]
    }


def save_checkpoint(path: str | PathLike[str], model: NDMModel, config: TrainConfig) -> Path:
    out = Path(path)
    out.write_text(json.dumps(checkpoint_document(model, config)) + '\n', 'utf-8')

    logger.debug('Wrote checkpoint with %d parameters to %s', model.params.size, out)

    return out


def load_checkpoint(path: str | PathLike[str]) -> tuple[NDMModel, TrainConfig]:
    """
    Rebuild a model and its config from a checkpoint file.

    :raises CheckpointError:    Unreadable file, wrong format, or parameters that don't fit the config's architecture.
    """

    try:
        doc = json.loads(Path(path).read_text('utf-8'))
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError('Can\'t read checkpoint "{path}"!', load_checkpoint, e, path=path) from e

    if not isinstance(doc, dict) or doc.get('format') != CHECKPOINT_FORMAT:
        raise CheckpointError('"{path}" is not a checkpoint!', load_checkpoint, path=path)

    if doc.get('version') != _VERSION:
        raise CheckpointError('Unsupported checkpoint version {v}!', load_checkpoint, v=doc.get('version'))

    try:
        config = TrainConfig.from_dict(doc['config'])
        params = ParamStore(
            (entry['name'], np.array(entry['data'], np.float64).reshape(entry['shape'])) for entry in doc['params']
        )
        model = NDMModel.from_config(config).with_params(params)
    except (KeyError, TypeError, ValueError, ConfigError, CustomError) as e:
        raise CheckpointError('Malformed checkpoint "{path}"!', load_checkpoint, e, path=path) from e

    return model, config
