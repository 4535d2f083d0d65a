from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path
from typing import Any, Callable, TextIO

import numpy as np

from ._metadata import __version__
from .checkpoint import load_checkpoint
from .checks import exit_code, run_gradcheck, run_oracles
from .config import TrainConfig
from .datasets import make_dataset
from .exceptions import (
    CheckpointError, ConfigError, CustomError, CustomIndexError, CustomValueError, GeometryNotSimplifiedWarning
)
from .geometry import ReferenceField, curve_length, geodesic_integrate
from .report import field_report, geometry_report
from .train import train
from .types import FloatArray

__all__ = [
    'EXIT_OK', 'EXIT_FAILURE', 'EXIT_USAGE',

    'build_parser',
    'main'
]

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class _UsageError(Exception):
    pass


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, 'utf-8')
        logger.info('Wrote %s', out)


def _cmd_train(args: argparse.Namespace) -> int:
    config = TrainConfig.from_json(args.config)

    overrides = {
        name: value for name, value in (
            ('seed', args.seed), ('output_dir', args.out), ('steps', args.steps), ('lam', args.lam)
        ) if value is not None
    }

    if overrides:
        config = config.replace(**overrides)

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always', GeometryNotSimplifiedWarning)
        result = train(config)

    for warning in caught:
        logger.warning('%s', warning.message)

    logger.info('Artefacts in %s', result.output_dir)

    return EXIT_OK


def _points(text: str, dim: int) -> FloatArray:
    try:
        points = np.array(json.loads(text), np.float64)
    except (json.JSONDecodeError, TypeError, ValueError) as e:
        raise _UsageError(f'--points must be a JSON list of points: {e}') from e

    if points.ndim != 2 or points.shape[1] != dim or not points.size:
        raise _UsageError(f'--points must be a non-empty list of points with {dim} coordinates each')

    return points


def _cmd_geometry(args: argparse.Namespace) -> int:
    if (args.checkpoint is None) == (args.field is None):
        raise _UsageError('geometry needs exactly one of --checkpoint or --field')

    if args.field is not None:
        if args.points is None:
            raise _UsageError('--field needs --points')

        field = ReferenceField.from_param(args.field, _cmd_geometry).field
        report = field_report(field, _points(args.points, field.dim), source=args.field)
    else:
        if args.task is None or args.n is None:
            raise _UsageError('--checkpoint needs --task and --n')

        model, config = load_checkpoint(args.checkpoint)

        try:
            data = make_dataset(args.task, args.n, args.seed)
        except CustomValueError as e:
            raise _UsageError(str(e)) from e

        report = geometry_report(model, data.inputs, config.curvature_h, source=str(args.checkpoint))

    _emit(json.dumps(report.to_dict(), indent=2) + '\n', args.out)

    return EXIT_OK


def _write_rows(stream: TextIO, header: list[str], rows: Any) -> None:
    writer = csv.writer(stream, lineterminator='\n')
    writer.writerow(header)
    writer.writerows(rows)


def _cmd_geodesic(args: argparse.Namespace) -> int:
    model, _ = load_checkpoint(args.checkpoint)

    try:
        field = model.metric_field(args.layer)
    except CustomIndexError as e:
        raise _UsageError(str(e)) from e

    if len(args.x0) != model.d or len(args.v0) != model.d:
        raise _UsageError(f'--x0 and --v0 need {model.d} values each')

    if args.steps < 1 or not np.isfinite(args.T) or not args.h > 0:
        raise _UsageError('--steps must be positive, --T finite and --h positive')

    path = geodesic_integrate(field, args.x0, args.v0, args.T, args.steps, args.h)
    header = ['t', *(f'x{i}' for i in range(model.d)), 'speed']

    logger.info('Geodesic length %.6g, speed drift %.3e', curve_length(path), path.speed_drift())

    if args.out is None:
        _write_rows(sys.stdout, header, path.rows())
    else:
        args.out.parent.mkdir(parents=True, exist_ok=True)

        with open(args.out, 'w', newline='', encoding='utf-8') as f:
            _write_rows(f, header, path.rows())

        logger.info('Wrote %s', args.out)

    return EXIT_OK


def _cmd_gradcheck(args: argparse.Namespace) -> int:
    results = run_gradcheck(args.seed, args.draws)

    for result in results:
        print(result)

    return exit_code(results)


def _cmd_oracle(args: argparse.Namespace) -> int:
    results = run_oracles()

    for result in results:
        print(result)

    return exit_code(results)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='ndmanifold', description='Train and inspect neural differential manifolds.'
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')

    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true', help='Log debug messages.')
    verbosity.add_argument('-q', '--quiet', action='store_true', help='Log warnings and errors only.')

    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('train', help='Run a training loop from a JSON config.')
    p.add_argument('--config', type=Path, required=True, help='JSON file mirroring the TrainConfig fields.')
    p.add_argument('--seed', type=int)
    p.add_argument('--out', type=str, help='Output directory, overrides output_dir.')
    p.add_argument('--steps', type=int)
    p.add_argument('--lam', type=float, help='Weight of the geometric loss.')
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser('geometry', help='Write a geometry report of a checkpoint or a reference field.')
    p.add_argument('--checkpoint', type=Path)
    p.add_argument('--task')
    p.add_argument('--n', type=int, help='Number of points drawn from the task.')
    p.add_argument('--seed', type=int, default=0, help='Seed of the drawn points.')
    p.add_argument('--field', choices=[ref.value for ref in ReferenceField])
    p.add_argument('--points', help='JSON list of points for --field.')
    p.add_argument('--out', type=Path, help='Output file, stdout by default.')
    p.set_defaults(handler=_cmd_geometry)

    p = sub.add_parser('geodesic', help='Integrate a geodesic of one layer\'s learned metric.')
    p.add_argument('--checkpoint', type=Path, required=True)
    p.add_argument('--layer', type=int, required=True)
    p.add_argument('--x0', type=float, nargs='+', required=True)
    p.add_argument('--v0', type=float, nargs='+', required=True)
    p.add_argument('--T', type=float, default=1.0)
    p.add_argument('--steps', type=int, default=1000)
    p.add_argument('--h', type=float, default=1e-4, help='Difference step of the Christoffel symbols.')
    p.add_argument('--out', type=Path, help='Output CSV, stdout by default.')
    p.set_defaults(handler=_cmd_geodesic)

    p = sub.add_parser('gradcheck', help='Compare AD gradients of every loss against finite differences.')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--draws', type=int, default=100)
    p.set_defaults(handler=_cmd_gradcheck)

    p = sub.add_parser('oracle', help='Run the closed-form geometry and solver checks.')
    p.set_defaults(handler=_cmd_oracle)

    return parser


def main(argv: list[str] | None = None) -> int:
    """Command line entry point. Returns 0 on success, 1 on a failed check or run, 2 on a usage error."""

    parser = build_parser()

    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s', force=True)

    handler: Callable[[argparse.Namespace], int] = args.handler

    try:
        return handler(args)
    except (_UsageError, ConfigError, CheckpointError) as e:
        logger.error('%s', e)
        parser.print_usage(sys.stderr)

        return EXIT_USAGE
    except CustomError as e:
        logger.error('%s', e)

        return EXIT_FAILURE
