#!/usr/bin/env python3
"""
Command-line entry point for experiments.

    python expcli.py list
    python expcli.py run concurrent-links --trials 50 --seed 3 --set noise_sigma_db=0
    python expcli.py run my_spec.toml --transport socket
    python expcli.py validate scene.toml
    python expcli.py replay-cache results/cache-replay/cache.toml scene.toml
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from config import Config, SimulationParameters
from errors import ParameterError, SurfaceError
from experiments import CATALOG, TRANSPORTS, ExperimentSpec, load_spec, replay_cached, run_experiment
from scene import load_scene, validate_scene
from utils import create_gain_summary, format_db, setup_logging

logger = logging.getLogger(__name__)


def parse_overrides(pairs: Sequence[str]) -> Dict[str, str]:
    """Turn ``key=value`` strings into a mapping; values stay strings until coerced."""
    overrides = {}
    for pair in pairs:
        key, sep, value = pair.partition('=')
        if not sep or not key.strip():
            raise ParameterError(f"Expected key=value, got '{pair}'")
        overrides[key.strip()] = value.strip()
    return overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='expcli', description='Rollable-surface experiment runner')
    parser.add_argument('--log-level', default=Config.LOG_LEVEL)
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help='run a catalog experiment or a spec file')
    run.add_argument('spec', help='experiment name or path to a spec file')
    run.add_argument('--seed', type=int)
    run.add_argument('--trials', type=int)
    run.add_argument('--out', help='output directory')
    run.add_argument('--transport', choices=TRANSPORTS)
    run.add_argument('--scene', help='preset name or scene file')
    run.add_argument('--algorithm')
    run.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE')

    sub.add_parser('list', help='list experiments')

    validate = sub.add_parser('validate', help='check a scene file')
    validate.add_argument('scene')

    replay = sub.add_parser('replay-cache', help='validate a cached configuration against a scene')
    replay.add_argument('cache')
    replay.add_argument('scene')
    replay.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE')
    return parser


def spec_from_args(args: argparse.Namespace) -> ExperimentSpec:
    if Path(args.spec).is_file():
        spec = load_spec(args.spec)
    else:
        spec = ExperimentSpec(name=args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    if args.trials is not None:
        spec.trials = args.trials
    if args.out:
        spec.output_dir = args.out
    if args.transport:
        spec.transport = args.transport
    if args.scene:
        spec.scene = args.scene
    if args.algorithm:
        spec.algorithm = args.algorithm
    spec.overrides = {**spec.overrides, **parse_overrides(args.overrides)}
    return spec


def cmd_run(args) -> int:
    result = run_experiment(spec_from_args(args))
    print(f"Results written to {result.output_dir}")
    if 'gains' in result.tables:
        stats = create_gain_summary(result.tables['gains'])
        print(f"  median gain {format_db(stats.get('median_gain_db'))}, max {format_db(stats.get('max_gain_db'))}")
    if result.errors:
        print(f"  {len(result.errors)} trial(s) failed, see errors.csv")
    return 0


def cmd_list(args) -> int:
    width = max(len(name) for name in CATALOG)
    for name, definition in CATALOG.items():
        print(f"{name:<{width}}  [{definition.default_algorithm}]  {definition.description}")
    return 0


def cmd_validate(args) -> int:
    scene = load_scene(args.scene)
    problems = validate_scene(scene)
    if problems:
        for problem in problems:
            print(f"✗ {problem}")
        return 1
    print(f"✓ {args.scene}: {len(scene.panels)} panels, {len(scene.rolls)} rolls, {len(scene.links)} links")
    return 0


def cmd_replay(args) -> int:
    params = SimulationParameters.from_config().with_overrides(parse_overrides(args.overrides))
    frame = replay_cached(args.cache, args.scene, params)
    print(frame.to_string(index=False))
    return 0 if (frame['cache_status'] == 'hit-valid').all() else 1


COMMANDS = {'run': cmd_run, 'list': cmd_list, 'validate': cmd_validate, 'replay-cache': cmd_replay}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except SurfaceError as e:
        logger.error(f"❌ {e}")
        print(f"error: {e}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        logger.info("🛑 Stopped by user")
        return 130


if __name__ == '__main__':
    sys.exit(main())
