#!/usr/bin/env python3
"""
ADUGS command-line harness

Generates synthetic dynamic scenes, runs the dynamic-object-robust front end
over them and evaluates the resulting trajectories.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

# Add the project root to Python path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from config import PipelineConfig, get_config, load_pipeline_config  # noqa: E402
from src.exceptions import ConfigurationError, NumericalError, ParseError  # noqa: E402
from src.metrics import DEFAULT_EPSILON, ate_rmse, correct_rate  # noqa: E402
from src.pipeline import run_many, run_pipeline  # noqa: E402
from src.simulator import (PRESET_LEVELS, Scene, generate, load_scene, load_scene_config,  # noqa: E402
                           preset_config, save_scene, scenario_noise_burst,
                           scenario_occlusion_crossing)
from src.trajectory_io import read_trajectory, write_trajectory  # noqa: E402
from src.utils import format_real, setup_logging  # noqa: E402

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARSE = 2
EXIT_NUMERICAL = 3


class HarnessArgumentParser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def cmd_simulate(args) -> int:
    if args.config:
        scene_config = load_scene_config(args.config)
    else:
        scene_config = preset_config(args.preset, frames=args.frames)
    if args.occlusion is not None:
        scene_config = scenario_occlusion_crossing(scene_config, args.occlusion)
    if args.burst is not None:
        start, stop, factor = args.burst
        scene_config = scenario_noise_burst(scene_config, (int(start), int(stop)), factor)
    scene = generate(scene_config, args.seed)
    save_scene(scene, args.out)
    print(f"scene {scene_config.name} seed {args.seed}: {len(scene.frames)} frames -> {args.out}")
    return EXIT_OK


def _switched(config: PipelineConfig, args) -> PipelineConfig:
    switches = {}
    if args.no_mask:
        switches['mask_enabled'] = False
    if args.no_adaptive_r:
        switches['adaptive_r_enabled'] = False
    if args.no_compensation:
        switches['compensation_enabled'] = False
    if args.no_sort:
        switches['sort_enabled'] = False
    return config.with_switches(**switches) if switches else config


def cmd_run(args) -> int:
    # imported here so simulate/eval do not pay for matplotlib
    from src.reporting import write_metrics

    scene = load_scene(args.scene)
    config = _switched(load_pipeline_config(args.config), args)
    result = run_pipeline(scene, config, mask_dump_dir=args.dump_masks)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_trajectory(result.estimated, out_dir / 'estimate.tum')
    write_trajectory(scene.gt_trajectory, out_dir / 'groundtruth.tum')
    write_metrics(result, out_dir, svg=args.svg)

    print(f"ate_rmse {format_real(result.ate.rmse)}")
    print(f"cr {format_real(result.cr.correct_rate)}")
    print(f"degenerate_frames {result.degenerate_frames}")
    return EXIT_OK


def cmd_eval(args) -> int:
    est = read_trajectory(args.est)
    gt = read_trajectory(args.gt)
    ate = ate_rmse(est, gt, with_scale=args.scale)
    cr = correct_rate(est, gt, args.epsilon, with_scale=args.scale)
    print(f"ate_rmse {format_real(ate.rmse)}")
    print(f"ate_mean {format_real(ate.mean)}")
    print(f"ate_median {format_real(ate.median)}")
    print(f"ate_max {format_real(ate.max)}")
    print(f"matched {ate.matched}")
    if args.scale:
        print(f"scale {format_real(ate.alignment.scale)}")
    print(f"cr {format_real(cr.correct_rate)}")
    return EXIT_OK


def cmd_report(args) -> int:
    from src.reporting import write_report

    summary = write_report(args.in_dir, svg=args.svg)
    print(summary.to_string(index=False, float_format=lambda v: format_real(v)))
    return EXIT_OK


def run_sweep(scene: Scene, base: PipelineConfig, n_max_values: Sequence[int],
              d_min_values: Sequence[float], jobs: int = 1) -> List[Dict[str, object]]:
    """Independent runs over an N_max x D_min grid; output order does not depend on jobs"""
    from src.reporting import metrics_row

    tasks = [(scene, base.with_budget(n, d)) for n in n_max_values for d in d_min_values]
    return [metrics_row(result) for result in run_many(tasks, jobs)]


def cmd_sweep(args) -> int:
    from src.reporting import write_sweep

    scene = load_scene(args.scene)
    config = _switched(load_pipeline_config(args.config), args)
    jobs = args.jobs if args.jobs is not None else get_config().MAX_WORKERS
    rows = run_sweep(scene, config, args.n_max, args.d_min, jobs)
    table = write_sweep(rows, args.out_dir, svg=args.svg)
    print(table[['n_max', 'd_min', 'ate_rmse', 'cr']].to_string(
        index=False, float_format=lambda v: format_real(v)))
    return EXIT_OK


def _add_switches(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--no-mask', action='store_true', help='Disable dynamic masking')
    parser.add_argument('--no-adaptive-r', action='store_true', help='Use the fixed measurement noise')
    parser.add_argument('--no-compensation', action='store_true',
                        help='Do not refund rejected features to the extraction budget')
    parser.add_argument('--no-sort', action='store_true', help='Prompt with raw detections')


def build_parser() -> argparse.ArgumentParser:
    parser = HarnessArgumentParser(prog='run.py', description=__doc__.strip().splitlines()[0])
    commands = parser.add_subparsers(dest='command', required=True)

    simulate = commands.add_parser('simulate', help='Generate a synthetic scene file')
    source = simulate.add_mutually_exclusive_group()
    source.add_argument('--config', help='Scene configuration (JSON)')
    source.add_argument('--preset', choices=PRESET_LEVELS, default='high')
    simulate.add_argument('--frames', type=int, default=150, help='Frames for a preset scene')
    simulate.add_argument('--occlusion', type=int, metavar='K',
                          help='Replace objects by an occlusion crossing hidden for K frames')
    simulate.add_argument('--burst', type=float, nargs=3, metavar=('START', 'STOP', 'FACTOR'),
                          help='Detector noise burst on frames [START, STOP)')
    simulate.add_argument('--seed', type=int, default=0)
    simulate.add_argument('--out', required=True)
    simulate.set_defaults(handler=cmd_simulate)

    run = commands.add_parser('run', help='Run the pipeline over a scene')
    run.add_argument('--scene', required=True)
    run.add_argument('--config', help='Pipeline configuration ([section] key = value)')
    run.add_argument('--out-dir', default=get_config().OUTPUT_DIR)
    _add_switches(run)
    run.add_argument('--svg', action='store_true', help='Also plot per-frame ATE')
    run.add_argument('--dump-masks', metavar='DIR', help='Write every refined mask as PBM')
    run.set_defaults(handler=cmd_run)

    evaluate = commands.add_parser('eval', help='Compare two TUM trajectories')
    evaluate.add_argument('--est', required=True)
    evaluate.add_argument('--gt', required=True)
    evaluate.add_argument('--scale', action='store_true', help='Similarity instead of rigid alignment')
    evaluate.add_argument('--epsilon', type=float, default=DEFAULT_EPSILON)
    evaluate.set_defaults(handler=cmd_eval)

    report = commands.add_parser('report', help='Summarize metrics.csv')
    report.add_argument('--in', dest='in_dir', required=True)
    report.add_argument('--svg', action='store_true')
    report.set_defaults(handler=cmd_report)

    sweep = commands.add_parser('sweep', help='Feature budget grid over N_max and D_min')
    sweep.add_argument('--scene', required=True)
    sweep.add_argument('--config')
    sweep.add_argument('--out-dir', default=get_config().OUTPUT_DIR)
    sweep.add_argument('--n-max', type=int, nargs='+', default=[50, 100, 150, 200])
    sweep.add_argument('--d-min', type=float, nargs='+', default=[10.0, 20.0, 30.0])
    sweep.add_argument('--jobs', type=int)
    _add_switches(sweep)
    sweep.add_argument('--svg', action='store_true', help='Also plot an ATE heatmap')
    sweep.set_defaults(handler=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main application entry point"""
    config = get_config()
    setup_logging(config.LOG_LEVEL)
    if not config.validate_config():
        logger.warning("ADUGS_LOG not recognised. Using 'warn'.")

    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ParseError as e:
        logger.error(f"Parse error: {e}")
        return EXIT_PARSE
    except ConfigurationError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_USAGE
    except NumericalError as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_USAGE
    except Exception as e:
        logger.error(f"Unexpected error: {e}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
