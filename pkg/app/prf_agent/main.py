"""
Command line entry point for training agents and producing reward artifacts.

    python -m app.prf_agent.main run --config configs/gridnav_prf.ini --out runs/gridnav
    python -m app.prf_agent.main eval runs/gridnav --episodes 100
    python -m app.prf_agent.main reward-report frames/ --config configs/breakout_prf.ini
    python -m app.prf_agent.main distance-trace runs/tracedraw
    python -m app.prf_agent.main mt frames/ --out mt.pgm
    python -m app.prf_agent.main hog image.pgm --out glyph.pgm
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from app.core.config import settings
from app.models.experiment import (
    ExperimentConfig,
    MotionTemplateSpec,
    format_validation_errors,
    load_experiment_config,
)
from app.prf_agent.experiment import (
    ExperimentRunner,
    build_environment,
    build_prf,
    evaluate_checkpoint,
    read_config,
)
from app.prf_agent.hog_utils import HogParams, hog_features, hog_glyph
from app.prf_agent.motion_template_utils import compute_mt
from app.prf_agent.q_learning import TrainingDivergedError
from app.prf_agent.report_utils import distance_trace, quartile_means, reward_report
from app.utils.image_io import load_frames, load_image, save_image

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME_ERROR = 1
EXIT_CONFIG_ERROR = 2
EXIT_DIVERGED = 3


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    config = load_experiment_config(args.config)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        overrides["output_dir"] = Path(args.out)
    if getattr(args, "frames_every", None) is not None:
        overrides["frames_every"] = args.frames_every
    return config.model_copy(update=overrides) if overrides else config


def cmd_run(args: argparse.Namespace) -> int:
    config = _load_config(args)
    result = ExperimentRunner(config, force=args.force).run()
    if result.evaluations:
        last = result.evaluations[-1]
        print(f"Final evaluation: mean score {last['mean_score']}, success rate {last['success_rate']}")
    print(f"Results written to {result.output_dir}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    row = evaluate_checkpoint(Path(args.run_dir), episodes=args.episodes)
    print(
        f"{row['episodes']} greedy episodes: mean reward {row['mean_total_reward']}, "
        f"mean score {row['mean_score']}, success rate {row['success_rate']}"
    )
    return EXIT_OK


def cmd_reward_report(args: argparse.Namespace) -> int:
    config = load_experiment_config(args.config)
    if config.descriptor is None:
        raise ValueError(f"{args.config} has no [descriptor] section")
    prf = build_prf(config, build_environment(config))
    out_dir = Path(args.out) if args.out else Path("reports") / Path(args.frames_dir).name
    ranked = reward_report(args.frames_dir, prf, out_dir)
    print(f"Best frame: {ranked[0].frame.name} (reward {ranked[0].reward:.4f})")
    print(f"Worst frame: {ranked[-1].frame.name} (reward {ranked[-1].reward:.4f})")
    return EXIT_OK


def cmd_distance_trace(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    config = load_experiment_config(args.config) if args.config else read_config(run_dir / "config.json")
    if config.descriptor is None:
        raise ValueError("distance-trace needs a configuration with a [descriptor] section")
    prf = build_prf(config, build_environment(config))
    out_path = Path(args.out) if args.out else run_dir / "distance_trace.csv"
    trace = distance_trace(run_dir, prf, out_path)
    if len(trace) >= 4:
        first, last = quartile_means([d for _, d in trace])
        print(f"Mean D: first quartile {first:.4f}, last quartile {last:.4f}")
    return EXIT_OK


def cmd_mt(args: argparse.Namespace) -> int:
    spec = MotionTemplateSpec(
        tau0=args.tau0,
        tau_increment=args.tau_increment,
        delta_divisor=args.delta_divisor,
        delta=args.delta,
        silhouette_threshold=args.threshold,
    )
    frames = load_frames(args.frames_dir)
    template = compute_mt(frames, spec.to_params())
    save_image(template.to_gray(), args.out)
    print(f"Motion template of {len(frames)} frames written to {args.out}")
    return EXIT_OK


def cmd_hog(args: argparse.Namespace) -> int:
    image = load_image(args.image)
    params = HogParams(cell_size=args.cell_size, num_bins=args.num_bins)
    features = hog_features(image, params)
    save_image(hog_glyph(features, image.shape, params, cell_px=args.cell_px), args.out)
    print(f"{features.size} HOG features; glyph written to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Perceptual reward experiments")
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Train an agent from a config file")
    run.add_argument("--config", "-c", required=True, help="Experiment INI file")
    run.add_argument("--seed", type=int, help="Override the config seed")
    run.add_argument("--out", help="Override the output directory")
    run.add_argument("--force", action="store_true", help="Replace a non-empty output directory")
    run.add_argument("--frames-every", type=int, help="Dump mirror and EMA frames every N steps")
    run.set_defaults(handler=cmd_run)

    evaluate = sub.add_parser("eval", help="Greedy evaluation of a finished run")
    evaluate.add_argument("run_dir", help="Run directory with config.json and checkpoint.npz")
    evaluate.add_argument("--episodes", type=int, default=100)
    evaluate.set_defaults(handler=cmd_eval)

    report = sub.add_parser("reward-report", help="Rank frames by perceptual reward")
    report.add_argument("frames_dir")
    report.add_argument("--config", "-c", required=True, help="Config with the goal [descriptor]")
    report.add_argument("--out", help="Report directory")
    report.set_defaults(handler=cmd_reward_report)

    trace = sub.add_parser("distance-trace", help="Per-episode template distance of a run")
    trace.add_argument("run_dir")
    trace.add_argument("--config", "-c", help="Goal config (default: the run's config.json)")
    trace.add_argument("--out", help="CSV path (default: RUN_DIR/distance_trace.csv)")
    trace.set_defaults(handler=cmd_distance_trace)

    mt = sub.add_parser("mt", help="Motion template of a frame directory")
    mt.add_argument("frames_dir")
    mt.add_argument("--out", required=True)
    mt.add_argument("--tau0", type=float, default=0.1)
    mt.add_argument("--tau-increment", type=float, default=0.3)
    mt.add_argument("--delta-divisor", type=float, default=4.0)
    mt.add_argument("--delta", type=float, default=None, help="Constant decay, overrides --delta-divisor")
    mt.add_argument("--threshold", type=float, default=settings.silhouette_threshold)
    mt.set_defaults(handler=cmd_mt)

    hog = sub.add_parser("hog", help="HOG glyph of an image")
    hog.add_argument("image")
    hog.add_argument("--out", required=True)
    hog.add_argument("--cell-size", type=int, default=8)
    hog.add_argument("--num-bins", type=int, default=settings.default_num_bins)
    hog.add_argument("--cell-px", type=int, default=16, help="Glyph pixels per cell")
    hog.set_defaults(handler=cmd_hog)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else settings.log_level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    try:
        return args.handler(args)
    except ValidationError as e:
        logger.error("Invalid configuration:")
        for line in format_validation_errors(e):
            logger.error(f"  {line}")
        return EXIT_CONFIG_ERROR
    except TrainingDivergedError as e:
        logger.error(f"Training diverged at step {e.step} (loss {e.loss}): {e}")
        return EXIT_DIVERGED
    except (FileNotFoundError, FileExistsError, ValueError) as e:
        logger.error(str(e))
        return EXIT_CONFIG_ERROR
    except Exception as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
