"""Command line entry point: ``dpflow <task> [--config cfg.json] [flags]``.

Flags mirror config keys and win over the JSON file on conflict. Exit codes:
0 success, 2 configuration problem, 3 divergence escaping a task.
"""

from __future__ import annotations

import argparse
import json
import sys

from .dp_gd import DivergenceError
from .harness import TASKS, ConfigError, ExperimentConfig, run_task

__all__ = ["build_parser", "main"]


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpflow",
        description="Private-descent experiments on random-features regression.",
    )
    parser.add_argument("task", choices=TASKS)
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--n", type=int, help="number of training samples")
    parser.add_argument("--d", type=int, help="data dimension")
    parser.add_argument("--p-list", dest="p_list", type=_int_list,
                        help="comma-separated feature counts")
    parser.add_argument("--t-list", dest="T_list", type=_int_list,
                        help="comma-separated step counts")
    parser.add_argument("--clip-list", dest="clip_list", type=_float_list,
                        help="comma-separated clipping radii (grid task)")
    parser.add_argument("--eps", dest="epsilon", type=float, help="privacy epsilon")
    parser.add_argument("--delta", type=float, help="privacy delta (default 1/n)")
    parser.add_argument("--eta", type=float,
                        help="step size (default 0.1 n / (2 lambda_max))")
    parser.add_argument("--seeds", type=_int_list, help="comma-separated seeds")
    parser.add_argument("--m", type=int, help="Monte Carlo test points")
    parser.add_argument("--workers", type=int, help="parallel sweep jobs")
    parser.add_argument("--out", dest="output_dir", help="output directory")
    parser.add_argument("--no-plots", action="store_true", help="skip SVG output")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        key: getattr(args, key)
        for key in ("n", "d", "p_list", "T_list", "clip_list", "epsilon",
                    "delta", "eta", "seeds", "m", "workers", "output_dir")
        if getattr(args, key) is not None
    }
    overrides["task"] = args.task
    if args.no_plots:
        overrides["make_plots"] = False
    try:
        if args.config:
            cfg = ExperimentConfig.from_json(args.config, **overrides)
        else:
            cfg = ExperimentConfig.from_mapping(overrides)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"dpflow: config error: {exc}", file=sys.stderr)
        return 2

    try:
        result = run_task(cfg)
    except DivergenceError as exc:
        print(f"dpflow: {exc}", file=sys.stderr)
        return 3

    if cfg.task == "calibrate":
        print(json.dumps(result.summary, indent=2, sort_keys=True))
    else:
        print(f"{len(result.rows)} rows -> {result.paths['csv']}")
        if "summary_csv" in result.paths:
            print(f"summary -> {result.paths['summary_csv']}")
        if "svg" in result.paths:
            print(f"figure -> {result.paths['svg']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
