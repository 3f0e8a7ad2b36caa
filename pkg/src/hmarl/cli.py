"""Command-line experiment runner.

    hmarl-run --config experiment.yaml [--out DIR] [--seed N] [--planner NAME] [--jobs N]

For every planner and seed the runner writes ``<out>/<planner>/rounds_<seed>.csv``
and ``<out>/<planner>/summary_<seed>.json``.  Exit status is 0 on success,
1 on a configuration error and 2 on a numerical failure; files written by a
failed invocation are removed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError

from hmarl.config import ConfigError, parse_config
from hmarl.driver import PLANNERS, ExperimentConfig, ExperimentResult, run_experiment

log = logging.getLogger("hmarl")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


def fmt(x: float) -> str:
    """Fixed 17-significant-digit decimal representation."""
    return format(float(x), ".17g")


def csv_columns(n_agents: int) -> list[str]:
    return (
        ["round", "planner", "avg_true_value_under_P"]
        + [f"regret_agent_{i}" for i in range(n_agents)]
        + ["eps_t", "gap_t", "info_cumulative", "seconds"]
    )


def rounds_csv(result: ExperimentResult, record_timing: bool = False) -> str:
    """Per-round table; ``regret_agent_i`` holds the round's regret term."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    n = result.true_tensor.n_agents
    writer.writerow(csv_columns(n))
    avg = result.avg_true_value
    for r, entry in enumerate(result.logs):
        writer.writerow(
            [entry.t, result.planner, fmt(avg[r])]
            + [fmt(v) for v in result.regret_terms[r]]
            + [
                fmt(entry.eps_t),
                fmt(entry.gap_t),
                fmt(result.information_curve[r]),
                fmt(entry.seconds if record_timing else 0.0),
            ]
        )
    return buf.getvalue()


def summary_json(result: ExperimentResult) -> str:
    se = result.true_tensor.std_error
    summary = {
        "planner": result.planner,
        "seed": result.seed,
        "rounds": result.rounds,
        "t_star": result.t_star,
        "gap_t_star": fmt(result.logs[result.t_star - 1].gap_t),
        "eps_sum": fmt(result.eps_sum),
        "final_regrets": [fmt(v) for v in result.regret_curves[-1]],
        "final_avg_true_value": fmt(result.avg_true_value[-1]),
        "true_value_max_std_error": fmt(0.0 if se is None else float(np.max(se))),
        "information_final": fmt(result.information_curve[-1]),
    }
    return json.dumps(summary, indent=2, sort_keys=True) + "\n"


def _run_one(args):
    cfg, seed, planner = args
    return run_experiment(cfg, seed, planner)


def run_main(cfg: ExperimentConfig, jobs: int = 1) -> int:
    """Run every (planner, seed) pair and write outputs; returns an exit code."""
    out = Path(cfg.output_dir)
    tasks = [(cfg, seed, planner) for planner in cfg.planners for seed in cfg.seeds]
    written: list[Path] = []
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_run_one, tasks))
        else:
            results = [_run_one(t) for t in tasks]
        for result in results:
            target = out / result.planner
            target.mkdir(parents=True, exist_ok=True)
            for name, text in (
                (f"rounds_{result.seed}.csv", rounds_csv(result, cfg.record_timing)),
                (f"summary_{result.seed}.json", summary_json(result)),
            ):
                path = target / name
                written.append(path)
                path.write_text(text)
            log.info("%s seed %d: t*=%d eps_sum=%.4g", result.planner, result.seed, result.t_star, result.eps_sum)
    except (FloatingPointError, LinAlgError, ArithmeticError) as exc:
        for path in written:
            path.unlink(missing_ok=True)
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hmarl-run", description="Run hallucinated multi-agent RL experiments.")
    parser.add_argument("--config", required=True, help="YAML experiment config")
    parser.add_argument("--out", help="output directory (overrides output.directory)")
    parser.add_argument("--seed", type=int, help="single master seed (overrides seeds)")
    parser.add_argument("--planner", choices=PLANNERS, help="single planner (overrides planner)")
    parser.add_argument("--jobs", type=int, default=1, help="run seeds in parallel processes")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text()
        cfg = parse_config(text)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed", "must be an unsigned 64-bit integer")
            cfg = replace(cfg, seeds=(args.seed,))
        if args.planner is not None:
            cfg = replace(cfg, planners=(args.planner,))
        if args.out is not None:
            cfg = replace(cfg, output_dir=args.out)
    except (ConfigError, OSError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    return run_main(cfg, jobs=max(1, args.jobs))


if __name__ == "__main__":
    sys.exit(main())
