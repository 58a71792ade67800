"""Command-line interface.

Subcommands: simulate, train, infer, evaluate, bootstrap, smoke. A single
JSON config document drives each stage; --seed/--out/--threads override
the corresponding config fields. Exit codes: 0 success, 1 validation,
2 i/o, 3 numerical or training failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .config import ExperimentConfig
from .errors import (ConfigurationError, DomainError, FitError, LfireError,
                     NumericalError, SimulationError, TrainingError,
                     UndefinedMetricError)
from .pipeline import (cmd_bootstrap, cmd_evaluate, cmd_infer, cmd_simulate,
                       cmd_smoke, cmd_train)

EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lfire",
        description="Likelihood-free inference by ratio estimation for "
                    "time-series simulators.")
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="experiment config JSON")
        p.add_argument("--seed", type=int, help="override config seed")
        p.add_argument("--threads", type=int, help="override config threads")
        p.add_argument("--out", help="override config output directory")

    p = sub.add_parser("simulate", help="generate training and observed-task batches")
    common(p)

    p = sub.add_parser("train", help="train the summary network")
    common(p)
    p.add_argument("--simbatch", help="path stem of the training batch")
    p.add_argument("--resume", action="store_true",
                   help="continue from the saved checkpoint")

    p = sub.add_parser("infer", help="LFIRE posteriors for each observed dataset")
    common(p)
    p.add_argument("--checkpoint", help="path stem of the network checkpoint")
    p.add_argument("--obs", help="path stem of the observed-task batch")

    p = sub.add_parser("evaluate", help="score posteriors and write reports")
    common(p)

    p = sub.add_parser("bootstrap", help="bootstrap interval for a results column")
    common(p)
    p.add_argument("--column", required=True)
    p.add_argument("--method")
    p.add_argument("--statistic", default="mean", choices=("mean", "median"))
    p.add_argument("--resamples", type=int, default=200)

    p = sub.add_parser("smoke", help="tiny deterministic end-to-end run")
    common(p, config_required=False)
    return parser


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = max(1, args.threads)
    out_root = os.environ.get("LFIRE_OUT_ROOT")
    if args.out is not None:
        cfg.out_dir = args.out
    elif out_root:
        cfg.out_dir = os.path.join(out_root, cfg.out_dir)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "smoke":
            out = args.out or "runs/smoke"
            digests = cmd_smoke(out, seed=args.seed or 0)
            for name in sorted(digests):
                print(f"{digests[name]}  {name}")
            return 0
        cfg = load_config(args)
        if args.command == "simulate":
            cmd_simulate(cfg)
        elif args.command == "train":
            cmd_train(cfg, simbatch_stem=args.simbatch, resume=args.resume)
        elif args.command == "infer":
            cmd_infer(cfg, checkpoint_stem=args.checkpoint, obs_stem=args.obs)
        elif args.command == "evaluate":
            cmd_evaluate(cfg)
        elif args.command == "bootstrap":
            result = cmd_bootstrap(cfg, args.column, method=args.method,
                                   statistic=args.statistic,
                                   n_resamples=args.resamples)
            print(json.dumps(result, sort_keys=True))
        return 0
    except (ConfigurationError, DomainError, UndefinedMetricError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO
    except (TrainingError, FitError, NumericalError, SimulationError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except LfireError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
