"""Command line interface.

    tggp run --config exp.toml
    tggp sweep --config exp.toml --sizes 10,25,50,100,200 --seeds 10
    tggp compare --config exp.toml --models gp,graph_only,tggp

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure (every seed failed).
"""

import argparse
import dataclasses
import logging
import sys

from .config import load_config
from .exceptions import ConfigError, DataFormatError, GenerationError
from .experiment import (
    ExperimentFailed,
    compare_models,
    run_experiment,
    sweep_train_sizes,
)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4

DEFAULT_SIZES = "10,25,50,100,200"


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _name_list(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _seeds(text):
    values = _int_list(text)
    # a single number is a count, a list names the seeds
    return list(range(values[0])) if len(values) == 1 else values


def build_parser():
    parser = argparse.ArgumentParser(prog="tggp", description="Transductive graph GP experiments.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="TOML experiment file")
        p.add_argument("--output", help="output directory (overrides [output] directory)")

    p_run = sub.add_parser("run", help="run the configured model over the configured seeds")
    common(p_run)
    p_run.add_argument("--seeds", type=_seeds, help="seed count or comma-separated seeds")

    p_sweep = sub.add_parser("sweep", help="metric against the number of training nodes")
    common(p_sweep)
    p_sweep.add_argument("--sizes", type=_int_list, default=_int_list(DEFAULT_SIZES),
                         help=f"ascending training sizes (default {DEFAULT_SIZES})")
    p_sweep.add_argument("--seeds", type=_seeds, default=[0], help="seed count or comma-separated seeds")
    p_sweep.add_argument("--models", type=_name_list, help="models or [variants] names (default: [model])")

    p_cmp = sub.add_parser("compare", help="several models on identical splits")
    common(p_cmp)
    p_cmp.add_argument("--models", type=_name_list, required=True, help="comma-separated models or [variants] names")
    p_cmp.add_argument("--seeds", type=_seeds, help="seed count or comma-separated seeds")
    return parser


def _configure(args):
    cfg = load_config(args.config)
    if args.output:
        cfg = cfg.replace(output=dataclasses.replace(cfg.output, directory=args.output))
    seeds = getattr(args, "seeds", None)
    if seeds is not None and args.command != "sweep":
        cfg = cfg.replace(train=dataclasses.replace(cfg.train, seeds=tuple(seeds)))
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _configure(args)
        if args.command == "run":
            report = run_experiment(cfg)
            m = report.metric
            print(f"{report.model}: {m} {report.metrics[m]:.6g} +- {report.metrics[m + '_stderr']:.3g} "
                  f"over {report.metrics['n_ok']}/{len(report.seeds)} seeds -> {cfg.output.directory}")
        elif args.command == "sweep":
            table = sweep_train_sizes(cfg, args.sizes, args.seeds, args.models)
            for row in table.summary:
                mean = "failed" if row["mean"] is None else f"{row['mean']:.6g} +- {row['stderr']:.3g}"
                print(f"{row['model']:>14} size {row['size']:>5}: {table.metric} {mean}")
        else:
            for row in compare_models(cfg, args.models):
                mean = "failed" if row["mean"] is None else f"{row['mean']:.6g} +- {row['stderr']:.3g}"
                print(f"{row['model']:>14}: {row['metric']} {mean}  split {row['split_hash']}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, GenerationError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ExperimentFailed as exc:
        print(f"{exc.kind} failure: {exc}", file=sys.stderr)
        return EXIT_DATA if exc.kind == "data" else EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
