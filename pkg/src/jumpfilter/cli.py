"""Command-line interface.

    jumpfilter simulate   --config cfg.json [--seed N] [--dt X] [--out DIR]
    jumpfilter filter     --config cfg.json ...
    jumpfilter convergence --config cfg.json --halvings N ...
    jumpfilter adjudicate --config cfg.json ...
    jumpfilter predict    --config cfg.json --horizons 0,1,10 ...
    jumpfilter validate   --config cfg.json | --model model.json

Exit codes: 0 success, 2 validation failure, 3 run-quality failure
(instability or a missed acceptance threshold), 1 unexpected error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .chain import model_from_json, validate_model
from .harness import (
    ExperimentConfig,
    run_adjudicate,
    run_convergence,
    run_filter,
    run_predict,
    run_simulate,
)
from .zakai import FilterInstabilityError, GammaRangeError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_QUALITY = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="experiment config JSON")
    parser.add_argument("--seed", type=int, default=None, help="override master_seed")
    parser.add_argument("--dt", type=float, default=None, help="override step size")
    parser.add_argument("--out", default=None, help="override output directory")


def _load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.from_json(Path(args.config).read_text())
    if args.seed is not None:
        config.master_seed = args.seed
    if args.dt is not None:
        config.dt = args.dt
    if args.out is not None:
        config.out_dir = args.out
    return config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jumpfilter",
        description="Filtering of finite-state jump processes observed in white noise",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("simulate", "filter", "adjudicate"):
        _add_common(sub.add_parser(name))
    conv = sub.add_parser("convergence")
    _add_common(conv)
    conv.add_argument("--halvings", type=int, default=3)
    pred = sub.add_parser("predict")
    _add_common(pred)
    pred.add_argument(
        "--horizons", default="0,1", help="comma-separated lookahead horizons"
    )
    val = sub.add_parser("validate")
    val.add_argument("--config", default=None, help="experiment config JSON")
    val.add_argument("--model", default=None, help="bare model JSON")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return _cmd_validate(args)
        config = _load_config(args)
        if args.command == "simulate":
            result = run_simulate(config)
            print(json.dumps(result, indent=2, sort_keys=True))
        elif args.command == "filter":
            _, report = run_filter(config)
            print(json.dumps(report, indent=2, sort_keys=True))
        elif args.command == "convergence":
            rows = run_convergence(config, args.halvings)
            for row in rows:
                print(
                    f"{row['pair']}: level {row['level']} dt={row['dt']:g} "
                    f"disc={row['max_discrepancy']:.6e} order={row['order']:.3f}"
                )
        elif args.command == "adjudicate":
            report = run_adjudicate(config)
            print(json.dumps(report, indent=2, sort_keys=True))
            if (
                report["correction_sign"]["verdict"] == "inconclusive"
                or report["drift_variant"]["verdict"] == "inconclusive"
            ):
                return EXIT_QUALITY
        elif args.command == "predict":
            horizons = [float(h) for h in args.horizons.split(",") if h]
            rows = run_predict(config, horizons)
            for row in rows:
                probs = ",".join(f"{p:.17g}" for p in row["probs"])
                print(f"h={row['h']:g}: {probs}")
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FilterInstabilityError, GammaRangeError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_QUALITY
    return EXIT_OK


def _cmd_validate(args) -> int:
    if args.model is None and args.config is None:
        print("error: validate needs --config or --model", file=sys.stderr)
        return EXIT_VALIDATION
    if args.model is not None:
        model = model_from_json(Path(args.model).read_text())
        report = validate_model(model)
        if not report.passed:
            print("invalid model: " + "; ".join(report.violations), file=sys.stderr)
            return EXIT_VALIDATION
        print("model ok")
        return EXIT_OK
    try:
        config = ExperimentConfig.from_json(Path(args.config).read_text())
        config.validate()
    except (ValueError, KeyError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print("config ok")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
