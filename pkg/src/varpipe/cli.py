"""Batch command-line interface.

Verbs map to pipeline stages: ``ingest``, ``diagnose``, ``gridsearch``,
``fit``, ``forecast``, ``evaluate``, ``fevd`` and ``run`` (everything,
including the manifest and human summary). Each verb reads a JSON config and
recomputes the stages it depends on; individual config keys can be
overridden with flags of the same name.

Exit codes: 0 success, 1 fatal pipeline error, 2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime
from pathlib import Path

from ._version import __version__
from .errors import ConfigError, VarPipeError
from .pipeline import Pipeline, PipelineConfig

_VERBS = ("ingest", "diagnose", "gridsearch", "fit", "forecast", "evaluate", "fevd", "run")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="varpipe",
        description="Hourly multivariate VAR forecasting pipeline",
    )
    parser.add_argument("--version", action="version", version=f"varpipe {__version__}")
    subparsers = parser.add_subparsers(dest="verb", required=True)
    for verb in _VERBS:
        sub = subparsers.add_parser(verb, help=f"run the pipeline through the {verb} stage")
        sub.add_argument("--config", required=True, help="path to the JSON config document")
        sub.add_argument("--output", help="output directory (overrides output_dir)")
        sub.add_argument("--seed", type=int, help="seed recorded for the run")
        sub.add_argument("--test-start", help="first test timestamp, ISO format")
        sub.add_argument("--grid-lags", help="comma-separated lag orders, e.g. 12,24,36")
        sub.add_argument("--grid-trends", help="comma-separated trend codes, e.g. c,ct")
        sub.add_argument("--granger-lag", type=int, help="lag order for causality tests")
        sub.add_argument("--fevd-horizon", type=int, help="variance decomposition horizon")
        sub.add_argument(
            "--auto-difference",
            action="store_true",
            default=None,
            help="difference the training data once if any column is non-stationary",
        )
    return parser


def load_config(args: argparse.Namespace) -> PipelineConfig:
    config_path = Path(args.config)
    try:
        with open(config_path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {config_path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc

    overrides = {
        "output_dir": args.output,
        "seed": args.seed,
        "test_start": args.test_start,
        "granger_lag": args.granger_lag,
        "fevd_horizon": args.fevd_horizon,
        "auto_difference": args.auto_difference,
    }
    for key, value in overrides.items():
        if value is not None:
            payload[key] = value
    if args.grid_lags is not None:
        try:
            payload["grid_lags"] = [int(x) for x in args.grid_lags.split(",") if x]
        except ValueError:
            raise ConfigError(f"--grid-lags must be integers, got {args.grid_lags!r}") from None
    if args.grid_trends is not None:
        payload["grid_trends"] = [x for x in args.grid_trends.split(",") if x]
    return PipelineConfig.from_dict(payload, base_dir=config_path.parent)


def _run_verb(pipeline: Pipeline, verb: str) -> None:
    if verb == "ingest":
        pipeline.stage_ingest()
    elif verb == "diagnose":
        pipeline.stage_granger()
    elif verb == "gridsearch":
        pipeline.stage_gridsearch()
    elif verb == "fit":
        pipeline.stage_fit()
    elif verb == "forecast":
        pipeline.stage_forecast()
    elif verb == "evaluate":
        pipeline.stage_evaluate()
    elif verb == "fevd":
        pipeline.stage_fevd()
    else:
        pipeline.run()


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        pipeline = Pipeline(config)
        _run_verb(pipeline, args.verb)
    except (VarPipeError, OSError) as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return 1
    emitted = ", ".join(pipeline.manifest.artifacts)
    print(f"{args.verb}: wrote {emitted} in {config.output_dir}")
    for warning in pipeline.manifest.warnings:
        print(f"warning: {warning}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
