"""Command line: ``hiforead {validate,forecast,backtest,make-dataset}``.

Exit codes: 0 success, 1 runtime failure, 2 configuration/validation failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .backtest import run_backtest
from .config import ConfigError, PipelineConfig, load_config
from .datasets import PRESETS, write_dataset
from .hierarchy import HierarchyError, load_hierarchy_csv
from .ingestion import IngestionError, SeriesFrame, build_series_frame, load_long_csv, make_folds
from .pipeline import run_pipeline
from .reconcile import STAGES
from .report import write_backtest_outputs, write_forecast_outputs

logger = logging.getLogger("hiforead")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _configure_logging():
    level = os.environ.get("HIFOREAD_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _stage_list(text: str) -> list[str]:
    stages = [s.strip().upper().replace("-", "") for s in text.split(",") if s.strip()]
    bad = [s for s in stages if s not in STAGES]
    if bad or not stages:
        raise argparse.ArgumentTypeError(f"unknown stage(s) {bad}; choose from {','.join(STAGES)}")
    return stages


def load_frame(cfg: PipelineConfig) -> SeriesFrame:
    h = load_hierarchy_csv(cfg.hierarchy)
    records = load_long_csv(cfg.observations, cfg.id_column, cfg.time_column, cfg.value_column, cfg.frequency)
    return build_series_frame(records, h, cfg.fill_policy, cfg.frequency)


def _load(args) -> PipelineConfig:
    cfg = load_config(args.config)
    return cfg.with_overrides(
        seed=getattr(args, "seed", None),
        workers=getattr(args, "workers", None),
        output_dir=getattr(args, "out", None),
        stages=getattr(args, "stages", None),
    )


def _report_config_errors(exc: ConfigError) -> int:
    for key, msg in exc.errors:
        print(f"config error [{key}]: {msg}", file=sys.stderr)
    return EXIT_CONFIG


def cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        return _report_config_errors(exc)
    problems = []
    try:
        h = load_hierarchy_csv(cfg.hierarchy)
    except (HierarchyError, OSError) as exc:
        problems.append(("data.hierarchy", str(exc)))
        h = None
    if h is not None:
        try:
            records = load_long_csv(cfg.observations, cfg.id_column, cfg.time_column, cfg.value_column, cfg.frequency)
            frame = build_series_frame(records, h, cfg.fill_policy, cfg.frequency)
        except (IngestionError, HierarchyError, OSError) as exc:
            problems.append(("data.observations", str(exc)))
        else:
            try:
                make_folds(frame, cfg.horizon, cfg.folds)
            except IngestionError as exc:
                problems.append(("horizon/folds", str(exc)))
            print(
                f"ok: {len(h.nodes)} nodes over {h.K} levels {h.level_sizes}, "
                f"T={frame.T} {cfg.frequency} steps"
            )
    if problems:
        return _report_config_errors(ConfigError(problems))
    print("config valid")
    return EXIT_OK


def cmd_forecast(args) -> int:
    try:
        cfg = _load(args)
        frame = load_frame(cfg)
    except ConfigError as exc:
        return _report_config_errors(exc)
    except (HierarchyError, IngestionError) as exc:
        print(f"config error [data]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    run = run_pipeline(frame, cfg)
    for flag in run.result.flags:
        logger.info("flag: %s", flag)
    written = write_forecast_outputs(run.result, cfg.output_dir, cfg.stages)
    for path in written:
        print(f"wrote {path}")
    if "FINAL" in cfg.stages:
        rep = run.result.coherence["FINAL"]
        print(
            f"FINAL coherence: max abs violation {rep.max_abs_violation:.3g}, "
            f"max relative {rep.max_rel_violation:.3g} -> {'coherent' if rep.coherent else 'INCOHERENT'}"
        )
        if not rep.coherent:
            return EXIT_RUNTIME
    return EXIT_OK


def cmd_backtest(args) -> int:
    try:
        cfg = _load(args)
        frame = load_frame(cfg)
        make_folds(frame, cfg.horizon, cfg.folds)
    except ConfigError as exc:
        return _report_config_errors(exc)
    except (HierarchyError, IngestionError) as exc:
        print(f"config error [data]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report = run_backtest(frame, cfg)
    for path in write_backtest_outputs(report, cfg.output_dir):
        print(f"wrote {path}")
    print(report.format_table())
    bad = [k for k, ok in report.coherence.items() if k[1] == "FINAL" and not ok]
    return EXIT_RUNTIME if bad else EXIT_OK


def cmd_make_dataset(args) -> int:
    gen, defaults = PRESETS[args.kind]
    kwargs = {} if args.kind == "tourism" else {"seed": args.seed}
    if args.kind == "traffic" and args.leaves:
        kwargs["n_leaves"] = args.leaves
    edges, records, freq = gen(**kwargs)
    path = write_dataset(args.out, edges, records, freq, **defaults, seed=args.seed)
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hiforead", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check config, files, hierarchy and series length")
    p.add_argument("--config", required=True, type=Path)
    p.set_defaults(func=cmd_validate)

    for name, func, help_ in (
        ("forecast", cmd_forecast, "fit on the full history and write every stage's forecasts"),
        ("backtest", cmd_backtest, "rolling-origin backtest with a stage-by-level APE table"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
        p.add_argument("--workers", type=int, help="worker processes")
        p.add_argument("--seed", type=int)
        if name == "forecast":
            p.add_argument("--stages", type=_stage_list, help=f"comma list from {','.join(STAGES)}")
        p.set_defaults(func=func)

    p = sub.add_parser("make-dataset", help="write a bundled or synthetic dataset with a ready config")
    p.add_argument("--kind", choices=tuple(PRESETS), required=True,
                   help="tourism is the bundled real dataset; the others are synthetic")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--leaves", type=int, help="bottom series for --kind traffic")
    p.set_defaults(func=cmd_make_dataset)
    return parser


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if getattr(args, "workers", None) is not None and args.workers < 1:
        print("config error [workers]: must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except Exception as exc:  # report, never traceback, on the CLI surface
        logger.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
