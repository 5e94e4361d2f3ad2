"""File outputs: per-stage forecast CSVs, coherence JSON, backtest summary and detail."""
from __future__ import annotations

import csv
import json
import math
from collections.abc import Iterable
from pathlib import Path

from .backtest import BacktestReport
from .reconcile import ForecastSet, MultiStageResult


def _fmt(v: float) -> str:
    return repr(float(v))


def write_stage_csv(path: str | Path, fs: ForecastSet) -> None:
    """``node_id,level,step,stage,value`` rows; steps are 1-based."""
    h = fs.hierarchy
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id", "level", "step", "stage", "value"])
        for node in fs.nodes:
            for step, v in enumerate(fs[node], start=1):
                w.writerow([node, h.level_of[node], step, fs.stage, _fmt(v)])


def write_forecast_outputs(result: MultiStageResult, outdir: str | Path, stages: Iterable[str]) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for stage in stages:
        path = outdir / f"stage_{stage.lower()}.csv"
        write_stage_csv(path, result.stages[stage])
        written.append(path)
    if "FINAL" in stages:
        path = outdir / "coherence.json"
        payload = {stage: rep.to_dict() for stage, rep in result.coherence.items()}
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written.append(path)
    return written


def write_backtest_outputs(report: BacktestReport, outdir: str | Path) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    summary = outdir / "backtest_summary.csv"
    with summary.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level", "stage", "mean_ape", "median_ape"])
        for level, stage, mean, median in report.summary_rows():
            w.writerow([level, stage, "" if math.isnan(mean) else _fmt(mean), "" if math.isnan(median) else _fmt(median)])
    detail = outdir / "backtest_detail.json"
    detail.write_text(json.dumps(report.to_dict(), indent=1, allow_nan=False) + "\n", encoding="utf-8")
    return [summary, detail]
