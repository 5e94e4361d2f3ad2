"""Rolling-origin backtest producing a stage-by-level APE comparison."""
from __future__ import annotations

import logging
import math
import time
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field

import numpy as np

from .config import PipelineConfig
from .hierarchy import Hierarchy
from .ingestion import BacktestFold, SeriesFrame, make_folds
from .metrics import ape, level_summary
from .pipeline import (
    assemble_bases, compute_weights, feasible_validation_folds, fit_node_model, map_tasks, model_tasks,
)
from .reconcile import STAGES, NodeBase, node_seasonality, run_multistage

logger = logging.getLogger(__name__)

BaseProvider = Callable[[SeriesFrame, BacktestFold], Mapping[str, NodeBase]]


def stage_levels(stage: str, K: int) -> range:
    """Levels a stage produces forecasts for."""
    return {
        "BO": range(1, K + 1),
        "TD": range(1, K + 1),
        "HHAFA": range(2, K + 1),
        "MINT": range(1, K),
        "SSWFS": range(K, K + 1),
        "FINAL": range(1, K + 1),
    }[stage]


@dataclass
class LevelStat:
    mean: float
    median: float
    n_defined: int
    n_undefined: int


@dataclass
class BacktestReport:
    hierarchy: Hierarchy
    folds: list[BacktestFold]
    fold_apes: dict[tuple[int, str, str], float]
    node_apes: dict[tuple[str, str], float]
    summary: dict[tuple[str, int], LevelStat]
    coherence: dict[tuple[int, str], bool]
    runtimes: dict[str, float] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)

    def improvement(self, level: int) -> tuple[float, float]:
        """Relative APE reduction of FINAL vs BO, for the level's mean and median."""
        bo, fin = self.summary[("BO", level)], self.summary[("FINAL", level)]
        rel = lambda a, b: (a - b) / a if a else math.nan  # noqa: E731
        return rel(bo.mean, fin.mean), rel(bo.median, fin.median)

    def summary_rows(self) -> list[tuple[int, str, float, float]]:
        rows = []
        for stage in STAGES:
            for level in stage_levels(stage, self.hierarchy.K):
                stat = self.summary.get((stage, level))
                if stat is not None:
                    rows.append((level, stage, stat.mean, stat.median))
        return rows

    def to_dict(self) -> dict:
        """JSON-ready detail. Wall-clock runtimes are left out so output is reproducible."""
        h = self.hierarchy
        return {
            "levels": h.K,
            "folds": [
                {"fold": f.fold_id, "train": list(f.train), "validation": list(f.validation), "test": list(f.test)}
                for f in self.folds
            ],
            "summary": [
                {"level": lvl, "stage": st, "mean_ape": _num(s.mean), "median_ape": _num(s.median),
                 "n_defined": s.n_defined, "n_undefined": s.n_undefined}
                for (st, lvl), s in self.summary.items()
            ],
            "improvement_vs_bo": {
                str(k): dict(zip(("mean", "median"), map(_num, self.improvement(k))))
                for k in range(1, h.K + 1)
            },
            "coherent": [
                {"fold": f, "stage": st, "coherent": ok} for (f, st), ok in self.coherence.items()
            ],
            "node_ape": [
                {"node": n, "level": h.level_of[n], "stage": st, "ape": _num(v)}
                for (st, n), v in self.node_apes.items()
            ],
            "fold_ape": [
                {"fold": f, "stage": st, "node": n, "ape": _num(v)}
                for (f, st, n), v in self.fold_apes.items()
            ],
            "failures": self.failures,
        }

    def format_table(self) -> str:
        K = self.hierarchy.K
        head = f"{'stage':<8}" + "".join(f"{f'L{k} mean':>11}{f'L{k} median':>12}" for k in range(1, K + 1))
        lines = [head, "-" * len(head)]
        for stage in STAGES:
            cells = []
            for k in range(1, K + 1):
                s = self.summary.get((stage, k))
                if s is None:
                    cells.append(f"{'-':>11}{'-':>12}")
                else:
                    cells.append(f"{100 * s.mean:>10.2f}%{100 * s.median:>11.2f}%")
            star = " *" if all(self.coherence.get((f.fold_id, stage), False) for f in self.folds) else ""
            lines.append(f"{stage:<8}" + "".join(cells) + star)
        imp = [self.improvement(k) for k in range(1, K + 1)]
        lines.append(f"{'(vs BO)':<8}" + "".join(f"{100 * a:>10.2f}%{100 * b:>11.2f}%" for a, b in imp))
        return "\n".join(lines)


def _num(v: float):
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else v


def run_backtest(
    frame: SeriesFrame, config: PipelineConfig, base_provider: BaseProvider | None = None
) -> BacktestReport:
    """Score every stage on each fold's test block.

    Per fold, models see only the data before the test block. Hyper-parameters
    and ensemble weights are tuned on rolling validation blocks that end at the
    fold's own validation block (as many as its history allows, up to
    ``config.n_validation_folds``), so each fold is scored independently.
    ``base_provider`` replaces the built-in base models (e.g. an oracle).
    """
    h = frame.hierarchy
    folds = make_folds(frame, config.horizon, config.folds)
    runtimes = dict.fromkeys(("models", *STAGES), 0.0)
    histories = [frame.window(0, f.test[0]) for f in folds]
    seasets = [node_seasonality(hist, config.max_peaks, config.tau) for hist in histories]

    t0 = time.perf_counter()
    if base_provider is None:
        tasks, spans = [], []
        for hist, ss in zip(histories, seasets):
            n_val = feasible_validation_folds(hist.T, config.horizon, config.n_validation_folds)
            fold_tasks = model_tasks(hist, config, n_val, ss)
            spans.append((len(tasks), len(tasks) + len(fold_tasks)))
            tasks.extend(fold_tasks)
        outputs = map_tasks(fit_node_model, tasks, config.workers)
        bases = [assemble_bases(h.nodes, outputs[a:b])[0] for a, b in spans]
    else:
        bases = [dict(base_provider(frame, f)) for f in folds]
    runtimes["models"] = time.perf_counter() - t0

    fold_apes, coherence, failures = {}, {}, []
    for fold, hist, ss, base in zip(folds, histories, seasets, bases):
        weights, flags = compute_weights(base, config.bo, config.workers)
        failures.extend(f"fold {fold.fold_id}: {f}" for f in flags)
        result = run_multistage(hist, h, base, config.multistage(), weights, ss)
        failures.extend(f"fold {fold.fold_id}: {f}" for f in result.flags)
        for stage, secs in result.runtimes.items():
            runtimes[stage] += secs
        lo, hi = fold.test
        for stage in STAGES:
            fs = result.stages[stage]
            coherence[(fold.fold_id, stage)] = result.coherence[stage].coherent
            for level in stage_levels(stage, h.K):
                for node in h.nodes_at(level):
                    fold_apes[(fold.fold_id, stage, node)] = ape(fs[node], frame.values[node][lo:hi])

    node_apes = {}
    summary = {}
    for stage in STAGES:
        for level in stage_levels(stage, h.K):
            vals = []
            for node in h.nodes_at(level):
                per_fold = [fold_apes[(f.fold_id, stage, node)] for f in folds]
                defined = [v for v in per_fold if not math.isnan(v)]
                node_apes[(stage, node)] = float(np.mean(defined)) if defined else math.nan
                vals.append(node_apes[(stage, node)])
            n_undef = sum(math.isnan(v) for v in vals)
            try:
                mean, median = level_summary(vals)
            except ValueError:
                mean = median = math.nan
            summary[(stage, level)] = LevelStat(mean, median, len(vals) - n_undef, n_undef)
    for stage, secs in runtimes.items():
        logger.info("runtime %-6s %.2fs", stage, secs)
    return BacktestReport(h, folds, fold_apes, node_apes, summary, coherence, runtimes, failures)
