"""End-to-end forecasting: per-node base models, BO weights, then every reconciliation stage.

Work is split into independent ``(node, model)`` and ``(node,)`` items that can
run in a process pool. Results are gathered in submission order, so output
never depends on worker count or completion order.
"""
from __future__ import annotations

import logging
from collections.abc import Callable, Iterable, Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bo import BOConfig, EnsembleWeights
from .config import PipelineConfig
from .forecasters import (
    ENSEMBLE_KINDS,
    ForecasterError,
    ForecasterSpec,
    StepInfo,
    fit,
    predict,
    select_hyperparams,
    usable_periods,
    validation_forecasts,
)
from .ingestion import IngestionError, SeriesFrame, origin_folds
from .reconcile import MultiStageResult, NodeBase, ensemble_weights, node_seasonality, run_multistage

logger = logging.getLogger(__name__)


@dataclass
class ModelOutput:
    kind: str
    spec: ForecasterSpec
    val_forecasts: list[np.ndarray]
    val_truth: list[np.ndarray]
    forecast: np.ndarray
    residuals: np.ndarray
    flags: tuple[str, ...] = ()


def map_tasks(fn: Callable, tasks: Sequence, workers: int = 1) -> list:
    """Ordered map, in-process for one worker, else over a process pool."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (workers * 4))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))


def feasible_validation_folds(history_len: int, horizon: int, wanted: int) -> int:
    for n in range(wanted, 0, -1):
        try:
            origin_folds(history_len, horizon, n)
            return n
        except IngestionError:
            continue
    raise IngestionError(
        f"history of {history_len} steps is too short for horizon {horizon} "
        "(need at least two horizons)"
    )


def fit_node_model(task) -> ModelOutput:
    """Select hyper-parameters on the validation folds, refit on the full history, forecast."""
    y, start, calendar_period, horizon, n_val, periods, kind, grid, nonnegative = task
    y = np.asarray(y, dtype=np.float64)
    folds = origin_folds(len(y), horizon, n_val)
    step_info = StepInfo(start, calendar_period)
    periods = tuple(p for p in periods if 2 * p < len(y))
    flags = ()
    try:
        spec = select_hyperparams(kind, grid, folds, y, periods, step_info)
        val_preds, val_truth = validation_forecasts(spec, folds, y, step_info)
        state = fit(spec.with_periods(usable_periods(periods, len(y))), y, step_info)
        forecast = predict(state, horizon)
    except ForecasterError as exc:
        logger.warning("%s failed (%s); using a naive forecast", kind, exc)
        spec = ForecasterSpec("seasonal_naive", {"period": 1})
        val_preds, val_truth = validation_forecasts(spec, folds, y, step_info)
        state = fit(spec, y, step_info)
        forecast = predict(state, horizon)
        flags = (f"{kind}_fallback_naive",)
    flags = flags + state.flags
    if nonnegative:
        val_preds = [np.maximum(v, 0.0) for v in val_preds]
        forecast = np.maximum(forecast, 0.0)
    return ModelOutput(kind, spec, val_preds, val_truth, forecast, state.residuals, flags)


def model_periods(detected: Sequence[int], calendar_period: int | None, limit: int) -> tuple[int, ...]:
    """Calendar period first (when there is one), then detected periods by strength."""
    lead = (calendar_period,) if calendar_period and calendar_period >= 2 else ()
    return tuple(dict.fromkeys((*lead, *detected)))[:limit]


def _bo_task(task):
    base, config = task
    return ensemble_weights(base, config)


def model_tasks(frame: SeriesFrame, config: PipelineConfig, n_val: int, seasets) -> list[tuple]:
    tasks = []
    start = int(frame.time_index[0])
    for node in frame.hierarchy.nodes:
        periods = model_periods(seasets[node].periods, frame.calendar_period, config.model_periods)
        for kind in ENSEMBLE_KINDS:
            tasks.append((
                frame.values[node], start, frame.calendar_period, config.horizon, n_val,
                periods, kind, config.grids[kind], config.nonnegative,
            ))
    return tasks


def assemble_bases(nodes: Iterable[str], outputs: Sequence[ModelOutput]) -> tuple[dict[str, NodeBase], dict[str, list[ModelOutput]]]:
    """Group flat per-(node, model) outputs back into per-node ``NodeBase`` objects."""
    nodes = list(nodes)
    k = len(ENSEMBLE_KINDS)
    bases, per_node = {}, {}
    for i, node in enumerate(nodes):
        outs = list(outputs[i * k:(i + 1) * k])
        per_node[node] = outs
        n_val = len(outs[0].val_forecasts)
        bases[node] = NodeBase(
            forecasts=np.vstack([o.forecast for o in outs]),
            val_forecasts=[np.vstack([o.val_forecasts[v] for o in outs]) for v in range(n_val)],
            val_truth=list(outs[0].val_truth),
            residuals=[o.residuals for o in outs],
        )
    return bases, per_node


@dataclass
class PipelineRun:
    result: MultiStageResult
    models: dict[str, list[ModelOutput]]


def compute_weights(bases: Mapping[str, NodeBase], bo: BOConfig, workers: int) -> tuple[dict[str, EnsembleWeights], list[str]]:
    nodes = list(bases)
    out = map_tasks(_bo_task, [(bases[n], bo) for n in nodes], workers)
    weights = {n: w for n, (w, _) in zip(nodes, out)}
    flags = [f"{n}: {f}" for n, (_, f) in zip(nodes, out) if f]
    return weights, flags


def run_pipeline(frame: SeriesFrame, config: PipelineConfig, n_val: int | None = None) -> PipelineRun:
    """Forecast ``config.horizon`` steps past the end of ``frame`` through every stage."""
    n_val = feasible_validation_folds(frame.T, config.horizon, n_val or config.n_validation_folds)
    seasets = node_seasonality(frame, config.max_peaks, config.tau)
    outputs = map_tasks(fit_node_model, model_tasks(frame, config, n_val, seasets), config.workers)
    bases, models = assemble_bases(frame.hierarchy.nodes, outputs)
    weights, flags = compute_weights(bases, config.bo, config.workers)
    result = run_multistage(frame, frame.hierarchy, bases, config.multistage(), weights, seasets)
    result.flags[:0] = flags + [f"{n}: {f}" for n, outs in models.items() for o in outs for f in o.flags]
    return PipelineRun(result, models)
