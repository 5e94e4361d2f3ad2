"""Multi-stage reconciliation: Top-Down, HHAFA, MinTrace-WLS and SSW-FS.

Stage order for a K-level hierarchy:

1. BO   - per-node weighted ensemble of the base forecasts (incoherent).
2. TD   - root forecast split by average historical shares of the root.
3. HHAFA - per node, blend TD and BO by the Jaccard similarity between the
   node's and the root's seasonal-period sets (levels 2..K).
4. MINT - WLS projection of the HHAFA forecasts onto coherence over levels
   1..K-1 (level K-1 acts as the bottom).
5. SSWFS - per level-(K-1) parent: blend local TD and HHAFA children, then
   rescale them so they sum to the reconciled parent.
6. FINAL - MINT for levels 1..K-1 plus SSWFS for level K.
"""
from __future__ import annotations

import logging
import time
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .bo import BOConfig, EnsembleWeights, UndefinedObjectiveError, combine, optimize_weights
from .hierarchy import (
    CoherenceReport,
    Hierarchy,
    aggregate_bottom_up,
    check_coherence,
    sum_vectors,
    summing_matrix,
)
from .ingestion import SeriesFrame
from .spectral import SeasonalitySet, jaccard, seasonality

logger = logging.getLogger(__name__)

STAGES = ("BO", "TD", "HHAFA", "MINT", "SSWFS", "FINAL")


class ReconciliationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ForecastSet:
    stage: str
    values: Mapping[str, np.ndarray]
    hierarchy: Hierarchy
    flags: tuple = ()

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ReconciliationError(f"unknown stage label {self.stage!r}")

    def __getitem__(self, node: str) -> np.ndarray:
        return self.values[node]

    def __contains__(self, node: str) -> bool:
        return node in self.values

    @property
    def nodes(self) -> list[str]:
        return [n for n in self.hierarchy.nodes if n in self.values]

    @property
    def horizon(self) -> int:
        return len(next(iter(self.values.values())))


@dataclass(frozen=True)
class ProportionTable:
    root: str
    p: Mapping[str, float]
    window: int
    skipped_steps: int = 0


# -- (a) top-down ---------------------------------------------------------------

def topdown_proportions(frame: SeriesFrame, L: int, root: str | None = None) -> ProportionTable:
    """Mean of ``y_i(t) / y_root(t)`` over the last ``L`` steps, for every node below ``root``.

    Steps where the root is zero are skipped.
    """
    h = frame.hierarchy
    root = h.root if root is None else root
    if not 1 <= L <= frame.T:
        raise ReconciliationError(f"window L={L} must lie in [1, T={frame.T}]")
    denom = np.asarray(frame.values[root][-L:], dtype=np.float64)
    valid = denom != 0.0
    if not valid.any():
        raise ReconciliationError(f"root {root!r} is zero over the whole {L}-step window")
    p = {}
    for node in h.descendants(root):
        share = np.asarray(frame.values[node][-L:], dtype=np.float64)[valid] / denom[valid]
        p[node] = float(share.mean())
    return ProportionTable(root, p, L, int((~valid).sum()))


def topdown_forecast(root_forecast, p: ProportionTable, h: Hierarchy) -> ForecastSet:
    """Every node below the table's root gets ``p_i * root_forecast``; the root passes through."""
    root_forecast = np.asarray(root_forecast, dtype=np.float64)
    values = {p.root: root_forecast.copy()}
    for node in h.descendants(p.root):
        if node not in p.p:
            raise ReconciliationError(f"missing proportion for node {node!r}")
        values[node] = p.p[node] * root_forecast
    return ForecastSet("TD", values, h)


# -- (b) HHAFA ------------------------------------------------------------------

def blend(j: float, td, bo) -> np.ndarray:
    """``j * td + (1 - j) * bo``, held inside the elementwise [min, max] of its inputs."""
    td = np.asarray(td, dtype=np.float64)
    bo = np.asarray(bo, dtype=np.float64)
    if j == 1.0:
        return td.copy()
    if j == 0.0:
        return bo.copy()
    out = j * td + (1.0 - j) * bo
    # rounding can step one ulp outside the interval
    return np.clip(out, np.minimum(td, bo), np.maximum(td, bo))


def hhafa_adjust(
    bo: ForecastSet,
    td: ForecastSet,
    seasets: Mapping[str, SeasonalitySet],
    reference: str | None = None,
    similarity: Mapping[str, float] | None = None,
) -> ForecastSet:
    """Blend TD and BO below ``reference`` by seasonal-set Jaccard similarity.

    ``similarity`` overrides the computed J per node (used to force endpoints).
    The reference node and anything not below it keep the BO forecast.
    """
    h = bo.hierarchy
    reference = h.root if reference is None else reference
    missing = [n for n in set(bo.values) ^ set(td.values)]
    if missing:
        raise ReconciliationError(f"nodes missing from one of the inputs: {sorted(missing)}")
    below = set(h.descendants(reference))
    values = {}
    for node in bo.nodes:
        if node in below:
            if similarity is not None and node in similarity:
                j = similarity[node]
            else:
                j = jaccard(seasets[node], seasets[reference])
            values[node] = blend(j, td[node], bo[node])
        else:
            values[node] = np.array(bo[node], dtype=np.float64, copy=True)
    return ForecastSet("HHAFA", values, h)


# -- (c) MinTrace-WLS -------------------------------------------------------------

def wls_weights(
    residuals: Mapping[str, np.ndarray], nodes: Sequence[str], scales: Mapping[str, float] | None = None
) -> np.ndarray:
    """Diagonal of W: mean squared one-step residual per node, floored at ``1e-12 * scale^2``."""
    w = np.empty(len(nodes))
    for i, node in enumerate(nodes):
        r = np.asarray(residuals.get(node, ()), dtype=np.float64)
        if r.size == 0:
            raise ReconciliationError(f"no residuals for node {node!r}")
        scale = 1.0 if scales is None else max(1.0, float(scales.get(node, 1.0)))
        w[i] = max(float(np.mean(r * r)), 1e-12 * scale * scale)
    return w


def mintrace_wls(
    h_upper: Hierarchy,
    base: ForecastSet | Mapping[str, np.ndarray],
    residuals: Mapping[str, np.ndarray] | None = None,
    weights: np.ndarray | None = None,
) -> ForecastSet:
    """Reconcile ``base`` over ``h_upper`` with ``P = (S' W^-1 S)^-1 S' W^-1``.

    Returns ``S P y_hat``; upper nodes are re-aggregated from the reconciled
    bottom so the output is coherent to the last bit. ``weights`` (the
    diagonal of W) overrides the residual-based estimate.
    """
    values = base.values if isinstance(base, ForecastSet) else base
    nodes = h_upper.nodes
    missing = [n for n in nodes if n not in values]
    if missing:
        raise ReconciliationError(f"missing base forecasts for {missing}")
    Y = np.vstack([np.asarray(values[n], dtype=np.float64) for n in nodes])
    if weights is None:
        if residuals is None:
            raise ReconciliationError("need residuals or explicit weights")
        scales = {n: float(np.max(np.abs(values[n]))) if len(values[n]) else 1.0 for n in nodes}
        weights = wls_weights(residuals, nodes, scales)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(nodes),) or np.any(weights <= 0):
        raise ReconciliationError("W diagonal must be positive with one entry per node")
    S = summing_matrix(h_upper).astype(np.float64)
    winv = 1.0 / weights
    A = S.T @ (winv[:, None] * S)
    B = S.T @ (winv[:, None] * Y)
    jitter = 0.0
    eye = np.eye(A.shape[0])
    while True:
        try:
            bottom = np.linalg.solve(A + jitter * np.trace(A) / len(A) * eye, B)
            break
        except np.linalg.LinAlgError:
            jitter = 1e-10 if jitter == 0.0 else jitter * 100
            if jitter > 1e-4:
                raise ReconciliationError("S'W^-1 S is singular even with jitter") from None
    leaf_values = {leaf: bottom[j] for j, leaf in enumerate(h_upper.leaves)}
    return ForecastSet("MINT", aggregate_bottom_up(h_upper, leaf_values), h_upper)


# -- (d) SSW-FS -------------------------------------------------------------------

def subtree_proportions(frame: SeriesFrame, parent: str, L: int) -> tuple[dict[str, float], bool]:
    """Children's shares of ``parent`` over the window; equal split if the parent is all zero."""
    try:
        table = topdown_proportions(frame, L, root=parent)
        return {c: table.p[c] for c in frame.hierarchy.children[parent]}, False
    except ReconciliationError:
        kids = frame.hierarchy.children[parent]
        return {c: 1.0 / len(kids) for c in kids}, True


def ssw_fs(
    h: Hierarchy,
    parent_final: Mapping[str, np.ndarray],
    bo_bottom: Mapping[str, np.ndarray],
    td_bottom: Mapping[str, np.ndarray],
    seasets: Mapping[str, SeasonalitySet],
) -> ForecastSet:
    """Per level-(K-1) subtree: blend children, then rescale them to the parent.

    Child ``j`` of parent ``i`` becomes ``parent_i * yhat_j / sum_j yhat_j`` with
    ``yhat_j = J(s_i, s_j) td_j + (1 - J) bo_j``. Steps whose blended sum
    vanishes fall back to an equal split (recorded in ``flags``).
    """
    values: dict[str, np.ndarray] = {}
    flags = []
    for parent in h.nodes_at(h.K - 1):
        if parent not in parent_final:
            raise ReconciliationError(f"missing reconciled forecast for parent {parent!r}")
        target = np.asarray(parent_final[parent], dtype=np.float64)
        kids = h.children[parent]
        if len(kids) == 1:
            values[kids[0]] = target.copy()
            continue
        blended = [
            blend(jaccard(seasets[parent], seasets[c]), td_bottom[c], bo_bottom[c]) for c in kids
        ]
        agg = sum_vectors(blended)
        mass = sum_vectors([np.abs(b) for b in blended])
        ok = np.abs(agg) > 1e-12 * mass
        for step in np.flatnonzero(~ok):
            flags.append((parent, int(step)))
        safe_agg = np.where(ok, agg, 1.0)
        for c, b in zip(kids, blended):
            values[c] = np.where(ok, target * (b / safe_agg), target / len(kids))
    return ForecastSet("SSWFS", values, h, tuple(flags))


def clip_and_rescale(h: Hierarchy, values: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Top-down non-negativity repair that keeps every subtree summing to its parent."""
    out = {h.root: np.maximum(np.asarray(values[h.root], dtype=np.float64), 0.0)}
    for node in h.nodes:
        kids = h.children.get(node)
        if not kids:
            continue
        clipped = [np.maximum(np.asarray(values[c], dtype=np.float64), 0.0) for c in kids]
        total = sum_vectors(clipped)
        ok = total > 0
        safe = np.where(ok, total, 1.0)
        for c, v in zip(kids, clipped):
            out[c] = np.where(ok, out[node] * (v / safe), out[node] / len(kids))
    return {n: out[n] for n in h.nodes}


# -- orchestration ----------------------------------------------------------------

@dataclass
class NodeBase:
    """Base-model outputs for one node; row order follows ``ENSEMBLE_KINDS``."""

    forecasts: np.ndarray                 # (3, h)
    val_forecasts: list[np.ndarray]       # per validation fold, (3, h_val)
    val_truth: list[np.ndarray]
    residuals: list[np.ndarray]           # per model, possibly different lengths


@dataclass
class MultiStageConfig:
    td_window: int | None = None
    max_peaks: int = 5
    tau: int | None = None
    bo: BOConfig = field(default_factory=BOConfig)
    nonnegative: bool = False
    tolerance: float = 1e-8


@dataclass
class MultiStageResult:
    stages: dict[str, ForecastSet]
    weights: dict[str, EnsembleWeights]
    seasonality: dict[str, SeasonalitySet]
    coherence: dict[str, CoherenceReport]
    runtimes: dict[str, float]
    flags: list[str]


def ensemble_weights(base: NodeBase, config: BOConfig) -> tuple[EnsembleWeights, str | None]:
    """BO weights for one node; falls back to an absolute-sum objective when APE is undefined."""
    try:
        return optimize_weights(base.val_forecasts, base.val_truth, config), None
    except UndefinedObjectiveError:
        w = optimize_weights(base.val_forecasts, base.val_truth, config, objective="abs_sum_error")
        return w, "bo_abs_sum_objective"


def ensemble_residuals(base: NodeBase, w: EnsembleWeights) -> np.ndarray:
    """One-step in-sample errors of the weighted ensemble, aligned on the common tail."""
    m = min(len(r) for r in base.residuals)
    return combine(np.vstack([np.asarray(r)[len(r) - m:] for r in base.residuals]), w)


def node_seasonality(frame: SeriesFrame, max_peaks: int = 5, tau: int | None = None) -> dict[str, SeasonalitySet]:
    out = {}
    for node in frame.hierarchy.nodes:
        y = frame.values[node]
        out[node] = seasonality(y, max_peaks, tau) if len(y) >= 4 else SeasonalitySet()
    return out


def run_multistage(
    frame: SeriesFrame,
    hierarchy: Hierarchy,
    base: Mapping[str, NodeBase],
    config: MultiStageConfig | None = None,
    weights: Mapping[str, EnsembleWeights] | None = None,
    seasets: Mapping[str, SeasonalitySet] | None = None,
) -> MultiStageResult:
    """Run every stage; the FINAL set is coherent over the whole hierarchy.

    ``frame`` is the history the base models were trained on. Precomputed
    ``weights`` (e.g. from a worker pool) skip the per-node BO runs.
    """
    config = config or MultiStageConfig()
    h = hierarchy
    missing = [n for n in h.nodes if n not in base]
    if missing:
        raise ReconciliationError(f"missing base forecasts for nodes {missing}")
    horizon = base[h.root].forecasts.shape[1]
    L = min(config.td_window or horizon, frame.T)
    runtimes: dict[str, float] = {}
    flags: list[str] = []

    t0 = time.perf_counter()
    weights = dict(weights) if weights is not None else {}
    bo_values, residuals = {}, {}
    for node in h.nodes:
        if node not in weights:
            w, flag = ensemble_weights(base[node], config.bo)
            weights[node] = w
            if flag:
                flags.append(f"{node}: {flag}")
        bo_values[node] = combine(base[node].forecasts, weights[node])
        residuals[node] = ensemble_residuals(base[node], weights[node])
    stages = {"BO": ForecastSet("BO", bo_values, h)}
    runtimes["BO"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    table = topdown_proportions(frame, L)
    stages["TD"] = topdown_forecast(bo_values[h.root], table, h)
    runtimes["TD"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if seasets is None:
        seasets = node_seasonality(frame, config.max_peaks, config.tau)
    stages["HHAFA"] = hhafa_adjust(stages["BO"], stages["TD"], seasets)
    runtimes["HHAFA"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    h_upper = h.truncate(h.K - 1)
    stages["MINT"] = mintrace_wls(h_upper, stages["HHAFA"].values, residuals)
    runtimes["MINT"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    parents = h.nodes_at(h.K - 1)
    td_local = {}
    for parent in parents:
        shares, fallback = subtree_proportions(frame, parent, L)
        if fallback:
            flags.append(f"{parent}: zero history in TD window, equal split")
        for child, share in shares.items():
            td_local[child] = share * stages["MINT"][parent]
    bottom_in = {n: stages["HHAFA"][n] for n in h.leaves}
    stages["SSWFS"] = ssw_fs(h, stages["MINT"].values, bottom_in, td_local, seasets)
    flags.extend(f"{p}: SSW-FS equal split at step {s}" for p, s in stages["SSWFS"].flags)
    runtimes["SSWFS"] = time.perf_counter() - t0

    final = {**{n: stages["MINT"][n] for n in h_upper.nodes}, **stages["SSWFS"].values}
    if config.nonnegative:
        final = clip_and_rescale(h, final)
    stages["FINAL"] = ForecastSet("FINAL", {n: final[n] for n in h.nodes}, h)

    coherence = {
        "BO": check_coherence(h, stages["BO"].values, config.tolerance),
        "TD": check_coherence(h, stages["TD"].values, config.tolerance),
        "HHAFA": check_coherence(h, stages["HHAFA"].values, config.tolerance),
        "MINT": check_coherence(h_upper, stages["MINT"].values, config.tolerance),
        "FINAL": check_coherence(h, stages["FINAL"].values, config.tolerance),
    }
    coherence["SSWFS"] = coherence["FINAL"]
    for name, rep in coherence.items():
        if name in ("MINT", "FINAL") and not rep.coherent:
            logger.warning("%s stage is not coherent: max relative violation %.3g", name, rep.max_rel_violation)
    return MultiStageResult(stages, weights, dict(seasets), coherence, runtimes, flags)
