"""Base forecasters behind one fit/predict interface, plus grid hyper-parameter search.

Three kinds feed the ensemble, each standing in for a model family:

* ``lag_regression`` - ridge autoregression on lags {1, 2, seasonal periods}
  with calendar-phase dummies and a trend term (gradient-boosted-lags family).
* ``harmonic_regression`` - linear/hinge trend plus Fourier terms at the
  detected periods, ridge-regularized (Prophet family).
* ``ets_additive`` - multi-seasonal additive Holt-Winters initialized by
  iterated seasonal averaging (MSTL + ETS family).

``seasonal_naive`` is a reference model.
"""
from __future__ import annotations

import itertools
import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .metrics import ape

logger = logging.getLogger(__name__)

KINDS = ("seasonal_naive", "ets_additive", "harmonic_regression", "lag_regression")
# weight order of the ensemble: w1, w2, w3
ENSEMBLE_KINDS = ("lag_regression", "harmonic_regression", "ets_additive")

DEFAULT_PARAMS = {
    "seasonal_naive": {},
    "ets_additive": {"alpha": 0.3, "beta": 0.05, "gamma": 0.1, "phi": 0.98},
    "harmonic_regression": {"fourier_order": 3, "ridge": 1e-6, "n_changepoints": 0},
    "lag_regression": {"ridge": 0.1, "calendar": 1, "trend": 1},
}

# (low, high, integer) per hyper-parameter; bounds inclusive
_RANGES = {
    "seasonal_naive": {"period": (1, math.inf, True)},
    "ets_additive": {
        "alpha": (0.0, 1.0, False),
        "beta": (0.0, 1.0, False),
        "gamma": (0.0, 1.0, False),
        "phi": (0.0, 1.0, False),
    },
    "harmonic_regression": {
        "fourier_order": (1, 50, True),
        "ridge": (0.0, math.inf, False),
        "n_changepoints": (0, 50, True),
    },
    "lag_regression": {
        "ridge": (0.0, math.inf, False),
        "calendar": (0, 1, True),
        "trend": (0, 1, True),
    },
}


def default_grids() -> dict[str, list[dict]]:
    """Small per-kind grids (12 candidates each for the ensemble kinds)."""
    return {
        "seasonal_naive": [{}],
        "ets_additive": expand_grid(
            {"alpha": [0.1, 0.3, 0.6], "beta": [0.0, 0.1], "gamma": [0.1], "phi": [0.9, 1.0]}
        ),
        "harmonic_regression": expand_grid(
            {"fourier_order": [1, 2, 3, 4], "ridge": [1e-6, 1e-2, 1.0], "n_changepoints": [0]}
        ),
        "lag_regression": expand_grid(
            {"ridge": [1e-3, 1e-1, 10.0], "calendar": [0, 1], "trend": [0, 1]}
        ),
    }


def expand_grid(grid: Mapping[str, Sequence] | Sequence[Mapping]) -> list[dict]:
    """Cartesian product of a ``{name: values}`` mapping; lists pass through."""
    if isinstance(grid, Mapping):
        keys = list(grid)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]
    return [dict(c) for c in grid]


class ForecasterError(ValueError):
    pass


class HyperparameterSearchError(ForecasterError):
    def __init__(self, kind, failures):
        self.failures = failures
        lines = "; ".join(f"{p}: {e}" for p, e in failures)
        super().__init__(f"every {kind} candidate failed to fit: {lines}")


@dataclass(frozen=True)
class StepInfo:
    """Absolute step ordinal of the first training point, for calendar phases."""

    start: int = 0
    calendar_period: int | None = None

    def shifted(self, offset: int) -> StepInfo:
        return replace(self, start=self.start + offset)


@dataclass(frozen=True)
class ForecasterSpec:
    kind: str
    hyper_params: Mapping[str, float] = field(default_factory=dict)
    seasonal_periods: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ForecasterError(f"unknown forecaster kind {self.kind!r}")
        params = {**DEFAULT_PARAMS[self.kind], **dict(self.hyper_params)}
        ranges = _RANGES[self.kind]
        for name, value in params.items():
            if name not in ranges:
                raise ForecasterError(f"{self.kind}: unknown hyper-parameter {name!r}")
            lo, hi, integer = ranges[name]
            if not lo <= value <= hi or (integer and int(value) != value):
                raise ForecasterError(f"{self.kind}: {name}={value!r} outside [{lo}, {hi}]")
        object.__setattr__(self, "hyper_params", params)
        periods = tuple(int(p) for p in self.seasonal_periods)
        if any(p < 2 for p in periods):
            raise ForecasterError(f"seasonal periods must be >= 2, got {periods}")
        object.__setattr__(self, "seasonal_periods", tuple(dict.fromkeys(periods)))

    def with_periods(self, periods: Iterable[int]) -> ForecasterSpec:
        return ForecasterSpec(self.kind, self.hyper_params, tuple(periods))


@dataclass(frozen=True, eq=False)
class FitState:
    kind: str
    spec: ForecasterSpec
    params: Mapping[str, object]
    residuals: np.ndarray
    warmup: int
    n_obs: int
    step_info: StepInfo = StepInfo()
    flags: tuple[str, ...] = ()


def usable_periods(periods: Iterable[int], n: int) -> tuple[int, ...]:
    """Periods that fit at least two full cycles into ``n`` observations."""
    return tuple(p for p in periods if 2 * p <= n)


def fit(spec: ForecasterSpec, train, step_info: StepInfo | None = None) -> FitState:
    y = np.asarray(train, dtype=np.float64)
    step_info = step_info or StepInfo()
    if y.ndim != 1 or len(y) < 2:
        raise ForecasterError("training series must be 1-D with at least 2 points")
    if not np.all(np.isfinite(y)):
        raise ForecasterError("training series contains non-finite values")
    periods = spec.seasonal_periods
    if periods and 2 * max(periods) > len(y):
        raise ForecasterError(
            f"series too short: {len(y)} points for seasonal period {max(periods)}"
        )
    if spec.kind == "seasonal_naive":
        return _fit_seasonal_naive(spec, y, step_info)
    if np.ptp(y) == 0.0:
        return _fit_level_only(spec, y, step_info)
    return _FITTERS[spec.kind](spec, y, step_info)


def predict(state: FitState, h_steps: int) -> np.ndarray:
    if h_steps <= 0:
        raise ForecasterError(f"h_steps must be positive, got {h_steps}")
    out = _PREDICTORS[state.params.get("_mode", state.kind)](state, h_steps)
    if not np.all(np.isfinite(out)):
        raise ForecasterError(f"{state.kind} produced non-finite forecasts")
    return out


def _warmup(periods: Sequence[int]) -> int:
    return max(periods) if periods else 1


# -- seasonal naive ---------------------------------------------------------

def _fit_seasonal_naive(spec, y, step_info):
    m = int(spec.hyper_params.get("period") or (spec.seasonal_periods[0] if spec.seasonal_periods else 1))
    if m >= len(y):
        raise ForecasterError(f"series too short for seasonal naive period {m}")
    return FitState(
        kind=spec.kind, spec=spec,
        params={"period": m, "last_cycle": y[-m:].copy()},
        residuals=y[m:] - y[:-m], warmup=m, n_obs=len(y), step_info=step_info,
    )


def _predict_seasonal_naive(state, h):
    cycle = state.params["last_cycle"]
    return np.resize(cycle, h).astype(np.float64)


# -- degenerate fallback ------------------------------------------------------

def _fit_level_only(spec, y, step_info):
    warm = min(_warmup(spec.seasonal_periods), len(y) - 1)
    logger.debug("%s: constant series, using level-only fit", spec.kind)
    return FitState(
        kind=spec.kind, spec=spec,
        params={"_mode": "level_only", "level": float(y[0]), "trend": 0.0},
        residuals=np.zeros(len(y) - warm), warmup=warm, n_obs=len(y),
        step_info=step_info, flags=("degenerate_level_only",),
    )


def _predict_level_only(state, h):
    return np.full(h, state.params["level"], dtype=np.float64)


# -- additive multi-seasonal Holt-Winters ---------------------------------------

def _moving_average(z, window):
    """Centred moving average; a 2 x window average for even windows. nan at the edges."""
    n = len(z)
    out = np.full(n, np.nan)
    if window % 2:
        half = window // 2
        if n >= window:
            c = np.cumsum(np.insert(z, 0, 0.0))
            out[half:n - half] = (c[window:] - c[:-window]) / window
        return out
    half = window // 2
    if n > window:
        c = np.cumsum(np.insert(z, 0, 0.0))
        ma = (c[window:] - c[:-window]) / window  # ma[i] averages z[i:i+window]
        out[half:n - half] = 0.5 * (ma[:-1] + ma[1:])
    return out


def seasonal_profiles(y, periods: Sequence[int], n_iter: int = 2) -> dict[int, np.ndarray]:
    """Zero-mean phase profiles per period by iterated seasonal averaging.

    Each pass removes the other periods' current profiles, detrends with a
    centred moving average of the period's length and averages by phase.
    """
    y = np.asarray(y, dtype=np.float64)
    t = np.arange(len(y))
    profiles = {p: np.zeros(p) for p in sorted(periods)}
    for _ in range(n_iter):
        for p in profiles:
            z = y.copy()
            for q, prof in profiles.items():
                if q != p:
                    z -= prof[t % q]
            detr = z - _moving_average(z, p)
            phase = t % p
            ok = np.isfinite(detr)
            sums = np.bincount(phase[ok], weights=detr[ok], minlength=p)
            counts = np.bincount(phase[ok], minlength=p)
            prof = np.divide(sums, counts, out=np.zeros(p), where=counts > 0)
            profiles[p] = prof - prof.mean()
    return profiles


def _fit_ets(spec, y, step_info):
    hp = spec.hyper_params
    periods = tuple(sorted(spec.seasonal_periods))
    n = len(y)
    t = np.arange(n)
    profiles = seasonal_profiles(y, periods)
    deseason = y.copy()
    for p, prof in profiles.items():
        deseason -= prof[t % p]
    # initial level/slope from the whole deseasonalized series: with small beta
    # the slope barely moves, so a short-window estimate would be extrapolated
    slope, intercept = np.polyfit(t.astype(np.float64), deseason, 1)
    width = max(periods, default=1)
    seasonal0 = np.zeros((len(periods), width))
    for j, p in enumerate(periods):
        seasonal0[j, :p] = profiles[p]
    fitted, level, trend, seasonal = kernels.hw_filter(
        y, hp["alpha"], hp["beta"], hp["gamma"], hp["phi"],
        intercept - slope, slope, seasonal0, np.array(periods, dtype=np.int64),
    )
    warm = min(_warmup(periods), n - 1)
    return FitState(
        kind=spec.kind, spec=spec,
        params={
            "level": float(level), "trend": float(trend), "phi": float(hp["phi"]),
            "seasonal": seasonal, "periods": periods,
        },
        residuals=(y - fitted)[warm:], warmup=warm, n_obs=n, step_info=step_info,
    )


def _predict_ets(state, h):
    p = state.params
    damp = np.cumsum(p["phi"] ** np.arange(1, h + 1))
    out = p["level"] + damp * p["trend"]
    future = np.arange(state.n_obs, state.n_obs + h)
    for j, period in enumerate(p["periods"]):
        out = out + p["seasonal"][j, future % period]
    return out


# -- ridge helpers -------------------------------------------------------------

def _ridge(X, y, lam, penalize):
    """Ridge on standardized columns; returns (intercept, raw-scale coefficients).

    Constant columns get a zero coefficient. Solved as an augmented least
    squares problem so rank-deficient designs stay well-defined.
    """
    n, k = X.shape
    coef = np.zeros(k)
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    active = sd > 1e-12 * np.maximum(1.0, np.abs(mean))
    ybar = float(y.mean())
    if active.any():
        Z = (X[:, active] - mean[active]) / sd[active]
        pen = np.sqrt(lam * n) * np.asarray(penalize, dtype=np.float64)[active]
        A = np.vstack([Z, np.diag(pen)])
        b = np.concatenate([y - ybar, np.zeros(int(active.sum()))])
        beta, *_ = np.linalg.lstsq(A, b, rcond=None)
        coef[active] = beta / sd[active]
    intercept = ybar - float(mean @ coef)
    return intercept, coef


# -- harmonic regression ------------------------------------------------------

def _harmonic_design(t, scale, periods, order, changepoints):
    cols = [t / scale]
    cols.extend(np.maximum(0.0, t / scale - c) for c in changepoints)
    for p in periods:
        for k in range(1, min(order, p // 2) + 1):
            w = 2.0 * np.pi * k * t / p
            cols.append(np.sin(w))
            cols.append(np.cos(w))
    return np.column_stack(cols)


def _fit_harmonic(spec, y, step_info):
    hp = spec.hyper_params
    periods = spec.seasonal_periods
    n = len(y)
    t = np.arange(n, dtype=np.float64)
    n_cp = int(hp["n_changepoints"])
    changepoints = tuple(np.linspace(0.0, 0.8, n_cp + 2)[1:-1]) if n_cp else ()
    X = _harmonic_design(t, float(n), periods, int(hp["fourier_order"]), changepoints)
    penalize = np.ones(X.shape[1])
    penalize[0] = 0.0  # linear trend
    intercept, coef = _ridge(X, y, hp["ridge"], penalize)
    fitted = intercept + X @ coef
    warm = min(_warmup(periods), n - 1)
    return FitState(
        kind=spec.kind, spec=spec,
        params={
            "intercept": intercept, "coef": coef, "scale": float(n),
            "changepoints": changepoints, "order": int(hp["fourier_order"]),
            "periods": periods,
        },
        residuals=(y - fitted)[warm:], warmup=warm, n_obs=n, step_info=step_info,
    )


def _predict_harmonic(state, h):
    p = state.params
    t = np.arange(state.n_obs, state.n_obs + h, dtype=np.float64)
    X = _harmonic_design(t, p["scale"], p["periods"], p["order"], p["changepoints"])
    return p["intercept"] + X @ p["coef"]


# -- lag regression ------------------------------------------------------------

def _exog_design(t, n_train, step_info, calendar, trend):
    cols = []
    cp = step_info.calendar_period
    if calendar and cp and cp > 1:
        phase = (step_info.start + t) % cp
        cols.extend((phase == k).astype(np.float64) for k in range(1, cp))
    if trend:
        cols.append(t / n_train)
    if not cols:
        return np.zeros((len(t), 0))
    return np.column_stack(cols)


def _fit_lag(spec, y, step_info):
    hp = spec.hyper_params
    n = len(y)
    lags = tuple(sorted({1, 2, *spec.seasonal_periods}))
    lags = tuple(lag for lag in lags if lag < n)
    max_lag = max(lags)
    if n < max_lag + 2:
        raise ForecasterError(f"series too short: {n} points for max lag {max_lag}")
    t = np.arange(max_lag, n)
    lag_cols = np.column_stack([y[t - lag] for lag in lags])
    exog = _exog_design(t.astype(np.float64), float(n), step_info, hp["calendar"], hp["trend"])
    X = np.hstack([lag_cols, exog])
    intercept, coef = _ridge(X, y[max_lag:], hp["ridge"], np.ones(X.shape[1]))
    fitted = intercept + X @ coef
    return FitState(
        kind=spec.kind, spec=spec,
        params={
            "intercept": intercept, "lag_coef": coef[:len(lags)], "exog_coef": coef[len(lags):],
            "lags": lags, "tail": y[-max_lag:].copy(),
            "calendar": int(hp["calendar"]), "trend": int(hp["trend"]),
        },
        residuals=y[max_lag:] - fitted, warmup=max_lag, n_obs=n, step_info=step_info,
    )


def _predict_lag(state, h):
    p = state.params
    t = np.arange(state.n_obs, state.n_obs + h, dtype=np.float64)
    exog = _exog_design(t, float(state.n_obs), state.step_info, p["calendar"], p["trend"])
    base = p["intercept"] + exog @ p["exog_coef"] if exog.shape[1] else np.full(h, p["intercept"])
    return kernels.ar_recursive(p["tail"], base, p["lag_coef"], np.array(p["lags"], dtype=np.int64))


_FITTERS = {
    "ets_additive": _fit_ets,
    "harmonic_regression": _fit_harmonic,
    "lag_regression": _fit_lag,
}
_PREDICTORS = {
    "seasonal_naive": _predict_seasonal_naive,
    "level_only": _predict_level_only,
    "ets_additive": _predict_ets,
    "harmonic_regression": _predict_harmonic,
    "lag_regression": _predict_lag,
}


# -- hyper-parameter selection ------------------------------------------------

def fold_score(forecasts: Sequence[np.ndarray], actuals: Sequence[np.ndarray]) -> float:
    """Mean APE over folds with a defined APE.

    When no fold has a nonzero actual sum, falls back to the mean absolute
    error of horizon sums so candidates still rank.
    """
    apes = [ape(f, a) for f, a in zip(forecasts, actuals)]
    defined = [v for v in apes if not math.isnan(v)]
    if defined:
        return float(np.mean(defined))
    return float(np.mean([abs(float(np.sum(f)) - float(np.sum(a))) for f, a in zip(forecasts, actuals)]))


def validation_forecasts(spec, folds, series, step_info=None):
    """Fit on each fold's train block and forecast its validation block."""
    y = np.asarray(series, dtype=np.float64)
    step_info = step_info or StepInfo()
    preds, actuals = [], []
    for fold in folds:
        lo, hi = fold.train
        v_lo, v_hi = fold.validation
        train = y[lo:hi]
        fold_spec = spec.with_periods(usable_periods(spec.seasonal_periods, len(train)))
        state = fit(fold_spec, train, step_info.shifted(lo))
        preds.append(predict(state, v_hi - v_lo))
        actuals.append(y[v_lo:v_hi])
    return preds, actuals


def select_hyperparams(
    kind: str,
    grid,
    folds,
    series,
    seasonal_periods: Sequence[int] = (),
    step_info: StepInfo | None = None,
) -> ForecasterSpec:
    """Grid candidate with the lowest mean validation APE over ``folds``.

    Ties go to the earliest candidate in grid order.
    """
    candidates = expand_grid(grid)
    if not candidates:
        raise ForecasterError("empty hyper-parameter grid")
    if not folds:
        raise ForecasterError("need at least one fold")
    best_spec, best_score = None, math.inf
    failures = []
    for params in candidates:
        try:
            spec = ForecasterSpec(kind, params, tuple(seasonal_periods))
            preds, actuals = validation_forecasts(spec, folds, series, step_info)
            score = fold_score(preds, actuals)
        except (ForecasterError, np.linalg.LinAlgError) as exc:
            failures.append((params, str(exc)))
            continue
        if score < best_score:
            best_spec, best_score = spec, score
    if best_spec is None:
        raise HyperparameterSearchError(kind, failures)
    return best_spec
