import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hiforead.forecasters import (
    ENSEMBLE_KINDS,
    ForecasterError,
    ForecasterSpec,
    HyperparameterSearchError,
    StepInfo,
    default_grids,
    expand_grid,
    fit,
    fold_score,
    predict,
    select_hyperparams,
    usable_periods,
    validation_forecasts,
)
from hiforead.ingestion import origin_folds
from hiforead.metrics import ape


def _series(n=84, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    return 50 + 0.2 * t + 8 * np.sin(2 * np.pi * t / 7) + rng.normal(0, 1.0, n)


def test_spec_validation():
    spec = ForecasterSpec("ets_additive", {"alpha": 0.5})
    assert spec.hyper_params["alpha"] == 0.5
    assert spec.hyper_params["phi"] == 0.98  # default merged in
    with pytest.raises(ForecasterError, match="unknown forecaster"):
        ForecasterSpec("prophet")
    with pytest.raises(ForecasterError, match="outside"):
        ForecasterSpec("ets_additive", {"alpha": 1.5})
    with pytest.raises(ForecasterError, match="unknown hyper-parameter"):
        ForecasterSpec("lag_regression", {"depth": 3})
    with pytest.raises(ForecasterError, match="outside"):
        ForecasterSpec("harmonic_regression", {"fourier_order": 2.5})
    with pytest.raises(ForecasterError, match=">= 2"):
        ForecasterSpec("ets_additive", {}, (1,))
    assert ForecasterSpec("ets_additive", {}, (7, 7, 30)).seasonal_periods == (7, 30)


def test_seasonal_naive_repeating_pattern():
    y = np.tile(np.arange(1.0, 8.0), 10)
    state = fit(ForecasterSpec("seasonal_naive", {}, (7,)), y)
    assert state.warmup == 7
    assert np.all(state.residuals == 0.0)
    np.testing.assert_array_equal(predict(state, 10), np.resize(y[-7:], 10))


def test_ets_constant_series():
    state = fit(ForecasterSpec("ets_additive", {}, (4,)), np.full(20, 5.0))
    assert state.params["level"] == 5.0 and state.params["trend"] == 0.0
    assert "degenerate_level_only" in state.flags
    np.testing.assert_array_equal(predict(state, 4), np.full(4, 5.0))


def test_harmonic_recovers_pure_sine():
    y = np.sin(2 * np.pi * np.arange(70) / 7)
    state = fit(ForecasterSpec("harmonic_regression", {}, (7,)), y)
    assert math.sqrt(np.mean(state.residuals**2)) < 1e-6


def test_lag_regression_ar1():
    rng = np.random.default_rng(4)
    y = np.zeros(2000)
    for t in range(1, len(y)):
        y[t] = 0.8 * y[t - 1] + rng.normal()
    spec = ForecasterSpec("lag_regression", {"ridge": 0.0, "calendar": 0, "trend": 0})
    state = fit(spec, y)
    # closed-form AR(1) step; coefficient error ~ 1/sqrt(n) and a small lag-2 term
    assert predict(state, 1)[0] == pytest.approx(0.8 * y[-1], abs=0.1 + 0.05 * abs(y[-1]))
    assert state.params["lag_coef"][0] == pytest.approx(0.8, abs=0.06)


def test_ets_tracks_seasonal_series():
    y = _series()
    state = fit(ForecasterSpec("ets_additive", {}, (7,)), y[:70])
    assert ape(predict(state, 14), y[70:]) < 0.05


@pytest.mark.parametrize("kind", ENSEMBLE_KINDS)
def test_kinds_forecast_seasonal_series(kind):
    y = _series()
    state = fit(ForecasterSpec(kind, {}, (7,)), y[:70], StepInfo(0, 7))
    out = predict(state, 14)
    assert out.shape == (14,) and np.all(np.isfinite(out))
    assert ape(out, y[70:]) < 0.1


def test_short_series_rejected():
    with pytest.raises(ForecasterError, match="too short"):
        fit(ForecasterSpec("ets_additive", {}, (30,)), np.arange(40.0))
    with pytest.raises(ForecasterError):
        fit(ForecasterSpec("ets_additive"), np.array([1.0]))
    with pytest.raises(ForecasterError, match="non-finite"):
        fit(ForecasterSpec("ets_additive"), np.array([1.0, np.inf, 2.0]))


def test_predict_rejects_bad_horizon():
    state = fit(ForecasterSpec("lag_regression"), _series())
    with pytest.raises(ForecasterError):
        predict(state, 0)


def _one_step_ets(y, hp, level0, trend0, seasonal0, periods):
    """Independent Holt-Winters recursion (error-correction form) returning one-step fits."""
    level, trend = level0, trend0
    seas = [list(s[:p]) for s, p in zip(seasonal0, periods)]
    fitted = []
    for t, obs in enumerate(y):
        s_sum = sum(seas[j][t % p] for j, p in enumerate(periods))
        yhat = level + hp["phi"] * trend + s_sum
        fitted.append(yhat)
        e = obs - yhat
        new_level = level + hp["phi"] * trend + hp["alpha"] * e
        trend = hp["phi"] * trend + hp["alpha"] * hp["beta"] * e
        level = new_level
        for j, p in enumerate(periods):
            seas[j][t % p] += hp["gamma"] * e
    return np.array(fitted)


@pytest.mark.parametrize("kind", ENSEMBLE_KINDS)
def test_residual_length_and_alignment(kind):
    y = _series(60)
    state = fit(ForecasterSpec(kind, {}, (7,)), y, StepInfo(0, 7))
    assert len(state.residuals) == len(y) - state.warmup
    assert state.warmup == 7
    assert np.all(np.isfinite(state.residuals))


def test_lag_residuals_are_one_step_errors():
    y = _series(60)
    spec = ForecasterSpec("lag_regression", {"calendar": 0, "trend": 0}, (7,))
    state = fit(spec, y)
    lags = state.params["lags"]
    for t in (7, 20, 59):
        yhat = state.params["intercept"] + sum(c * y[t - lag] for c, lag in zip(state.params["lag_coef"], lags))
        assert state.residuals[t - state.warmup] == pytest.approx(y[t] - yhat, abs=1e-9)


def test_ets_residuals_match_independent_recursion(monkeypatch):
    from hiforead import kernels

    y = _series(63)
    captured = {}
    real = kernels.hw_filter

    def spy(*args):
        captured["args"] = args
        return real(*args)

    monkeypatch.setattr(kernels, "hw_filter", spy)
    hp = {"alpha": 0.4, "beta": 0.1, "gamma": 0.2, "phi": 0.95}
    state = fit(ForecasterSpec("ets_additive", hp, (7,)), y)
    _, a, b, g, phi, l0, b0, s0, periods = captured["args"]
    fitted = _one_step_ets(y, hp, l0, b0, s0, list(periods))
    np.testing.assert_allclose(state.residuals, (y - fitted)[state.warmup:], rtol=1e-10, atol=1e-9)


@given(st.sampled_from(ENSEMBLE_KINDS + ("seasonal_naive",)), st.integers(1, 10), st.integers(1, 10),
       st.integers(0, 1000))
@settings(max_examples=60, deadline=None)
def test_horizon_consistency(kind, a, b, seed):
    y = _series(56, seed)
    state = fit(ForecasterSpec(kind, {}, (7,)), y, StepInfo(seed, 7))
    long = predict(state, a + b)
    np.testing.assert_array_equal(long[:a], predict(state, a))


@pytest.mark.parametrize("kind", ENSEMBLE_KINDS)
def test_deterministic(kind):
    y = _series()
    s1 = fit(ForecasterSpec(kind, {}, (7,)), y, StepInfo(3, 7))
    s2 = fit(ForecasterSpec(kind, {}, (7,)), y.copy(), StepInfo(3, 7))
    assert predict(s1, 9).tobytes() == predict(s2, 9).tobytes()
    assert s1.residuals.tobytes() == s2.residuals.tobytes()


def test_calendar_phase_follows_step_start():
    # weekday effect only: the lag model must place it by absolute step
    t = np.arange(140)
    y = 10.0 + 5.0 * ((t + 3) % 7 == 0)
    spec = ForecasterSpec("lag_regression", {"ridge": 1e-6, "calendar": 1, "trend": 0})
    out = predict(fit(spec, y, StepInfo(3, 7)), 14)
    expected = 10.0 + 5.0 * ((np.arange(140, 154) + 3) % 7 == 0)
    np.testing.assert_allclose(out, expected, atol=1e-3)


def test_usable_periods():
    assert usable_periods((7, 30, 365), 70) == (7, 30)
    assert usable_periods((), 10) == ()


def test_expand_grid():
    g = expand_grid({"a": [1, 2], "b": [3]})
    assert g == [{"a": 1, "b": 3}, {"a": 2, "b": 3}]
    assert expand_grid([{"a": 1}]) == [{"a": 1}]
    for kind in ENSEMBLE_KINDS:
        assert len(default_grids()[kind]) == 12


def test_fold_score_fallback():
    assert fold_score([np.array([1.0, 1.0])], [np.array([1.0, 1.0])]) == 0.0
    # zero actual sums: absolute sum error instead
    assert fold_score([np.array([2.0, 1.0])], [np.array([1.0, -1.0])]) == 3.0


def test_select_single_candidate():
    y = _series()
    folds = origin_folds(len(y), 7, 2)
    spec = select_hyperparams("ets_additive", [{"alpha": 0.2}], folds, y, (7,))
    assert spec.hyper_params["alpha"] == 0.2


def test_select_dominant_candidate():
    # pure weekly pattern: harmonic fit of order 3 is exact, order 1 is not
    y = 20 + np.tile([0.0, 5.0, 1.0, 7.0, 2.0, 3.0, 9.0], 12)
    folds = origin_folds(len(y), 7, 3)
    grid = [{"fourier_order": 1, "ridge": 0.0}, {"fourier_order": 3, "ridge": 0.0}]
    per = []
    for g in grid:
        preds, acts = validation_forecasts(ForecasterSpec("harmonic_regression", g, (7,)), folds, y)
        per.append([ape(p, a) for p, a in zip(preds, acts)])
    assert all(b < a for a, b in zip(*per))
    spec = select_hyperparams("harmonic_regression", grid, folds, y, (7,))
    assert spec.hyper_params["fourier_order"] == 3


def test_select_matches_exhaustive_recomputation():
    y = _series(98, seed=5)
    folds = origin_folds(len(y), 7, 4)
    grid = [{"alpha": a, "beta": 0.0, "gamma": 0.1, "phi": 1.0} for a in (0.05, 0.3, 0.9)]
    scores = []
    for g in grid:
        errs = []
        for f in folds:
            lo, hi = f.train
            v_lo, v_hi = f.validation
            state = fit(ForecasterSpec("ets_additive", g, (7,)), y[lo:hi])
            errs.append(ape(predict(state, v_hi - v_lo), y[v_lo:v_hi]))
        scores.append(np.mean(errs))
    spec = select_hyperparams("ets_additive", grid, folds, y, (7,))
    assert spec.hyper_params["alpha"] == grid[int(np.argmin(scores))]["alpha"]


def test_select_ties_go_to_first():
    y = np.tile(np.arange(1.0, 8.0), 8)
    folds = origin_folds(len(y), 7, 2)
    grid = [{"period": 7}, {"period": 7}]
    spec = select_hyperparams("seasonal_naive", grid, folds, y)
    assert spec.hyper_params == {"period": 7}


def test_select_all_fail():
    y = np.arange(20.0)
    folds = origin_folds(len(y), 5, 1)
    with pytest.raises(HyperparameterSearchError, match="every seasonal_naive candidate failed"):
        select_hyperparams("seasonal_naive", [{"period": 50}], folds, y)
