import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from hiforead.bo import (
    BOConfig,
    BOError,
    EnsembleWeights,
    UndefinedObjectiveError,
    acquisition,
    combine,
    fit_surrogate,
    gp_posterior,
    initial_design,
    optimize_weights,
    to_simplex,
    triangle_grid,
)
from hiforead.metrics import ape


def dense_gp(X, y, Xq, ell, noise):
    """Textbook GP regression with standardized targets, solved with np.linalg.solve."""
    m, s = y.mean(), y.std()
    z = (y - m) / s

    def k(A, B):
        d = A[:, None, :] - B[None, :, :]
        return np.exp(-0.5 * (d**2).sum(-1) / ell**2)

    K = k(X, X) + noise * np.eye(len(X))
    Ks = k(Xq, X)
    mean = m + s * Ks @ np.linalg.solve(K, z)
    var = 1.0 - np.einsum("ij,ji->i", Ks, np.linalg.solve(K, Ks.T))
    return mean, s * np.sqrt(np.clip(var, 0, None))


def test_posterior_interpolates():
    X = np.array([[0.1, 0.2], [0.5, 0.3], [0.2, 0.7]])
    y = np.array([1.0, 3.0, 2.0])
    state = fit_surrogate(X, y, noise=1e-12)
    mu, sd = gp_posterior(state, X)
    np.testing.assert_allclose(mu, y, atol=1e-6)
    assert np.all(sd < 1e-4)


def test_posterior_far_away_returns_prior():
    state = fit_surrogate(np.array([[0.0, 0.0]]), np.array([4.0]))
    mu, sd = gp_posterior(state, [50.0, 50.0])
    assert mu[0] == pytest.approx(state.prior_mean)
    assert sd[0] == pytest.approx(state.prior_std)


def test_posterior_matches_dense_oracle():
    rng = np.random.default_rng(0)
    X = rng.uniform(0, 0.5, size=(5, 2))
    y = ((X - 0.3) ** 2).sum(axis=1)
    Xq = (X[:-1] + X[1:]) / 2
    state = fit_surrogate(X, y, 0.2, 1e-6)
    mu, sd = gp_posterior(state, Xq)
    mu_o, sd_o = dense_gp(X, y, Xq, 0.2, 1e-6)
    np.testing.assert_allclose(mu, mu_o, rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(sd, sd_o, rtol=1e-4, atol=1e-7)


def test_duplicate_points_use_jitter():
    X = np.array([[0.2, 0.2], [0.2, 0.2], [0.4, 0.1]])
    state = fit_surrogate(X, np.array([1.0, 1.0, 2.0]), noise=0.0)
    assert state.jitter > 0
    mu, sd = gp_posterior(state, [0.2, 0.2])
    assert mu[0] == pytest.approx(1.0, abs=1e-4)


def test_surrogate_needs_data():
    with pytest.raises(BOError):
        fit_surrogate(np.zeros((0, 2)), np.zeros(0))


def test_acquisition_zero_sigma():
    X = np.array([[0.1, 0.1], [0.6, 0.2]])
    state = fit_surrogate(X, np.array([1.0, 2.0]), noise=0.0)
    assert acquisition(state, X[0], "EI")[0] == pytest.approx(0.0, abs=1e-6)


def test_pi_closed_form(monkeypatch):
    import hiforead.bo as bo

    state = fit_surrogate(np.array([[0.0, 0.0]]), np.array([1.0]))
    monkeypatch.setattr(bo, "gp_posterior", lambda s, x: (np.array([2.0]), np.array([0.5])))
    assert acquisition(state, [0.3, 0.3], "PI", best_so_far=2.5)[0] == pytest.approx(norm.cdf(1.0))
    assert acquisition(state, [0.3, 0.3], "PI", best_so_far=2.5)[0] == pytest.approx(0.8413, abs=1e-4)
    # EI against E[max(best - g, 0)] by quadrature
    g = np.linspace(2.0 - 12 * 0.5, 2.0 + 12 * 0.5, 200001)
    quad = np.trapezoid(np.maximum(2.5 - g, 0) * norm.pdf(g, 2.0, 0.5), g)
    assert acquisition(state, [0.3, 0.3], "EI", best_so_far=2.5)[0] == pytest.approx(quad, rel=1e-6)
    assert acquisition(state, [0.3, 0.3], "UCB", param=2.0)[0] == pytest.approx(-(2.0 - 1.0))


def test_ei_grows_with_sigma(monkeypatch):
    import hiforead.bo as bo

    state = fit_surrogate(np.array([[0.0, 0.0]]), np.array([1.0]))
    monkeypatch.setattr(bo, "gp_posterior", lambda s, x: (np.array([1.0, 1.0]), np.array([0.1, 0.5])))
    ei = acquisition(state, [[0, 0], [1, 1]], "EI", best_so_far=1.0)
    assert ei[1] > ei[0]


def test_unknown_acquisition():
    state = fit_surrogate(np.array([[0.0, 0.0]]), np.array([1.0]))
    with pytest.raises(BOError):
        acquisition(state, [0, 0], "TS")
    with pytest.raises(BOError):
        BOConfig(acquisition="TS")
    with pytest.raises(BOError):
        BOConfig(init_points=2)


def test_weights_validation():
    assert EnsembleWeights((0.2, 0.3, 0.5)).w == (0.2, 0.3, 0.5)
    with pytest.raises(BOError):
        EnsembleWeights((0.5, 0.6, -0.1))
    with pytest.raises(BOError):
        EnsembleWeights((0.5, 0.5, 0.5))


def test_combine_examples():
    F = np.array([[3.0], [6.0], [9.0]])
    assert combine(F, (1 / 3, 1 / 3, 1 / 3))[0] == pytest.approx(6.0)
    np.testing.assert_array_equal(combine(np.arange(9.0).reshape(3, 3), EnsembleWeights((1, 0, 0))), [0, 1, 2])
    with pytest.raises(BOError):
        combine(np.ones((2, 3)), (0.5, 0.5, 0))


@given(st.integers(0, 2**32 - 1), st.floats(0, 1))
@settings(max_examples=60, deadline=None)
def test_combine_dot_product_and_linearity(seed, a):
    rng = np.random.default_rng(seed)
    F = rng.normal(size=(3, 7))
    w1, w2 = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))
    np.testing.assert_allclose(combine(F, w1), [np.dot(w1, F[:, j]) for j in range(7)], rtol=1e-12, atol=1e-12)
    mix = a * w1 + (1 - a) * w2
    np.testing.assert_allclose(combine(F, mix), a * combine(F, w1) + (1 - a) * combine(F, w2), atol=1e-12)


def test_simplex_helpers():
    W = to_simplex([[0.7, 0.7], [-0.1, 0.4]])
    assert np.all(W >= 0)
    np.testing.assert_allclose(W.sum(axis=1), 1.0)
    g = triangle_grid(50)
    assert len(g) == 51 * 52 // 2
    assert np.all(g.sum(axis=1) <= 1 + 1e-12)
    d = initial_design(8, 0)
    assert d[:4].tolist() == [[1, 0], [0, 1], [0, 0], [1 / 3, 1 / 3]]
    assert np.all(d >= 0) and np.all(d.sum(axis=1) <= 1 + 1e-12)
    np.testing.assert_array_equal(d, initial_design(8, 0))


def _folds(rng, n_folds=2, h=10, exact=None):
    F, Y = [], []
    for _ in range(n_folds):
        y = rng.uniform(50, 100, h)
        f = np.vstack([y * rng.uniform(0.7, 1.3, h) for _ in range(3)])
        if exact is not None:
            f[exact] = y
        F.append(f)
        Y.append(y)
    return F, Y


def test_exact_model_found():
    F, Y = _folds(np.random.default_rng(1), exact=0)
    res = optimize_weights(F, Y, return_result=True)
    singles = [np.mean([ape(f[i], y) for f, y in zip(F, Y)]) for i in range(3)]
    assert res.weights.w[0] >= 0.9
    assert res.best_value <= min(singles) + 1e-9


def test_identical_models():
    rng = np.random.default_rng(2)
    y = rng.uniform(1, 2, 5)
    f = np.vstack([y + 0.1] * 3)
    w = optimize_weights([f], [y])
    assert sum(w.w) == pytest.approx(1.0, abs=1e-9)


def test_deterministic():
    F, Y = _folds(np.random.default_rng(3))
    assert optimize_weights(F, Y, BOConfig(seed=4)) == optimize_weights(F, Y, BOConfig(seed=4))


@pytest.mark.parametrize("kind", ["EI", "PI", "UCB"])
@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=15, deadline=None)
def test_search_invariants(kind, seed):
    F, Y = _folds(np.random.default_rng(seed))
    res = optimize_weights(F, Y, BOConfig(acquisition=kind, iterations=8, seed=seed), return_result=True)
    for w, _ in res.history:
        assert min(w) >= 0 and abs(sum(w) - 1) <= 1e-9
    trace = res.incumbent_trace
    assert all(b <= a for a, b in zip(trace, trace[1:]))
    singles = [np.mean([ape(f[i], y) for f, y in zip(F, Y)]) for i in range(3)]
    assert res.best_value <= min(singles)
    assert res.best_value == min(v for _, v in res.history)
    assert res.weights.w == next(w for w, v in res.history if v == res.best_value)


def test_zero_truth_everywhere():
    F = [np.ones((3, 4))]
    with pytest.raises(UndefinedObjectiveError):
        optimize_weights(F, [np.zeros(4)])
    w = optimize_weights(F, [np.zeros(4)], objective="abs_sum_error")
    assert sum(w.w) == pytest.approx(1.0)


def test_misaligned_folds():
    with pytest.raises(BOError):
        optimize_weights([np.ones((3, 4))], [np.ones(5)])
    with pytest.raises(BOError):
        optimize_weights([], [])


def test_objective_skips_zero_sum_folds():
    rng = np.random.default_rng(5)
    F, Y = _folds(rng, exact=1)
    F.append(np.ones((3, 10)))
    Y.append(np.zeros(10))
    res = optimize_weights(F, Y, return_result=True)
    assert res.best_value == 0.0
    assert not math.isnan(res.best_value)
