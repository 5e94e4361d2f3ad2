"""Bayesian optimization of ensemble weights on the 3-model probability simplex.

Candidates are parameterized by ``(w1, w2)`` with ``w3 = 1 - w1 - w2``. The
surrogate is a Gaussian process with a squared-exponential kernel on the
standardized objective; the next point maximizes the acquisition over a dense
triangular grid plus jittered copies of the observed points.
"""
from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.spatial.distance import cdist
from scipy.special import ndtr
from scipy.stats import qmc

from .metrics import ape

logger = logging.getLogger(__name__)

ACQUISITIONS = ("EI", "PI", "UCB")


class BOError(ValueError):
    pass


class UndefinedObjectiveError(BOError):
    """Every fold has a zero-sum truth, so APE is undefined everywhere."""


@dataclass(frozen=True)
class EnsembleWeights:
    w: tuple[float, float, float]

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if w.shape != (3,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise BOError(f"weights {self.w} are not on the simplex")
        object.__setattr__(self, "w", tuple(float(v) for v in w))

    def as_array(self) -> np.ndarray:
        return np.array(self.w)


@dataclass(frozen=True)
class BOConfig:
    acquisition: str = "EI"
    init_points: int = 8
    iterations: int = 25
    seed: int = 0
    xi: float = 0.0
    kappa: float = 2.0
    length_scale: float = 0.2
    noise: float = 1e-6
    grid_resolution: int = 50
    jitter_points: int = 5

    def __post_init__(self):
        if self.acquisition not in ACQUISITIONS:
            raise BOError(f"unknown acquisition {self.acquisition!r}; expected one of {ACQUISITIONS}")
        if self.init_points < 3:
            raise BOError("init_points must be >= 3")
        if self.iterations < 0:
            raise BOError("iterations must be >= 0")


@dataclass
class SurrogateState:
    X: np.ndarray
    y: np.ndarray
    length_scale: float
    noise: float
    prior_mean: float
    prior_std: float
    chol: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)  # K^-1 (y - m) / s
    jitter: float = 0.0


_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _sq_exp(A, B, length_scale):
    d2 = cdist(A, B, "sqeuclidean")
    return np.exp(-0.5 * d2 / length_scale**2)


def fit_surrogate(X, y, length_scale: float = 0.2, noise: float = 1e-6) -> SurrogateState:
    """GP on standardized targets: unit signal variance, prior mean = sample mean.

    The Cholesky factorization retries with jitter 1e-8, 1e-7, ... 1e-4 before
    giving up.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if len(y) < 1 or len(X) != len(y):
        raise BOError("surrogate needs at least one observation with matching inputs")
    m = float(y.mean())
    s = float(y.std())
    if not s > 0:
        s = 1.0
    z = (y - m) / s
    K = _sq_exp(X, X, length_scale)
    jitter = 0.0
    while True:
        try:
            L = np.linalg.cholesky(K + (noise + jitter) * np.eye(len(y)))
            break
        except np.linalg.LinAlgError:
            jitter = 1e-8 if jitter == 0.0 else jitter * 10
            if jitter > 1e-4 * (1 + 1e-9):
                raise BOError("kernel matrix is singular even with jitter 1e-4") from None
    alpha = solve_triangular(L.T, solve_triangular(L, z, lower=True), lower=False)
    return SurrogateState(X, y, length_scale, noise, m, s, L, alpha, jitter)


def gp_posterior(state: SurrogateState, x) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and standard deviation of the latent objective at ``x``.

    Accepts one point or a batch; returns arrays shaped like the batch.
    """
    Xq = np.atleast_2d(np.asarray(x, dtype=np.float64))
    Ks = _sq_exp(Xq, state.X, state.length_scale)
    mean = state.prior_mean + state.prior_std * (Ks @ state.alpha)
    v = solve_triangular(state.chol, Ks.T, lower=True)
    var = np.clip(1.0 - (v * v).sum(axis=0), 0.0, None)
    return mean, state.prior_std * np.sqrt(var)


def acquisition(
    state: SurrogateState, x, kind: str = "EI", best_so_far: float | None = None, param: float | None = None
) -> np.ndarray:
    """Acquisition value (higher is better) for minimizing the objective.

    ``param`` is xi for EI/PI (default 0) and kappa for UCB (default 2).
    """
    if kind not in ACQUISITIONS:
        raise BOError(f"unknown acquisition {kind!r}")
    mu, sigma = gp_posterior(state, x)
    best = float(state.y.min()) if best_so_far is None else best_so_far
    if kind == "UCB":
        kappa = 2.0 if param is None else param
        return -(mu - kappa * sigma)
    xi = 0.0 if param is None else param
    improve = best - mu - xi
    out = np.zeros_like(mu)
    pos = sigma > 0
    z = improve[pos] / sigma[pos]
    if kind == "PI":
        out[pos] = ndtr(z)
    else:
        out[pos] = improve[pos] * ndtr(z) + sigma[pos] * np.exp(-0.5 * z * z) / _SQRT_2PI
    return out


def to_simplex(xy) -> np.ndarray:
    """Map ``(w1, w2)`` rows to clipped, renormalized 3-weight rows."""
    xy = np.atleast_2d(np.asarray(xy, dtype=np.float64))
    w = np.column_stack([xy, 1.0 - xy.sum(axis=1)])
    w = np.clip(w, 0.0, None)
    return w / w.sum(axis=1, keepdims=True)


def triangle_grid(resolution: int) -> np.ndarray:
    pts = [(i / resolution, j / resolution) for i in range(resolution + 1) for j in range(resolution + 1 - i)]
    return np.array(pts)


def initial_design(n: int, seed: int) -> np.ndarray:
    """Vertices, centroid, then scrambled-Sobol points folded into the triangle."""
    base = [(1.0, 0.0), (0.0, 1.0), (0.0, 0.0), (1 / 3, 1 / 3)]
    pts = base[:n]
    extra = n - len(pts)
    if extra > 0:
        u = qmc.Sobol(d=2, scramble=True, seed=seed).random(extra)
        flip = u.sum(axis=1) > 1.0
        u[flip] = 1.0 - u[flip]
        pts.extend(map(tuple, u))
    return np.array(pts, dtype=np.float64)


def combine(per_model_forecasts, w) -> np.ndarray:
    """Elementwise ``sum_i w_i f_i``."""
    F = np.asarray(per_model_forecasts, dtype=np.float64)
    weights = w.as_array() if isinstance(w, EnsembleWeights) else np.asarray(w, dtype=np.float64)
    if F.ndim != 2 or F.shape[0] != len(weights):
        raise BOError(f"expected {len(weights)} equal-length forecasts, got shape {F.shape}")
    out = weights[0] * F[0]
    for wi, fi in zip(weights[1:], F[1:]):
        out = out + wi * fi
    return out


def ensemble_objective(per_fold_forecasts, per_fold_truth, objective: str = "ape"):
    """Callable mapping a weight row to mean-over-folds error of the combination."""
    folds = [(np.asarray(F, dtype=np.float64), np.asarray(y, dtype=np.float64))
             for F, y in zip(per_fold_forecasts, per_fold_truth)]
    if not folds:
        raise BOError("need at least one fold")
    for F, y in folds:
        if F.ndim != 2 or F.shape[0] != 3 or F.shape[1] != y.shape[0]:
            raise BOError(f"fold forecasts of shape {F.shape} do not align with truth of length {len(y)}")
    if objective == "ape":
        folds = [(F, y) for F, y in folds if float(y.sum()) != 0.0]
        if not folds:
            raise UndefinedObjectiveError("APE undefined: every fold has a zero-sum truth")

        def g(w):
            return float(np.mean([ape(combine(F, w), y) for F, y in folds]))
    elif objective == "abs_sum_error":
        def g(w):
            return float(np.mean([abs(float(combine(F, w).sum()) - float(y.sum())) for F, y in folds]))
    else:
        raise BOError(f"unknown objective {objective!r}")
    return g


@dataclass
class BOResult:
    weights: EnsembleWeights
    best_value: float
    history: list[tuple[tuple[float, float, float], float]]

    @property
    def incumbent_trace(self) -> list[float]:
        trace, best = [], math.inf
        for _, v in self.history:
            best = min(best, v)
            trace.append(best)
        return trace


def optimize_weights(
    per_model_val_forecasts: Sequence,
    y_true: Sequence,
    config: BOConfig | None = None,
    objective: str = "ape",
    return_result: bool = False,
):
    """Minimize mean-over-folds APE of the weighted ensemble on the simplex.

    ``per_model_val_forecasts[v]`` is a ``(3, h)`` array for fold ``v``. The
    returned weights are the best *observed* point (earliest on ties).
    """
    config = config or BOConfig()
    g = ensemble_objective(per_model_val_forecasts, y_true, objective)
    rng = np.random.default_rng(config.seed)

    W = to_simplex(initial_design(config.init_points, config.seed))
    X = W[:, :2].copy()
    values = [g(w) for w in W]
    grid = triangle_grid(config.grid_resolution)

    for _ in range(config.iterations):
        if min(values) == 0.0:
            break  # cannot improve on an exact fit
        state = fit_surrogate(X, values, config.length_scale, config.noise)
        best_idx = int(np.argmin(values))
        jitter = X[best_idx] + rng.normal(scale=0.02, size=(config.jitter_points, 2))
        jitter = to_simplex(jitter)[:, :2]
        cand = np.vstack([grid, jitter])
        seen = cdist(cand, X, "sqeuclidean").min(axis=1) < 1e-18
        cand = cand[~seen]
        if not len(cand):
            break
        param = config.kappa if config.acquisition == "UCB" else config.xi
        scores = acquisition(state, cand, config.acquisition, min(values), param)
        nxt = cand[int(np.argmax(scores))]
        w = to_simplex(nxt)[0]
        X = np.vstack([X, w[:2]])
        W = np.vstack([W, w])
        values.append(g(w))

    best = int(np.argmin(values))
    weights = EnsembleWeights(tuple(W[best]))
    if return_result:
        history = [(tuple(map(float, w)), v) for w, v in zip(W, values)]
        return BOResult(weights, values[best], history)
    return weights
