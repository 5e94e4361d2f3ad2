"""Pure-Python reference versions of the compiled kernels in ``_kernels.pyx``."""
import numpy as np


def hw_filter(y, alpha, beta, gamma, phi, level0, trend0, seasonal0, periods):
    """Additive multi-seasonal Holt-Winters recursion in error-correction form.

    Returns the one-step-ahead fitted values and the final level, trend and
    seasonal states. Seasonal state ``j`` lives in a circular buffer indexed by
    ``t % periods[j]``.
    """
    ys = np.asarray(y, dtype=np.float64).tolist()
    seas = [list(row) for row in np.asarray(seasonal0, dtype=np.float64).tolist()]
    pers = [int(p) for p in periods]
    level, trend = float(level0), float(trend0)
    alpha, beta, gamma, phi = float(alpha), float(beta), float(gamma), float(phi)
    fitted = [0.0] * len(ys)
    for t, obs in enumerate(ys):
        s_sum = 0.0
        for j, p in enumerate(pers):
            s_sum = s_sum + seas[j][t % p]
        yhat = level + phi * trend + s_sum
        fitted[t] = yhat
        err = obs - yhat
        new_level = level + phi * trend + alpha * err
        trend = phi * trend + alpha * beta * err
        level = new_level
        for j, p in enumerate(pers):
            seas[j][t % p] = seas[j][t % p] + gamma * err
    seasonal = np.array(seas, dtype=np.float64).reshape(np.shape(seasonal0))
    return np.array(fitted, dtype=np.float64), level, trend, seasonal


def ar_recursive(tail, base, coef, lags):
    """Recursive multi-step autoregression: feeds each forecast back as a lag."""
    buf = np.asarray(tail, dtype=np.float64).tolist()
    m = len(buf)
    coefs = np.asarray(coef, dtype=np.float64).tolist()
    lag_list = [int(v) for v in lags]
    for k, b in enumerate(np.asarray(base, dtype=np.float64).tolist()):
        acc = b
        for c, lag in zip(coefs, lag_list):
            acc = acc + c * buf[m + k - lag]
        buf.append(acc)
    return np.array(buf[m:], dtype=np.float64)
