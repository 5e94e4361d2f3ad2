# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Operation order mirrors ``_kernels_py`` exactly."""
import numpy as np

cimport numpy as cnp

cnp.import_array()


def hw_filter(const double[::1] y, double alpha, double beta, double gamma, double phi,
              double level0, double trend0, const double[:, ::1] seasonal0,
              const long long[::1] periods):
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t n_seas = periods.shape[0]
    cdef Py_ssize_t t, j
    cdef double level = level0, trend = trend0, s_sum, yhat, err, new_level
    fitted_arr = np.empty(n, dtype=np.float64)
    seasonal_arr = np.array(seasonal0, dtype=np.float64, copy=True, order="C")
    cdef double[::1] fitted = fitted_arr
    cdef double[:, ::1] seas = seasonal_arr
    for t in range(n):
        s_sum = 0.0
        for j in range(n_seas):
            s_sum = s_sum + seas[j, t % periods[j]]
        yhat = level + phi * trend + s_sum
        fitted[t] = yhat
        err = y[t] - yhat
        new_level = level + phi * trend + alpha * err
        trend = phi * trend + alpha * beta * err
        level = new_level
        for j in range(n_seas):
            seas[j, t % periods[j]] = seas[j, t % periods[j]] + gamma * err
    return fitted_arr, level, trend, seasonal_arr


def ar_recursive(const double[::1] tail, const double[::1] base, const double[::1] coef,
                 const long long[::1] lags):
    cdef Py_ssize_t m = tail.shape[0]
    cdef Py_ssize_t h = base.shape[0]
    cdef Py_ssize_t n_lags = lags.shape[0]
    cdef Py_ssize_t k, j
    cdef double acc
    buf_arr = np.empty(m + h, dtype=np.float64)
    cdef double[::1] buf = buf_arr
    for k in range(m):
        buf[k] = tail[k]
    for k in range(h):
        acc = base[k]
        for j in range(n_lags):
            acc = acc + coef[j] * buf[m + k - lags[j]]
        buf[m + k] = acc
    return buf_arr[m:].copy()
