"""Kernel dispatch: the compiled extension when importable, else pure Python.

Set ``HIFOREAD_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if not os.environ.get("HIFOREAD_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def hw_filter(y, alpha, beta, gamma, phi, level0, trend0, seasonal0, periods):
    seasonal0 = np.ascontiguousarray(np.atleast_2d(seasonal0), dtype=np.float64)
    return _impl.hw_filter(
        np.ascontiguousarray(y, dtype=np.float64),
        float(alpha), float(beta), float(gamma), float(phi),
        float(level0), float(trend0),
        seasonal0,
        np.ascontiguousarray(periods, dtype=np.int64),
    )


def ar_recursive(tail, base, coef, lags):
    return _impl.ar_recursive(
        np.ascontiguousarray(tail, dtype=np.float64),
        np.ascontiguousarray(base, dtype=np.float64),
        np.ascontiguousarray(coef, dtype=np.float64),
        np.ascontiguousarray(lags, dtype=np.int64),
    )
