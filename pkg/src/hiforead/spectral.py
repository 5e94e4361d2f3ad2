"""FFT periodograms, dominant seasonal periods and Jaccard similarity of period sets."""
from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np

__all__ = ["Periodogram", "SeasonalitySet", "periodogram", "dominant_periods", "jaccard", "seasonality"]


@dataclass(frozen=True, eq=False)
class Periodogram:
    T: int
    frequencies: np.ndarray  # cycles per window, 0..T//2
    amplitude: np.ndarray
    phase: np.ndarray
    scale: float  # L1 norm of the centred series, for the noise floor


@dataclass(frozen=True)
class SeasonalitySet:
    """Distinct integer periods, strongest first. Compared as a set."""

    periods: tuple[int, ...] = ()

    def __iter__(self):
        return iter(self.periods)

    def __len__(self):
        return len(self.periods)

    def __contains__(self, p):
        return p in self.periods

    def as_set(self) -> frozenset[int]:
        return frozenset(self.periods)


def periodogram(y) -> Periodogram:
    """Amplitude and phase of ``sum_t y(t) exp(-2 pi i f t / T)`` for f = 0..T//2.

    The series is mean-centred first, so the DC bin carries no signal.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or len(y) < 4:
        raise ValueError("periodogram needs a 1-D series of length >= 4")
    if not np.all(np.isfinite(y)):
        raise ValueError("periodogram input contains non-finite values")
    yc = y - y.mean()
    spec = np.fft.rfft(yc)
    return Periodogram(
        T=len(y),
        frequencies=np.arange(len(spec)),
        amplitude=np.abs(spec),
        phase=np.angle(spec),
        scale=float(np.abs(yc).sum()),
    )


def dominant_periods(p: Periodogram, max_peaks: int = 5, tau: int | None = None) -> SeasonalitySet:
    """Periods ``ceil(T / f)`` of the strongest strict local maxima, keeping those ``<= tau``.

    Bins f = 0 and f = 1 are never candidates. Peaks at numerical-noise level
    (relative to the series scale) are ignored so constant series yield nothing.
    """
    if max_peaks < 1:
        raise ValueError("max_peaks must be >= 1")
    tau = p.T // 2 if tau is None else tau
    if tau < 2:
        raise ValueError("tau must be >= 2")
    amp = p.amplitude
    n = len(amp)
    floor = 1e-9 * p.scale
    candidates = []
    for f in range(2, n):
        left = amp[f - 1]
        right = amp[f + 1] if f + 1 < n else -np.inf
        if amp[f] > left and amp[f] > right and amp[f] > floor:
            candidates.append(f)
    candidates.sort(key=lambda f: (-amp[f], f))
    periods = []
    for f in candidates[:max_peaks]:
        period = -(-p.T // f)  # integer ceil(T / f)
        if 2 <= period <= tau and period not in periods:
            periods.append(period)
    return SeasonalitySet(tuple(periods))


def seasonality(y, max_peaks: int = 5, tau: int | None = None) -> SeasonalitySet:
    return dominant_periods(periodogram(y), max_peaks=max_peaks, tau=tau)


def jaccard(a: Iterable[int], b: Iterable[int]) -> float:
    """``|a & b| / |a | b|``; two empty sets score 0."""
    sa, sb = set(a), set(b)
    union = sa | sb
    if not union:
        return 0.0
    return len(sa & sb) / len(union)
