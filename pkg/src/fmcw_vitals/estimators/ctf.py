"""Coarse-to-fine heart rate: peak-valley counting refined by FFT peaks."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.signal import argrelmin, find_peaks
from scipy.stats import gaussian_kde

from ..errors import EstimationError
from ..filters import HEART_BAND
from ..phasechain import PhaseSignal
from ._common import check_signal, ranked_peaks
from .fft import DEFAULT_PAD, padded_spectrum

DEFAULT_MULTIPLIER = 0.5
FINE_CANDIDATES = 5
# rectangular-window sidelobes reach 0.22 of the main lobe; stay above them
FINE_MIN_RELATIVE = 0.3


class CtfMode(enum.Enum):
    HISTOGRAM = "histogram"
    KDE = "kde"


@dataclass(frozen=True)
class CtfDiagnostics:
    peak_valley_distances: NDArray[np.int64]
    threshold: float
    valid_pairs: int
    coarse_bpm: float
    fine_bpm: float


def peak_valley_distances(x: NDArray) -> NDArray[np.int64]:
    """Sample distance from each peak to the valley that directly follows it."""
    peaks, _ = find_peaks(x)
    valleys, _ = find_peaks(-x)
    if peaks.size == 0 or valleys.size == 0:
        return np.zeros(0, dtype=np.int64)
    # next valley after every peak, kept only if no other peak comes first
    nxt = np.searchsorted(valleys, peaks, side="right")
    ok = nxt < valleys.size
    p, v = peaks[ok], valleys[nxt[ok]]
    following_peak = np.append(peaks[1:], np.iinfo(np.int64).max)[ok]
    keep = v < following_peak
    return (v[keep] - p[keep]).astype(np.int64)


def _kde_mode_mask(d: NDArray) -> tuple[NDArray[np.bool_], float]:
    if np.all(d == d[0]):
        return np.ones(d.size, dtype=bool), float(d[0])
    kde = gaussian_kde(d.astype(float), bw_method="silverman")
    # distances are whole samples; a narrower kernel splits one rhythm
    # into modes at n and n + 1
    sd = float(np.std(d, ddof=1))
    if kde.factor * sd < 1.0:
        kde.set_bandwidth(1.0 / sd)
    grid = np.linspace(d.min() - 1, d.max() + 1, 512)
    dens = kde(grid)
    top = int(np.argmax(dens))
    minima = argrelmin(dens)[0]
    left = minima[minima < top]
    right = minima[minima > top]
    lo = grid[left[-1]] if left.size else -np.inf
    hi = grid[right[0]] if right.size else np.inf
    return (d >= lo) & (d <= hi), float(lo)


def ctf_estimate(
    sig: PhaseSignal,
    mode: CtfMode | str = CtfMode.HISTOGRAM,
    multiplier: float = DEFAULT_MULTIPLIER,
    band: tuple[float, float] = HEART_BAND,
    pad_factor: int = DEFAULT_PAD,
) -> tuple[float, CtfDiagnostics]:
    """Heart rate in BPM from a heart-band filtered phase signal.

    Coarse: valid peak-valley pairs per second times 60. HISTOGRAM drops
    pairs shorter than ``multiplier`` times the 25th percentile distance;
    KDE keeps the pairs lying in the basin of the dominant density mode.
    Fine: among the strongest in-band peaks of the padded spectrum (at
    least 0.3 of the largest, which keeps window sidelobes out), the one
    closest to the coarse rate.
    """
    mode = CtfMode(mode)
    x = sig.values
    check_signal(x, "CTF")
    d = peak_valley_distances(x)
    if d.size < 2:
        raise EstimationError(f"CTF needs at least 2 peak-valley pairs, found {d.size}")
    if mode is CtfMode.HISTOGRAM:
        threshold = multiplier * float(np.percentile(d, 25))
        valid = d >= threshold
    else:
        valid, threshold = _kde_mode_mask(d)
    n_valid = int(valid.sum())
    coarse = 60.0 * n_valid / sig.duration

    freqs, mag = padded_spectrum(x, sig.rate, pad_factor)
    keep = (freqs >= band[0]) & (freqs <= band[1])
    f_band, m_band = freqs[keep], mag[keep]
    idx = ranked_peaks(m_band)[:FINE_CANDIDATES]
    if idx.size:
        idx = idx[m_band[idx] >= FINE_MIN_RELATIVE * m_band[idx[0]]]
    if idx.size == 0:
        raise EstimationError("CTF: no spectral peak inside the heart band")
    cand = f_band[idx]
    fine = 60.0 * float(cand[np.argmin(np.abs(cand - coarse / 60.0))])
    return fine, CtfDiagnostics(d, threshold, n_valid, coarse, fine)
