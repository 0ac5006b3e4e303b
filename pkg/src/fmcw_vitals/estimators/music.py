"""MUSIC pseudo-spectrum of a real slow-time signal.

Snapshots are ``lag_dim`` consecutive samples; each real sinusoid spans
two dimensions of the signal subspace (its two complex exponentials), so
the noise subspace keeps ``lag_dim - 2 * n_sources`` eigenvectors.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import NDArray

from ..errors import EstimationError
from ..filters import BandSpec
from ..phasechain import PhaseSignal
from ._common import SpectrumResult, check_signal, in_guard, ranked_peaks

DEFAULT_LAG = 100
DEFAULT_GRID_STEP = 1e-3
GUARD_HZ = 0.05


def lag_covariance(x: NDArray, lag_dim: int, forward_backward: bool = False) -> NDArray[np.float64]:
    snaps = sliding_window_view(x, lag_dim)
    R = snaps.T @ snaps / snaps.shape[0]
    if forward_backward:
        R = 0.5 * (R + R[::-1, ::-1])
    return R


def noise_subspace(R: NDArray, n_sources: int) -> NDArray[np.float64]:
    try:
        w, V = np.linalg.eigh(R)
    except np.linalg.LinAlgError as exc:
        raise EstimationError(f"MUSIC eigendecomposition failed: {exc}") from exc
    if not np.all(np.isfinite(w)) or w[-1] <= 0:
        raise EstimationError("MUSIC covariance is rank deficient (no signal energy)")
    # eigh sorts ascending
    return V[:, : R.shape[0] - 2 * n_sources]


def music_pseudospectrum(En: NDArray, freqs: NDArray, rate: float) -> NDArray[np.float64]:
    m = np.arange(En.shape[0])
    arg = 2 * np.pi * np.outer(m, freqs) / rate
    # |E_n^T v|^2 with v = cos + j sin, split into two real products
    proj = (En.T @ np.cos(arg)) ** 2 + (En.T @ np.sin(arg)) ** 2
    den = proj.sum(axis=0)
    return 1.0 / np.maximum(den, np.finfo(float).tiny)


def sinusoid_amplitudes(x: NDArray, freqs: NDArray, rate: float) -> NDArray[np.float64]:
    """Joint least-squares amplitude of a sinusoid at each of ``freqs``."""
    n = np.arange(x.size)
    cols = []
    for f in freqs:
        cols += [np.cos(2 * np.pi * f * n / rate), np.sin(2 * np.pi * f * n / rate)]
    coef, *_ = np.linalg.lstsq(np.column_stack(cols), x - x.mean(), rcond=None)
    return np.hypot(coef[0::2], coef[1::2])


def music_estimate(
    sig: PhaseSignal,
    band: BandSpec,
    lag_dim: int = DEFAULT_LAG,
    n_sources: int = 1,
    grid_step: float = DEFAULT_GRID_STEP,
    rr_hint: float | None = None,
    guard_hz: float = GUARD_HZ,
    forward_backward: bool = False,
    fold_harmonic: bool = False,
) -> tuple[float, SpectrumResult]:
    """Dominant frequency from the MUSIC pseudo-spectrum over ``band``.

    Peak heights of a pseudo-spectrum say how well a frequency fits the
    signal subspace, not how strong it is, so the ``n_sources`` tallest
    peaks are re-ranked by least-squares amplitude. With ``rr_hint`` (Hz)
    peaks within ``guard_hz`` of twice that rate are passed over.
    ``fold_harmonic`` reports a candidate at half the winning frequency
    instead when its amplitude is at least half the winner's.
    """
    x = sig.values
    if lag_dim < 2 * n_sources + 1:
        raise ValueError(f"lag_dim {lag_dim} too small for {n_sources} sources")
    if x.size < 2 * lag_dim:
        raise ValueError(f"MUSIC needs at least {2 * lag_dim} samples, got {x.size}")
    if not grid_step > 0:
        raise ValueError("grid_step must be positive")
    try:
        check_signal(x, "MUSIC")
    except EstimationError as exc:
        raise EstimationError(f"MUSIC covariance is rank deficient: {exc}") from exc

    En = noise_subspace(lag_covariance(x, lag_dim, forward_backward), n_sources)
    count = int(np.floor((band.high - band.low) / grid_step + 1e-9)) + 1
    freqs = band.low + grid_step * np.arange(count)
    spec = SpectrumResult.build(freqs, music_pseudospectrum(En, freqs, sig.rate))

    idx = ranked_peaks(spec.power)
    if idx.size == 0:
        return float(freqs[np.argmax(spec.power)]), spec
    top = idx[:n_sources]
    pool = [k for k in top if not in_guard(freqs[k], rr_hint, guard_hz)]
    if not pool:
        rest = [k for k in idx[n_sources:] if not in_guard(freqs[k], rr_hint, guard_hz)]
        if not rest:
            raise EstimationError("every MUSIC peak lies inside the harmonic guard band")
        pool = rest[:1]
        top = np.append(top, pool)
    amps = dict(zip(top.tolist(), sinusoid_amplitudes(x, freqs[top], sig.rate)))
    best = max(pool, key=lambda k: (amps[k], -freqs[k]))
    if fold_harmonic:
        for k in sorted(pool, key=lambda k: freqs[k]):
            if abs(freqs[best] - 2 * freqs[k]) <= guard_hz and amps[k] >= 0.5 * amps[best]:
                return float(freqs[k]), spec
    return float(freqs[best]), spec
