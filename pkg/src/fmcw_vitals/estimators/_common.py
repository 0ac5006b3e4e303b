"""Spectrum container and peak helpers shared by the estimators."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.signal import find_peaks

from ..errors import EstimationError


@dataclass(frozen=True)
class SpectrumResult:
    """Power over a strictly increasing frequency grid.

    ``peaks`` holds ``(freq_hz, power)`` for each local maximum, strongest
    first; equal powers keep the lower frequency first.
    """

    freqs: NDArray[np.float64]
    power: NDArray[np.float64]
    peaks: list[tuple[float, float]] = field(default_factory=list)

    def __post_init__(self):
        if self.freqs.shape != self.power.shape:
            raise ValueError("freqs and power must have equal shapes")
        if self.freqs.size > 1 and np.any(np.diff(self.freqs) <= 0):
            raise ValueError("frequency grid must be strictly increasing")

    @classmethod
    def build(cls, freqs: NDArray, power: NDArray) -> SpectrumResult:
        idx = ranked_peaks(power)
        return cls(freqs, power, [(float(freqs[k]), float(power[k])) for k in idx])

    def to_rows(self) -> list[tuple[float, float]]:
        return list(zip(self.freqs.tolist(), self.power.tolist()))


def ranked_peaks(power: NDArray) -> NDArray[np.intp]:
    """Indices of interior local maxima, by power descending (stable)."""
    idx, _ = find_peaks(power)
    order = np.argsort(-power[idx], kind="stable")
    return idx[order]


def best_index(power: NDArray) -> int:
    """Strongest local maximum, or the global argmax when none exists."""
    idx = ranked_peaks(power)
    if idx.size:
        return int(idx[0])
    return int(np.argmax(power))


def in_guard(f: float, rr_hint: float | None, guard_hz: float) -> bool:
    return rr_hint is not None and abs(f - 2 * rr_hint) <= guard_hz


def check_signal(x: NDArray, what: str) -> None:
    if x.size == 0 or not np.any(x != 0):
        raise EstimationError(f"{what}: signal is all zero")
    if not np.all(np.isfinite(x)):
        raise EstimationError(f"{what}: signal has non-finite samples")
