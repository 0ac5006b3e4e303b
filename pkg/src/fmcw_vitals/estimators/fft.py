"""Zero-padded FFT peak picking, with an optional notch ahead of it."""
from __future__ import annotations

import numpy as np

from ..filters import DEFAULT_NOTCH_Q, BandSpec, apply_filter, design_notch
from ..phasechain import PhaseSignal
from ._common import SpectrumResult, check_signal

DEFAULT_PAD = 8


def padded_spectrum(x: np.ndarray, rate: float, pad_factor: int) -> tuple[np.ndarray, np.ndarray]:
    n = x.size * pad_factor
    return np.fft.rfftfreq(n, 1 / rate), np.abs(np.fft.rfft(x, n))


def improved_fft(
    sig: PhaseSignal,
    band: BandSpec,
    pad_factor: int = DEFAULT_PAD,
    notch_at: float | None = None,
    notch_q: float = DEFAULT_NOTCH_Q,
) -> tuple[float, SpectrumResult]:
    """Frequency of the largest in-band magnitude of the padded spectrum.

    ``notch_at`` (Hz) first removes a known interferer, typically the
    second harmonic of breathing when estimating heart rate. The grid
    step is ``rate / (pad_factor * len(sig))``.
    """
    if int(pad_factor) != pad_factor or pad_factor < 1:
        raise ValueError(f"pad_factor must be an integer >= 1, got {pad_factor}")
    check_signal(sig.values, "improved FFT")
    if notch_at is not None and 0 < notch_at < sig.rate / 2:
        sig = apply_filter(design_notch(notch_at, notch_q, sig.rate), sig)
    freqs, mag = padded_spectrum(sig.values, sig.rate, int(pad_factor))
    keep = (freqs >= band.low) & (freqs <= band.high)
    spec = SpectrumResult.build(freqs[keep], mag[keep])
    if spec.freqs.size == 0:
        raise ValueError("frequency grid has no point inside the band")
    return float(spec.freqs[np.argmax(spec.power)]), spec
