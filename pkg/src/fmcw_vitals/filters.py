"""IIR band-pass and notch filters for the slow-time phase signal.

Design is delegated to :mod:`scipy.signal` (analog prototype, pre-warped
bilinear transform, second-order sections); this module fixes the
defaults, validates bands and wraps the result in a small value type.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import signal

from .phasechain import PhaseSignal, Stage


class BandKind(enum.Enum):
    HEART = "heart"
    RESPIRATION = "respiration"


class FilterFamily(enum.Enum):
    BUTTERWORTH = "butterworth"
    ELLIPTIC = "elliptic"


HEART_BAND = (0.6, 4.0)
RESP_BAND = (0.05, 0.7)
DEFAULT_ORDER = {FilterFamily.BUTTERWORTH: 4, FilterFamily.ELLIPTIC: 5}


@dataclass(frozen=True)
class BandSpec:
    """Pass band plus design family.

    ``order`` is the order of the low-pass prototype; the band-pass
    built from it has twice as many poles.
    """

    low: float
    high: float
    kind: BandKind = BandKind.HEART
    family: FilterFamily = FilterFamily.BUTTERWORTH
    order: int | None = None
    ripple_db: float = 0.5
    stop_atten_db: float = 40.0

    def __post_init__(self):
        object.__setattr__(self, "kind", BandKind(self.kind))
        object.__setattr__(self, "family", FilterFamily(self.family))
        if self.order is None:
            object.__setattr__(self, "order", DEFAULT_ORDER[self.family])
        if not 0 < self.low < self.high:
            raise ValueError(f"band needs 0 < low < high, got ({self.low}, {self.high})")
        if not 2 <= self.order <= 10 or int(self.order) != self.order:
            raise ValueError(f"filter order must be an integer in [2, 10], got {self.order}")
        if self.family is FilterFamily.ELLIPTIC:
            if not 0 < self.ripple_db < self.stop_atten_db:
                raise ValueError("elliptic design needs 0 < ripple_db < stop_atten_db")

    @classmethod
    def heart(cls, family=FilterFamily.BUTTERWORTH, band=HEART_BAND, **kw) -> BandSpec:
        return cls(band[0], band[1], BandKind.HEART, family, **kw)

    @classmethod
    def respiration(cls, family=FilterFamily.BUTTERWORTH, band=RESP_BAND, **kw) -> BandSpec:
        return cls(band[0], band[1], BandKind.RESPIRATION, family, **kw)

    def contains(self, f: float) -> bool:
        return self.low <= f <= self.high

    def check_rate(self, rate: float) -> None:
        if not self.high < rate / 2:
            raise ValueError(f"band ({self.low}, {self.high}) Hz not below Nyquist {rate / 2} Hz")


@dataclass(frozen=True)
class IirCoefficients:
    """Cascade of second-order sections.

    ``sections`` rows are ``(b0, b1, b2, a1, a2)`` with ``a0 = 1`` and each
    numerator scaled to unit peak coefficient; the overall scale is
    ``gain``.
    """

    sections: NDArray[np.float64]
    gain: float

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.sections, dtype=float))
        if s.ndim != 2 or s.shape[1] != 5:
            raise ValueError("sections must be shaped (n, 5)")
        object.__setattr__(self, "sections", s)
        for k, (a1, a2) in enumerate(s[:, 3:]):
            poles = np.roots([1.0, a1, a2])
            if np.any(np.abs(poles) >= 1):
                raise ValueError(f"section {k} unstable: pole magnitude {np.abs(poles).max():.6f}")

    @classmethod
    def from_sos(cls, sos: ArrayLike) -> IirCoefficients:
        sos = np.asarray(sos, dtype=float)
        sos = sos / sos[:, 3:4]  # a0 = 1
        peak = np.abs(sos[:, :3]).max(axis=1)
        return cls(np.column_stack([sos[:, :3] / peak[:, None], sos[:, 4:]]), float(np.prod(peak)))

    @property
    def order(self) -> int:
        return 2 * self.sections.shape[0]

    def to_sos(self) -> NDArray[np.float64]:
        n = self.sections.shape[0]
        sos = np.column_stack([self.sections[:, :3], np.ones(n), self.sections[:, 3:]])
        sos[0, :3] *= self.gain
        return sos

    def poles(self) -> NDArray[np.complex128]:
        return np.concatenate([np.roots([1.0, a1, a2]) for a1, a2 in self.sections[:, 3:]])

    def response(self, freqs: ArrayLike, rate: float) -> NDArray[np.complex128]:
        """Complex frequency response at ``freqs`` (Hz)."""
        freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
        _, h = signal.sosfreqz(self.to_sos(), worN=freqs, fs=rate)
        return h


def design_bandpass(spec: BandSpec, rate: float) -> IirCoefficients:
    spec.check_rate(rate)
    band = [spec.low, spec.high]
    if spec.family is FilterFamily.BUTTERWORTH:
        sos = signal.butter(spec.order, band, btype="bandpass", fs=rate, output="sos")
    else:
        sos = signal.ellip(
            spec.order, spec.ripple_db, spec.stop_atten_db, band, btype="bandpass", fs=rate, output="sos"
        )
    return IirCoefficients.from_sos(sos)


DEFAULT_NOTCH_Q = 10.0


def design_notch(center: float, q: float = DEFAULT_NOTCH_Q, rate: float = 20.0) -> IirCoefficients:
    """Second-order notch with -3 dB width ``center / q``."""
    if not 0 < center < rate / 2:
        raise ValueError(f"notch centre {center} Hz must lie in (0, {rate / 2}) Hz")
    if not q > 0:
        raise ValueError(f"notch q must be positive, got {q}")
    if not center / q < rate / 2:
        raise ValueError(f"notch width {center / q:g} Hz reaches Nyquist; raise q")
    b, a = signal.iirnotch(center, q, fs=rate)
    return IirCoefficients.from_sos(signal.tf2sos(b, a))


def apply_filter(
    coef: IirCoefficients,
    sig: PhaseSignal,
    zero_phase: bool = True,
    padtype: str = "even",
    padlen: int | None = None,
) -> PhaseSignal:
    """Run the cascade over ``sig``.

    With ``zero_phase`` the signal is filtered forward and backward after
    reflection padding. The default mirror (``"even"``) extension over the
    whole window keeps the ringing of the 0.05 Hz band edge far smaller
    than a short odd extension does; ``padtype="odd", padlen=3*order``
    gives the textbook behaviour.
    """
    sos = coef.to_sos()
    x = sig.values
    if zero_phase:
        minimum = 3 * coef.order
        if x.size <= minimum:
            raise ValueError(f"zero-phase filtering needs more than {minimum} samples, got {x.size}")
        pad = x.size - 1 if padlen is None else padlen
        y = signal.sosfiltfilt(sos, x, padtype=padtype, padlen=pad)
    else:
        y = signal.sosfilt(sos, x)
    return sig.with_values(y, Stage.FILTERED)
