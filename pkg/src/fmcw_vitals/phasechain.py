"""From a target-bin complex series to a clean phase signal.

Stages: DC-offset (circle centre) estimation and removal, phase
extraction by unwrapped arctangent or EDACM, first differencing,
impulsive-noise suppression and receive-channel fusion.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import ArrayLike, NDArray
from scipy.signal import lfilter

from .errors import ConvergenceError, DegenerateFitError

MIN_FIT_SAMPLES = 8


class Stage(enum.Enum):
    RAW = "raw"
    UNWRAPPED = "unwrapped"
    DIFFERENCED = "differenced"
    DENOISED = "denoised"
    FUSED = "fused"
    FILTERED = "filtered"


@dataclass(frozen=True)
class IqSeries:
    i: NDArray[np.float64]
    q: NDArray[np.float64]
    rate: float

    def __post_init__(self):
        i = np.asarray(self.i, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if i.ndim != 1 or i.shape != q.shape:
            raise ValueError(f"i and q must be 1-D and equal length, got {i.shape} and {q.shape}")
        if i.size < 2:
            raise ValueError("IqSeries needs at least 2 samples")
        if not (np.all(np.isfinite(i)) and np.all(np.isfinite(q))):
            raise ValueError("IqSeries values must be finite")
        if not self.rate > 0:
            raise ValueError("rate must be positive")
        object.__setattr__(self, "i", i)
        object.__setattr__(self, "q", q)

    @classmethod
    def from_complex(cls, z: ArrayLike, rate: float) -> IqSeries:
        z = np.asarray(z)
        return cls(z.real, z.imag, rate)

    def __len__(self) -> int:
        return self.i.size

    def to_complex(self) -> NDArray[np.complex128]:
        return self.i + 1j * self.q


@dataclass(frozen=True)
class PhaseSignal:
    values: NDArray[np.float64]
    rate: float
    stage: Stage = Stage.RAW

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("phase values must be 1-D")
        if not np.all(np.isfinite(v)):
            raise ValueError("phase values must be finite")
        if not self.rate > 0:
            raise ValueError("rate must be positive")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size

    @property
    def duration(self) -> float:
        return self.values.size / self.rate

    def with_values(self, values: ArrayLike, stage: Stage) -> PhaseSignal:
        return PhaseSignal(np.asarray(values, dtype=float), self.rate, stage)


class DcMethod(enum.Enum):
    GRADIENT_DESCENT = "gd"
    ALGEBRAIC_FIT = "algebraic"


@dataclass(frozen=True)
class DcEstimate:
    """Circle centre (the DC offset) and radius of an I/Q constellation.

    ``radial_spread`` is the RMS deviation of sample distance from the
    fitted radius, relative to that radius. Noise raises it a little; I/Q
    gain imbalance, which stretches the circle into an ellipse, raises it
    a lot. The fit does not correct for imbalance, it only reports it.
    """

    dc_i: float
    dc_q: float
    radius: float
    iterations: int = 0
    final_objective: float = 0.0
    radial_spread: float = 0.0

    @property
    def looks_elliptical(self) -> bool:
        return self.radial_spread > IMBALANCE_SPREAD


# about a 25 % gain mismatch between I and Q on a full circle
IMBALANCE_SPREAD = 0.1


# GD settings
GD_STEP = 1e-2
GD_STEP_MAX = 1.0
GD_MAX_ITER = 10_000
GD_REL_TOL = 1e-10
GD_ABS_TOL = 1e-20  # on unit-scaled data: residuals ~1e-10, an exact circle
_MAX_HALVINGS = 60


def _normalise(iq: IqSeries):
    if len(iq) < MIN_FIT_SAMPLES:
        raise DegenerateFitError(f"circle fit needs >= {MIN_FIT_SAMPLES} samples, got {len(iq)}")
    ci, cq = iq.i.mean(), iq.q.mean()
    x, y = iq.i - ci, iq.q - cq
    scale = math.sqrt(np.mean(x * x + y * y))
    if not scale > 0:
        raise DegenerateFitError("all I/Q samples identical; no circle to fit")
    return x / scale, y / scale, ci, cq, scale


def _kasa(x: NDArray, y: NDArray) -> tuple[float, float, float]:
    # (x-a)^2 + (y-b)^2 = R^2  <=>  2ax + 2by + c = x^2 + y^2,  c = R^2 - a^2 - b^2
    A = np.column_stack([2 * x, 2 * y, np.ones_like(x)])
    sol, _, rank, _ = np.linalg.lstsq(A, x * x + y * y, rcond=None)
    if rank < 3:
        raise DegenerateFitError("I/Q samples are collinear; circle centre undefined")
    a, b, c = sol
    r2 = c + a * a + b * b
    if not r2 > 0:
        raise DegenerateFitError("algebraic fit produced a non-positive radius")
    return float(a), float(b), math.sqrt(r2)


def _objective(x, y, a, b, r):
    res = (x - a) ** 2 + (y - b) ** 2 - r * r
    return float(np.mean(res * res)), res


def _gd(x: NDArray, y: NDArray) -> tuple[float, float, float, int, float]:
    a, b, r = 0.0, 0.0, 1.0
    f, res = _objective(x, y, a, b, r)
    step = GD_STEP
    for it in range(1, GD_MAX_ITER + 1):
        ga = np.mean(-4 * res * (x - a))
        gb = np.mean(-4 * res * (y - b))
        gr = np.mean(-4 * res * r)
        for _ in range(_MAX_HALVINGS):
            na, nb, nr = a - step * ga, b - step * gb, r - step * gr
            nf, nres = _objective(x, y, na, nb, nr)
            if nf < f:
                break
            step /= 2
        else:
            return a, b, abs(r), it, f  # no descent left at machine precision
        decrease = (f - nf) / f if f > 0 else 0.0
        a, b, r, f, res = na, nb, nr, nf, nres
        step = min(2 * step, GD_STEP_MAX)  # regain step length after backtracking
        if decrease < GD_REL_TOL or f < GD_ABS_TOL:
            return a, b, abs(r), it, f
    raise ConvergenceError(
        f"gradient descent did not converge in {GD_MAX_ITER} iterations", f, GD_MAX_ITER
    )


def estimate_dc_offset(iq: IqSeries, method: DcMethod | str = DcMethod.ALGEBRAIC_FIT) -> DcEstimate:
    """Fit a circle to the I/Q constellation and return its centre and radius.

    Both methods minimise ``sum(((I-a)^2 + (Q-b)^2 - R^2)^2)``; the
    algebraic fit solves it in closed form (Kasa), gradient descent
    iterates on ``(a, b, R)``. Data are centred and scaled to unit RMS
    radius first, which keeps the fixed step size meaningful.
    """
    method = DcMethod(method)
    x, y, ci, cq, s = _normalise(iq)
    if method is DcMethod.ALGEBRAIC_FIT:
        a, b, r = _kasa(x, y)
        f, _ = _objective(x, y, a, b, r)
        iters = 0
    else:
        a, b, r, iters, f = _gd(x, y)
        if not r > 0:
            raise DegenerateFitError("gradient descent collapsed to zero radius")
    spread = float(np.sqrt(np.mean((np.hypot(x - a, y - b) - r) ** 2)) / r)
    return DcEstimate(float(ci + s * a), float(cq + s * b), float(s * r), iters, float(f * s**4), spread)


def remove_dc_offset(iq: IqSeries, dc: DcEstimate) -> IqSeries:
    return IqSeries(iq.i - dc.dc_i, iq.q - dc.dc_q, iq.rate)


def _check_nonzero(iq: IqSeries) -> NDArray[np.float64]:
    mag2 = iq.i * iq.i + iq.q * iq.q
    zero = np.flatnonzero(mag2 == 0)
    if zero.size:
        raise ValueError(f"zero-magnitude I/Q sample at index {zero[0]}; phase undefined")
    return mag2


def phase_arctan_unwrap(iq: IqSeries) -> PhaseSignal:
    """Four-quadrant arctangent, unwrapped with a jump threshold of pi."""
    _check_nonzero(iq)
    return PhaseSignal(np.unwrap(np.arctan2(iq.q, iq.i)), iq.rate, Stage.UNWRAPPED)


def phase_edacm(iq: IqSeries) -> PhaseSignal:
    """Extended differentiate-and-cross-multiply demodulation.

    Accumulates ``(I dQ - dI Q) / (I^2 + Q^2)`` starting from the
    arctangent of the first sample. No unwrapping is involved, but each
    increment is ``sin`` of the true step (scaled by the magnitude ratio),
    so fast rotation under-reads.
    """
    mag2 = _check_nonzero(iq)
    i, q = iq.i, iq.q
    inc = (i[1:] * np.diff(q) - np.diff(i) * q[1:]) / mag2[1:]
    out = np.empty(len(iq))
    out[0] = math.atan2(q[0], i[0])
    out[1:] = out[0] + np.cumsum(inc)
    return PhaseSignal(out, iq.rate, Stage.UNWRAPPED)


def phase_difference(phase: PhaseSignal) -> PhaseSignal:
    if len(phase) < 2:
        raise ValueError("phase difference needs at least 2 samples")
    return phase.with_values(np.diff(phase.values), Stage.DIFFERENCED)


class Denoise(enum.Enum):
    MEDIAN = "median"
    EWMA = "ewma"
    MA = "ma"
    WMA = "wma"
    NONE = "none"


DEFAULT_DENOISE_PARAM = {
    Denoise.MEDIAN: 5,
    Denoise.EWMA: 0.3,
    Denoise.MA: 3,
    Denoise.WMA: 3,
    Denoise.NONE: None,
}


def _median(x: NDArray, w: int) -> NDArray:
    half = w // 2
    padded = np.pad(x, half, constant_values=np.nan)
    return np.nanmedian(sliding_window_view(padded, w), axis=1)


def _trailing(x: NDArray, weights: NDArray) -> NDArray:
    # weights[j] multiplies x[n - j]; the window shrinks at the start
    n = x.size
    num = np.convolve(x, weights)[:n]
    den = np.convolve(np.ones(n), weights)[:n]
    return num / den


def denoise_impulsive(phase: PhaseSignal, method: Denoise | str = Denoise.MEDIAN, param=None) -> PhaseSignal:
    """Suppress impulsive spikes.

    ``param`` is the window length for MEDIAN (odd, >= 3), MA and WMA
    (>= 2), or the smoothing factor alpha in (0, 1] for EWMA. MEDIAN is
    centred and shrinks its window at the edges; MA and WMA are trailing
    windows, WMA weighting the newest sample highest.
    """
    method = Denoise(method)
    if param is None:
        param = DEFAULT_DENOISE_PARAM[method]
    x = phase.values
    if method is Denoise.NONE:
        y = x.copy()
    elif method is Denoise.MEDIAN:
        if int(param) != param or param < 3 or param % 2 == 0:
            raise ValueError(f"median window must be odd and >= 3, got {param}")
        y = _median(x, int(param))
    elif method is Denoise.EWMA:
        alpha = float(param)
        if not 0 < alpha <= 1:
            raise ValueError(f"EWMA alpha must be in (0, 1], got {param}")
        if x.size == 0:
            y = x.copy()
        else:
            y, _ = lfilter([alpha], [1, alpha - 1], x, zi=[(1 - alpha) * x[0]])
    else:
        if int(param) != param or param < 2:
            raise ValueError(f"{method.value} window must be an integer >= 2, got {param}")
        w = int(param)
        weights = np.ones(w) if method is Denoise.MA else np.arange(w, 0, -1, dtype=float)
        y = _trailing(x, weights) if x.size else x.copy()
    return phase.with_values(y, Stage.DENOISED)


def fuse_rx_channels(phases: Sequence[PhaseSignal]) -> PhaseSignal:
    """Elementwise mean over channels, summed in list order."""
    if not phases:
        raise ValueError("need at least one channel to fuse")
    first = phases[0]
    for k, p in enumerate(phases[1:], start=1):
        if len(p) != len(first):
            raise ValueError(f"channel {k} has {len(p)} samples, channel 0 has {len(first)}")
        if p.rate != first.rate:
            raise ValueError(f"channel {k} rate {p.rate} differs from {first.rate}")
    acc = first.values.copy()
    for p in phases[1:]:
        acc += p.values
    return PhaseSignal(acc / len(phases), first.rate, Stage.FUSED)
