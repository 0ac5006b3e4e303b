"""Prony decomposition into damped sinusoids.

Forward linear prediction of order ``M`` over ``N - M`` equations gives
the characteristic polynomial; its roots (companion-matrix eigenvalues)
set frequency and damping, and a second least-squares pass fits
amplitude and phase against the damped-cosine basis.

Plain least-squares prediction degrades quickly with noise when the
sampling rate is far above the modes of interest. Passing a
``prediction_order`` L > M switches to the long-prediction variant:
the order-L system is solved with its SVD truncated to rank M, and the
M roots closest to the unit circle are kept (Kumaresan-Tufts).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import NDArray

from ..errors import EstimationError
from ..filters import BandSpec
from ..phasechain import PhaseSignal
from ._common import check_signal, in_guard

DAMPING_MAX = 0.05
GUARD_HZ = 0.05
_AMP_FLOOR = 1e-9  # relative; smaller components are numerical dust


@dataclass(frozen=True)
class PronyComponent:
    freq: float  # Hz
    damping: float  # per sample, ln|r|
    amplitude: float
    phase: float  # rad

    def evaluate(self, n: NDArray, rate: float) -> NDArray[np.float64]:
        w = 2 * np.pi * self.freq / rate
        return self.amplitude * np.exp(self.damping * n) * np.cos(w * n + self.phase)

    def rms_envelope(self, n_samples: int) -> float:
        """RMS of the amplitude envelope over ``n_samples`` samples."""
        n = np.arange(n_samples)
        return float(self.amplitude * np.sqrt(np.mean(np.exp(2 * self.damping * n))))


def prediction_system(x: NDArray, order: int) -> tuple[NDArray, NDArray]:
    """Rows ``[x[n-M], ..., x[n-1]]`` and targets ``x[n]`` for n = M..N-1."""
    return sliding_window_view(x[:-1], order), x[order:]


def companion(coeffs: NDArray) -> NDArray[np.float64]:
    """Companion matrix with ones above the diagonal and ``-coeffs`` as last row."""
    m = coeffs.size
    C = np.zeros((m, m))
    C[np.arange(m - 1), np.arange(1, m)] = 1.0
    C[-1] = -coeffs
    return C


def _closest_to_circle(roots: NDArray, order: int) -> NDArray[np.complex128]:
    # walk upper-half roots by distance to |z| = 1; a complex root brings its conjugate
    upper = roots[roots.imag >= 0]
    upper = upper[np.argsort(np.abs(np.abs(upper) - 1), kind="stable")]
    picked, weight = [], 0
    for z in upper:
        if weight >= order:
            break
        picked.append(z)
        weight += 1 if z.imag == 0 else 2
    picked = np.asarray(picked)
    return np.concatenate([picked, picked[picked.imag > 0].conj()])


def prony_roots(x: NDArray, order: int, prediction_order: int | None = None) -> NDArray[np.complex128]:
    L = order if prediction_order is None else int(prediction_order)
    if L < order:
        raise ValueError(f"prediction order {L} below model order {order}")
    H, target = prediction_system(x, L)
    if not np.any(H):
        raise EstimationError("Prony prediction matrix is all zero (rank deficient)")
    if L == order:
        coeffs, *_ = np.linalg.lstsq(H, -target, rcond=None)
    else:
        U, sv, Vt = np.linalg.svd(H, full_matrices=False)
        k = min(order, int(np.sum(sv > sv[0] * 1e-12)))
        coeffs = -(Vt[:k].T @ ((U[:, :k].T @ target) / sv[:k]))
    roots = np.linalg.eigvals(companion(coeffs))
    if np.all(np.abs(roots) > 10):
        raise EstimationError("Prony roots all far outside the unit circle; fit ill-conditioned")
    if L > order:
        roots = _closest_to_circle(roots, order)
    return roots


def prony_fit(
    sig: PhaseSignal, model_order: int, prediction_order: int | None = None
) -> list[PronyComponent]:
    """Decompose ``sig`` into at most ``model_order`` damped sinusoids.

    One root of each conjugate pair is kept. Real roots give a single
    column (phase 0 or pi); complex roots give a cosine and a sine column.
    Components are returned strongest first.
    """
    x = sig.values
    N, M = x.size, int(model_order)
    if M < 2:
        raise ValueError(f"model order must be >= 2, got {model_order}")
    if N < 3 * M:
        raise ValueError(f"Prony needs at least {3 * M} samples for order {M}, got {N}")
    if prediction_order is not None and N < 2 * prediction_order:
        raise ValueError(f"prediction order {prediction_order} needs at least {2 * prediction_order} samples")
    roots = prony_roots(x, M, prediction_order)
    roots = roots[(roots.imag >= 0) & (np.abs(roots) > 0)]

    n = np.arange(N)
    cols, owner = [], []
    for k, r in enumerate(roots):
        alpha, w = np.log(np.abs(r)), np.angle(r)
        # keep columns finite for growing modes; amplitude is rescaled below
        env = np.exp(alpha * n - max(0.0, alpha * (N - 1)))
        basis = [env * np.cos(w * n)]
        if r.imag != 0:
            basis.append(-env * np.sin(w * n))
        for b in basis:
            nrm = np.linalg.norm(b)
            cols.append(b / nrm if nrm > 0 else b)
            owner.append((k, nrm * np.exp(-max(0.0, alpha * (N - 1)))))
    coef, *_ = np.linalg.lstsq(np.column_stack(cols), x, rcond=None)

    parts: dict[int, list[float]] = {}
    for c, (k, scale) in zip(coef, owner):
        parts.setdefault(k, []).append(c / scale if scale > 0 else 0.0)
    comps = []
    for k, r in enumerate(roots):
        re = parts[k][0]
        im = parts[k][1] if len(parts[k]) > 1 else 0.0
        amp = float(np.hypot(re, im))
        comps.append(
            PronyComponent(
                freq=float(np.angle(r) * sig.rate / (2 * np.pi)),
                damping=float(np.log(np.abs(r))),
                amplitude=amp,
                phase=float(np.arctan2(im, re)),
            )
        )
    if not comps:
        raise EstimationError("Prony fit produced no components")
    top = max(c.amplitude for c in comps)
    comps = [c for c in comps if c.amplitude > _AMP_FLOOR * top]
    comps.sort(key=lambda c: (-c.amplitude, c.freq))
    return comps


def reconstruct(comps: list[PronyComponent], n_samples: int, rate: float) -> NDArray[np.float64]:
    n = np.arange(n_samples)
    out = np.zeros(n_samples)
    for c in comps:
        out += c.evaluate(n, rate)
    return out


def prony_estimate(
    sig: PhaseSignal,
    band: BandSpec,
    model_order: int,
    rr_hint: float | None = None,
    damping_max: float = DAMPING_MAX,
    guard_hz: float = GUARD_HZ,
    prediction_order: int | None = None,
    fold_harmonic: bool = False,
    relax_damping: bool = False,
) -> tuple[float, list[PronyComponent]]:
    """Frequency of the strongest in-band, lightly damped component.

    Strength is the RMS envelope over the window rather than the
    amplitude at sample 0, so a decaying edge transient does not outrank
    a steady oscillation. With ``rr_hint`` (Hz) components within
    ``guard_hz`` of twice that rate are rejected as the breathing second
    harmonic. ``fold_harmonic`` is for the breathing band itself: when
    the winner sits at twice the frequency of another component with at
    least half its strength, the lower one is reported.

    ``relax_damping`` drops the damping limit when nothing in band passes
    it. On windows only a couple of cycles long the band-pass edge
    response can make even the true mode look damped.
    """
    check_signal(sig.values, "Prony")
    comps = prony_fit(sig, model_order, prediction_order)
    in_band = [c for c in comps if band.contains(c.freq) and not in_guard(c.freq, rr_hint, guard_hz)]
    keep = [c for c in in_band if abs(c.damping) <= damping_max]
    if not keep and relax_damping:
        keep = in_band
    if not keep:
        raise EstimationError("no Prony component survives the band, damping and harmonic filters")
    n = len(sig)
    best = max(keep, key=lambda c: (c.rms_envelope(n), -c.freq))
    if fold_harmonic:
        strength = best.rms_envelope(n)
        for c in sorted(keep, key=lambda c: c.freq):
            if abs(best.freq - 2 * c.freq) <= guard_hz and c.rms_envelope(n) >= 0.5 * strength:
                return c.freq, comps
    return best.freq, comps
