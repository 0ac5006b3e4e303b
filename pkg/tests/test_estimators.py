from __future__ import annotations

import time

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from fmcw_vitals.errors import EstimationError
from fmcw_vitals.estimators import (
    CtfMode,
    SpectrumResult,
    ctf_estimate,
    improved_fft,
    music_estimate,
    prony_estimate,
    prony_fit,
)
from fmcw_vitals.estimators.music import lag_covariance, music_pseudospectrum, noise_subspace
from fmcw_vitals.estimators.prony import PronyComponent, prony_roots, reconstruct
from fmcw_vitals.filters import BandSpec, apply_filter, design_bandpass

from conftest import RATE, as_signal, tone

HEART = BandSpec.heart()
RESP = BandSpec.respiration()


# spectrum container


def test_spectrum_peaks_sorted_and_local():
    f = np.linspace(0, 1, 11)
    p = np.array([0, 3, 1, 5, 1, 2, 0, 5, 0, 1, 0.0])
    s = SpectrumResult.build(f, p)
    assert [pk[1] for pk in s.peaks] == sorted((pk[1] for pk in s.peaks), reverse=True)
    # equal powers: lower frequency first
    assert s.peaks[0][0] == pytest.approx(0.3) and s.peaks[1][0] == pytest.approx(0.7)
    for fk, _ in s.peaks:
        k = int(round(fk * 10))
        assert p[k] > p[k - 1] and p[k] >= p[k + 1]


def test_spectrum_grid_must_increase():
    with pytest.raises(ValueError):
        SpectrumResult(np.array([0.0, 0.0]), np.array([1.0, 2.0]))


# improved FFT


def test_fft_resolution_unpadded():
    _, spec = improved_fft(as_signal(tone(1.0)), BandSpec(0.05, 9.9), pad_factor=1)
    assert np.diff(spec.freqs) == pytest.approx(20 / 600)
    assert 20 / 600 == pytest.approx(0.0333, abs=1e-4)


def test_fft_pure_tone():
    est, _ = improved_fft(as_signal(tone(1.25)), HEART, pad_factor=8)
    assert abs(est - 1.25) <= 0.005


@settings(max_examples=60, deadline=None)
@given(st.floats(0.7, 3.9), st.sampled_from([2, 4, 8, 16]), st.floats(0, 2 * np.pi))
def test_fft_error_half_grid_step(f, pad, ph):
    n = 600
    est, _ = improved_fft(as_signal(tone(f, n=n, phase=ph)), HEART, pad_factor=pad)
    # leakage from the negative-frequency image shifts the peak slightly for few cycles
    assert abs(est - f) <= RATE / (pad * n) / 2 + 2e-3


def test_fft_notch_removes_second_harmonic():
    x = tone(0.3) + 1.0 * tone(0.6, phase=0.4) + 1.0 * tone(1.3, phase=1.1) * 0.5
    hr_sig = apply_filter(design_bandpass(HEART, RATE), as_signal(x))
    est, _ = improved_fft(hr_sig, HEART, 8, notch_at=0.6)
    assert abs(est - 1.3) <= 0.01


def test_fft_zero_signal():
    with pytest.raises(EstimationError):
        improved_fft(as_signal(np.zeros(600)), HEART)


def test_fft_bad_pad():
    with pytest.raises(ValueError):
        improved_fft(as_signal(tone(1.0)), HEART, pad_factor=0)


# coarse-to-fine


def test_ctf_clean_tone_72_bpm():
    sig = as_signal(tone(1.2, n=600, phase=-np.pi / 2))  # sine: no extremum on the edges
    for mode in CtfMode:
        bpm, diag = ctf_estimate(sig, mode)
        assert diag.valid_pairs == 36
        assert diag.coarse_bpm == 72.0
        assert bpm == pytest.approx(72.0, abs=0.3)


def test_ctf_histogram_discards_spike_pair():
    x = tone(1.2, n=600, phase=-np.pi / 2)
    rising = np.flatnonzero((np.diff(x) > 0.1))[5]
    x[rising] += 1.0  # one-sample bump on a rising slope: extra peak, valley right after
    bpm, diag = ctf_estimate(as_signal(x), CtfMode.HISTOGRAM)
    assert diag.peak_valley_distances.size == 37
    assert diag.peak_valley_distances.min() == 1
    assert diag.valid_pairs == 36 and diag.coarse_bpm == 72.0


def test_ctf_constant_signal():
    with pytest.raises(EstimationError):
        ctf_estimate(as_signal(np.full(600, 0.5)))


@settings(max_examples=60, deadline=None)
@given(st.floats(0.7, 3.0), st.sampled_from([20.0, 30.0]), st.floats(0, 2 * np.pi))
def test_ctf_coarse_counts_cycles(f, T, ph):
    n = int(T * RATE)
    _, diag = ctf_estimate(as_signal(tone(f, n=n, phase=ph)))
    # one pair per cycle; a partial cycle at each edge can go either way
    assert f * T - 2 < diag.valid_pairs <= f * T + 1
    assert diag.fine_bpm == pytest.approx(60 * f, abs=60 * RATE / (8 * n))


# MUSIC


def test_music_respiration_0p153():
    est, spec = music_estimate(as_signal(tone(0.153)), RESP, n_sources=1)
    assert abs(est - 0.153) <= 1e-3
    assert 60 * est == pytest.approx(9.2, abs=0.1)


def test_music_dominant_1p319():
    x = 3 * tone(1.319) + tone(1.037, phase=0.5)
    t0 = time.perf_counter()
    est, spec = music_estimate(as_signal(x), HEART, lag_dim=100, n_sources=2)
    dt = time.perf_counter() - t0
    assert abs(est - 1.319) <= 1e-3
    assert 60 * est == pytest.approx(79.14, abs=0.1)
    peak_freqs = [f for f, _ in spec.peaks]
    assert min(abs(np.array(peak_freqs) - 1.037)) <= 1e-3
    assert dt < 0.5


def test_music_zero_signal():
    with pytest.raises(EstimationError, match="rank deficient"):
        music_estimate(as_signal(np.zeros(600)), HEART)


def test_music_dimension_checks():
    with pytest.raises(ValueError):
        music_estimate(as_signal(tone(1.0)), HEART, lag_dim=4, n_sources=2)
    with pytest.raises(ValueError):
        music_estimate(as_signal(tone(1.0, n=150)), HEART, lag_dim=100)


def test_music_guard_skips_harmonic():
    x = tone(0.6 + 0.35) * 2 + tone(1.25)  # strong component at 2 x 0.475
    est, _ = music_estimate(as_signal(x), HEART, n_sources=2, rr_hint=0.475)
    assert abs(est - 1.25) <= 1e-3
    est, _ = music_estimate(as_signal(x), HEART, n_sources=2)
    assert abs(est - 0.95) <= 1e-3


def test_music_fold_harmonic_reports_fundamental():
    x = tone(0.2) + 1.2 * tone(0.4, phase=1.0)
    est, _ = music_estimate(as_signal(x), RESP, n_sources=2, fold_harmonic=True)
    assert abs(est - 0.2) <= 1e-3
    est, _ = music_estimate(as_signal(x), RESP, n_sources=2)
    assert abs(est - 0.4) <= 1e-3


@settings(max_examples=30, deadline=None)
@given(st.floats(0.7, 3.5), st.floats(1e-3, 1e3), st.booleans(), st.integers(0, 2**32 - 1))
def test_music_scale_invariant(f, scale, neg, seed):
    rng = np.random.default_rng(seed)
    x = tone(f) + 0.1 * rng.standard_normal(600)
    c = -scale if neg else scale
    a, sa = music_estimate(as_signal(x), HEART, n_sources=1)
    b, sb = music_estimate(as_signal(c * x), HEART, n_sources=1)
    assert a == b
    ratio = sb.power / sa.power
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.7, 3.9), min_size=1, max_size=2), st.integers(0, 2**32 - 1))
def test_music_noiseless_peaks_at_every_source(freqs, seed):
    assume(len(freqs) == 1 or abs(freqs[0] - freqs[1]) > 2e-3)
    rng = np.random.default_rng(seed)
    x = sum(rng.uniform(0.5, 2) * tone(f, phase=rng.uniform(0, 6.28)) for f in freqs)
    _, spec = music_estimate(as_signal(x), HEART, n_sources=len(freqs))
    pk = np.array([p for p, _ in spec.peaks])
    for f in freqs:
        assert np.min(np.abs(pk - f)) <= 1e-3 + 1e-12


def test_music_pseudospectrum_orthogonality():
    x = tone(1.5)
    En = noise_subspace(lag_covariance(x, 40), 1)
    p = music_pseudospectrum(En, np.array([1.5, 1.0]), RATE)
    assert p[0] > 1e8 * p[1]


# Prony


def test_prony_geometric_sequence():
    n = np.arange(60)
    comps = prony_fit(as_signal(2 * 0.9**n), 2)
    assert len(comps) == 1
    c = comps[0]
    assert c.freq == 0.0
    assert c.damping == pytest.approx(np.log(0.9), abs=1e-9)
    assert c.amplitude == pytest.approx(2.0, abs=1e-9)


def test_prony_exact_cosine():
    t0 = time.perf_counter()
    comps = prony_fit(as_signal(tone(1.3)), 2)
    assert time.perf_counter() - t0 < 0.05
    c = comps[0]
    assert abs(c.freq - 1.3) <= 1e-6 and abs(c.damping) <= 1e-8 and abs(c.amplitude - 1) <= 1e-6


def test_prony_two_tones_order_preserved():
    x = tone(0.25) + 0.05 * tone(1.3)
    comps = prony_fit(as_signal(x), 4)
    assert abs(comps[0].freq - 0.25) <= 1e-4 and abs(comps[1].freq - 1.3) <= 1e-4
    assert comps[0].amplitude > comps[1].amplitude
    # FFT oracle at heavy padding agrees on the strong line
    spec = np.abs(np.fft.rfft(x, 600 * 64))
    f = np.fft.rfftfreq(600 * 64, 1 / RATE)
    assert abs(f[np.argmax(spec)] - comps[0].freq) <= 1e-3  # leakage bias of a 7.5-cycle tone


def test_prony_long_prediction_survives_noise():
    rng = np.random.default_rng(0)
    x = tone(1.1) + 0.3 * rng.standard_normal(600)
    hr = apply_filter(design_bandpass(HEART, RATE), as_signal(x))
    est, _ = prony_estimate(hr, HEART, 8, damping_max=1 / 600, prediction_order=200)
    assert abs(est - 1.1) < 0.01


def test_prony_size_checks():
    with pytest.raises(ValueError):
        prony_fit(as_signal(tone(1.0, n=5)), 2)
    with pytest.raises(ValueError):
        prony_fit(as_signal(tone(1.0)), 1)


def test_prony_zero_signal():
    with pytest.raises(EstimationError):
        prony_estimate(as_signal(np.zeros(600)), HEART, 4)
    with pytest.raises(EstimationError):
        prony_roots(np.zeros(100), 4)


def test_prony_estimate_single_tone():
    est, _ = prony_estimate(as_signal(tone(2.2)), HEART, 2)
    assert est == pytest.approx(2.2, abs=1e-6)


def test_prony_estimate_rejects_harmonic_at_rr_hint():
    rr = 0.4
    x = tone(2 * rr, phase=0.2) + tone(1.35, phase=1.0) + 0.2 * tone(rr)
    est, comps = prony_estimate(as_signal(x), HEART, 6, rr_hint=rr)
    assert est == pytest.approx(1.35, abs=1e-4)
    assert any(abs(c.freq - 0.8) < 1e-4 for c in comps)


def test_prony_estimate_all_out_of_band():
    with pytest.raises(EstimationError, match="survives"):
        prony_estimate(as_signal(tone(0.3)), HEART, 2)


def test_prony_relax_damping_fallback():
    x = np.exp(-0.01 * np.arange(600)) * tone(1.5)
    with pytest.raises(EstimationError, match="survives"):
        prony_estimate(as_signal(x), HEART, 2, damping_max=1 / 600)
    est, _ = prony_estimate(as_signal(x), HEART, 2, damping_max=1 / 600, relax_damping=True)
    assert est == pytest.approx(1.5, abs=1e-6)
    # the limit still wins when something passes it
    y = x + 0.1 * tone(2.5)
    est, _ = prony_estimate(as_signal(y), HEART, 4, damping_max=1 / 600, relax_damping=True)
    assert est == pytest.approx(2.5, abs=1e-6)


def test_prony_fold_harmonic():
    x = tone(0.2) + 1.3 * tone(0.4, phase=0.7)
    est, _ = prony_estimate(as_signal(x), RESP, 4, fold_harmonic=True)
    assert est == pytest.approx(0.2, abs=1e-6)


def test_component_envelope():
    c = PronyComponent(1.0, np.log(0.99), 2.0, 0.0)
    n = 100
    expected = 2.0 * np.sqrt(np.mean(0.99 ** (2 * np.arange(n))))
    assert c.rms_envelope(n) == pytest.approx(expected)


def _damped_sum(spec, n=300):
    k = np.arange(n)
    return sum(a * np.exp(d * k) * np.cos(2 * np.pi * f * k / RATE + p) for f, d, a, p in spec)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_prony_roots_conjugate_pairs(seed, k):
    rng = np.random.default_rng(seed)
    x = _damped_sum([(rng.uniform(0.1, 9), -rng.uniform(0, 0.01), 1, rng.uniform(0, 6)) for _ in range(k)])
    x = x + 1e-3 * rng.standard_normal(x.size)
    r = prony_roots(x, 2 * k)
    for z in r[np.abs(r.imag) > 1e-9]:
        assert np.min(np.abs(r - np.conj(z))) <= 1e-9 * max(1, abs(z))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_prony_reconstruction_residual(seed, k):
    rng = np.random.default_rng(seed)
    fs = np.sort(rng.uniform(0.2, 9.5, k))
    assume(k == 1 or np.min(np.diff(fs)) > 0.2)
    spec = [(f, -rng.uniform(0, 0.005), rng.uniform(0.5, 2), rng.uniform(0, 6)) for f in fs]
    x = _damped_sum(spec)
    comps = prony_fit(as_signal(x), 2 * k)
    rms = np.sqrt(np.mean(x**2))
    res = np.sqrt(np.mean((x - reconstruct(comps, x.size, RATE)) ** 2))
    assert res <= 1e-6 * rms
