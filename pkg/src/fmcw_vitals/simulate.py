"""Synthetic FMCW scenes with known cardiopulmonary ground truth.

The intermediate-frequency signal is generated directly: every reflector
at range ``R`` contributes a fast-time tone at its beat frequency whose
slow-time phase is ``4*pi*(R + r(t))/lambda``, with ``r`` the chest
displacement for the subject and zero for static clutter.

Randomness is drawn from one stream per frame, keyed on ``(seed, frame)``,
so a cube is identical no matter how frames are partitioned for work.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .ingest import DataCube, GroundTruthRow, RadarConfig

_NOISE_STREAM = 0
_IMPULSE_STREAM = 1


@dataclass(frozen=True)
class ChestModel:
    """Chest-wall displacement model.

    Rates are in Hz and amplitudes in metres. ``resp_harmonics`` holds
    ``(k, relative_amplitude)`` pairs, each adding a sine at ``k`` times the
    breathing rate with amplitude ``relative_amplitude * resp_amp``.
    """

    resp_rate: float = 0.25
    resp_amp: float = 4e-3
    heart_rate: float = 1.2
    heart_amp: float = 0.3e-3
    resp_harmonics: tuple[tuple[int, float], ...] = ((2, 0.4),)
    resp_phase: float = 0.0
    heart_phase: float = 0.0
    harmonic_phases: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(
            self, "resp_harmonics", tuple((int(k), float(c)) for k, c in self.resp_harmonics)
        )
        object.__setattr__(self, "harmonic_phases", tuple(float(p) for p in self.harmonic_phases))
        for k, c in self.resp_harmonics:
            if k < 2:
                raise ValueError(f"harmonic index must be >= 2, got {k}")
            if c < 0:
                raise ValueError(f"harmonic amplitude must be >= 0, got {c}")
        if self.harmonic_phases and len(self.harmonic_phases) != len(self.resp_harmonics):
            raise ValueError("harmonic_phases must match resp_harmonics in length")

    def validate_physiological(self) -> None:
        """Raise if the model leaves the supported physiological envelope."""
        checks = (
            ("resp_amp", self.resp_amp, 0.5e-3, 20e-3),
            ("heart_amp", self.heart_amp, 0.05e-3, 1e-3),
            ("resp_rate", self.resp_rate, 0.05, 0.7),
            ("heart_rate", self.heart_rate, 0.6, 4.0),
        )
        for name, value, lo, hi in checks:
            if not lo <= value <= hi:
                raise ValueError(f"{name}={value} outside [{lo}, {hi}]")


def chest_displacement(chest: ChestModel, t: ArrayLike) -> NDArray[np.float64]:
    """Displacement ``r(t)`` in metres at times ``t`` (seconds)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be non-negative")
    two_pi = 2 * np.pi
    r = chest.resp_amp * np.sin(two_pi * chest.resp_rate * t + chest.resp_phase)
    phases = chest.harmonic_phases or (0.0,) * len(chest.resp_harmonics)
    for (k, rel), ph in zip(chest.resp_harmonics, phases):
        r = r + rel * chest.resp_amp * np.sin(two_pi * k * chest.resp_rate * t + ph)
    r = r + chest.heart_amp * np.sin(two_pi * chest.heart_rate * t + chest.heart_phase)
    return r


@dataclass(frozen=True)
class Scene:
    """One subject plus static reflectors, seen by every receive channel.

    ``dc_offset`` is a static complex term riding on the subject's own beat
    tone, in units of the subject amplitude (scalar or one per channel).
    It shifts the centre of the subject's slow-time I/Q constellation
    exactly as hardware leakage and same-range static returns do.
    ``impulse_amp`` is the size in radians of random-sign phase spikes
    that hit the subject return at Poisson times with ``impulse_rate`` per
    second. ``noise_snr_db`` is the per-sample ratio of subject power to
    complex white Gaussian noise power; ``inf`` disables noise.
    """

    target_range: float
    chest: ChestModel = field(default_factory=ChestModel)
    clutter: tuple[tuple[float, complex], ...] = ()
    noise_snr_db: float = math.inf
    dc_offset: complex | Sequence[complex] = 0j
    impulse_rate: float = 0.0
    impulse_amp: float = 0.0
    rx_gains: Sequence[complex] | None = None
    target_amplitude: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "clutter", tuple((float(r), complex(a)) for r, a in self.clutter))
        ranges = [r for r, _ in self.clutter]
        if len(set(ranges)) != len(ranges):
            raise ValueError("clutter ranges must be distinct")
        if self.target_range <= 0:
            raise ValueError("target_range must be positive")
        if self.impulse_rate < 0:
            raise ValueError("impulse_rate must be non-negative")

    def check_config(self, config: RadarConfig) -> None:
        limit = config.max_range
        for name, r in [("target_range", self.target_range)] + [("clutter", r) for r, _ in self.clutter]:
            if not 0 < r < limit:
                raise ValueError(f"{name} {r} m outside unambiguous range (0, {limit:.3f}) m")

    def per_channel(self, value, rx_count: int) -> NDArray[np.complex128]:
        arr = np.atleast_1d(np.asarray(value, dtype=complex))
        if arr.size == 1:
            return np.full(rx_count, arr[0])
        if arr.size != rx_count:
            raise ValueError(f"expected 1 or {rx_count} per-channel values, got {arr.size}")
        return arr


@dataclass(frozen=True)
class GroundTruth:
    """Per-frame truth: rates, chest displacement and the subject's phase."""

    frame_times: NDArray[np.float64]
    sample_times: NDArray[np.float64]
    displacement: NDArray[np.float64]
    phase: NDArray[np.float64]
    hr_bpm: NDArray[np.float64]
    rr_rpm: NDArray[np.float64]
    impulse_frames: NDArray[np.int64]

    def rows(self) -> list[GroundTruthRow]:
        return [
            GroundTruthRow(n, float(t), float(h), float(r))
            for n, (t, h, r) in enumerate(zip(self.frame_times, self.hr_bpm, self.rr_rpm))
        ]


def frame_rng(seed: int, stream: int, frame: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream, frame))
    return np.random.Generator(np.random.PCG64(ss))


def frame_sample_times(config: RadarConfig) -> NDArray[np.float64]:
    """Slow-time instant of each frame: the midpoint of its chirp block."""
    chirp_block = config.chirps_per_frame * (config.ramp_end_time + config.idle_time)
    return np.arange(config.frame_count) * config.frame_period + chirp_block / 2


def _impulses(scene: Scene, config: RadarConfig, seed: int) -> NDArray[np.float64]:
    spikes = np.zeros(config.frame_count)
    if scene.impulse_rate == 0 or scene.impulse_amp == 0:
        return spikes
    lam = scene.impulse_rate * config.frame_period
    for n in range(config.frame_count):
        rng = frame_rng(seed, _IMPULSE_STREAM, n)
        count = rng.poisson(lam)
        if count:
            signs = rng.choice((-1.0, 1.0), size=count)
            spikes[n] = scene.impulse_amp * signs.sum()
    return spikes


def synthesize_cube(
    scene: Scene,
    config: RadarConfig,
    seed: int = 0,
    dtype=np.complex128,
) -> tuple[DataCube, GroundTruth]:
    scene.check_config(config)
    c = config
    k = np.arange(c.adc_samples)
    t_frames = frame_sample_times(c)
    lam = c.wavelength
    rx = c.rx_count
    gains = scene.per_channel(1.0 if scene.rx_gains is None else scene.rx_gains, rx)
    dc = scene.per_channel(scene.dc_offset, rx)

    def tone(r):
        return np.exp(2j * np.pi * c.beat_frequency(r) * k / c.sample_rate)

    r_t = chest_displacement(scene.chest, t_frames)
    phase = 4 * np.pi * (scene.target_range + r_t) / lam
    spikes = _impulses(scene, c, seed)
    slow = np.exp(1j * (phase + spikes))  # (frames,)
    a = scene.target_amplitude
    # (samples, frames, rx)
    clean = a * tone(scene.target_range)[:, None, None] * (slow[None, :, None] + dc[None, None, :])
    for r, refl in scene.clutter:
        static = refl * np.exp(4j * np.pi * r / lam)
        clean = clean + static * tone(r)[:, None, None]
    clean = clean * gains[None, None, :]

    samples = np.empty((c.adc_samples, c.chirps_per_frame, c.frame_count, rx), dtype=dtype)
    noisy = math.isfinite(scene.noise_snr_db)
    sigma = a * 10 ** (-scene.noise_snr_db / 20) / math.sqrt(2) if noisy else 0.0
    for n in range(c.frame_count):
        frame = np.broadcast_to(clean[:, None, n, :], (c.adc_samples, c.chirps_per_frame, rx))
        if noisy:
            g = frame_rng(seed, _NOISE_STREAM, n).standard_normal((c.adc_samples, c.chirps_per_frame, rx, 2))
            frame = frame + sigma * (g[..., 0] + 1j * g[..., 1])
        samples[:, :, n, :] = frame

    chest = scene.chest
    truth = GroundTruth(
        frame_times=np.arange(c.frame_count) * c.frame_period,
        sample_times=t_frames,
        displacement=r_t,
        phase=phase,
        hr_bpm=np.full(c.frame_count, 60 * chest.heart_rate),
        rr_rpm=np.full(c.frame_count, 60 * chest.resp_rate),
        impulse_frames=np.flatnonzero(spikes),
    )
    return DataCube(samples, c), truth


def random_scene(
    rng: np.random.Generator,
    config: RadarConfig,
    rr_rpm: tuple[float, float] = (8.0, 30.0),
    hr_bpm: tuple[float, float] = (50.0, 110.0),
    snr_db: float = 10.0,
    harmonic_ratio: float = 0.4,
    min_harmonic_gap_hz: float = 0.1,
    clutter: bool = True,
    dc_offset: bool = True,
    impulses: bool = True,
) -> Scene:
    """Draw a single-subject scene with randomised rates, phases and nuisances.

    Chest amplitudes stay small enough (breathing 1.5-2.5 mm, heart
    0.2-0.5 mm) that the frame-to-frame phase step stays below pi at a
    20 Hz frame rate. Heart rates closer than ``min_harmonic_gap_hz`` to
    twice the breathing rate are redrawn: there the two are not
    separable by frequency.
    """
    while True:
        rr = rng.uniform(*rr_rpm) / 60
        hr = rng.uniform(*hr_bpm) / 60
        if abs(hr - 2 * rr) > min_harmonic_gap_hz:
            break
    resp_amp = rng.uniform(1.5e-3, 2.5e-3)
    heart_amp = rng.uniform(0.2e-3, 0.5e-3)
    ph = rng.uniform(0, 2 * np.pi, 3)
    chest = ChestModel(
        resp_rate=rr,
        resp_amp=resp_amp,
        heart_rate=hr,
        heart_amp=heart_amp,
        resp_harmonics=((2, harmonic_ratio),),
        resp_phase=ph[0],
        heart_phase=ph[1],
        harmonic_phases=(ph[2],),
    )
    bin_res = config.bin_resolution
    target = rng.uniform(0.6, 1.4)
    refl: list[tuple[float, complex]] = []
    if clutter:
        for _ in range(int(rng.integers(1, 3))):
            while True:
                r = rng.uniform(0.3, min(2.5, 0.8 * config.max_range))
                if abs(r - target) > 4 * bin_res and all(abs(r - q) > 2 * bin_res for q, _ in refl):
                    break
            refl.append((r, rng.uniform(1, 5) * np.exp(1j * rng.uniform(0, 2 * np.pi))))
    rx = config.rx_count
    dc = 0j
    if dc_offset:
        dc = rng.uniform(0.05, 0.5, rx) * np.exp(1j * rng.uniform(0, 2 * np.pi, rx))
    return Scene(
        target_range=target,
        chest=chest,
        clutter=tuple(refl),
        noise_snr_db=snr_db,
        dc_offset=dc,
        impulse_rate=0.1 if impulses else 0.0,
        impulse_amp=0.5 if impulses else 0.0,
        rx_gains=np.exp(1j * rng.uniform(0, 2 * np.pi, rx)),
    )
