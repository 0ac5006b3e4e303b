"""File boundary: radar configuration, raw I/Q cubes and CSV records.

Raw cube format
---------------
Interleaved signed 16-bit little-endian I/Q pairs, no header. The byte
count is always ``adc_samples * chirps_per_frame * frame_count * rx_count
* 4``. :class:`Layout` selects which half of each pair comes first and
whether the receive channel varies slower or faster than the fast-time
sample index. Frames are outermost and chirps come next in every layout.
"""
from __future__ import annotations

import csv
import dataclasses
import enum
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigError, CubeFormatError

log = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0

_INT_FIELDS = ("adc_samples", "frame_count", "chirps_per_frame", "tx_count", "rx_count")
_FLOAT_FIELDS = (
    "start_freq",
    "bandwidth",
    "sample_rate",
    "ramp_end_time",
    "idle_time",
    "frame_period",
)


@dataclass(frozen=True)
class RadarConfig:
    """Chirp, frame and antenna parameters of an FMCW capture.

    Units are SI throughout (Hz, s). Derived quantities are exposed as
    properties so they cannot drift out of sync with the raw fields.
    """

    start_freq: float
    bandwidth: float
    adc_samples: int
    sample_rate: float
    ramp_end_time: float
    idle_time: float
    frame_count: int
    frame_period: float
    chirps_per_frame: int
    tx_count: int
    rx_count: int

    def __post_init__(self):
        for name in _INT_FIELDS + _FLOAT_FIELDS:
            value = getattr(self, name)
            if not isinstance(value, (int, float, np.integer, np.floating)) or isinstance(value, bool):
                raise ConfigError(f"{name} must be numeric, got {value!r}")
            if not math.isfinite(value) or value <= 0:
                raise ConfigError(f"{name} must be positive, got {value!r}")
        for name in _INT_FIELDS:
            value = getattr(self, name)
            if int(value) != value:
                raise ConfigError(f"{name} must be an integer count, got {value!r}")
            object.__setattr__(self, name, int(value))
        for name in _FLOAT_FIELDS:
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.adc_samples < 8:
            raise ConfigError(f"adc_samples must be >= 8, got {self.adc_samples}")
        if self.adc_samples / self.sample_rate > self.ramp_end_time * (1 + 1e-9):
            raise ConfigError(
                f"ADC window {self.adc_samples / self.sample_rate:.3e} s exceeds "
                f"ramp_end_time {self.ramp_end_time:.3e} s"
            )

    @property
    def slow_time_rate(self) -> float:
        return 1.0 / self.frame_period

    @property
    def chirp_duration(self) -> float:
        return self.ramp_end_time

    @property
    def center_freq(self) -> float:
        return self.start_freq + self.bandwidth / 2

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.center_freq

    @property
    def bin_resolution(self) -> float:
        """Range covered by one fast-time FFT bin, in metres."""
        return (
            self.sample_rate
            * self.chirp_duration
            * SPEED_OF_LIGHT
            / (2 * self.bandwidth * self.adc_samples)
        )

    @property
    def max_range(self) -> float:
        return self.bin_resolution * self.adc_samples

    def beat_frequency(self, target_range: float) -> float:
        return 2 * self.bandwidth * target_range / (SPEED_OF_LIGHT * self.chirp_duration)

    def replace(self, **changes) -> "RadarConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = ["# FMCW radar configuration"]
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            lines.append(f"{f.name} = {value!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def awr1642(cls) -> "RadarConfig":
        """The AWR1642 EVM capture settings (77-81 GHz, 250 samples, 128 chirps)."""
        return cls(
            start_freq=77e9,
            bandwidth=4e9,
            adc_samples=250,
            sample_rate=6.25e6,
            ramp_end_time=50e-6,
            idle_time=7e-6,
            frame_count=1200,
            frame_period=50e-3,
            chirps_per_frame=128,
            tx_count=2,
            rx_count=4,
        )

    @classmethod
    def compact(cls, frame_count: int = 1200, chirps_per_frame: int = 4) -> "RadarConfig":
        """Reduced cube with the same range-bin width and frame rate as :meth:`awr1642`.

        64 fast-time samples at 1.6 Msps keep the ~4.7 cm bin width while
        shrinking a one-minute capture from ~600 MB to a few MB.
        """
        return cls(
            start_freq=77e9,
            bandwidth=4e9,
            adc_samples=64,
            sample_rate=1.6e6,
            ramp_end_time=50e-6,
            idle_time=7e-6,
            frame_count=frame_count,
            frame_period=50e-3,
            chirps_per_frame=chirps_per_frame,
            tx_count=2,
            rx_count=4,
        )


def parse_config_text(text: str, source: str = "<string>") -> RadarConfig:
    """Parse ``key = value`` lines (``#`` comments, ``:`` also accepted)."""
    known = {f.name for f in dataclasses.fields(RadarConfig)}
    values: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, _, value = line.partition("=")
        elif ":" in line:
            key, _, value = line.partition(":")
        else:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key = key.strip()
        value = value.strip().strip("'\"")
        if key not in known:
            log.warning("%s:%d: ignoring unknown key %r", source, lineno, key)
            continue
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            number = float(value)
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: {key} is not a number: {value!r}") from None
        values[key] = number
    missing = sorted(known - values.keys())
    if missing:
        raise ConfigError(f"{source}: missing keys {', '.join(missing)}")
    try:
        return RadarConfig(**values)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path: str | os.PathLike) -> RadarConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    return parse_config_text(text, source=str(path))


def save_config(config: RadarConfig, path: str | os.PathLike) -> None:
    Path(path).write_text(config.to_text(), encoding="utf-8")


@dataclass(frozen=True)
class DataCube:
    """Complex I/Q samples shaped ``(adc_samples, chirps, frames, rx)``."""

    samples: NDArray[np.complexfloating]
    config: RadarConfig

    def __post_init__(self):
        c = self.config
        expected = (c.adc_samples, c.chirps_per_frame, c.frame_count, c.rx_count)
        if self.samples.shape != expected:
            raise CubeFormatError(f"cube shape {self.samples.shape} does not match config {expected}")
        if not np.iscomplexobj(self.samples):
            raise CubeFormatError("cube samples must be complex")
        if not np.all(np.isfinite(self.samples)):
            raise CubeFormatError("cube contains non-finite samples")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.samples.shape

    def frames(self) -> Iterable[NDArray[np.complexfloating]]:
        """Yield one ``(adc_samples, chirps, rx)`` block per frame, in order."""
        for n in range(self.config.frame_count):
            yield self.samples[:, :, n, :]

    def slice_frames(self, start: int, stop: int) -> "DataCube":
        cfg = self.config.replace(frame_count=stop - start)
        return DataCube(self.samples[:, :, start:stop, :], cfg)


class Layout(enum.Enum):
    """Interleave convention of a raw capture.

    ``IQ``/``QI`` is the order inside each 16-bit pair. ``RX_MAJOR`` stores
    all samples of RX0, then RX1, ... within each chirp; ``SAMPLE_MAJOR``
    stores RX0..RXn for sample 0, then sample 1, ...
    """

    IQ_RX_MAJOR = "iq-rx"
    QI_RX_MAJOR = "qi-rx"
    IQ_SAMPLE_MAJOR = "iq-sample"
    QI_SAMPLE_MAJOR = "qi-sample"

    @property
    def q_first(self) -> bool:
        return self.value.startswith("qi")

    @property
    def rx_major(self) -> bool:
        return self.value.endswith("rx")


def expected_cube_bytes(config: RadarConfig) -> int:
    return config.adc_samples * config.chirps_per_frame * config.frame_count * config.rx_count * 4


def read_iq_cube(
    path: str | os.PathLike,
    config: RadarConfig,
    layout: Layout = Layout.IQ_RX_MAJOR,
) -> DataCube:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"cube file not found: {path}")
    expected = expected_cube_bytes(config)
    actual = path.stat().st_size
    if actual != expected:
        raise CubeFormatError(f"{path}: expected {expected} bytes for configured cube, found {actual}")
    c = config
    raw = np.memmap(path, dtype="<i2", mode="r")
    if layout.rx_major:
        raw = raw.reshape(c.frame_count, c.chirps_per_frame, c.rx_count, c.adc_samples, 2)
        axes = (3, 1, 0, 2)  # -> sample, chirp, frame, rx
    else:
        raw = raw.reshape(c.frame_count, c.chirps_per_frame, c.adc_samples, c.rx_count, 2)
        axes = (2, 1, 0, 3)
    first, second = (1, 0) if layout.q_first else (0, 1)
    samples = np.empty((c.adc_samples, c.chirps_per_frame, c.frame_count, c.rx_count), np.complex64)
    samples.real = raw[..., first].transpose(axes)
    samples.imag = raw[..., second].transpose(axes)
    del raw
    return DataCube(samples, config)


def write_iq_cube(cube: DataCube, path: str | os.PathLike, layout: Layout = Layout.IQ_RX_MAJOR) -> None:
    """Quantise to int16 (round half to even, clipped) and write raw bytes."""
    s = cube.samples
    if layout.rx_major:
        ordered = s.transpose(2, 1, 3, 0)  # frame, chirp, rx, sample
    else:
        ordered = s.transpose(2, 1, 0, 3)  # frame, chirp, sample, rx
    out = np.empty(ordered.shape + (2,), dtype="<i2")
    first, second = (1, 0) if layout.q_first else (0, 1)
    out[..., first] = np.clip(np.rint(ordered.real), -32768, 32767)
    out[..., second] = np.clip(np.rint(ordered.imag), -32768, 32767)
    out.tofile(path)
    log.debug("wrote %d bytes to %s", out.nbytes, path)


class Method(enum.Enum):
    FFT = "fft"
    CTF_HIS = "ctf-his"
    CTF_KDE = "ctf-kde"
    MUSIC = "music"
    PRONY = "prony"


HR_LIMITS_BPM = (36.0, 240.0)
RR_LIMITS_RPM = (3.0, 42.0)

ESTIMATES_HEADER = ("window", "t_start_s", "method", "hr_bpm", "rr_rpm")
GROUND_TRUTH_HEADER = ("frame", "t_s", "hr_bpm", "rr_rpm")


@dataclass(frozen=True)
class EstimateRecord:
    window_index: int
    t_start: float
    method: Method
    hr_bpm: float | None = None
    rr_rpm: float | None = None

    def __post_init__(self):
        if self.hr_bpm is not None and not HR_LIMITS_BPM[0] - 1e-9 <= self.hr_bpm <= HR_LIMITS_BPM[1] + 1e-9:
            raise ValueError(f"hr_bpm {self.hr_bpm} outside {HR_LIMITS_BPM}")
        if self.rr_rpm is not None and not RR_LIMITS_RPM[0] - 1e-9 <= self.rr_rpm <= RR_LIMITS_RPM[1] + 1e-9:
            raise ValueError(f"rr_rpm {self.rr_rpm} outside {RR_LIMITS_RPM}")


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.4f}"


def write_estimates_csv(records: Sequence[EstimateRecord], path: str | os.PathLike) -> None:
    if not records:
        raise ValueError("no estimate records to write")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ESTIMATES_HEADER)
        for r in records:
            writer.writerow(
                [r.window_index, f"{r.t_start:.4f}", r.method.name, _fmt(r.hr_bpm), _fmt(r.rr_rpm)]
            )


def _opt_float(text: str) -> float | None:
    return float(text) if text.strip() else None


def read_estimates_csv(path: str | os.PathLike) -> list[EstimateRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != ESTIMATES_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [
            EstimateRecord(
                window_index=int(row["window"]),
                t_start=float(row["t_start_s"]),
                method=Method[row["method"]],
                hr_bpm=_opt_float(row["hr_bpm"]),
                rr_rpm=_opt_float(row["rr_rpm"]),
            )
            for row in reader
        ]


@dataclass(frozen=True)
class GroundTruthRow:
    frame: int
    t_s: float
    hr_bpm: float
    rr_rpm: float


def write_ground_truth_csv(rows: Iterable[GroundTruthRow], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(GROUND_TRUTH_HEADER)
        for r in rows:
            writer.writerow([r.frame, f"{r.t_s:.4f}", f"{r.hr_bpm:.4f}", f"{r.rr_rpm:.4f}"])


def read_ground_truth_csv(path: str | os.PathLike) -> list[GroundTruthRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != GROUND_TRUTH_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [
            GroundTruthRow(int(r["frame"]), float(r["t_s"]), float(r["hr_bpm"]), float(r["rr_rpm"]))
            for r in reader
        ]
