"""Chirp averaging, range FFT, clutter removal and target-bin selection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import NoTargetError
from .ingest import DataCube, RadarConfig

DEFAULT_N_AVG = 32
NEIGHBOR_FRACTION = 0.2


def mean_chirps(frame_block: NDArray, n_avg: int) -> NDArray:
    """Mean of the first ``n_avg`` chirps along axis 1.

    Summation runs chirp by chirp in index order, so a single frame and a
    whole cube give bit-identical results for the same frame.
    """
    acc = frame_block[:, 0].copy()
    for i in range(1, n_avg):
        acc += frame_block[:, i]
    if n_avg > 1:
        acc /= n_avg
    return acc


def average_chirps(cube: DataCube, n_avg: int = DEFAULT_N_AVG) -> DataCube:
    """Collapse each frame's chirps to the mean of its first ``n_avg`` chirps."""
    chirps = cube.config.chirps_per_frame
    if not 1 <= n_avg <= chirps:
        raise ValueError(f"n_avg must be in [1, {chirps}], got {n_avg}")
    averaged = mean_chirps(cube.samples, n_avg)[:, None]
    return DataCube(averaged, cube.config.replace(chirps_per_frame=1))


@dataclass(frozen=True)
class RangeMap:
    """Complex range profiles shaped ``(bins, frames, rx)``.

    Column ``n`` belongs to frame ``n`` at time ``n * frame_period``.
    """

    bins: NDArray[np.complexfloating]
    config: RadarConfig

    @property
    def bin_res(self) -> float:
        return self.config.bin_resolution

    @property
    def n_bins(self) -> int:
        return self.bins.shape[0]

    @property
    def n_frames(self) -> int:
        return self.bins.shape[1]

    def bin_range(self, k: int) -> float:
        return k * self.bin_res

    def magnitude_db(self) -> NDArray[np.float64]:
        """Channel-summed magnitude in dB, for plotting and dumps."""
        mag = np.abs(self.bins).sum(axis=2)
        return 20 * np.log10(np.maximum(mag, np.finfo(float).tiny))


def range_fft(cube: DataCube, window: str = "none") -> RangeMap:
    """FFT along fast time for every frame and channel.

    ``window`` is ``"none"`` (rectangular) or ``"hann"``; the Hann taper is
    normalised to unit coherent gain.
    """
    if cube.config.chirps_per_frame != 1:
        raise ValueError("range_fft expects a chirp-averaged cube (one chirp per frame)")
    x = cube.samples[:, 0]
    if window == "hann":
        w = np.hanning(x.shape[0] + 2)[1:-1]
        x = x * (w / w.mean())[:, None, None]
    elif window != "none":
        raise ValueError(f"unknown window {window!r}")
    return RangeMap(np.fft.fft(x, axis=0), cube.config)


def remove_clutter(rmap: RangeMap) -> RangeMap:
    """Subtract each bin's mean over frames (per channel)."""
    if rmap.n_frames < 2:
        raise ValueError("clutter removal needs at least 2 frames")
    bins = rmap.bins
    acc = bins[:, 0].copy()
    for n in range(1, bins.shape[1]):
        acc += bins[:, n]
    mean = acc / bins.shape[1]
    return RangeMap(bins - mean[:, None, :], rmap.config)


@dataclass(frozen=True)
class TargetSelection:
    primary_bin: int
    included_bins: tuple[int, ...]
    per_frame_max_bin: NDArray[np.int64]
    averaged: bool
    neighbor_share: float


def select_target(rmap: RangeMap, neighbor_fraction: float = NEIGHBOR_FRACTION) -> TargetSelection:
    """Pick the subject's range bin, widening to neighbours when it straddles.

    The primary bin maximises the summed magnitude over frames (and
    channels). If more than ``neighbor_fraction`` of the per-frame maxima
    among the primary bin and its two neighbours fall on a neighbour, all
    three bins are used.
    """
    mag = np.abs(rmap.bins).sum(axis=2)  # (bins, frames)
    energy = mag.sum(axis=1)
    if not np.any(energy > 0):
        raise NoTargetError("range map is all zero; no target to select")
    primary = int(np.argmax(energy))
    candidates = [k for k in (primary - 1, primary, primary + 1) if 0 <= k < rmap.n_bins]
    per_frame = np.asarray(candidates)[np.argmax(mag[candidates], axis=0)]
    share = float(np.mean(per_frame != primary))
    if share > neighbor_fraction:
        return TargetSelection(primary, tuple(candidates), per_frame, True, share)
    return TargetSelection(primary, (primary,), per_frame, False, share)


def extract_bin_signal(rmap: RangeMap, sel: TargetSelection) -> NDArray[np.complexfloating]:
    """Slow-time complex series ``(frames, rx)`` of the selected bin(s)."""
    if not sel.averaged:
        return rmap.bins[sel.primary_bin].copy()
    acc = rmap.bins[sel.included_bins[0]].copy()
    for k in sel.included_bins[1:]:
        acc += rmap.bins[k]
    return acc / len(sel.included_bins)
