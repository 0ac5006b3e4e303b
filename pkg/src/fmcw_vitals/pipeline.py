"""Windowed end-to-end processing, batch and streaming.

Chirp averaging happens once per frame. Everything after it runs per
window on a contiguous ``(samples, W, rx)`` block through one function,
which is what makes streaming output bitwise equal to batch output.
"""
from __future__ import annotations

import logging
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Iterator

import numpy as np
from numpy.typing import NDArray

from . import phasechain as pc
from .errors import PipelineError
from .estimators import CtfMode, ctf_estimate, improved_fft, music_estimate, prony_estimate
from .filters import HEART_BAND, RESP_BAND, BandSpec, FilterFamily, apply_filter, design_bandpass
from .ingest import DataCube, EstimateRecord, Method, RadarConfig
from .rangeproc import (
    DEFAULT_N_AVG,
    NEIGHBOR_FRACTION,
    RangeMap,
    extract_bin_signal,
    mean_chirps,
    range_fft,
    remove_clutter,
    select_target,
)

log = logging.getLogger(__name__)

ALL_METHODS = tuple(Method)


@dataclass(frozen=True)
class WindowSpec:
    window_frames: int = 600
    slide_frames: int = 600

    def __post_init__(self):
        if self.window_frames < 100:
            raise ValueError(f"window must be at least 100 frames, got {self.window_frames}")
        if not 1 <= self.slide_frames <= self.window_frames:
            raise ValueError(f"slide must be in [1, {self.window_frames}], got {self.slide_frames}")

    def starts(self, n_frames: int) -> range:
        return range(0, n_frames - self.window_frames + 1, self.slide_frames)

    def count(self, n_frames: int) -> int:
        if n_frames < self.window_frames:
            return 0
        return (n_frames - self.window_frames) // self.slide_frames + 1


@dataclass(frozen=True)
class PipelineOptions:
    methods: tuple[Method, ...] = ALL_METHODS
    window: WindowSpec = field(default_factory=WindowSpec)
    n_avg: int | None = None  # None: min(32, chirps per frame)
    range_window: str = "none"
    neighbor_fraction: float = NEIGHBOR_FRACTION
    dc_fit: pc.DcMethod = pc.DcMethod.ALGEBRAIC_FIT
    phase_method: str = "unwrap"
    denoise: pc.Denoise = pc.Denoise.MEDIAN
    denoise_param: float | None = None
    filter_family: FilterFamily = FilterFamily.BUTTERWORTH
    filter_order: int | None = None
    zero_phase: bool = True
    hr_band: tuple[float, float] = HEART_BAND
    rr_band: tuple[float, float] = RESP_BAND
    pad_factor: int = 8
    notch_q: float = 10.0
    music_lag: int = 100
    music_sources_hr: int = 2
    music_sources_rr: int = 2  # breathing fundamental and its second harmonic
    music_grid: float = 1e-3
    forward_backward: bool = False
    prony_order_hr: int = 8
    prony_order_rr: int = 4
    prony_long_prediction: bool = True  # prediction order len/3 with rank truncation
    damping_max: float | None = None  # None: 1/len, envelope may change by at most e
    guard_hz: float = 0.05
    ctf_multiplier: float = 0.5
    keep_stages: bool = False

    def __post_init__(self):
        methods = tuple(dict.fromkeys(Method(m) for m in self.methods))
        if not methods:
            raise ValueError("at least one method is required")
        object.__setattr__(self, "methods", methods)
        object.__setattr__(self, "dc_fit", pc.DcMethod(self.dc_fit))
        object.__setattr__(self, "denoise", pc.Denoise(self.denoise))
        object.__setattr__(self, "filter_family", FilterFamily(self.filter_family))
        if self.phase_method not in ("unwrap", "edacm"):
            raise ValueError(f"phase_method must be 'unwrap' or 'edacm', got {self.phase_method!r}")
        # surface bad band/order combinations before any data is touched
        self.hr_spec()
        self.rr_spec()

    def resolved_n_avg(self, config: RadarConfig) -> int:
        return self.n_avg if self.n_avg is not None else min(DEFAULT_N_AVG, config.chirps_per_frame)

    def hr_spec(self) -> BandSpec:
        return BandSpec.heart(self.filter_family, self.hr_band, order=self.filter_order)

    def rr_spec(self) -> BandSpec:
        return BandSpec.respiration(self.filter_family, self.rr_band, order=self.filter_order)


@dataclass
class WindowResult:
    window_index: int
    t_start: float
    records: list[EstimateRecord]
    target_bin: int
    stages: dict[str, NDArray] = field(default_factory=dict)


@lru_cache(maxsize=32)
def _bandpass(spec: BandSpec, rate: float):
    return design_bandpass(spec, rate)


class _Stage:
    """Context manager that re-raises failures tagged with stage and window."""

    def __init__(self, window_index: int):
        self.window_index = window_index
        self.name = "start"

    def __call__(self, name: str) -> _Stage:
        self.name = name
        return self

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, PipelineError) and isinstance(exc, Exception):
            raise PipelineError(self.name, self.window_index, exc) from exc
        return False


def _channel_phase(z: NDArray, rate: float, opts: PipelineOptions) -> pc.PhaseSignal:
    iq = pc.IqSeries.from_complex(z, rate)
    dc = pc.estimate_dc_offset(iq, opts.dc_fit)
    if dc.looks_elliptical:
        log.warning("I/Q constellation is elliptical (radial spread %.2f); gain imbalance is not corrected",
                    dc.radial_spread)
    iq = pc.remove_dc_offset(iq, dc)
    if opts.phase_method == "edacm":
        return pc.phase_edacm(iq)
    return pc.phase_arctan_unwrap(iq)


def process_window(
    block: NDArray,
    config: RadarConfig,
    opts: PipelineOptions,
    window_index: int = 0,
    t_start: float = 0.0,
) -> WindowResult:
    """Full chain on one chirp-averaged block shaped ``(samples, W, rx)``."""
    st = _Stage(window_index)
    stages: dict[str, NDArray] = {}
    keep = opts.keep_stages
    rate = config.slow_time_rate
    cfg1 = config.replace(chirps_per_frame=1, frame_count=block.shape[1])

    with st("range_fft"):
        rmap = range_fft(DataCube(block[:, None], cfg1), opts.range_window)
    with st("remove_clutter"):
        rmap = remove_clutter(rmap)
    if keep:
        stages["range_map_db"] = RangeMap(rmap.bins, cfg1).magnitude_db()
    with st("select_target"):
        sel = select_target(rmap, opts.neighbor_fraction)
    with st("extract_bin_signal"):
        z = extract_bin_signal(rmap, sel)
    with st("phase_extraction"):
        phases = [_channel_phase(z[:, ch], rate, opts) for ch in range(z.shape[1])]
    with st("phase_difference"):
        diffs = [pc.phase_difference(p) for p in phases]
    with st("denoise"):
        dens = [pc.denoise_impulsive(d, opts.denoise, opts.denoise_param) for d in diffs]
    with st("fuse"):
        fused = pc.fuse_rx_channels(dens)
    with st("bandpass"):
        rr_spec, hr_spec = opts.rr_spec(), opts.hr_spec()
        rr_sig = apply_filter(_bandpass(rr_spec, rate), fused, opts.zero_phase)
        hr_sig = apply_filter(_bandpass(hr_spec, rate), fused, opts.zero_phase)
    if keep:
        stages["phase_unwrapped"] = phases[0].values
        stages["phase_differenced"] = diffs[0].values
        stages["phase_denoised"] = dens[0].values
        stages["phase_fused"] = fused.values
        stages["rr_filtered"] = rr_sig.values
        stages["hr_filtered"] = hr_sig.values

    fft_rr: list[float] = []

    def rr_from_fft() -> float:
        if not fft_rr:
            with st("estimate_fft"):
                fft_rr.append(improved_fft(rr_sig, rr_spec, opts.pad_factor)[0])
        return fft_rr[0]

    records = []
    for method in opts.methods:
        hr = rr = None
        with st(f"estimate_{method.value}"):
            if method is Method.FFT:
                rr = rr_from_fft()
                hr, spec = improved_fft(hr_sig, hr_spec, opts.pad_factor, 2 * rr, opts.notch_q)
            elif method in (Method.CTF_HIS, Method.CTF_KDE):
                mode = CtfMode.HISTOGRAM if method is Method.CTF_HIS else CtfMode.KDE
                bpm, _ = ctf_estimate(hr_sig, mode, opts.ctf_multiplier, opts.hr_band, opts.pad_factor)
                hr = bpm / 60
            elif method is Method.MUSIC:
                lag = min(opts.music_lag, len(rr_sig) // 2)  # short windows
                rr, _ = music_estimate(
                    rr_sig, rr_spec, lag, opts.music_sources_rr, opts.music_grid,
                    guard_hz=opts.guard_hz, forward_backward=opts.forward_backward, fold_harmonic=True,
                )
                hr, spec = music_estimate(
                    hr_sig, hr_spec, lag, opts.music_sources_hr, opts.music_grid,
                    rr_hint=rr, guard_hz=opts.guard_hz, forward_backward=opts.forward_backward,
                )
            else:
                L = len(rr_sig) // 3 if opts.prony_long_prediction else None
                dmax = opts.damping_max if opts.damping_max is not None else 1.0 / len(rr_sig)
                rr, _ = prony_estimate(
                    rr_sig, rr_spec, opts.prony_order_rr, damping_max=dmax, guard_hz=opts.guard_hz,
                    prediction_order=L, fold_harmonic=True, relax_damping=True,
                )
                hr, _ = prony_estimate(
                    hr_sig, hr_spec, opts.prony_order_hr, rr_hint=rr,
                    damping_max=dmax, guard_hz=opts.guard_hz, prediction_order=L, relax_damping=True,
                )
            if keep and method in (Method.FFT, Method.MUSIC):
                stages[f"spectrum_{method.value}"] = np.column_stack([spec.freqs, spec.power])
            records.append(
                EstimateRecord(
                    window_index, t_start, method,
                    hr_bpm=60 * hr,
                    rr_rpm=None if rr is None else 60 * rr,
                )
            )
    return WindowResult(window_index, t_start, records, sel.primary_bin, stages)


def average_frames(cube: DataCube, n_avg: int) -> NDArray:
    """Chirp-averaged samples shaped ``(samples, frames, rx)``."""
    chirps = cube.config.chirps_per_frame
    if not 1 <= n_avg <= chirps:
        raise ValueError(f"n_avg must be in [1, {chirps}], got {n_avg}")
    return mean_chirps(cube.samples, n_avg)


def iter_window_results(cube: DataCube, opts: PipelineOptions) -> Iterator[tuple[WindowResult, float]]:
    """Batch windows in order, each with its processing time in seconds."""
    cfg = cube.config
    try:
        avg = average_frames(cube, opts.resolved_n_avg(cfg))
    except Exception as exc:
        raise PipelineError("average_chirps", None, exc) from exc
    n_frames = avg.shape[1]
    W = opts.window.window_frames
    if n_frames < W:
        raise PipelineError("windowing", None, ValueError(f"cube has {n_frames} frames, window needs {W}"))
    for k, s in enumerate(opts.window.starts(n_frames)):
        block = np.ascontiguousarray(avg[:, s : s + W])
        t0 = time.perf_counter()
        res = process_window(block, cfg, opts, k, s * cfg.frame_period)
        yield res, time.perf_counter() - t0


def run_pipeline(cube: DataCube, options: PipelineOptions | None = None) -> list[EstimateRecord]:
    opts = options or PipelineOptions()
    out: list[EstimateRecord] = []
    for res, _ in iter_window_results(cube, opts):
        out.extend(res.records)
    return out


FrameSource = Iterable[NDArray]


def cube_frames(cube: DataCube) -> Iterator[NDArray]:
    """Yield frames shaped ``(samples, chirps, rx)`` in order."""
    for n in range(cube.samples.shape[2]):
        yield cube.samples[:, :, n, :]


def stream_results(
    source: DataCube | FrameSource,
    config: RadarConfig | None = None,
    options: PipelineOptions | None = None,
    workers: int = 1,
    on_window: Callable[[WindowResult, float], None] | None = None,
) -> Iterator[WindowResult]:
    """Sliding-window processing of a frame stream.

    The first result appears once W frames have arrived, then one every
    SW frames over the trailing W. Windows may be processed by a pool of
    ``workers`` threads; results are still yielded in window order.
    ``on_window`` receives each result with its processing time.
    """
    opts = options or PipelineOptions()
    if isinstance(source, DataCube):
        config = config or source.config
        frames: FrameSource = cube_frames(source)
    else:
        if config is None:
            raise ValueError("a RadarConfig is required with a raw frame source")
        frames = source
    n_avg = opts.resolved_n_avg(config)
    if not 1 <= n_avg <= config.chirps_per_frame:
        raise PipelineError("average_chirps", None, ValueError(f"n_avg {n_avg} out of range"))
    W, SW = opts.window.window_frames, opts.window.slide_frames

    def work(block, k, t):
        t0 = time.perf_counter()
        res = process_window(block, config, opts, k, t)
        return res, time.perf_counter() - t0

    buf: deque[NDArray] = deque(maxlen=W)
    pending: deque = deque()
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    count = 0
    k = 0
    try:
        for frame in frames:
            buf.append(mean_chirps(frame, n_avg))
            count += 1
            if count >= W and (count - W) % SW == 0:
                block = np.stack(buf, axis=1)
                t_start = (count - W) * config.frame_period
                if pool is None:
                    pending.append(work(block, k, t_start))
                else:
                    pending.append(pool.submit(work, block, k, t_start))
                k += 1
                while pending and (pool is None or len(pending) > workers or pending[0].done()):
                    item = pending.popleft()
                    res, dt = item if pool is None else item.result()
                    if on_window:
                        on_window(res, dt)
                    yield res
        if count < W:
            raise PipelineError(
                "stream_windows", None, ValueError(f"source ended after {count} frames; window needs {W}")
            )
        while pending:
            item = pending.popleft()
            res, dt = item if pool is None else item.result()
            if on_window:
                on_window(res, dt)
            yield res
    finally:
        if pool is not None:
            pool.shutdown(wait=True, cancel_futures=True)


def stream_windows(
    source: DataCube | FrameSource,
    config: RadarConfig | None = None,
    options: PipelineOptions | None = None,
    workers: int = 1,
) -> Iterator[EstimateRecord]:
    for res in stream_results(source, config, options, workers):
        yield from res.records
