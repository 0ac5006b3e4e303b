"""Second breathing harmonic as strong as the heartbeat, after filtering.

A spectral peak picker then locks onto twice the breathing rate about
three times in four. The subspace estimators, told where that harmonic
should be, step around it.

    python demos/harmonic_trap.py [n_scenes]
"""
from __future__ import annotations

import dataclasses
import sys

import numpy as np

from fmcw_vitals.estimators import improved_fft
from fmcw_vitals.filters import BandSpec, design_bandpass
from fmcw_vitals.ingest import RadarConfig
from fmcw_vitals.phasechain import PhaseSignal
from fmcw_vitals.pipeline import PipelineOptions, average_frames, process_window
from fmcw_vitals.simulate import random_scene, synthesize_cube

n = int(sys.argv[1]) if len(sys.argv) > 1 else 20
cfg = RadarConfig.compact(frame_count=600)
coef = design_bandpass(BandSpec.heart(), cfg.slow_time_rate)
opts = PipelineOptions(methods=("music", "prony"), keep_stages=True)


def through_chain(f):
    # differencing plus the filter applied forward and back
    return 2 * np.sin(np.pi * f / cfg.slow_time_rate) * np.abs(coef.response([f], cfg.slow_time_rate)[0]) ** 2


print(" true HR   2xRR    FFT    MUSIC  Prony")
for seed in range(n):
    scene = random_scene(np.random.default_rng(1000 + seed), cfg, rr_rpm=(20, 30))
    ch = scene.chest
    ratio = ch.heart_amp * through_chain(ch.heart_rate) / (ch.resp_amp * through_chain(2 * ch.resp_rate))
    scene = dataclasses.replace(scene, chest=dataclasses.replace(ch, resp_harmonics=((2, ratio),)))
    cube, _ = synthesize_cube(scene, cfg, seed=seed)
    res = process_window(np.ascontiguousarray(average_frames(cube, cfg.chirps_per_frame)), cfg, opts)
    f_fft, _ = improved_fft(PhaseSignal(res.stages["hr_filtered"], cfg.slow_time_rate), BandSpec.heart())
    est = {r.method.value: r.hr_bpm for r in res.records}
    print(f"{60 * ch.heart_rate:7.1f} {120 * ch.resp_rate:6.1f} {60 * f_fft:6.1f} "
          f"{est['music']:8.1f} {est['prony']:6.1f}")
