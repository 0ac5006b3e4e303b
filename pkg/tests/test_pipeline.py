from __future__ import annotations

import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fmcw_vitals.errors import NoTargetError, PipelineError
from fmcw_vitals.ingest import DataCube, Method, RadarConfig, write_estimates_csv
from fmcw_vitals.pipeline import (
    PipelineOptions,
    WindowSpec,
    cube_frames,
    iter_window_results,
    process_window,
    run_pipeline,
    stream_results,
    stream_windows,
)
from fmcw_vitals.simulate import ChestModel, Scene, random_scene, synthesize_cube


@pytest.fixture(scope="module")
def reference_scene():
    cfg = RadarConfig.compact(frame_count=600)
    chest = ChestModel(resp_rate=0.25, resp_amp=2e-3, heart_rate=1.25, heart_amp=0.3e-3)
    scene = Scene(0.9, chest=chest, clutter=((2.0, 3.0),), noise_snr_db=10.0, dc_offset=0.2 + 0.1j)
    cube, _ = synthesize_cube(scene, cfg, seed=21)
    return cube


def _one(cube, method, **kw):
    recs = run_pipeline(cube, PipelineOptions(methods=(method,), **kw))
    assert len(recs) == 1
    return recs[0]


def test_prony_reference_scene(reference_scene):
    r = _one(reference_scene, Method.PRONY)
    assert r.hr_bpm == pytest.approx(75, abs=1.5)
    assert r.rr_rpm == pytest.approx(15, abs=1.0)


def test_music_reference_scene(reference_scene):
    r = _one(reference_scene, Method.MUSIC)
    assert r.hr_bpm == pytest.approx(75, abs=3.0)


@pytest.mark.parametrize("family", ["butterworth", "elliptic"])
@pytest.mark.parametrize("phase_method", ["unwrap", "edacm"])
def test_fft_reference_scene_variants(reference_scene, family, phase_method):
    r = _one(reference_scene, Method.FFT, filter_family=family, phase_method=phase_method)
    assert r.hr_bpm == pytest.approx(75, abs=1.5)
    assert r.rr_rpm == pytest.approx(15, abs=1.0)


def test_all_methods_emit_in_order(reference_scene):
    recs = run_pipeline(reference_scene)
    assert [r.method for r in recs] == list(Method)
    assert all(r.hr_bpm is not None for r in recs)
    assert [r.rr_rpm is None for r in recs] == [False, True, True, False, False]


def test_all_zero_cube_names_select_target():
    cfg = RadarConfig.compact(frame_count=200)
    cube = DataCube(np.zeros((64, 4, 200, 4), complex), cfg)
    with pytest.raises(PipelineError) as info:
        run_pipeline(cube, PipelineOptions(window=WindowSpec(200, 200)))
    assert info.value.stage == "select_target"
    assert info.value.window_index == 0
    assert isinstance(info.value.cause, NoTargetError)
    assert "select_target" in str(info.value)


def test_estimator_failure_tagged(monkeypatch, reference_scene):
    import fmcw_vitals.pipeline as pl

    def boom(*a, **k):
        raise RuntimeError("nope")

    monkeypatch.setattr(pl, "prony_estimate", boom)
    with pytest.raises(PipelineError, match="stage estimate_prony failed on window 0: nope"):
        run_pipeline(reference_scene, PipelineOptions(methods=("prony",)))


def test_cube_shorter_than_window():
    cfg = RadarConfig.compact(frame_count=150)
    cube, _ = synthesize_cube(Scene(0.9), cfg)
    with pytest.raises(PipelineError, match="windowing"):
        run_pipeline(cube)


@pytest.mark.parametrize("w,sw", [(99, 10), (200, 0), (200, 201)])
def test_window_spec_validation(w, sw):
    with pytest.raises(ValueError):
        WindowSpec(w, sw)


def test_options_validation():
    with pytest.raises(ValueError):
        PipelineOptions(methods=())
    with pytest.raises(ValueError):
        PipelineOptions(phase_method="hilbert")
    with pytest.raises(ValueError):
        PipelineOptions(hr_band=(4.0, 0.6))
    assert PipelineOptions(methods=("fft", "fft", Method.MUSIC)).methods == (Method.FFT, Method.MUSIC)


def test_keep_stages(reference_scene):
    res, _ = next(iter_window_results(reference_scene, PipelineOptions(keep_stages=True)))
    for key in ("range_map_db", "phase_unwrapped", "rr_filtered", "hr_filtered", "spectrum_fft", "spectrum_music"):
        assert key in res.stages
    assert res.stages["spectrum_music"].shape[1] == 2
    assert res.stages["phase_differenced"].size == 599


def test_window_budget_all_methods(reference_scene):
    cfg = reference_scene.config
    block = np.ascontiguousarray(reference_scene.samples.mean(axis=1))
    opts = PipelineOptions()
    process_window(block, cfg, opts)  # warm caches
    t0 = time.perf_counter()
    process_window(block, cfg, opts)
    assert time.perf_counter() - t0 < 0.5


@pytest.fixture(scope="module")
def long_cube():
    cfg = RadarConfig.compact(frame_count=520)
    scene = random_scene(np.random.default_rng(5), cfg)
    cube, _ = synthesize_cube(scene, cfg, seed=5)
    return cube


def test_stream_warmup_and_cadence(long_cube):
    consumed = []

    def source():
        for k, frame in enumerate(cube_frames(long_cube), start=1):
            consumed.append(k)
            yield frame

    opts = PipelineOptions(methods=("fft",), window=WindowSpec(400, 10))
    seen = []
    for res in stream_results(source(), long_cube.config, opts):
        seen.append((consumed[-1], res.t_start))
    assert seen[0] == (400, 0.0)  # 20 s of frames before the first estimate
    assert [c for c, _ in seen] == list(range(400, 521, 10))
    np.testing.assert_allclose(np.diff([t for _, t in seen]), 0.5)


def test_stream_two_windows():
    cfg = RadarConfig.compact(frame_count=1200)
    cube, _ = synthesize_cube(Scene(0.9, noise_snr_db=20.0), cfg)
    recs = list(stream_windows(cube, options=PipelineOptions(methods=("fft",))))
    assert len(recs) == 2 and [r.t_start for r in recs] == [0.0, 30.0]


@pytest.mark.parametrize("workers", [1, 3])
def test_stream_equals_batch_bitwise(long_cube, workers):
    opts = PipelineOptions(window=WindowSpec(400, 40))
    batch = run_pipeline(long_cube, opts)
    streamed = list(stream_windows(long_cube, options=opts, workers=workers))
    assert streamed == batch


def test_stream_source_too_short(long_cube):
    frames = list(cube_frames(long_cube))[:300]
    opts = PipelineOptions(methods=("fft",), window=WindowSpec(400, 10))
    with pytest.raises(PipelineError, match="stream_windows"):
        list(stream_windows(iter(frames), long_cube.config, opts))


def test_stream_needs_config_for_raw_frames(long_cube):
    with pytest.raises(ValueError):
        list(stream_windows(iter([]), None))


@settings(max_examples=15, deadline=None)
@given(st.integers(100, 260), st.integers(1, 100), st.integers(260, 320))
def test_stream_record_count(w, sw, frames):
    sw = min(sw, w)
    cfg = RadarConfig.compact(frame_count=frames, chirps_per_frame=1)
    cube, _ = synthesize_cube(Scene(0.9, chest=ChestModel(resp_amp=2e-3)), cfg)
    opts = PipelineOptions(methods=("fft",), window=WindowSpec(w, sw))
    assert WindowSpec(w, sw).count(frames) == (frames - w) // sw + 1
    n = sum(1 for _ in stream_results(cube, options=opts))
    assert n == (frames - w) // sw + 1


def test_pipeline_deterministic_csv(tmp_path, long_cube):
    opts = PipelineOptions(window=WindowSpec(400, 60))
    write_estimates_csv(run_pipeline(long_cube, opts), tmp_path / "a.csv")
    write_estimates_csv(run_pipeline(long_cube, opts), tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


@pytest.mark.slow
def test_hr_error_not_worse_with_longer_window():
    cfg = RadarConfig.compact(frame_count=600)
    err = {200: {m: [] for m in ("fft", "music", "prony")}, 600: {m: [] for m in ("fft", "music", "prony")}}
    for seed in range(50):
        scene = random_scene(np.random.default_rng(seed), cfg)
        cube, truth = synthesize_cube(scene, cfg, seed=seed)
        for w in (200, 600):
            opts = PipelineOptions(methods=("fft", "music", "prony"), window=WindowSpec(w, w))
            for r in run_pipeline(cube, opts):
                err[w][r.method.value].append(abs(r.hr_bpm - truth.hr_bpm[0]))
    for m in ("fft", "music", "prony"):
        assert np.mean(err[600][m]) <= np.mean(err[200][m])
