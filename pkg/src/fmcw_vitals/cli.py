"""Command line entry point: simulate, process, stream, evaluate."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import evaluation
from .errors import VitalsError
from .ingest import (
    Layout,
    Method,
    RadarConfig,
    load_config,
    read_estimates_csv,
    read_ground_truth_csv,
    read_iq_cube,
    save_config,
    write_estimates_csv,
    write_ground_truth_csv,
    write_iq_cube,
)
from .phasechain import DcMethod, Denoise
from .filters import FilterFamily
from .pipeline import PipelineOptions, WindowResult, WindowSpec, iter_window_results, stream_results
from .simulate import ChestModel, Scene, synthesize_cube

log = logging.getLogger("fmcw_vitals")

# int16 cubes need headroom: subject at 1000 counts, clutter a few times that
_SIM_AMPLITUDE = 1000.0


class _InputMissing(Exception):
    pass


def _band(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.replace(",", ":").split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"band must look like LOW:HIGH, got {text!r}") from None
    return lo, hi


def _clutter(text: str) -> tuple[float, float]:
    try:
        r, a = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"clutter must look like RANGE_M:AMPLITUDE, got {text!r}") from None
    return r, a


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise _InputMissing(f"input file not found: {p}")
    return p


def _add_processing_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("cube", help="raw int16 I/Q cube")
    p.add_argument("--config", help="radar config (default: config.txt next to the cube)")
    p.add_argument("--layout", choices=[l.value for l in Layout], default=Layout.IQ_RX_MAJOR.value)
    p.add_argument("-o", "--output", help="estimates CSV (default: estimates.csv next to the cube)")
    p.add_argument(
        "--method", action="append", choices=[m.value for m in Method],
        help="estimator to run; repeatable (default: all)",
    )
    p.add_argument("--n-avg", type=int, help="chirps averaged per frame")
    p.add_argument("--window", choices=["none", "hann"], default="none", help="range FFT window")
    p.add_argument("--phase-method", choices=["unwrap", "edacm"], default="unwrap")
    p.add_argument("--denoise", choices=[d.value for d in Denoise], default="median")
    p.add_argument("--denoise-param", type=float, help="median/MA/WMA length or EWMA alpha")
    p.add_argument("--dc-fit", choices=[m.value for m in DcMethod], default="algebraic")
    p.add_argument("--filter-family", choices=[f.value for f in FilterFamily], default="butterworth")
    p.add_argument("--filter-order", type=int)
    p.add_argument("--hr-band", type=_band, default=(0.6, 4.0), metavar="LOW:HIGH")
    p.add_argument("--rr-band", type=_band, default=(0.05, 0.7), metavar="LOW:HIGH")
    p.add_argument("--music-order", type=int, default=100, help="MUSIC lag dimension")
    p.add_argument("--prony-order", type=int, default=8, help="Prony model order for HR")
    p.add_argument("--pad-factor", type=int, default=8)
    p.add_argument("--window-frames", type=int, default=600)
    p.add_argument("--slide-frames", type=int)
    p.add_argument("--dump-stages", metavar="DIR", help="write intermediate signals as CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fmcw-vitals", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="synthesise a radar capture with known rates")
    sim.add_argument("--rr", type=float, default=15.0, help="breathing rate, RPM")
    sim.add_argument("--hr", type=float, default=72.0, help="heart rate, BPM")
    sim.add_argument("--range", type=float, default=0.9, dest="target_range", help="subject range, m")
    sim.add_argument("--snr", type=float, default=20.0, help="per-sample SNR in dB (inf: noiseless)")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--frames", type=int, default=1200)
    sim.add_argument("--preset", choices=["compact", "awr1642"], default="compact")
    sim.add_argument("--config", help="radar config file overriding --preset")
    sim.add_argument("--resp-amp", type=float, default=2.0, help="breathing amplitude, mm")
    sim.add_argument("--heart-amp", type=float, default=0.3, help="heart amplitude, mm")
    sim.add_argument(
        "--clutter", type=_clutter, action="append", metavar="RANGE:AMP",
        help="static reflector, amplitude relative to the subject (default 2.0:3)",
    )
    sim.add_argument("--dc-offset", type=float, default=0.2, help="DC offset relative to the subject")
    sim.add_argument("--impulse-rate", type=float, default=0.0, help="phase spikes per second")
    sim.add_argument("-o", "--output", default=".", help="output directory")

    proc = sub.add_parser("process", help="batch estimates over consecutive windows")
    _add_processing_args(proc)
    strm = sub.add_parser("stream", help="sliding-window estimates with a timing log")
    _add_processing_args(strm)
    strm.add_argument("--workers", type=int, default=1)
    strm.add_argument("--timing-log", help="per-window timing CSV (default: timing.csv next to output)")

    ev = sub.add_parser("evaluate", help="compare estimates with ground truth")
    ev.add_argument("estimates", nargs="?", help="estimates CSV (default: estimates.csv)")
    ev.add_argument("--truth", help="ground-truth CSV (default: ground_truth.csv next to estimates)")
    ev.add_argument("--window-frames", type=int, default=600)
    ev.add_argument("-o", "--output", help="summary CSV (default: summary.csv next to estimates)")
    ev.add_argument("--plot", metavar="SVG", help="write scatter and Bland-Altman plot")
    return parser


def _cmd_simulate(args) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    if args.config:
        config = load_config(_existing(args.config))
    elif args.preset == "awr1642":
        config = RadarConfig.awr1642().replace(frame_count=args.frames)
    else:
        config = RadarConfig.compact(frame_count=args.frames)
    chest = ChestModel(
        resp_rate=args.rr / 60, resp_amp=args.resp_amp * 1e-3,
        heart_rate=args.hr / 60, heart_amp=args.heart_amp * 1e-3,
    )
    chest.validate_physiological()
    clutter = args.clutter if args.clutter is not None else [(2.0, 3.0)]
    scene = Scene(
        target_range=args.target_range,
        chest=chest,
        clutter=tuple((r, a * _SIM_AMPLITUDE) for r, a in clutter),
        noise_snr_db=args.snr,
        dc_offset=args.dc_offset,
        impulse_rate=args.impulse_rate,
        impulse_amp=0.5,
        target_amplitude=_SIM_AMPLITUDE,
    )
    cube, truth = synthesize_cube(scene, config, seed=args.seed, dtype=np.complex64)
    write_iq_cube(cube, out / "cube.bin")
    save_config(config, out / "config.txt")
    write_ground_truth_csv(truth.rows(), out / "ground_truth.csv")
    print(f"wrote {out / 'cube.bin'}, {out / 'config.txt'}, {out / 'ground_truth.csv'}")
    return 0


def _options(args) -> PipelineOptions:
    slide = args.slide_frames if args.slide_frames is not None else args.window_frames
    return PipelineOptions(
        methods=tuple(args.method) if args.method else tuple(Method),
        window=WindowSpec(args.window_frames, slide),
        n_avg=args.n_avg,
        range_window=args.window,
        dc_fit=args.dc_fit,
        phase_method=args.phase_method,
        denoise=args.denoise,
        denoise_param=args.denoise_param,
        filter_family=args.filter_family,
        filter_order=args.filter_order,
        hr_band=args.hr_band,
        rr_band=args.rr_band,
        pad_factor=args.pad_factor,
        music_lag=args.music_order,
        prony_order_hr=args.prony_order,
        keep_stages=bool(args.dump_stages),
    )


def _load_cube(args):
    cube_path = _existing(args.cube)
    cfg_path = _existing(args.config) if args.config else _existing(str(cube_path.parent / "config.txt"))
    return cube_path, read_iq_cube(cube_path, load_config(cfg_path), Layout(args.layout))


def _dump(res: WindowResult, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for name, arr in res.stages.items():
        arr = np.asarray(arr)
        path = directory / f"w{res.window_index:04d}_{name}.csv"
        if name.startswith("spectrum_"):
            np.savetxt(path, arr, delimiter=",", header="freq_hz,power", comments="", fmt="%.9g")
        elif arr.ndim == 2:
            np.savetxt(path, arr, delimiter=",", fmt="%.6g")
        else:
            np.savetxt(path, arr[:, None], delimiter=",", header="value", comments="", fmt="%.9g")


def _cmd_process(args) -> int:
    cube_path, cube = _load_cube(args)
    opts = _options(args)
    records = []
    for res, dt in iter_window_results(cube, opts):
        log.info("window %d: %.1f ms", res.window_index, 1e3 * dt)
        records.extend(res.records)
        if args.dump_stages:
            _dump(res, Path(args.dump_stages))
    out = Path(args.output) if args.output else cube_path.parent / "estimates.csv"
    write_estimates_csv(records, out)
    print(f"wrote {len(records)} estimates to {out}")
    return 0


def _cmd_stream(args) -> int:
    cube_path, cube = _load_cube(args)
    opts = _options(args)
    out = Path(args.output) if args.output else cube_path.parent / "estimates.csv"
    timing = Path(args.timing_log) if args.timing_log else out.with_name("timing.csv")
    records = []
    with open(timing, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["window", "t_start_s", "t_end_s", "process_ms"])
        period = cube.config.frame_period
        span = opts.window.window_frames * period

        def on_window(res: WindowResult, dt: float) -> None:
            w.writerow([res.window_index, f"{res.t_start:.4f}", f"{res.t_start + span:.4f}", f"{1e3 * dt:.3f}"])

        for res in stream_results(cube, options=opts, workers=args.workers, on_window=on_window):
            records.extend(res.records)
            if args.dump_stages:
                _dump(res, Path(args.dump_stages))
    write_estimates_csv(records, out)
    print(f"wrote {len(records)} estimates to {out}, timing to {timing}")
    return 0


def _cmd_evaluate(args) -> int:
    est_path = _existing(args.estimates or "estimates.csv")
    truth_path = _existing(args.truth or str(est_path.parent / "ground_truth.csv"))
    records = read_estimates_csv(est_path)
    truth = read_ground_truth_csv(truth_path)
    summary = evaluation.summarize(records, truth, args.window_frames)
    out = Path(args.output) if args.output else est_path.parent / "summary.csv"
    evaluation.write_summary_csv(summary, out)
    for (method, kind), s in summary.items():
        unit = "BPM" if kind == "hr" else "RPM"
        print(f"{method.value:8s} {kind}: MAE {s.mae:.3f} {unit}  RMSE {s.rmse:.3f}  bias {s.mean_bias:+.3f}  n={s.n}")
    if args.plot:
        evaluation.plot_agreement(records, truth, args.window_frames, args.plot)
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "process": _cmd_process,
    "stream": _cmd_stream,
    "evaluate": _cmd_evaluate,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: 0 for --help, 2 for usage errors
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return _COMMANDS[args.command](args)
    except (_InputMissing, VitalsError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
