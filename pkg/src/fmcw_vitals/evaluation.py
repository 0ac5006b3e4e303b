"""Accuracy metrics against reference rates, plus Bland-Altman agreement."""
from __future__ import annotations

import csv
import os
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike

from .ingest import EstimateRecord, GroundTruthRow, Method

LOA_Z = 1.96


@dataclass(frozen=True)
class EvalSummary:
    mae: float
    rmse: float
    n: int
    mean_bias: float
    loa_low: float
    loa_high: float

    def as_dict(self) -> dict[str, float]:
        return {
            "mae": self.mae,
            "rmse": self.rmse,
            "n": float(self.n),
            "mean_bias": self.mean_bias,
            "loa_low": self.loa_low,
            "loa_high": self.loa_high,
        }


def evaluate(estimates: ArrayLike, references: ArrayLike) -> EvalSummary:
    """Error statistics of ``estimates`` against ``references``.

    Bias is ``mean(estimate - reference)``; the limits of agreement are
    bias +/- 1.96 population standard deviations of the differences.
    """
    est = np.asarray(estimates, dtype=float).ravel()
    ref = np.asarray(references, dtype=float).ravel()
    if est.size != ref.size:
        raise ValueError(f"length mismatch: {est.size} estimates vs {ref.size} references")
    if est.size == 0:
        raise ValueError("need at least one estimate")
    if not (np.all(np.isfinite(est)) and np.all(np.isfinite(ref))):
        raise ValueError("estimates and references must be finite")
    d = est - ref
    bias = float(d.mean())
    sd = float(d.std())
    return EvalSummary(
        mae=float(np.abs(d).mean()),
        rmse=float(np.sqrt(np.mean(d * d))),
        n=int(d.size),
        mean_bias=bias,
        loa_low=bias - LOA_Z * sd,
        loa_high=bias + LOA_Z * sd,
    )


def window_references(
    records: Sequence[EstimateRecord], truth: Sequence[GroundTruthRow], window_frames: int
) -> list[tuple[float, float]]:
    """Mean reference (hr_bpm, rr_rpm) over the frames each record covers."""
    if not truth:
        raise ValueError("ground truth is empty")
    frames = np.array([r.frame for r in truth])
    times = np.array([r.t_s for r in truth])
    hr = np.array([r.hr_bpm for r in truth])
    rr = np.array([r.rr_rpm for r in truth])
    if frames.size > 1:
        period = (times[-1] - times[0]) / (frames[-1] - frames[0])
    else:
        period = 1.0
    out = []
    for rec in records:
        first = int(round(rec.t_start / period)) + int(frames[0])
        sel = (frames >= first) & (frames < first + window_frames)
        if not sel.any():
            raise ValueError(f"no ground truth covers window {rec.window_index} (t_start {rec.t_start} s)")
        out.append((float(hr[sel].mean()), float(rr[sel].mean())))
    return out


def summarize(
    records: Sequence[EstimateRecord], truth: Sequence[GroundTruthRow], window_frames: int
) -> dict[tuple[Method, str], EvalSummary]:
    """Summary per (method, "hr" | "rr"); RR is skipped for HR-only methods."""
    refs = window_references(records, truth, window_frames)
    pairs: dict[tuple[Method, str], tuple[list, list]] = defaultdict(lambda: ([], []))
    for rec, (hr_ref, rr_ref) in zip(records, refs):
        if rec.hr_bpm is not None:
            pairs[rec.method, "hr"][0].append(rec.hr_bpm)
            pairs[rec.method, "hr"][1].append(hr_ref)
        if rec.rr_rpm is not None:
            pairs[rec.method, "rr"][0].append(rec.rr_rpm)
            pairs[rec.method, "rr"][1].append(rr_ref)
    return {key: evaluate(e, r) for key, (e, r) in pairs.items()}


def write_summary_csv(summary: dict[tuple[Method, str], EvalSummary], path: str | os.PathLike) -> None:
    """Rows ``method,metric,value`` with metric names like ``hr_mae``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "metric", "value"])
        for (method, kind), s in summary.items():
            for name, value in s.as_dict().items():
                w.writerow([method.value, f"{kind}_{name}", f"{value:.6g}"])


def plot_agreement(
    records: Sequence[EstimateRecord],
    truth: Sequence[GroundTruthRow],
    window_frames: int,
    path: str | os.PathLike,
) -> None:
    """Scatter of estimate vs reference HR and a Bland-Altman panel, one colour per method."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    refs = window_references(records, truth, window_frames)
    fig, (ax_s, ax_b) = plt.subplots(1, 2, figsize=(10, 4.5))
    by_method: dict[Method, list[tuple[float, float]]] = defaultdict(list)
    for rec, (hr_ref, _) in zip(records, refs):
        if rec.hr_bpm is not None:
            by_method[rec.method].append((hr_ref, rec.hr_bpm))
    for method, pts in by_method.items():
        ref, est = np.array(pts).T
        ax_s.scatter(ref, est, s=12, label=method.value)
        ax_b.scatter((ref + est) / 2, est - ref, s=12, label=method.value)
        s = evaluate(est, ref)
        for y in (s.mean_bias, s.loa_low, s.loa_high):
            ax_b.axhline(y, lw=0.8, ls="--" if y != s.mean_bias else "-", alpha=0.6)
    lims = ax_s.get_xlim()
    ax_s.plot(lims, lims, "k:", lw=0.8)
    ax_s.set(xlabel="reference HR (BPM)", ylabel="estimated HR (BPM)")
    ax_b.set(xlabel="mean of estimate and reference (BPM)", ylabel="estimate - reference (BPM)")
    ax_s.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
