"""Ranging accuracy metrics and the end-to-end evaluation report.

The headline experiment: a beacon and a receiver at ten known separations
(0.5 m to 5 m), two minutes of advertising each. Every trace runs through
three pipelines:

    raw       rssi -> distance, no smoothing
    filtered  static-Q Kalman, then rssi -> distance
    dynamic   variance-tracking-Q Kalman, then rssi -> distance

The report carries per-spot statistics, an error histogram per pipeline,
and a summary keyed on worst-spot RMS error. accuracy here means mean
absolute error against the true distance; precision means the spread
(population standard deviation) of the estimates, independent of truth.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import filters, ranging, sim
from .errors import EmptyInput, InsufficientSamples
from .model import Trace, atomic_write_text

PIPELINES = ("raw", "filtered", "dynamic")

DEFAULT_BIN_WIDTH_M = 0.25

SPOT_CSV_HEADER = ["true_m", "pipeline", "mean_m", "accuracy_m", "precision_m", "n"]
HIST_CSV_HEADER = ["pipeline", "bin_lo", "bin_hi", "count"]


def accuracy(estimates_m: Sequence[float], true_m: float) -> float:
    """Mean absolute error of distance estimates against the truth."""
    if len(estimates_m) == 0:
        raise EmptyInput("accuracy needs at least one estimate")
    arr = np.asarray(estimates_m, dtype=float)
    return float(np.mean(np.abs(arr - float(true_m))))


def precision(estimates_m: Sequence[float]) -> float:
    """Population standard deviation of the estimates themselves."""
    if len(estimates_m) < 2:
        raise InsufficientSamples("precision needs at least two estimates")
    return float(np.std(np.asarray(estimates_m, dtype=float)))


@dataclass(frozen=True)
class Histogram:
    """Uniform-width bins: edges has one more element than counts."""

    edges: tuple[float, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.edges) != len(self.counts) + 1:
            raise ValueError("edges must have exactly one more element than counts")


def error_histogram(errors_m: Sequence[float], bin_width_m: float = DEFAULT_BIN_WIDTH_M) -> Histogram:
    """Bin absolute errors into uniform buckets aligned to multiples of the width.

    Bucket i spans [edges[i], edges[i+1]), except the last bucket, which
    also includes its upper edge so the maximum error is always counted.
    """
    if len(errors_m) == 0:
        raise EmptyInput("histogram needs at least one error value")
    if not math.isfinite(bin_width_m) or bin_width_m <= 0.0:
        raise ValueError(f"bin_width_m must be positive, got {bin_width_m!r}")
    arr = np.asarray(errors_m, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0.0):
        raise ValueError("errors must be finite and non-negative")
    k_lo = int(np.floor(arr.min() / bin_width_m))
    k_hi = int(np.floor(arr.max() / bin_width_m))
    idx = np.floor(arr / bin_width_m).astype(int)
    counts = [0] * (k_hi - k_lo + 1)
    for i in idx:
        counts[int(i) - k_lo] += 1
    edges = tuple((k_lo + j) * bin_width_m for j in range(len(counts) + 1))
    return Histogram(edges=edges, counts=tuple(counts))


@dataclass(frozen=True)
class PipelineStats:
    mean_est_m: float
    accuracy_m: float
    precision_m: float
    rms_error_m: float


@dataclass(frozen=True)
class SpotReport:
    true_distance_m: float
    n_samples: int
    pipelines: dict[str, PipelineStats]


@dataclass(frozen=True)
class ErrorReport:
    """Everything the ranging evaluation produced, ready to serialize."""

    spots: tuple[SpotReport, ...]
    histograms: dict[str, Histogram]
    summary: dict[str, dict[str, float]]
    config: dict
    bin_width_m: float


def _pipeline_traces(trace: Trace, params: filters.KalmanParams, window_n: int,
                     q_scale: float) -> dict[str, Trace]:
    return {
        "raw": trace,
        "filtered": filters.smooth_trace(trace, params),
        "dynamic": filters.smooth_trace_dynamic(trace, params, window_n, q_scale),
    }


def _estimates(trace: Trace, model: ranging.PathLossModel) -> np.ndarray:
    return np.asarray([ranging.rssi_to_distance(s.rssi_dbm, model) for s in trace.samples])


def ranging_report(config: sim.SimConfig, params: filters.KalmanParams | None = None,
                   window_n: int = 10, q_scale: float = 1.0,
                   bin_width_m: float = DEFAULT_BIN_WIDTH_M) -> ErrorReport:
    """Run the ten-spot ranging sweep through all three pipelines.

    Deterministic in config.seed: the same seed yields the exact same
    report object. Raises the usual filter errors if a generated trace is
    unusable (e.g. total packet loss at a spot).
    """
    if params is None:
        params = filters.default_params()
    spots = sim.ranging_experiment(config)
    model = config.path_loss
    spot_reports = []
    pooled_errors: dict[str, list[float]] = {name: [] for name in PIPELINES}
    per_spot_rms: dict[str, list[float]] = {name: [] for name in PIPELINES}
    for true_d, trace in spots:
        traces = _pipeline_traces(trace, params, window_n, q_scale)
        stats: dict[str, PipelineStats] = {}
        for name in PIPELINES:
            ests = _estimates(traces[name], model)
            errors = np.abs(ests - true_d)
            stats[name] = PipelineStats(
                mean_est_m=float(np.mean(ests)),
                accuracy_m=accuracy(ests, true_d),
                precision_m=precision(ests),
                rms_error_m=float(np.sqrt(np.mean(errors ** 2))),
            )
            pooled_errors[name].extend(errors.tolist())
            per_spot_rms[name].append(stats[name].rms_error_m)
        spot_reports.append(SpotReport(
            true_distance_m=true_d,
            n_samples=len(trace.samples),
            pipelines=stats,
        ))
    histograms = {name: error_histogram(pooled_errors[name], bin_width_m) for name in PIPELINES}
    summary = {
        name: {
            "max_spot_rms_m": max(per_spot_rms[name]),
            "max_spot_accuracy_m": max(s.pipelines[name].accuracy_m for s in spot_reports),
            "max_sample_error_m": max(pooled_errors[name]),
        }
        for name in PIPELINES
    }
    report_config = {
        "seed": config.seed,
        "ref_power_dbm": model.ref_power_dbm,
        "exponent": model.exponent,
        "shadow_sigma_db": config.shadow_sigma_db,
        "advertising_interval_ms": config.advertising_interval_ms,
        "interval_jitter_ms": config.interval_jitter_ms,
        "packet_loss_prob": config.packet_loss_prob,
        "dt": params.dt,
        "q": params.Q[0][0],
        "r": params.R,
        "p0": params.P0[0][0],
        "window_n": window_n,
        "q_scale": q_scale,
    }
    return ErrorReport(
        spots=tuple(spot_reports),
        histograms=histograms,
        summary=summary,
        config=report_config,
        bin_width_m=bin_width_m,
    )


def window_sweep(config: sim.SimConfig, params: filters.KalmanParams | None = None,
                 window_sizes: Sequence[int] = (2, 5, 10, 20, 50),
                 q_scale: float = 1.0) -> tuple[dict, ...]:
    """Dynamic-pipeline quality as a function of the variance window size.

    Simulates the sweep once and refilters per window size, so rows are
    directly comparable. Each row reports the worst-spot RMS error and
    the mean per-spot accuracy for that window size.
    """
    if params is None:
        params = filters.default_params()
    sizes = [int(n) for n in window_sizes]
    if not sizes:
        raise EmptyInput("window_sizes must be non-empty")
    if any(n < 2 for n in sizes):
        raise ValueError("window sizes must all be >= 2")
    spots = sim.ranging_experiment(config)
    model = config.path_loss
    rows = []
    for n in sizes:
        rms_list = []
        acc_list = []
        for true_d, trace in spots:
            smoothed = filters.smooth_trace_dynamic(trace, params, n, q_scale)
            ests = _estimates(smoothed, model)
            errors = np.abs(ests - true_d)
            rms_list.append(float(np.sqrt(np.mean(errors ** 2))))
            acc_list.append(float(np.mean(errors)))
        rows.append({
            "window_n": n,
            "max_spot_rms_m": max(rms_list),
            "mean_accuracy_m": sum(acc_list) / len(acc_list),
        })
    return tuple(rows)


def _round12(v: float) -> float:
    """Round to 12 significant digits so serialized reports are stable."""
    return float(f"{v:.12g}")


def histogram_to_dict(h: Histogram) -> dict:
    return {"edges": [_round12(e) for e in h.edges], "counts": list(h.counts)}


def report_to_dict(report: ErrorReport) -> dict:
    return {
        "config": {k: (_round12(v) if isinstance(v, float) else v)
                   for k, v in report.config.items()},
        "bin_width_m": _round12(report.bin_width_m),
        "spots": [
            {
                "true_distance_m": _round12(s.true_distance_m),
                "n_samples": s.n_samples,
                "pipelines": {
                    name: {
                        "mean_est_m": _round12(st.mean_est_m),
                        "accuracy_m": _round12(st.accuracy_m),
                        "precision_m": _round12(st.precision_m),
                        "rms_error_m": _round12(st.rms_error_m),
                    }
                    for name, st in s.pipelines.items()
                },
            }
            for s in report.spots
        ],
        "histograms": {name: histogram_to_dict(h) for name, h in report.histograms.items()},
        "summary": {
            name: {k: _round12(v) for k, v in vals.items()}
            for name, vals in report.summary.items()
        },
    }


def write_report(report: ErrorReport, out_dir: str) -> dict[str, str]:
    """Write report.json, spot_summary.csv and error_hist.csv into out_dir.

    Returns the mapping of logical name to written path. Files are written
    atomically and byte-identically for identical reports.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "report": os.path.join(out_dir, "report.json"),
        "spots": os.path.join(out_dir, "spot_summary.csv"),
        "histogram": os.path.join(out_dir, "error_hist.csv"),
    }
    atomic_write_text(paths["report"], json.dumps(report_to_dict(report), indent=2) + "\n")

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SPOT_CSV_HEADER)
    for spot in report.spots:
        for name in PIPELINES:
            st = spot.pipelines[name]
            writer.writerow([
                f"{spot.true_distance_m:.6f}", name, f"{st.mean_est_m:.6f}",
                f"{st.accuracy_m:.6f}", f"{st.precision_m:.6f}", spot.n_samples,
            ])
    atomic_write_text(paths["spots"], buf.getvalue())

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HIST_CSV_HEADER)
    for name in PIPELINES:
        h = report.histograms[name]
        for i, count in enumerate(h.counts):
            writer.writerow([name, f"{h.edges[i]:.6f}", f"{h.edges[i + 1]:.6f}", count])
    atomic_write_text(paths["histogram"], buf.getvalue())
    return paths


def write_window_sweep(rows: Sequence[dict], out_dir: str) -> str:
    """Write window_sweep.csv; returns the path."""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "window_sweep.csv")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["window_n", "max_spot_rms_m", "mean_accuracy_m"])
    for row in rows:
        writer.writerow([row["window_n"], f"{row['max_spot_rms_m']:.6f}",
                         f"{row['mean_accuracy_m']:.6f}"])
    atomic_write_text(path, buf.getvalue())
    return path
