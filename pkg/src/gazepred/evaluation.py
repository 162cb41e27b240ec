"""Horizon errors, event-conditioned P50/P95 statistics and inference timing."""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .events import EventClass, EventSegment, bin_events
from .models import Forecaster, predict_batch
from .signal import FeatureSeries, GazeRecording, build_window_set

EVENT_TYPES = ("fixation", "cep", "sac_small", "sac_large")
SACCADE_AMPLITUDE_EDGES = (0.0, 2.0, 10.0, math.inf)


@dataclass
class ErrorSeries:
    errors: np.ndarray  # (N,) degrees, at the final horizon step
    target_index: np.ndarray  # (N,) sample index t + pi_samples
    classes: np.ndarray  # (N,) event class of the target sample
    subject_id: str
    step_errors: np.ndarray | None = None  # (N, pi_samples), optional

    def __len__(self):
        return len(self.errors)


def errors_from_deltas(rec: GazeRecording, labels, anchors, deltas) -> ErrorSeries:
    """Final-step errors of predicted deltas ``(N, P, 2)`` anchored at ``anchors``."""
    anchors = np.asarray(anchors, dtype=np.int64)
    deltas = np.asarray(deltas, dtype=np.float64)
    P = deltas.shape[1]
    pos = rec.positions
    steps = anchors[:, None] + np.arange(1, P + 1)
    pred = pos[anchors][:, None, :] + deltas
    step_err = np.hypot(*(pred - pos[steps]).transpose(2, 0, 1))
    target = anchors + P
    return ErrorSeries(step_err[:, -1].copy(), target, np.asarray(labels)[target], rec.subject_id,
                       step_err)


def horizon_errors(model: Forecaster, rec: GazeRecording, features: FeatureSeries, labels,
                   pi_samples: int | None = None) -> ErrorSeries:
    """Per-window error at ``t + pi_samples`` for every evaluable window."""
    pi = model.cfg.pi_samples if pi_samples is None else pi_samples
    ws = build_window_set(features, rec, labels, model.cfg.window_len, pi)
    deltas, _ = predict_batch(model, ws.features)
    return errors_from_deltas(rec, labels, ws.anchor_index, deltas)


def percentile(values, q: float) -> float:
    """Linear-interpolation percentile at rank ``q/100 * (n - 1)`` of the sorted values."""
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise ValueError("percentile of an empty array")
    if not 0.0 <= q <= 100.0:
        raise ValueError(f"q must lie in [0, 100], got {q}")
    r = q / 100.0 * (v.size - 1)
    lo = int(math.floor(r))
    hi = min(lo + 1, v.size - 1)
    return float(v[lo] + (r - lo) * (v[hi] - v[lo]))


@dataclass(frozen=True)
class EventErrorSummary:
    kind: str  # fixation | saccade | cep
    bin: str  # fix_short | fix_long | sac_small | sac_large | cep
    start_idx: int
    end_idx: int
    p50_deg: float
    p95_deg: float
    n_samples: int
    subject_id: str
    duration_ms: float = 0.0
    amplitude_deg: float = 0.0


def _event_bin(seg: EventSegment, fixation_split_ms: float, saccade_split_deg: float) -> str:
    bins = bin_events([seg], fixation_split_ms, saccade_split_deg)
    return next(k for k, v in bins.items() if v)


def event_summaries(errors: ErrorSeries, segments, ceps, fixation_split_ms: float = 400.0,
                    saccade_split_deg: float = 2.0) -> list[EventErrorSummary]:
    """Within-event P50/P95 of the errors whose target sample falls inside each event."""
    order = np.argsort(errors.target_index, kind="stable")
    tidx = errors.target_index[order]
    errs = errors.errors[order]

    def collect(s, e):
        lo = np.searchsorted(tidx, s, side="left")
        hi = np.searchsorted(tidx, e, side="right")
        return errs[lo:hi]

    out = []
    for seg in segments:
        if seg.cls not in (EventClass.FIXATION, EventClass.SACCADE):
            continue
        vals = collect(seg.start_idx, seg.end_idx)
        if vals.size == 0:
            continue
        kind = "fixation" if seg.cls == EventClass.FIXATION else "saccade"
        out.append(EventErrorSummary(kind, _event_bin(seg, fixation_split_ms, saccade_split_deg),
                                     seg.start_idx, seg.end_idx, percentile(vals, 50),
                                     percentile(vals, 95), int(vals.size), seg.subject_id,
                                     seg.duration_ms, seg.amplitude_deg))
    for cep in ceps:
        vals = collect(cep.start_idx, cep.end_idx)
        if vals.size == 0:
            continue
        src = cep.source_saccade
        out.append(EventErrorSummary("cep", "cep", cep.start_idx, cep.end_idx,
                                     percentile(vals, 50), percentile(vals, 95), int(vals.size),
                                     src.subject_id, 0.0, src.amplitude_deg))
    return out


def sample_mask_for_events(target_index, events) -> np.ndarray:
    """Boolean mask of error entries whose target lies inside any of ``events``."""
    mask = np.zeros(len(target_index), dtype=bool)
    for ev in events:
        mask |= (target_index >= ev.start_idx) & (target_index <= ev.end_idx)
    return mask


def cdf_curve(values, n_points: int = 100) -> list[tuple[float, float]]:
    """Empirical CDF at quantile levels ``k / n_points``, ``k = 1..n_points``.

    Each point is ``(x, p)`` where ``x`` is the smallest sample with
    ``ECDF(x) >= p``.
    """
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise ValueError("CDF of an empty array")
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    k = np.arange(1, n_points + 1, dtype=np.int64)
    # ceil(k n / n_points) - 1 in integers, so no rounding can shift a rank
    idx = (k * v.size + n_points - 1) // n_points - 1
    return [(float(v[i]), float(j / n_points)) for i, j in zip(idx, k)]


@dataclass(frozen=True)
class SubjectProfile:
    subject_id: str
    # event type -> (median of event P50, median of event P95, number of events)
    cells: dict


def subject_profiles(summaries) -> list[SubjectProfile]:
    """Median over events of event-level P50 and P95, per subject and event type."""
    groups: dict[tuple[str, str], list[EventErrorSummary]] = {}
    for s in summaries:
        etype = "fixation" if s.kind == "fixation" else s.bin
        groups.setdefault((s.subject_id, etype), []).append(s)
    out = []
    for sid in sorted({k[0] for k in groups}):
        cells = {}
        for etype in EVENT_TYPES:
            evs = groups.get((sid, etype))
            if evs:
                cells[etype] = (percentile([e.p50_deg for e in evs], 50),
                                percentile([e.p95_deg for e in evs], 50), len(evs))
        out.append(SubjectProfile(sid, cells))
    return out


def boxplot_stats(groups: dict) -> dict:
    """Quartiles, mean and Tukey whiskers (1.5 IQR, clamped to the data) per bin."""
    out = {}
    for name, values in groups.items():
        v = np.sort(np.asarray(values, dtype=np.float64).ravel())
        if v.size == 0:
            warnings.warn(f"boxplot bin {name!r} is empty and was omitted", stacklevel=2)
            continue
        q1, med, q3 = percentile(v, 25), percentile(v, 50), percentile(v, 75)
        iqr = q3 - q1
        inside = v[(v >= q1 - 1.5 * iqr) & (v <= q3 + 1.5 * iqr)]
        lo, hi = float(inside.min()), float(inside.max())
        out[name] = {"n": int(v.size), "q1": q1, "median": med, "q3": q3,
                     "mean": float(v.mean()), "whisker_lo": lo, "whisker_hi": hi,
                     "n_outliers": int(((v < lo) | (v > hi)).sum())}
    return out


def amplitude_bin_label(amplitude: float, edges=SACCADE_AMPLITUDE_EDGES) -> str:
    """Label of the half-open amplitude bin ``[lo, hi)``, e.g. ``2_10`` or ``10_inf``."""
    for lo, hi in zip(edges[:-1], edges[1:]):
        if lo <= amplitude < hi:
            return f"{lo:g}_{hi:g}"
    return f"{edges[-2]:g}_{edges[-1]:g}"


def p95_over_windows(errors: ErrorSeries, fs: float, window_s: float = 1.0) -> np.ndarray:
    """P95 of the errors inside each non-overlapping window of ``window_s`` seconds."""
    if len(errors) == 0:
        return np.zeros(0)
    key = (errors.target_index // max(1, int(round(window_s * fs)))).astype(np.int64)
    out = []
    for k in np.unique(key):
        out.append(percentile(errors.errors[key == k], 95))
    return np.array(out)


@dataclass
class BenchResult:
    mean_ms: float
    std_ms: float
    timings_ms: list
    warmup: int


def bench_inference(model: Forecaster, input_shape=None, warmup: int = 10, runs: int = 100,
                    seed: int = 0) -> BenchResult:
    """Untimed warm-up passes, then ``runs`` timed single-window forward passes."""
    if input_shape is None:
        input_shape = model.cfg.input_shape
    x = np.random.default_rng(seed).standard_normal((1, *input_shape)).astype(np.float32)
    model.eval()
    for _ in range(warmup):
        model.forward(x)
    timings = []
    for _ in range(runs):
        t0 = time.perf_counter()
        model.forward(x)
        timings.append((time.perf_counter() - t0) * 1000.0)
    arr = np.array(timings)
    return BenchResult(float(arr.mean()) if runs else math.nan,
                       float(arr.std()) if runs else math.nan, timings, warmup)
