"""Gaze recordings, kinematics, model features and sliding-window datasets."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError

CSV_COLUMNS = ("subject_id", "task_id", "t_ms", "x_deg", "y_deg", "valid")
LOW_SPEED_EPS_DPS = 1.0


@dataclass(frozen=True)
class GazeRecording:
    subject_id: str
    task_id: str
    sample_rate_hz: float
    t_ms: np.ndarray
    x_deg: np.ndarray
    y_deg: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        n = len(self.t_ms)
        if n < 2 or any(len(a) != n for a in (self.x_deg, self.y_deg, self.valid)):
            raise DataError("recording arrays must have equal length >= 2")
        if self.sample_rate_hz <= 0:
            raise DataError(f"sample rate must be positive, got {self.sample_rate_hz}")
        dt = np.diff(self.t_ms)
        bad = np.flatnonzero(~(dt > 0))
        if bad.size:
            raise DataError(f"timestamps not strictly increasing at sample {bad[0] + 1}")
        nominal = 1000.0 / self.sample_rate_hz
        if abs(np.median(dt) - nominal) > 0.2 * nominal:
            raise DataError(
                f"median sample interval {np.median(dt):.3f} ms is not within 20% of {nominal:.3f} ms"
            )
        pos_ok = np.isfinite(self.x_deg) & np.isfinite(self.y_deg)
        if np.any(self.valid & ~pos_ok):
            raise DataError("valid samples must have finite positions")

    def __len__(self):
        return len(self.t_ms)

    @property
    def positions(self) -> np.ndarray:
        return np.column_stack([self.x_deg, self.y_deg])

    def scaled(self, a: float) -> GazeRecording:
        return replace(self, x_deg=self.x_deg * a, y_deg=self.y_deg * a)


def make_recording(x, y, sample_rate_hz: float = 90.0, valid=None, subject_id: str = "S000",
                   task_id: str = "RAN", t_ms=None) -> GazeRecording:
    """Build a recording from position arrays, filling timestamps on the nominal grid."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if valid is None:
        valid = np.isfinite(x) & np.isfinite(y)
    valid = np.asarray(valid, dtype=bool)
    if t_ms is None:
        t_ms = np.arange(len(x)) * (1000.0 / sample_rate_hz)
    x = np.where(valid, x, np.nan)
    y = np.where(valid, y, np.nan)
    return GazeRecording(subject_id, task_id, float(sample_rate_hz), np.asarray(t_ms, float), x, y,
                         valid)


def load_recording(path, sample_rate_hz: float = 90.0) -> GazeRecording:
    """Read a recording CSV (``subject_id,task_id,t_ms,x_deg,y_deg,valid``).

    Rows with ``valid=0`` or a missing/non-finite position are kept as invalid
    samples with NaN positions.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise FormatError(f"{path}: empty file, expected header {','.join(CSV_COLUMNS)}")
        header = [h.strip() for h in header]
        for i, col in enumerate(CSV_COLUMNS):
            if i >= len(header):
                raise FormatError(f"{path}: missing column {col!r}")
            if header[i] != col:
                raise FormatError(f"{path}: unexpected column {header[i]!r}, expected {col!r}")
        if len(header) > len(CSV_COLUMNS):
            raise FormatError(f"{path}: unexpected column {header[len(CSV_COLUMNS)]!r}")

        subject = task = None
        t, xs, ys, ok = [], [], [], []
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(CSV_COLUMNS):
                raise FormatError(f"{path}: row {row_no} has {len(row)} fields, expected 6")
            if subject is None:
                subject, task = row[0], row[1]
            elif row[0] != subject or row[1] != task:
                raise DataError(f"{path}: row {row_no} changes subject/task id")
            try:
                tm = float(row[2])
            except ValueError:
                raise DataError(f"{path}: row {row_no} has non-numeric t_ms {row[2]!r}") from None
            if t and not tm > t[-1]:
                raise DataError(f"{path}: timestamps not increasing at row {row_no}")
            x = _parse_float(row[3])
            y = _parse_float(row[4])
            flag = row[5].strip()
            if flag not in ("0", "1"):
                raise DataError(f"{path}: row {row_no} has valid={flag!r}, expected 0 or 1")
            good = flag == "1" and math.isfinite(x) and math.isfinite(y)
            t.append(tm)
            xs.append(x if good else math.nan)
            ys.append(y if good else math.nan)
            ok.append(good)
    if len(t) < 2:
        raise DataError(f"{path}: need at least 2 samples, found {len(t)}")
    return GazeRecording(subject, task, float(sample_rate_hz), np.array(t), np.array(xs),
                         np.array(ys), np.array(ok, dtype=bool))


def _parse_float(s: str) -> float:
    s = s.strip()
    if not s:
        return math.nan
    try:
        return float(s)
    except ValueError:
        return math.nan


def save_recording(rec: GazeRecording, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for t, x, y, v in zip(rec.t_ms, rec.x_deg, rec.y_deg, rec.valid):
            if v:
                w.writerow((rec.subject_id, rec.task_id, repr(float(t)), repr(float(x)),
                            repr(float(y)), 1))
            else:
                w.writerow((rec.subject_id, rec.task_id, repr(float(t)), "", "", 0))


# -- kinematics -------------------------------------------------------------

@dataclass(frozen=True)
class KinematicSeries:
    vx_dps: np.ndarray
    vy_dps: np.ndarray
    speed_dps: np.ndarray
    heading_rad: np.ndarray
    valid: np.ndarray

    def __len__(self):
        return len(self.vx_dps)


def differentiate(rec: GazeRecording, low_speed_eps_dps: float = LOW_SPEED_EPS_DPS) -> KinematicSeries:
    """Central-difference velocity in deg/s; one-sided at the ends.

    A sample is kinematically valid only if it and its neighbours are valid;
    invalid samples get zero velocity.
    """
    valid = rec.valid
    if _longest_run(valid) < 3:
        raise DataError("recording has fewer than 3 consecutive valid samples")
    fs = rec.sample_rate_hz
    vel = []
    for p in (rec.x_deg, rec.y_deg):
        v = np.empty_like(p)
        v[1:-1] = (p[2:] - p[:-2]) * (fs / 2.0)
        v[0] = (p[1] - p[0]) * fs
        v[-1] = (p[-1] - p[-2]) * fs
        vel.append(v)
    kin_valid = valid.copy()
    kin_valid[1:] &= valid[:-1]
    kin_valid[:-1] &= valid[1:]
    vx = np.where(kin_valid, vel[0], 0.0)
    vy = np.where(kin_valid, vel[1], 0.0)
    speed = np.sqrt(vx * vx + vy * vy)
    kin = KinematicSeries(vx, vy, speed, np.zeros_like(vx), kin_valid)
    return heading(kin, low_speed_eps_dps)


def _longest_run(mask: np.ndarray) -> int:
    best = cur = 0
    for m in mask:
        cur = cur + 1 if m else 0
        best = max(best, cur)
    return best


def heading(kin: KinematicSeries, low_speed_eps_dps: float = LOW_SPEED_EPS_DPS) -> KinematicSeries:
    """Fill ``heading_rad`` with atan2(vy, vx), carrying it forward at low speed."""
    raw = np.arctan2(kin.vy_dps, kin.vx_dps)
    raw[raw <= -np.pi] = np.pi
    defined = kin.speed_dps >= low_speed_eps_dps
    # index of the most recent defined sample, -1 if none yet
    idx = np.where(defined, np.arange(len(raw)), -1)
    np.maximum.accumulate(idx, out=idx)
    out = np.where(idx >= 0, raw[np.maximum(idx, 0)], 0.0)
    return replace(kin, heading_rad=out)


# -- features ---------------------------------------------------------------

class FeatureSet(str, enum.Enum):
    VEL_HEADING_3 = "VEL_HEADING_3"
    VEL_HEADING_4 = "VEL_HEADING_4"

    @property
    def n_channels(self) -> int:
        return 3 if self is FeatureSet.VEL_HEADING_3 else 4


@dataclass(frozen=True)
class Normalization:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, feats: FeatureSeries) -> FeatureSeries:
        ch = (feats.channels - self.mean[:, None]) / self.std[:, None]
        return replace(feats, channels=ch, normalization=self)


@dataclass(frozen=True)
class FeatureSeries:
    channels: np.ndarray  # (n_channels, n_samples)
    feature_set: FeatureSet
    valid: np.ndarray
    normalization: Normalization | None = field(default=None)

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    def __len__(self):
        return self.channels.shape[1]


def make_features(kin: KinematicSeries, feature_set: FeatureSet | str) -> FeatureSeries:
    fset = FeatureSet(feature_set)
    if fset is FeatureSet.VEL_HEADING_3:
        ch = np.stack([kin.vx_dps, kin.vy_dps, kin.heading_rad])
    else:
        ch = np.stack([kin.vx_dps, kin.vy_dps, np.sin(kin.heading_rad), np.cos(kin.heading_rad)])
    return FeatureSeries(ch, fset, kin.valid.copy())


def fit_normalization(series) -> Normalization:
    """Per-channel mean/std over the valid samples of the given (training) series."""
    cols = [s.channels[:, s.valid] for s in series]
    data = np.concatenate(cols, axis=1).astype(np.float64)
    if data.shape[1] == 0:
        raise DataError("no valid samples to fit normalization")
    mean = data.mean(axis=1)
    std = data.std(axis=1)
    std[std == 0] = 1.0
    return Normalization(mean, std)


def with_label_channels(feats: FeatureSeries, labels, n_classes: int = 4) -> FeatureSeries:
    """Append one-hot event-class channels (used when labels are a model input)."""
    onehot = np.eye(n_classes)[np.asarray(labels, dtype=int)].T
    return replace(feats, channels=np.vstack([feats.channels, onehot]))


def pi_to_samples(pi_ms: float, sample_rate_hz: float) -> int:
    if not pi_ms > 0:
        raise ValueError(f"prediction interval must be positive, got {pi_ms}")
    return max(1, int(math.floor(pi_ms * sample_rate_hz / 1000.0 + 0.5)))


# -- windows ----------------------------------------------------------------

@dataclass(frozen=True)
class WindowSample:
    features: np.ndarray  # (n_channels, window_len)
    target_deltas: np.ndarray  # (pi_samples, 2)
    target_labels: np.ndarray  # (pi_samples,)
    anchor_index: int
    subject_id: str


@dataclass
class WindowSet:
    """Stacked windows, the form training and evaluation consume."""

    features: np.ndarray  # (N, C, W) float32
    target_deltas: np.ndarray  # (N, P, 2) float32
    target_labels: np.ndarray  # (N, P) int8
    anchor_index: np.ndarray  # (N,)
    subject_ids: np.ndarray  # (N,) object

    def __len__(self):
        return len(self.anchor_index)

    def take(self, idx) -> WindowSet:
        return WindowSet(self.features[idx], self.target_deltas[idx], self.target_labels[idx],
                         self.anchor_index[idx], self.subject_ids[idx])

    def samples(self) -> list[WindowSample]:
        return [WindowSample(self.features[i], self.target_deltas[i], self.target_labels[i],
                             int(self.anchor_index[i]), str(self.subject_ids[i]))
                for i in range(len(self))]

    @classmethod
    def concat(cls, sets) -> WindowSet:
        sets = list(sets)
        if not sets:
            raise DataError("no windows to concatenate")
        return cls(*(np.concatenate([getattr(s, f) for s in sets]) for f in
                     ("features", "target_deltas", "target_labels", "anchor_index", "subject_ids")))

    @classmethod
    def from_samples(cls, samples) -> WindowSet:
        samples = list(samples)
        return cls(np.stack([s.features for s in samples]).astype(np.float32),
                   np.stack([s.target_deltas for s in samples]).astype(np.float32),
                   np.stack([s.target_labels for s in samples]).astype(np.int8),
                   np.array([s.anchor_index for s in samples]),
                   np.array([s.subject_id for s in samples], dtype=object))


def valid_anchors(valid: np.ndarray, window_len: int, pi_samples: int) -> np.ndarray:
    """Anchors t whose span ``t-window_len+1 .. t+pi_samples`` is entirely valid."""
    n = len(valid)
    span = window_len + pi_samples
    if span > n:
        return np.zeros(0, dtype=np.int64)
    bad = np.concatenate([[0], np.cumsum(~valid)])
    starts = np.arange(0, n - span + 1)
    ok = (bad[starts + span] - bad[starts]) == 0
    return starts[ok] + window_len - 1


def build_window_set(features: FeatureSeries, rec: GazeRecording, labels, window_len: int,
                     pi_samples: int) -> WindowSet:
    if window_len < 1 or pi_samples < 1:
        raise ValueError("window_len and pi_samples must be >= 1")
    n = len(rec)
    labels = np.asarray(labels)
    if len(features) != n or len(labels) != n:
        raise DataError("features/labels length does not match the recording")
    anchors = valid_anchors(rec.valid & features.valid, window_len, pi_samples)
    ch = features.channels
    if len(anchors) == 0:
        return WindowSet(np.zeros((0, ch.shape[0], window_len), np.float32),
                         np.zeros((0, pi_samples, 2), np.float32),
                         np.zeros((0, pi_samples), np.int8), anchors,
                         np.array([], dtype=object))
    offs = np.arange(-window_len + 1, 1)
    feats = ch[:, anchors[:, None] + offs].transpose(1, 0, 2)
    steps = anchors[:, None] + np.arange(1, pi_samples + 1)
    pos = rec.positions
    deltas = pos[steps] - pos[anchors][:, None, :]
    return WindowSet(feats.astype(np.float32), deltas.astype(np.float32),
                     labels[steps].astype(np.int8), anchors,
                     np.full(len(anchors), rec.subject_id, dtype=object))


def build_windows(features: FeatureSeries, rec: GazeRecording, labels, window_len: int,
                  pi_samples: int) -> list[WindowSample]:
    """One window per fully valid anchor (stride 1) with delta-position targets."""
    return build_window_set(features, rec, labels, window_len, pi_samples).samples()
