"""Velocity-hysteresis event classification, segmentation and CEP extraction."""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, FormatError
from .signal import GazeRecording, KinematicSeries


class EventClass(enum.IntEnum):
    FIXATION = 0
    SACCADE = 1
    OTHER = 2
    INVALID = 3


@dataclass(frozen=True)
class ClassifierParams:
    onset_threshold_dps: float = 70.0
    offset_threshold_dps: float = 30.0
    min_saccade_ms: float = 22.0
    min_fixation_ms: float = 55.0
    merge_gap_ms: float = 22.0

    def __post_init__(self):
        for name in ("onset_threshold_dps", "offset_threshold_dps", "min_saccade_ms",
                     "min_fixation_ms", "merge_gap_ms"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not self.onset_threshold_dps > self.offset_threshold_dps:
            raise ConfigError("onset threshold must exceed offset threshold")


@dataclass(frozen=True)
class EventSegment:
    cls: EventClass
    start_idx: int
    end_idx: int
    duration_ms: float
    amplitude_deg: float
    subject_id: str

    @property
    def n_samples(self) -> int:
        return self.end_idx - self.start_idx + 1


@dataclass(frozen=True)
class CepSegment:
    source_saccade: EventSegment
    start_idx: int
    end_idx: int
    cep_ms: float = 110.0


def runs(labels) -> list[tuple[int, int, int]]:
    """Maximal runs of equal values as ``(value, start, end)`` with inclusive ends."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return []
    cut = np.flatnonzero(np.diff(labels)) + 1
    starts = np.concatenate([[0], cut])
    ends = np.concatenate([cut - 1, [len(labels) - 1]])
    return [(int(labels[s]), int(s), int(e)) for s, e in zip(starts, ends)]


def classify_events(kin: KinematicSeries, rec: GazeRecording,
                    params: ClassifierParams = ClassifierParams()) -> np.ndarray:
    """Label every sample FIXATION / SACCADE / OTHER / INVALID.

    Saccades open where speed exceeds the onset threshold and grow in both
    directions while speed stays above the offset threshold. Durations of
    candidate runs are counted as ``n_samples * 1000 / fs``. Two fixations are
    merged across an OTHER gap when the time from the last sample of the first
    to the first sample of the second is at most ``merge_gap_ms``.
    """
    n = len(rec)
    dt = 1000.0 / rec.sample_rate_hz
    speed = kin.speed_dps
    ok = kin.valid & rec.valid

    sacc = np.zeros(n, dtype=bool)
    above_off = ok & (speed > params.offset_threshold_dps)
    for _, s, e in runs(above_off):
        if above_off[s] and np.any(speed[s:e + 1] > params.onset_threshold_dps):
            sacc[s:e + 1] = True

    labels = np.full(n, EventClass.FIXATION, dtype=np.int8)
    labels[~ok] = EventClass.INVALID
    for _, s, e in runs(sacc):
        if sacc[s]:
            short = (e - s + 1) * dt < params.min_saccade_ms
            labels[s:e + 1] = EventClass.OTHER if short else EventClass.SACCADE

    for cls, s, e in runs(labels):
        if cls == EventClass.FIXATION and (e - s + 1) * dt < params.min_fixation_ms:
            labels[s:e + 1] = EventClass.OTHER

    segs = runs(labels)
    for i in range(1, len(segs) - 1):
        cls, s, e = segs[i]
        if (cls == EventClass.OTHER and segs[i - 1][0] == EventClass.FIXATION
                and segs[i + 1][0] == EventClass.FIXATION
                and (e - s + 2) * dt <= params.merge_gap_ms):
            labels[s:e + 1] = EventClass.FIXATION
    return labels


def segment(labels, rec: GazeRecording) -> list[EventSegment]:
    labels = np.asarray(labels)
    if len(labels) != len(rec):
        raise DataError(f"labels length {len(labels)} != recording length {len(rec)}")
    dt = 1000.0 / rec.sample_rate_hz
    out = []
    for cls, s, e in runs(labels):
        amp = 0.0
        if cls == EventClass.SACCADE:
            amp = float(np.hypot(rec.x_deg[e] - rec.x_deg[s], rec.y_deg[e] - rec.y_deg[s]))
        out.append(EventSegment(EventClass(cls), s, e, (e - s) * dt, amp, rec.subject_id))
    return out


def extract_ceps(segments, fs: float, cep_ms: float = 110.0) -> list[CepSegment]:
    """Post-saccadic periods: samples at offsets ``k/fs <= cep_ms`` after each saccade.

    Truncated at the recording end and before the next saccade onset.
    """
    if not segments:
        return []
    n = segments[-1].end_idx + 1
    dt = 1000.0 / fs
    k_max = int(np.floor(cep_ms / dt + 1e-9))
    onsets = [s.start_idx for s in segments if s.cls == EventClass.SACCADE]
    out = []
    for seg in segments:
        if seg.cls != EventClass.SACCADE or k_max < 1:
            continue
        start = seg.end_idx + 1
        end = min(seg.end_idx + k_max, n - 1)
        later = [o for o in onsets if o > seg.end_idx]
        if later:
            end = min(end, later[0] - 1)
        if end >= start:
            out.append(CepSegment(seg, start, end, cep_ms))
    return out


def bin_events(segments, fixation_split_ms: float = 400.0,
               saccade_split_deg: float = 2.0) -> dict[str, list[EventSegment]]:
    """Split fixations by duration and saccades by amplitude; ties go to the lower bin."""
    bins = {"fix_short": [], "fix_long": [], "sac_small": [], "sac_large": []}
    for seg in segments:
        if seg.cls == EventClass.FIXATION:
            bins["fix_short" if seg.duration_ms <= fixation_split_ms else "fix_long"].append(seg)
        elif seg.cls == EventClass.SACCADE:
            bins["sac_small" if seg.amplitude_deg <= saccade_split_deg else "sac_large"].append(seg)
    return bins


def write_labels(labels, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("idx", "class"))
        for i, c in enumerate(np.asarray(labels)):
            w.writerow((i, int(c)))


def read_labels(path, n: int | None = None) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["idx", "class"]:
            raise FormatError(f"{path}: expected header 'idx,class', found {header}")
        rows = [r for r in reader if r]
    idx = np.array([int(r[0]) for r in rows])
    cls = np.array([int(r[1]) for r in rows], dtype=np.int8)
    if not np.array_equal(idx, np.arange(len(rows))):
        raise DataError(f"{path}: label indices must run 0..n-1 in order")
    if cls.size and (cls.min() < 0 or cls.max() > 3):
        raise DataError(f"{path}: class ids must lie in 0..3")
    if n is not None and len(cls) != n:
        raise DataError(f"{path}: {len(cls)} labels for a recording of {n} samples")
    return cls
