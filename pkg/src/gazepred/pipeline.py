"""Glue between recordings on disk, labels, features and window sets."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, IOFailure
from .events import ClassifierParams, classify_events, read_labels
from .models import Forecaster, ModelConfig, build_model
from .signal import (FeatureSeries, GazeRecording, Normalization, WindowSet, build_window_set,
                     differentiate, fit_normalization, heading, load_recording, make_features,
                     with_label_channels)
from .training import (TrainConfig, TrainHistory, check_no_leakage, holdout_subjects,
                       split_subjects, train)

LABEL_SUFFIX = ".labels.csv"


@dataclass
class Subject:
    recording: GazeRecording
    labels: np.ndarray
    path: Path | None = None

    @property
    def subject_id(self) -> str:
        return self.recording.subject_id


def recording_paths(data_dir) -> list[Path]:
    d = Path(data_dir)
    if not d.is_dir():
        raise IOFailure(f"data directory {d} does not exist")
    return sorted(p for p in d.glob("*.csv") if not p.name.endswith(LABEL_SUFFIX)
                  and p.name not in ("history.csv",))


def label_path(rec_path: Path) -> Path:
    return rec_path.with_name(rec_path.stem + LABEL_SUFFIX)


def classify_recording(rec: GazeRecording, params: ClassifierParams = ClassifierParams()):
    return classify_events(differentiate(rec), rec, params)


def load_dataset(data_dir, sample_rate_hz: float = 90.0,
                 params: ClassifierParams = ClassifierParams()) -> list[Subject]:
    """Every recording in ``data_dir`` with its labels.

    Labels come from ``<stem>.labels.csv`` when present, otherwise from the
    velocity classifier.
    """
    subjects = []
    for p in recording_paths(data_dir):
        rec = load_recording(p, sample_rate_hz)
        lp = label_path(p)
        labels = read_labels(lp, len(rec)) if lp.exists() else classify_recording(rec, params)
        subjects.append(Subject(rec, labels, p))
    if not subjects:
        raise DataError(f"no recordings found in {data_dir}")
    return subjects


def raw_features(subject: Subject, cfg: ModelConfig) -> FeatureSeries:
    rec = subject.recording
    feats = make_features(heading(differentiate(rec)), cfg.feature_set)
    return feats


def model_features(subject: Subject, cfg: ModelConfig, norm: Normalization) -> FeatureSeries:
    feats = norm.apply(raw_features(subject, cfg))
    if cfg.labels_as_input:
        feats = with_label_channels(feats, subject.labels, cfg.n_classes)
    return feats


def fit_subject_normalization(subjects, cfg: ModelConfig) -> Normalization:
    return fit_normalization([raw_features(s, cfg) for s in subjects])


def subject_windows(subjects, cfg: ModelConfig, norm: Normalization) -> WindowSet:
    sets = [build_window_set(model_features(s, cfg, norm), s.recording, s.labels,
                             cfg.window_len, cfg.pi_samples) for s in subjects]
    return WindowSet.concat(sets)


def select(subjects, ids) -> list[Subject]:
    ids = set(ids)
    return [s for s in subjects if s.subject_id in ids]


@dataclass
class TrainRun:
    model: Forecaster
    history: TrainHistory
    train_ids: list
    val_ids: list
    test_ids: list


def train_on_subjects(subjects, mcfg: ModelConfig, tcfg: TrainConfig,
                      sample_rate_hz: float = 90.0) -> TrainRun:
    """Split by subject, fit normalization on the fitting subjects, train.

    The test subjects are recorded in ``model.meta`` and never touched here.
    """
    ids = [s.subject_id for s in subjects]
    if len(set(ids)) < 2:
        raise ConfigError(f"need at least 2 subjects to train, found {len(set(ids))}")
    train_ids, test_ids = split_subjects(ids, tcfg.train_fraction, tcfg.seed)
    fit_ids, val_ids = holdout_subjects(train_ids, tcfg.val_fraction, tcfg.seed)

    fit_subj = select(subjects, fit_ids)
    norm = fit_subject_normalization(fit_subj, mcfg)
    tr_w = subject_windows(fit_subj, mcfg, norm)
    va_w = subject_windows(select(subjects, val_ids), mcfg, norm) if val_ids else None
    check_no_leakage(tr_w, va_w)

    model = build_model(mcfg)
    model.normalization = norm
    model.meta = {"train_seed": tcfg.seed, "train_subjects": fit_ids, "val_subjects": val_ids,
                  "test_subjects": test_ids, "train_config": _plain(vars(tcfg)),
                  "sample_rate_hz": sample_rate_hz}
    model, history = train(model, tr_w, va_w, tcfg)
    model.meta["epochs_completed"] = len(history)
    return TrainRun(model, history, fit_ids, val_ids, test_ids)


def _plain(d: dict) -> dict:
    return {k: (v.value if hasattr(v, "value") else list(v) if isinstance(v, tuple) else v)
            for k, v in d.items()}
