"""Seeded synthetic random-saccade recordings with ground-truth labels.

A target jumps between grid positions; the simulated eye follows after a
latency with a raised-cosine saccade whose duration follows the main
sequence. Fixations carry white Gaussian noise and blinks produce invalid
gaps. Labels come from the simulation itself, never from the classifier.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError
from .events import EventClass
from .signal import GazeRecording, make_recording

EXTENT_X_DEG = 25.0
EXTENT_Y_DEG = 20.0
GRID_STEP_DEG = 5.0

# documented sampling ranges for sample_subject_params
PARAM_RANGES = {
    "fixation_noise_rms_deg": (0.02, 0.3),
    "saccade_latency_mean_ms": (150.0, 300.0),
    "saccade_latency_sd_ms": (20.0, 60.0),
    "undershoot_prob": (0.0, 0.3),
    "blink_rate_per_min": (4.0, 16.0),
    "main_sequence_slope_ms_per_deg": (2.0, 2.4),
    "main_sequence_intercept_ms": (19.0, 23.0),
}


@dataclass(frozen=True)
class SubjectParams:
    fixation_noise_rms_deg: float = 0.1
    saccade_latency_mean_ms: float = 200.0
    saccade_latency_sd_ms: float = 30.0
    undershoot_prob: float = 0.1
    blink_rate_per_min: float = 10.0
    main_sequence_slope_ms_per_deg: float = 2.2
    main_sequence_intercept_ms: float = 21.0
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.fixation_noise_rms_deg <= 1.0:
            raise ConfigError("fixation_noise_rms_deg must lie in [0, 1]")
        if not 120.0 <= self.saccade_latency_mean_ms <= 350.0:
            raise ConfigError("saccade_latency_mean_ms must lie in [120, 350]")
        if not 0.0 <= self.undershoot_prob <= 0.3:
            raise ConfigError("undershoot_prob must lie in [0, 0.3]")
        if self.saccade_latency_sd_ms < 0 or self.blink_rate_per_min < 0:
            raise ConfigError("latency sd and blink rate must be non-negative")
        if self.main_sequence_slope_ms_per_deg <= 0 or self.main_sequence_intercept_ms <= 0:
            raise ConfigError("main-sequence slope and intercept must be positive")


def sample_subject_params(seed: int) -> SubjectParams:
    rng = np.random.default_rng(seed)
    draws = {k: float(rng.uniform(lo, hi)) for k, (lo, hi) in PARAM_RANGES.items()}
    return SubjectParams(**draws, rng_seed=int(seed))


def saccade_duration_ms(amplitude_deg: float, params: SubjectParams) -> float:
    return params.main_sequence_intercept_ms + params.main_sequence_slope_ms_per_deg * amplitude_deg


def raised_cosine(tau, amplitude: float = 1.0):
    """Raised-cosine position profile ``A (1 - cos(pi tau)) / 2`` on ``tau in [0, 1]``."""
    return amplitude * (1.0 - np.cos(np.pi * np.asarray(tau))) / 2.0


def peak_speed_dps(amplitude_deg: float, params: SubjectParams) -> float:
    """Closed-form peak speed of the continuous raised-cosine profile."""
    return amplitude_deg * math.pi / (2.0 * saccade_duration_ms(amplitude_deg, params) / 1000.0)


def saccade_trajectory(amplitude_deg: float, direction_rad: float, fs: float,
                       params: SubjectParams) -> np.ndarray:
    """Offsets ``(n, 2)`` of the in-flight samples; the last one sits at the endpoint.

    ``n = round(duration * fs / 1000)`` (at least 1); the sample before the
    first row is the saccade start at offset zero.
    """
    if not amplitude_deg > 0:
        raise ValueError(f"saccade amplitude must be positive, got {amplitude_deg}")
    n = max(1, int(math.floor(saccade_duration_ms(amplitude_deg, params) * fs / 1000.0 + 0.5)))
    s = raised_cosine(np.arange(1, n + 1) / n, amplitude_deg)
    s[-1] = amplitude_deg
    return np.column_stack([s * math.cos(direction_rad), s * math.sin(direction_rad)])


@dataclass
class SyntheticRecording:
    recording: GazeRecording
    true_labels: np.ndarray
    target_positions: np.ndarray  # (k, 3): x, y, onset_ms
    params: SubjectParams = field(default_factory=SubjectParams)

    @property
    def n_saccades(self) -> int:
        lab = self.true_labels
        starts = (lab == EventClass.SACCADE) & np.concatenate([[True], lab[:-1] != EventClass.SACCADE])
        return int(starts.sum())


def _grid_target(rng, current, min_jump_deg: float):
    xs = np.arange(-EXTENT_X_DEG, EXTENT_X_DEG + 1e-9, GRID_STEP_DEG)
    ys = np.arange(-EXTENT_Y_DEG, EXTENT_Y_DEG + 1e-9, GRID_STEP_DEG)
    while True:
        p = np.array([rng.choice(xs), rng.choice(ys)])
        if current is None or np.hypot(*(p - current)) >= min_jump_deg:
            return p


def generate_recording(params: SubjectParams, duration_s: float = 60.0, fs: float = 90.0,
                       subject_id: str = "S000", task_id: str = "RAN",
                       interval_s: tuple[float, float] = (1.0, 1.5), min_jump_deg: float = 10.0,
                       targets=None, blinks: bool = True,
                       corrective_delay_ms: float = 150.0) -> SyntheticRecording:
    """Simulate one random-saccade recording.

    ``targets`` optionally fixes the target schedule as rows ``(x, y, onset_ms)``;
    the first row is where gaze starts. Otherwise targets are drawn on a 5 deg
    grid spanning +-25 x +-20 deg, at least ``min_jump_deg`` apart, every
    ``interval_s`` seconds.
    """
    if duration_s < 5:
        raise ConfigError(f"duration_s must be >= 5, got {duration_s}")
    rng = np.random.default_rng(params.rng_seed)
    n = int(round(duration_s * fs))
    dt = 1000.0 / fs

    if targets is None:
        rows = [(*_grid_target(rng, None, min_jump_deg), 0.0)]
        t = float(rng.uniform(*interval_s)) * 1000.0
        while t < duration_s * 1000.0:
            rows.append((*_grid_target(rng, np.array(rows[-1][:2]), min_jump_deg), t))
            t += float(rng.uniform(*interval_s)) * 1000.0
        targets = np.array(rows, dtype=float)
    else:
        targets = np.atleast_2d(np.asarray(targets, dtype=float))

    pos = np.empty((n, 2))
    labels = np.full(n, EventClass.FIXATION, dtype=np.int8)
    gaze = targets[0, :2].copy()
    cursor = 0  # first sample not yet written
    flights = []

    def hold_until(idx):
        nonlocal cursor
        idx = min(idx, n)
        if idx > cursor:
            pos[cursor:idx] = gaze
            cursor = idx

    def fly(start_idx, goal):
        # sample start_idx is the onset (still at the old position)
        nonlocal gaze, cursor
        step = goal - gaze
        amp = float(np.hypot(*step))
        if amp <= 0 or start_idx >= n:
            return
        hold_until(start_idx + 1)
        traj = gaze + saccade_trajectory(amp, math.atan2(step[1], step[0]), fs, params)
        stop = min(start_idx + 1 + len(traj), n)
        pos[start_idx + 1:stop] = traj[:stop - start_idx - 1]
        labels[start_idx:stop] = EventClass.SACCADE
        flights.append((start_idx, stop - 1))
        cursor = stop
        gaze = traj[-1].copy()

    for k in range(1, len(targets)):
        goal = targets[k, :2]
        next_onset = targets[k + 1, 2] if k + 1 < len(targets) else math.inf
        latency = max(80.0, rng.normal(params.saccade_latency_mean_ms, params.saccade_latency_sd_ms))
        onset = max(int(math.ceil((targets[k, 2] + latency) / dt)), cursor)
        if onset * dt >= next_onset:
            continue
        undershoot = rng.random() < params.undershoot_prob
        fly(onset, gaze + (goal - gaze) * (0.9 if undershoot else 1.0))
        if undershoot:
            fly(cursor - 1 + int(round(corrective_delay_ms / dt)), goal)
    hold_until(n)

    noise = rng.standard_normal((n, 2)) * params.fixation_noise_rms_deg
    fix = labels == EventClass.FIXATION
    pos[fix] += noise[fix]

    valid = np.ones(n, dtype=bool)
    if blinks and params.blink_rate_per_min > 0:
        busy = np.zeros(n, dtype=bool)
        margin = int(round(50.0 / dt))
        for s, e in flights:
            busy[max(0, s - margin):e + margin + 1] = True
        n_blinks = rng.poisson(params.blink_rate_per_min * duration_s / 60.0)
        for _ in range(n_blinks):
            length = int(round(rng.uniform(100.0, 300.0) / dt))
            for _attempt in range(20):
                s = int(rng.integers(0, max(1, n - length)))
                if not busy[s:s + length].any():
                    valid[s:s + length] = False
                    busy[max(0, s - margin):s + length + margin] = True
                    break
        labels[~valid] = EventClass.INVALID

    t_ms = np.arange(n) * dt
    rec = make_recording(pos[:, 0], pos[:, 1], fs, valid, subject_id, task_id, t_ms)
    return SyntheticRecording(rec, labels, targets, params)


def subject_seeds(seed: int, n_subjects: int) -> list[int]:
    """Per-subject seeds derived from one run seed."""
    state = np.random.SeedSequence(seed).generate_state(n_subjects, dtype=np.uint64)
    return [int(s) for s in state]


def params_dict(params: SubjectParams) -> dict:
    return asdict(params)
