import numpy as np
import pytest

from gazepred import synth
from gazepred.pipeline import Subject


def make_subjects(n, duration_s=20.0, seed=0, max_noise=None):
    """Synthetic subjects with ground-truth labels, ids S000, S001, ..."""
    out = []
    for i, s in enumerate(synth.subject_seeds(seed, n)):
        p = synth.sample_subject_params(s)
        if max_noise is not None and p.fixation_noise_rms_deg > max_noise:
            p = synth.SubjectParams(**{**p.__dict__, "fixation_noise_rms_deg": max_noise})
        sr = synth.generate_recording(p, duration_s, subject_id=f"S{i:03d}")
        out.append(Subject(sr.recording, sr.true_labels))
    return out


@pytest.fixture(scope="session")
def small_subjects():
    return make_subjects(4, 20.0, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter):
    from _acceptance_log import LINES
    if LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(LINES):
            terminalreporter.write_line(LINES[n])
