#!/usr/bin/env python3
"""Train a small LSTM forecaster and compare it with the zero-displacement baseline."""
import numpy as np
from threadpoolctl import threadpool_limits

from gazepred import synth
from gazepred.evaluation import horizon_errors, percentile
from gazepred.events import EventClass
from gazepred.models import ZeroDisplacement, count_macs, count_params, default_config
from gazepred.pipeline import Subject, model_features, select, train_on_subjects
from gazepred.training import TrainConfig

threadpool_limits(1)

subjects = []
for i, s in enumerate(synth.subject_seeds(1, 6)):
    sr = synth.generate_recording(synth.sample_subject_params(s), 40.0, subject_id=f"S{i:03d}")
    subjects.append(Subject(sr.recording, sr.true_labels))

# a narrower network than the default keeps this demo to well under a minute
cfg = default_config("lstm", hidden_size=32, n_layers=2)
run = train_on_subjects(subjects, cfg, TrainConfig(epochs=15, seed=0))
model = run.model
print(f"{count_params(model):,} parameters, {count_macs(model):,} MACs per window")
print("validation loss per epoch:", np.round(run.history.val_loss, 4))

# errors at the end of the 44 ms horizon on the held-out subjects
zero = ZeroDisplacement(cfg)
for subj in select(subjects, run.test_ids):
    feats = model_features(subj, cfg, model.normalization)
    for name, m in (("lstm", model), ("zero", zero)):
        e = horizon_errors(m, subj.recording, feats, subj.labels)
        sac = e.errors[e.classes == EventClass.SACCADE]
        fix = e.errors[e.classes == EventClass.FIXATION]
        print(f"{subj.subject_id} {name}: fixation P50 {percentile(fix, 50):.3f}, "
              f"saccade P50 {percentile(sac, 50):.3f}, P95 {percentile(sac, 95):.3f} deg")
