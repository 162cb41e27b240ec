#!/usr/bin/env python3
"""Generate a synthetic subject, classify its samples and inspect the events."""
import numpy as np

from gazepred import synth
from gazepred.events import EventClass, bin_events, extract_ceps, segment
from gazepred.pipeline import classify_recording

# one subject, 30 s at 90 Hz
params = synth.sample_subject_params(synth.subject_seeds(0, 1)[0])
sr = synth.generate_recording(params, 30.0, subject_id="S000")
rec = sr.recording
print(f"{len(rec.valid)} samples, fixation noise {params.fixation_noise_rms_deg:.3f} deg")

# velocity-threshold classification vs the generator's own labels
labels = classify_recording(rec)
print(f"sample agreement with ground truth: {np.mean(labels == sr.true_labels):.3f}")

segs = segment(labels, rec)
n_sac = sum(s.cls == EventClass.SACCADE for s in segs)
print(f"saccades found {n_sac}, generated {sr.n_saccades}")

# event bins and the post-saccadic periods that follow each saccade
for name, events in bin_events(segs).items():
    print(f"{name:<10} {len(events):>4} events")
ceps = extract_ceps(segs, rec.sample_rate_hz)
print(f"cep        {len(ceps):>4} periods, mean length "
      f"{np.mean([c.end_idx - c.start_idx + 1 for c in ceps]):.1f} samples")
