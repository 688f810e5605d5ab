"""Desk-scale recognition end to end, in memory.

Segment walkers into cycles, train the shared coder plus prototype
operator, fit one operator per cycle with the coder frozen, and identify
subjects from the flattened operators with logistic regression.  Writes
the per-class weight maps next to this script.
"""

from pathlib import Path

import numpy as np

from koopgait import classify, dataio, koopman, ovs, pipeline, training

OUT = Path(__file__).resolve().parent / "out_recognition"

spec = dataio.SyntheticSpec(n_subjects=6, cycles_per_subject=6, period=12,
                            w=16, noise=0.0, seed=7)
cycles = []
for seq in dataio.generate_synthetic_dataset(spec):
    cycles += ovs.segment_sequence(seq, 12)
labels = [c.subject_id for c in cycles]
print(f"{len(cycles)} cycles from {spec.n_subjects} subjects")

cfg = training.TrainConfig(epochs=150, seed=7)
model, prototype, trace = training.train_coder(cycles, cfg)
print(f"coder training: loss1 {trace.loss1[0]:.1f} -> {trace.loss1[-1]:.2f} "
      f"over {len(trace)} epochs (loss0 stays at {max(trace.loss0):.1e})")

fitted = training.fit_all_matrices(model, prototype, cycles, method="gd")
operators = [k for _, k in fitted]

train_idx, test_idx = pipeline.split_by_subject(labels, 0.8, seed=7)
clf = classify.fit_logreg([(operators[i], labels[i]) for i in train_idx])
accuracy = classify.rank1_accuracy(clf,
                                   [(operators[i], labels[i]) for i in test_idx])
print(f"rank-1 accuracy on {len(test_idx)} held-out cycles: {accuracy:.3f}")

for k, lab in [(operators[test_idx[0]], labels[test_idx[0]])]:
    predicted, probs = classify.predict(clf, k)
    top = np.argsort(-probs)[:3]
    print(f"sample of subject {lab}: predicted {predicted}, top-3 "
          + ", ".join(f"{clf.classes[j]}:{probs[j]:.2f}" for j in top))

classify.save_weight_maps(clf, OUT)
print(f"\nweight maps (PGM + IKA1) written under {OUT}")
maps = classify.export_weight_maps(clf)
diag = np.mean([np.abs(np.diag(m)).mean() for m in maps.values()])
off = np.mean([(np.abs(m).sum() - np.abs(np.diag(m)).sum())
               / (m.size - m.shape[0]) for m in maps.values()])
print(f"mean |weight| on the operator diagonal {diag:.4f} vs off it {off:.4f}")
