#!/usr/bin/env python3
"""CASIA-B NM identification protocol (optional, needs a local dataset copy).

This script is NOT part of the test suite: CASIA-B cannot be
redistributed, so it only runs for users who already hold the dataset.
It reproduces the published normal-walking protocol at a single view:

  * subjects are split by the LT/MT/ST conventions (74/62/24 training
    subjects, the rest evaluate);
  * the coder and prototype operator are trained on the training
    subjects' cycles;
  * for every evaluation subject, sequences nm-01..nm-04 form the
    gallery and nm-05..nm-06 the probes;
  * one operator per cycle, logistic regression on the gallery, rank-1
    accuracy on the probes.  The published figure at 90 degrees is 98%;
    expect to land within a few points of it depending on silhouette
    extraction quality.

Expected layout (the common silhouette release):

  CASIA-B/<subject>/<condition>/<view>/*.png
  e.g.    CASIA-B/001/nm-01/090/001-nm-01-090-001.png

Usage:
  python scripts/casia_b_nm_protocol.py --casia-root /data/CASIA-B \
      --view 090 --protocol lt --out /tmp/casia_run
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from koopgait import classify, dataio, ovs, pipeline, training

PROTOCOL_TRAIN_COUNTS = {"st": 24, "mt": 62, "lt": 74}


def collect_sequences(root: Path, subjects, conditions, view, w, cycle_len):
    cycles = []
    skipped = 0
    for subject in subjects:
        for condition in conditions:
            seq_dir = root / f"{subject:03d}" / condition / view
            if not seq_dir.is_dir():
                skipped += 1
                continue
            try:
                seq = dataio.load_sequence(seq_dir, w, subject_id=subject)
                cycles += ovs.segment_sequence(seq, cycle_len)
            except Exception as exc:  # noqa: BLE001 - report and move on
                print(f"  skipping {seq_dir}: {exc}")
                skipped += 1
    return cycles, skipped


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--casia-root", required=True)
    parser.add_argument("--view", default="090")
    parser.add_argument("--protocol", choices=sorted(PROTOCOL_TRAIN_COUNTS),
                        default="lt")
    parser.add_argument("--out", default="casia_nm_run")
    parser.add_argument("--size", type=int, default=64)
    parser.add_argument("--cycle-len", type=int, default=12)
    parser.add_argument("--coder-epochs", type=int, default=2000)
    parser.add_argument("--matrix-epochs", type=int, default=400)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    root = Path(args.casia_root)
    if not root.is_dir():
        parser.error(f"{root} is not a directory")
    n_train = PROTOCOL_TRAIN_COUNTS[args.protocol]
    train_subjects = range(1, n_train + 1)
    eval_subjects = range(n_train + 1, 125)
    gallery_conditions = [f"nm-{i:02d}" for i in range(1, 5)]
    probe_conditions = [f"nm-{i:02d}" for i in (5, 6)]

    print(f"protocol {args.protocol.upper()}: training subjects 1..{n_train}, "
          f"evaluating {n_train + 1}..124 at view {args.view}")

    started = time.time()
    train_cycles, skipped = collect_sequences(
        root, train_subjects, gallery_conditions + probe_conditions,
        args.view, args.size, args.cycle_len)
    print(f"training cycles: {len(train_cycles)} ({skipped} sequences skipped)")
    if not train_cycles:
        print("no training data found; check --casia-root and --view")
        return 1

    cfg = training.TrainConfig(epochs=args.coder_epochs, seed=args.seed)
    model, prototype, trace = training.train_coder(train_cycles, cfg)
    print(f"coder trained: loss1 {trace.loss1[0]:.1f} -> {trace.loss1[-1]:.2f} "
          f"({time.time() - started:.0f}s)")

    gallery, _ = collect_sequences(root, eval_subjects, gallery_conditions,
                                   args.view, args.size, args.cycle_len)
    probe, _ = collect_sequences(root, eval_subjects, probe_conditions,
                                 args.view, args.size, args.cycle_len)
    print(f"gallery cycles: {len(gallery)}, probe cycles: {len(probe)}")

    def fit_operators(cycles):
        fitted = training.fit_all_matrices(model, prototype, cycles,
                                           method="gd",
                                           epochs=args.matrix_epochs)
        return [(k, cycles[i].subject_id) for i, k in fitted]

    clf = classify.fit_logreg(fit_operators(gallery))
    accuracy = classify.rank1_accuracy(clf, fit_operators(probe))
    print(f"\nrank-1 accuracy at {args.view}: {accuracy:.3f} "
          f"(published NM 90-degree figure: 0.98 +- 0.03)")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    classify.save_weight_maps(clf, out / "maps")
    print(f"weight maps under {out / 'maps'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
