"""Closed- and open-set sequence recognition on synthetic leaf-template data.

Trains the nearest-neighbor and both kernel-SVM classifiers on generated
sequences, then holds one class out and sweeps the open-set threshold.

Usage: python scripts/run_synthetic_recognition.py [--seed 12] [--jitter 0.03]
"""

import argparse

import numpy as np

from uoslearn.sequences import (
    assign_to_leaves,
    class_distance_ceilings,
    knn_classify,
    leaf_distance_table,
    open_set_knn,
)
from uoslearn.svm import (
    MODE_ONE_VS_ALL,
    MODE_ONE_VS_ONE,
    open_set_svm,
    svm_predict_multiclass,
    svm_train_multiclass,
)
from uoslearn.synth import SequenceSynthConfig, generate_synthetic_sequences, split_by_class


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=12)
    parser.add_argument("--classes", type=int, default=4)
    parser.add_argument("--train-per-class", type=int, default=20)
    parser.add_argument("--test-per-class", type=int, default=10)
    parser.add_argument("--jitter", type=float, default=0.03)
    parser.add_argument("--k", type=int, default=3)
    args = parser.parse_args()

    cfg = SequenceSynthConfig(
        m=30,
        leaves=6,
        leaf_dim=3,
        classes=args.classes,
        sequences_per_class=args.train_per_class + args.test_per_class,
        template_len=5,
        frames_min=2,
        frames_max=4,
        jitter=args.jitter,
        seed=args.seed,
    )
    samples, leaves = generate_synthetic_sequences(cfg)
    for s in samples:
        s.assignment = assign_to_leaves(s, leaves)
    train, test = split_by_class(samples, args.train_per_class)
    table = leaf_distance_table(leaves)
    print(f"{len(train)} train / {len(test)} test sequences, {len(leaves)} leaves")

    knn_acc = np.mean(
        [knn_classify(s, train, leaves, args.k, table) == s.label for s in test]
    )
    print(f"closed set  k-NN (k={args.k})      accuracy {knn_acc:.3f}")

    assigns = [s.assignment for s in train]
    labels = [s.label for s in train]
    for mode, name in ((MODE_ONE_VS_ONE, "one-vs-one SVM"), (MODE_ONE_VS_ALL, "one-vs-all SVM")):
        model = svm_train_multiclass(assigns, labels, leaves, mode=mode)
        acc = np.mean(
            [svm_predict_multiclass(model, s.assignment, leaves) == s.label for s in test]
        )
        print(f"closed set  {name:18s} accuracy {acc:.3f}")

    held_out = args.classes - 1
    kept = [s for s in train if s.label != held_out]
    print(f"\nopen set: class {held_out} withheld from training")
    ceilings = class_distance_ceilings(kept, leaves, args.k, table)
    print("  k-NN rule, threshold sweep:")
    for varsigma in (1.05, 1.2, 1.5, 2.0, 3.0):
        preds = [
            open_set_knn(s, kept, leaves, args.k, varsigma, ceilings, table) for s in test
        ]
        known = [(p, s.label) for p, s in zip(preds, test) if s.label != held_out]
        unknown = [p for p, s in zip(preds, test) if s.label == held_out]
        known_acc = np.mean([p == t for p, t in known])
        new_recall = np.mean([p is None for p in unknown])
        print(
            f"    varsigma={varsigma:<5g} known accuracy {known_acc:.3f}  "
            f"new-class recall {new_recall:.3f}"
        )

    ova = svm_train_multiclass(
        [s.assignment for s in kept], [s.label for s in kept], leaves, mode=MODE_ONE_VS_ALL
    )
    preds = [open_set_svm(ova, s.assignment, leaves) for s in test]
    known = [(p, s.label) for p, s in zip(preds, test) if s.label != held_out]
    unknown = [p for p, s in zip(preds, test) if s.label == held_out]
    print(
        f"  one-vs-all SVM rule: known accuracy "
        f"{np.mean([p == t for p, t in known]):.3f}  "
        f"new-class recall {np.mean([p is None for p in unknown]):.3f}"
    )


if __name__ == "__main__":
    main()
