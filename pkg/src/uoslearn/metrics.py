"""Evaluation metrics."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DimensionError


def clustering_accuracy(pred, truth) -> float:
    """Best agreement fraction over all one-to-one label matchings.

    Builds the confusion matrix of the two labelings and solves the
    assignment problem, so the value is invariant under any relabeling
    of either argument and tolerates differing cluster counts.
    """
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.size == 0 or pred.shape != truth.shape:
        raise DimensionError(
            f"label vectors must be nonempty and equal-length, got {pred.shape} vs {truth.shape}"
        )
    pred_ids = {v: i for i, v in enumerate(np.unique(pred))}
    truth_ids = {v: i for i, v in enumerate(np.unique(truth))}
    confusion = np.zeros((len(pred_ids), len(truth_ids)), dtype=int)
    for p, t in zip(pred, truth):
        confusion[pred_ids[p], truth_ids[t]] += 1
    rows, cols = linear_sum_assignment(confusion, maximize=True)
    return float(confusion[rows, cols].sum()) / len(pred)
