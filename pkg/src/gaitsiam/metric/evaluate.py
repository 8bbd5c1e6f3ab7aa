"""Threshold sweep: FAR/FRR curve, equal error rate and thresholded accuracy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .siamese import SiameseModel


def default_thresholds():
    return np.round(np.arange(0.1, 3.0 + 1e-9, 0.05), 10)


@dataclass
class EvalReport:
    mAP: float
    far_frr_curve: list
    eer: float
    eer_threshold: float

    def to_dict(self):
        return {
            "mAP": self.mAP,
            "eer": self.eer,
            "eer_threshold": self.eer_threshold,
            "far_frr_curve": [
                {"threshold": t, "far": a, "frr": r} for t, a, r in self.far_frr_curve
            ],
        }


def far_frr(distances, labels, thresholds):
    """FAR = negatives called similar; FRR = positives called dissimilar."""
    d = np.asarray(distances, dtype=float)
    y = np.asarray(labels).astype(bool)
    t = np.asarray(thresholds, dtype=float)
    neg = np.sort(d[~y])
    pos = np.sort(d[y])
    far = np.searchsorted(neg, t, side="left") / len(neg)
    frr = 1.0 - np.searchsorted(pos, t, side="left") / len(pos)
    return far, frr


def equal_error_rate(thresholds, far, frr):
    """Crossing of FAR and FRR, linearly interpolated between grid points."""
    diff = np.asarray(far) - np.asarray(frr)
    idx = np.flatnonzero(diff >= 0)
    if len(idx) == 0:
        i = len(diff) - 1
        return float((far[i] + frr[i]) / 2), float(thresholds[i])
    i = idx[0]
    if i == 0 or diff[i] == 0:
        return float((far[i] + frr[i]) / 2), float(thresholds[i])
    w = -diff[i - 1] / (diff[i] - diff[i - 1])
    eer = far[i - 1] + w * (far[i] - far[i - 1])
    thr = thresholds[i - 1] + w * (thresholds[i] - thresholds[i - 1])
    return float(eer), float(thr)


def accuracy_at(distances, labels, threshold, groups=None):
    """Fraction of correct similar/dissimilar calls, averaged over groups."""
    d = np.asarray(distances, dtype=float)
    y = np.asarray(labels).astype(bool)
    correct = (d < threshold) == y
    if groups is None:
        return float(correct.mean())
    groups = np.asarray(groups)
    return float(np.mean([correct[groups == g].mean() for g in np.unique(groups)]))


def evaluate_distances(distances, labels, threshold, thresholds=None, groups=None) -> EvalReport:
    """Report for precomputed pair distances; ``threshold`` drives the mAP."""
    y = np.asarray(labels).astype(bool)
    if y.all() or not y.any():
        raise ValueError("evaluation needs at least one positive and one negative pair")
    grid = default_thresholds() if thresholds is None else np.asarray(thresholds, dtype=float)
    far, frr = far_frr(distances, y, grid)
    eer, thr = equal_error_rate(grid, far, frr)
    curve = [(float(t), float(a), float(r)) for t, a, r in zip(grid, far, frr)]
    return EvalReport(accuracy_at(distances, y, threshold, groups), curve, eer, thr)


def evaluate(model: SiameseModel, images, left, right, labels, thresholds=None,
             groups=None) -> EvalReport:
    """Embed the test images, score the indexed pairs and sweep.

    The mAP is the accuracy at the threshold m/2, averaged over ``groups``
    when given.
    """
    d = model.pair_distances(images, left, right)
    return evaluate_distances(d, labels, model.loss.threshold, thresholds, groups)


def evaluate_pairs(model: SiameseModel, pairs, thresholds=None, by_group=False) -> EvalReport:
    """:func:`evaluate` on a :class:`~gaitsiam.data.PairSet`."""
    groups = pairs.groups if by_group else None
    return evaluate(model, pairs.images, pairs.left, pairs.right, pairs.labels, thresholds, groups)
