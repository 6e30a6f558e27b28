"""Long-term tracking metrics.

Threshold-sweep protocol: precision = mean IoU over frames the tracker
reports above the confidence threshold (ground-truth-absent frames count as
IoU 0), recall = summed IoU on ground-truth-present frames over their
count, F = harmonic mean, maximized over the sweep. Presence-classification
protocol: TPR/TNR at an IoU gate and their best geometric mean over the
prior mixing parameter, in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import iou

DEFAULT_NUM_THRESHOLDS = 101
DEFAULT_IOU_MIN = 0.5


@dataclass(frozen=True)
class PRCurve:
    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f: np.ndarray


def f_measure(pr: float, re: float) -> float:
    if pr + re == 0.0:
        return 0.0
    return 2.0 * pr * re / (pr + re)


def _frame_ious(pred, gt) -> np.ndarray:
    if len(pred) != len(gt):
        raise ValueError(f"trace length {len(pred)} != ground truth {len(gt)}")
    out = np.zeros(len(gt))
    for i, (rec, box) in enumerate(zip(pred, gt)):
        if box is not None:
            out[i] = iou(rec.box, box)
    return out


def pr_curve(pred, gt, num_thresholds: int = DEFAULT_NUM_THRESHOLDS) -> PRCurve:
    """Sweep a uniform confidence-threshold grid over [0, max confidence]."""
    return pr_curve_pooled([pred], [gt], num_thresholds)


def pr_curve_pooled(preds, gts, num_thresholds: int = DEFAULT_NUM_THRESHOLDS) -> PRCurve:
    """One curve over the frames of several sequences pooled together."""
    ious = []
    confs = []
    present = []
    for pred, gt in zip(preds, gts):
        ious.append(_frame_ious(pred, gt))
        confs.append(np.array([r.confidence for r in pred]))
        present.append(np.array([b is not None for b in gt]))
    ious = np.concatenate(ious)
    confs = np.concatenate(confs)
    present = np.concatenate(present)
    n_present = int(present.sum())
    if n_present == 0:
        raise ValueError("ground truth has no present frames; recall undefined")

    taus = np.linspace(0.0, max(float(confs.max()), 1e-12), num_thresholds)
    precision = np.zeros(num_thresholds)
    recall = np.zeros(num_thresholds)
    for i, tau in enumerate(taus):
        sel = confs >= tau
        if sel.any():
            precision[i] = ious[sel].mean()
        recall[i] = ious[sel & present].sum() / n_present
    f = np.array([f_measure(p, r) for p, r in zip(precision, recall)])
    return PRCurve(thresholds=taus, precision=precision, recall=recall, f=f)


def f_score(curve: PRCurve):
    """Peak of the F column: (f, tau_star, precision, recall) at the peak."""
    i = int(np.argmax(curve.f))
    return (float(curve.f[i]), float(curve.thresholds[i]),
            float(curve.precision[i]), float(curve.recall[i]))


def find_jump_frame(gt) -> int:
    """Frame where the ground-truth box teleports (largest center jump)."""
    best_i, best_d = 0, -1.0
    prev = None
    for i, box in enumerate(gt):
        if box is not None and prev is not None:
            d = math.hypot(box.cx - prev.cx, box.cy - prev.cy)
            if d > best_d:
                best_i, best_d = i, d
        if box is not None:
            prev = box
    return best_i


def redetect_metrics(traces, gts, jump_frames=None,
                     iou_min: float = DEFAULT_IOU_MIN):
    """Per teleport sequence, find the first frame at or after the jump
    reported present with IoU >= iou_min. Returns (mean offset over
    successful sequences, success fraction); offset mean is nan when no
    sequence succeeds."""
    traces = list(traces)
    gts = list(gts)
    if jump_frames is None:
        jump_frames = [find_jump_frame(gt) for gt in gts]
    offsets = []
    successes = 0
    for pred, gt, jump in zip(traces, gts, jump_frames):
        if len(pred) != len(gt):
            raise ValueError("trace/ground-truth length mismatch")
        for t in range(jump, len(gt)):
            rec, box = pred[t], gt[t]
            if box is None:
                continue
            if rec.present and iou(rec.box, box) >= iou_min:
                offsets.append(t - jump)
                successes += 1
                break
    n = len(traces)
    frames_avg = float(np.mean(offsets)) if offsets else float("nan")
    return frames_avg, successes / n


def tpr_tnr(pred, gt, iou_min: float = DEFAULT_IOU_MIN, stride: int = 1):
    """Presence classification rates. TPR = fraction of ground-truth-present
    frames reported present with IoU >= iou_min; TNR = fraction of
    ground-truth-absent frames reported absent. A rate with no frames of its
    class is returned as None. stride subsamples the frame index (sparse
    labeling)."""
    if len(pred) != len(gt):
        raise ValueError("trace/ground-truth length mismatch")
    tp = fp = tn = fn = 0
    for i in range(0, len(gt), stride):
        rec, box = pred[i], gt[i]
        if box is not None:
            if rec.present and iou(rec.box, box) >= iou_min:
                tp += 1
            else:
                fn += 1
        else:
            if rec.present:
                fp += 1
            else:
                tn += 1
    tpr = tp / (tp + fn) if tp + fn else None
    tnr = tn / (tn + fp) if tn + fp else None
    return tpr, tnr


def maxgm(tpr: float, tnr: float) -> float:
    """Best geometric mean of TPR against a prior-mixed TNR, maximized over
    the mixing parameter in closed form.

    With t the weight on the true rates, the squared objective is
    tpr * t * (1 - t * (1 - tnr)); its unconstrained peak sits at
    t = 1 / (2 * (1 - tnr)), clamped to [0, 1].
    """
    if not (0.0 <= tpr <= 1.0 and 0.0 <= tnr <= 1.0):
        raise ValueError(f"rates must be in [0, 1], got ({tpr}, {tnr})")
    if tnr >= 1.0:
        t = 1.0
    else:
        t = min(max(1.0 / (2.0 * (1.0 - tnr)), 0.0), 1.0)
    sq = tpr * t * (1.0 - t * (1.0 - tnr))
    return math.sqrt(max(sq, 0.0))
