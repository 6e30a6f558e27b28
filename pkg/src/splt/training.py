"""Embedding training: hinge triplet loss over anchor/positive/negative
feature vectors, mini-batch gradient descent with momentum and step-decay
learning rate, plus hard-example mining against a running verifier.

Loss per triplet: relu(|f(a) - f(p)|^2 - |f(a) - f(n)|^2 + margin) with f a
linear map. Defaults: margin 0.2, lr 1e-2 decayed by 10x every 20 epochs,
momentum 0.9, batch 64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import BBox, iou, search_region_for
from .media import crop_resize, extract_features, DEFAULT_FEATURES, TEMPLATE_SIDE
from .perusal import EmbeddingModel, Template, peruse

DEFAULT_MARGIN = 0.2
DEFAULT_LR = 1e-2
DEFAULT_EPOCHS = 30
DEFAULT_BATCH = 64
DEFAULT_EMBED_DIM = 64
MOMENTUM = 0.9
DECAY_EVERY = 20
DECAY_FACTOR = 0.1
TRIPLETS_PER_EPOCH = 2000


@dataclass(frozen=True)
class TripletExample:
    anchor: np.ndarray
    positive: np.ndarray
    negative: np.ndarray

    def __post_init__(self):
        if not (self.anchor.shape == self.positive.shape == self.negative.shape):
            raise ValueError("triplet members must share one dimension")


@dataclass(frozen=True)
class TrainConfig:
    margin: float = DEFAULT_MARGIN
    lr: float = DEFAULT_LR
    epochs: int = DEFAULT_EPOCHS
    batch: int = DEFAULT_BATCH
    embedding_dim: int = DEFAULT_EMBED_DIM
    momentum: float = MOMENTUM
    decay_every: int = DECAY_EVERY
    decay_factor: float = DECAY_FACTOR
    seed: int = 0

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be > 0")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")


def triplet_loss(model: EmbeddingModel, t: TripletExample,
                 margin: float = DEFAULT_MARGIN) -> float:
    fa = model.embed(t.anchor)
    d_pos = float(np.sum((fa - model.embed(t.positive)) ** 2))
    d_neg = float(np.sum((fa - model.embed(t.negative)) ** 2))
    return max(d_pos - d_neg + margin, 0.0)


def triplet_grad(model: EmbeddingModel, t: TripletExample,
                 margin: float = DEFAULT_MARGIN) -> np.ndarray:
    """Gradient of the hinge loss w.r.t. the weight matrix; exactly zero
    when the hinge is inactive (subgradient 0 at the kink)."""
    if triplet_loss(model, t, margin) <= 0.0:
        return np.zeros_like(model.weights)
    w = model.weights
    dp = t.anchor - t.positive
    dn = t.anchor - t.negative
    return 2.0 * (np.outer(w @ dp, dp) - np.outer(w @ dn, dn))


def batch_loss_grad(weights: np.ndarray, anchors, positives, negatives,
                    margin: float):
    """Mean loss and mean gradient over a stacked batch (vectorized)."""
    dp = anchors - positives
    dn = anchors - negatives
    edp = dp @ weights.T
    edn = dn @ weights.T
    raw = np.sum(edp * edp, axis=1) - np.sum(edn * edn, axis=1) + margin
    active = raw > 0.0
    loss = float(np.mean(np.maximum(raw, 0.0)))
    if not np.any(active):
        return loss, np.zeros_like(weights)
    grad = 2.0 * (edp[active].T @ dp[active] - edn[active].T @ dn[active])
    return loss, grad / len(raw)


@dataclass(frozen=True)
class TrainResult:
    model: EmbeddingModel
    epoch_losses: tuple


def train_embedding(config: TrainConfig, triplets,
                    init_weights: np.ndarray | None = None) -> TrainResult:
    """Mini-batch gradient descent with momentum over the triplet set.

    The learning rate drops by config.decay_factor every config.decay_every
    epochs. init_weights warm-starts fine-tuning passes; by default the
    matrix is seeded Gaussian. Raises on non-finite loss.
    """
    triplets = list(triplets)
    if not triplets:
        raise ValueError("need at least one triplet")
    dim = triplets[0].anchor.shape[0]
    anchors = np.stack([t.anchor for t in triplets])
    positives = np.stack([t.positive for t in triplets])
    negatives = np.stack([t.negative for t in triplets])

    rng = np.random.default_rng(config.seed)
    if init_weights is not None:
        if init_weights.shape != (config.embedding_dim, dim):
            raise ValueError("init_weights shape mismatch")
        w = init_weights.copy()
    else:
        w = rng.standard_normal((config.embedding_dim, dim)) / math.sqrt(dim)
    velocity = np.zeros_like(w)
    n = len(triplets)
    batch = min(config.batch, n)
    losses = []
    for epoch in range(config.epochs):
        lr = config.lr * config.decay_factor ** (epoch // config.decay_every)
        order = rng.permutation(n)
        epoch_loss = 0.0
        count = 0
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            loss, grad = batch_loss_grad(w, anchors[idx], positives[idx],
                                         negatives[idx], config.margin)
            if not math.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}: {loss}; reduce lr")
            velocity = config.momentum * velocity - lr * grad
            w = w + velocity
            epoch_loss += loss * len(idx)
            count += len(idx)
        losses.append(epoch_loss / count)
    return TrainResult(model=EmbeddingModel(weights=w), epoch_losses=tuple(losses))


@dataclass(frozen=True)
class GradCheckResult:
    active: bool
    max_rel_error: float | None


def gradient_check(model: EmbeddingModel, t: TripletExample,
                   margin: float = DEFAULT_MARGIN,
                   step: float = 1e-5) -> GradCheckResult:
    """Compare the analytic gradient against central finite differences.

    Skipped (active=False) when the hinge is off, where the analytic
    gradient is identically zero and differences probe nothing.
    """
    if triplet_loss(model, t, margin) <= 0.0:
        return GradCheckResult(active=False, max_rel_error=None)
    analytic = triplet_grad(model, t, margin)
    w = model.weights
    worst = 0.0
    for i in range(w.shape[0]):
        for j in range(w.shape[1]):
            wp = w.copy()
            wp[i, j] += step
            wm = w.copy()
            wm[i, j] -= step
            num = (triplet_loss(EmbeddingModel(wp), t, margin)
                   - triplet_loss(EmbeddingModel(wm), t, margin)) / (2 * step)
            denom = max(abs(analytic[i, j]) + abs(num), 1e-8)
            worst = max(worst, abs(analytic[i, j] - num) / denom)
    return GradCheckResult(active=True, max_rel_error=worst)


def sample_triplets(tracks: dict, count: int, rng: np.random.Generator,
                    config=DEFAULT_FEATURES) -> list:
    """Draw triplets from a labeled patch collection: anchor = a track's
    first patch, positive = another patch of the same track, negative = any
    patch of a different track. Sampling is with replacement."""
    labels = sorted(tracks.keys(), key=str)
    if len(labels) < 2:
        raise ValueError("need at least two tracks")
    for lab in labels:
        if len(tracks[lab]) < 2:
            raise ValueError(f"track {lab!r} needs at least two patches")
    feats = {lab: [extract_features(p, config) for p in tracks[lab]]
             for lab in labels}
    out = []
    for _ in range(count):
        ai = int(rng.integers(len(labels)))
        a_lab = labels[ai]
        pos_idx = 1 + int(rng.integers(len(feats[a_lab]) - 1))
        n_lab = labels[(ai + 1 + int(rng.integers(len(labels) - 1))) % len(labels)]
        neg_idx = int(rng.integers(len(feats[n_lab])))
        out.append(TripletExample(anchor=feats[a_lab][0],
                                  positive=feats[a_lab][pos_idx],
                                  negative=feats[n_lab][neg_idx]))
    return out


def mine_hard_examples(model: EmbeddingModel, template: Template, sequences,
                       theta: float = 0.65, search_scale: float = 4.0,
                       iou_min: float = 0.5, config=DEFAULT_FEATURES) -> list:
    """Run local search over labeled sequences and haul back the verifier's
    mistakes: false accepts (confident but misplaced) become negatives,
    false rejects (well placed but doubted) become positives.

    sequences: iterable of (frames, ground_truth_boxes) where boxes may be
    None on absent frames.
    """
    false_accepts = []
    false_rejects = []
    truth_feats = []
    for frames, gt_boxes in sequences:
        for frame, gt in zip(frames, gt_boxes):
            if gt is None:
                continue
            region = search_region_for(gt, frame.width, frame.height, search_scale)
            _, cands = peruse(model, template, region, frame,
                              prior_size=(gt.w, gt.h), config=config)
            gt_feat = None
            for c in cands:
                overlap = iou(c.box, gt)
                if c.confidence > theta and overlap < iou_min:
                    false_accepts.append(_safe_feature(frame, c.box, config))
                elif c.confidence <= theta and overlap >= iou_min:
                    false_rejects.append(_safe_feature(frame, c.box, config))
                else:
                    continue
                if gt_feat is None:
                    gt_feat = _safe_feature(frame, gt, config)
            if gt_feat is not None:
                truth_feats.append(gt_feat)

    anchor = template.feature
    triplets = []
    for i, neg in enumerate(false_accepts):
        pos = truth_feats[i % len(truth_feats)] if truth_feats else anchor
        triplets.append(TripletExample(anchor=anchor, positive=pos, negative=neg))
    if false_rejects:
        # Without mined negatives, fall back to the mean-masked template:
        # a flat patch, whose descriptor is all zeros.
        neg_pool = false_accepts or [np.zeros_like(anchor)]
        for i, pos in enumerate(false_rejects):
            triplets.append(TripletExample(anchor=anchor, positive=pos,
                                           negative=neg_pool[i % len(neg_pool)]))
    return triplets


def _safe_feature(frame, box: BBox, config) -> np.ndarray:
    return extract_features(crop_resize(frame, box, TEMPLATE_SIDE), config)
