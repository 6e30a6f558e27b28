"""Global-search accelerator: tile the frame with overlapping windows, score
each one cheaply for "does the target appear here", and keep the top K.

Scoring runs on 4x-downsampled patches so a full-frame pass costs a small
fraction of one local search. Two scorer modes: an analytic logistic over
the downsampled correlation peak (default, no training needed) and a
logistic regression over correlation statistics trained with cross-entropy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import blobio, kernels
from .geometry import Region
from .media import Frame, Patch, crop_resize, resize_patch, REGION_SIDE

DEFAULT_K = 3
DOWNSAMPLE = 4
ANALYTIC_GAIN = 8.0
ANALYTIC_BIAS = -4.0
SKIM_FEATURE_DIM = 4
# Windows are search regions sized 4x the target, so inside a window patch
# the target spans about a quarter of the side.
TARGET_FRAC = 0.25


@dataclass(frozen=True)
class WindowSet:
    windows: tuple
    stride: int
    side: int


def _axis_positions(dim: int, side: int) -> list:
    if side >= dim:
        return [0]
    stride = side // 2
    pos = []
    k = 0
    while k * stride + side <= dim:
        pos.append(k * stride)
        k += 1
    snap = dim - side
    if pos[-1] != snap:
        if len(pos) >= 2:
            pos[-1] = snap
        else:
            pos.append(snap)
    return pos


def sliding_windows(frame_w: int, frame_h: int, side: int) -> WindowSet:
    """Overlapping tiling at half-side stride, last row/column snapped to
    the frame edge so every pixel is covered."""
    if side < 16:
        raise ValueError(f"side must be >= 16, got {side}")
    w_side = min(side, frame_w)
    h_side = min(side, frame_h)
    xs = _axis_positions(frame_w, side)
    ys = _axis_positions(frame_h, side)
    wins = tuple(Region(x, y, w_side, h_side) for y in ys for x in xs)
    return WindowSet(windows=wins, stride=side // 2, side=side)


@dataclass(frozen=True)
class SkimModel:
    """Window scorer. mode 'analytic': logistic over the downsampled
    correlation peak; mode 'trained': logistic regression over correlation
    statistics."""

    mode: str = "analytic"
    factor: int = DOWNSAMPLE
    target_frac: float = TARGET_FRAC
    gain: float = ANALYTIC_GAIN
    bias: float = ANALYTIC_BIAS
    weights: np.ndarray | None = None
    intercept: float = 0.0
    history: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.mode not in ("analytic", "trained"):
            raise ValueError(f"unknown skim mode {self.mode!r}")
        if self.mode == "trained" and self.weights is None:
            raise ValueError("trained mode requires weights")

    def save(self, path) -> None:
        arrays = {
            "mode": np.array([0.0 if self.mode == "analytic" else 1.0]),
            "factor": np.array([float(self.factor)]),
            "target_frac": np.array([self.target_frac]),
            "gain": np.array([self.gain]),
            "bias": np.array([self.bias]),
            "intercept": np.array([self.intercept]),
        }
        if self.weights is not None:
            arrays["weights"] = self.weights
        blobio.save_blob(path, blobio.SKIM_MAGIC, arrays)

    @classmethod
    def load(cls, path) -> "SkimModel":
        a = blobio.load_blob(path, blobio.SKIM_MAGIC)
        mode = "trained" if a["mode"][0] > 0.5 else "analytic"
        return cls(mode=mode, factor=int(a["factor"][0]),
                   target_frac=float(a["target_frac"][0]),
                   gain=float(a["gain"][0]), bias=float(a["bias"][0]),
                   intercept=float(a["intercept"][0]), weights=a.get("weights"))


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _coarse_response(template_patch: Patch, window_patch: Patch, factor: int,
                     target_frac: float) -> np.ndarray:
    """Correlate the window against the template, both downsampled, with the
    template shrunk to the span the target occupies inside a window."""
    w_side = max(window_patch.side // factor, 16)
    t_side = max(int(round(w_side * target_frac)), 8)
    t_side = min(t_side, w_side)
    w = resize_patch(window_patch, w_side)
    t = resize_patch(template_patch, t_side)
    return kernels.ncc_map(w.pixels, t.pixels)


def skim_features(template, window_patch: Patch, factor: int = DOWNSAMPLE,
                  target_frac: float = TARGET_FRAC) -> np.ndarray:
    """Correlation statistics of the downsampled window against the
    downsampled template: [peak, mean, std, fraction above 0.5]."""
    resp = _coarse_response(template.patch, window_patch, factor, target_frac)
    return np.array([
        float(resp.max()),
        float(resp.mean()),
        float(resp.std()),
        float((resp > 0.5).mean()),
    ])


def skim_score(model: SkimModel, template, window_patch: Patch) -> float:
    """Probability in [0, 1] that the target appears inside the window."""
    if model.mode == "analytic":
        resp = _coarse_response(template.patch, window_patch, model.factor,
                                model.target_frac)
        return float(_sigmoid(model.gain * float(resp.max()) + model.bias))
    feats = skim_features(template, window_patch, model.factor,
                          model.target_frac)
    return float(_sigmoid(float(feats @ model.weights) + model.intercept))


def top_k_indices(scores, k: int) -> list:
    """Indices of the k highest scores, score-descending, ties by index."""
    s = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-s, kind="stable")
    return [int(i) for i in order[:k]]


def skim_select(model: SkimModel, template, frame: Frame, k: int,
                side: int) -> list:
    """Score every sliding window of the given side; return the best
    min(k, #windows) as Regions, highest probability first."""
    if k < 1:
        raise ValueError("k must be >= 1")
    ws = sliding_windows(frame.width, frame.height, side)
    scores = []
    for win in ws.windows:
        patch = crop_resize(frame, win.as_bbox(), REGION_SIDE)
        scores.append(skim_score(model, template, patch))
    return [ws.windows[i] for i in top_k_indices(scores, k)]


def skim_bce_loss(weights: np.ndarray, intercept: float,
                  x: np.ndarray, y: np.ndarray) -> float:
    z = x @ weights + intercept
    # log(1+exp(|z|)) form avoids overflow on large margins
    return float(np.mean(np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))))


def train_skim(model: SkimModel, positives: list, negatives: list,
               template, epochs: int = 200, lr: float = 0.5) -> SkimModel:
    """Fit the trained-mode logistic scorer by full-batch gradient descent
    on binary cross-entropy. Returns a new model carrying the per-epoch
    loss history."""
    if not positives or not negatives:
        raise ValueError("need at least one positive and one negative patch")
    x = np.array([skim_features(template, p, model.factor, model.target_frac)
                  for p in list(positives) + list(negatives)])
    y = np.concatenate([np.ones(len(positives)), np.zeros(len(negatives))])
    w = np.zeros(x.shape[1])
    b = 0.0
    losses = [skim_bce_loss(w, b, x, y)]
    n = len(y)
    for _ in range(epochs):
        resid = _sigmoid(x @ w + b) - y
        w = w - lr * (x.T @ resid) / n
        b = b - lr * float(resid.mean())
        losses.append(skim_bce_loss(w, b, x, y))
    return SkimModel(mode="trained", factor=model.factor,
                     target_frac=model.target_frac, weights=w,
                     intercept=b, history=tuple(losses))
