"""Local search: propose candidate boxes inside a search region by template
correlation, then verify each candidate with the embedding model.

Proposal scores (raw correlation) are good at placing boxes but unreliable
for deciding presence; the embedding confidence is the quantity compared
against the presence threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import blobio, kernels
from .geometry import BBox, Region, iou
from .media import (Frame, Patch, crop_resize, extract_features, resize_to,
                    FeatureConfig, DEFAULT_FEATURES, TEMPLATE_SIDE, REGION_SIDE)

SCALE_GRID = (0.8, 1.0, 1.25)
ASPECT_GRID = (0.8, 1.0, 1.25)
NMS_IOU = 0.5
DEFAULT_N_MAX = 16

_MIN_TEMPLATE_PX = 8


@dataclass(frozen=True)
class EmbeddingModel:
    """Linear map from feature vectors to the verification embedding."""

    weights: np.ndarray

    def __post_init__(self):
        w = self.weights
        if w.ndim != 2:
            raise ValueError("weights must be a 2-D matrix")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    def embed(self, features: np.ndarray) -> np.ndarray:
        return self.weights @ features

    def save(self, path) -> None:
        blobio.save_blob(path, blobio.EMBEDDING_MAGIC, {"weights": self.weights})

    @classmethod
    def load(cls, path) -> "EmbeddingModel":
        arrays = blobio.load_blob(path, blobio.EMBEDDING_MAGIC)
        return cls(weights=arrays["weights"])

    @classmethod
    def random(cls, rng: np.random.Generator, in_dim: int, out_dim: int) -> "EmbeddingModel":
        w = rng.standard_normal((out_dim, in_dim)) / math.sqrt(in_dim)
        return cls(weights=w)


@dataclass(frozen=True)
class Template:
    """First-frame target appearance; fixed for the whole sequence."""

    patch: Patch
    feature: np.ndarray
    embedding: np.ndarray
    box_w: float
    box_h: float


def make_template(frame: Frame, box: BBox, model: EmbeddingModel,
                  config: FeatureConfig = DEFAULT_FEATURES) -> Template:
    patch = crop_resize(frame, box, TEMPLATE_SIDE)
    feature = extract_features(patch, config)
    return Template(patch=patch, feature=feature, embedding=model.embed(feature),
                    box_w=box.w, box_h=box.h)


@dataclass
class Candidate:
    box: BBox
    similarity: float
    confidence: float | None = None


def embedding_confidence(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity clamped below at zero; zero-norm inputs score 0."""
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return max(float(np.dot(a, b)) / (na * nb), 0.0)


def confidence(model: EmbeddingModel, template: Template,
               candidate_patch: Patch,
               config: FeatureConfig = DEFAULT_FEATURES) -> float:
    emb = model.embed(extract_features(candidate_patch, config))
    return embedding_confidence(template.embedding, emb)


def _peak_positions(resp: np.ndarray, limit: int) -> list:
    """Local maxima of a response grid, strongest first, with sub-pixel
    offsets from 1-D parabolic interpolation."""
    footprint = ndimage.maximum_filter(resp, size=3, mode="nearest")
    py, px = np.nonzero(resp >= footprint)
    if len(py) == 0:
        return []
    order = np.argsort(-resp[py, px], kind="stable")[:limit]
    peaks = []
    h, w = resp.shape
    for i in order:
        y, x = int(py[i]), int(px[i])
        dx = dy = 0.0
        if 0 < x < w - 1:
            denom = resp[y, x - 1] - 2 * resp[y, x] + resp[y, x + 1]
            if denom < -1e-12:
                dx = 0.5 * (resp[y, x - 1] - resp[y, x + 1]) / denom
                dx = min(max(dx, -0.5), 0.5)
        if 0 < y < h - 1:
            denom = resp[y - 1, x] - 2 * resp[y, x] + resp[y + 1, x]
            if denom < -1e-12:
                dy = 0.5 * (resp[y - 1, x] - resp[y + 1, x]) / denom
                dy = min(max(dy, -0.5), 0.5)
        peaks.append((x + dx, y + dy, float(resp[y, x])))
    return peaks


def _nms(cands: list, overlap: float) -> list:
    kept = []
    for c in cands:
        if all(iou(c.box, k.box) <= overlap for k in kept):
            kept.append(c)
    return kept


def propose(template: Template, region: Region, frame: Frame, n_max: int = DEFAULT_N_MAX,
            prior_size: tuple | None = None) -> list:
    """Correlation proposals over a scale/aspect grid of the prior target
    size, non-maximum suppressed and mapped back to frame coordinates.

    prior_size defaults to the template's first-frame box size; the tracker
    passes its latest size estimate instead.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    pw, ph = prior_size if prior_size is not None else (template.box_w, template.box_h)
    region_patch = crop_resize(frame, region.as_bbox(), REGION_SIDE)
    # Clipping at frame edges can make the region non-square; track the two
    # axes' resample ratios separately.
    rx = REGION_SIDE / region.w
    ry = REGION_SIDE / region.h

    sizes = []
    for scale in SCALE_GRID:
        for aspect in ASPECT_GRID:
            sq = math.sqrt(aspect)
            tw = int(round(pw * rx * scale * sq))
            th = int(round(ph * ry * scale / sq))
            if _MIN_TEMPLATE_PX <= tw <= REGION_SIDE and _MIN_TEMPLATE_PX <= th <= REGION_SIDE:
                if (tw, th) not in sizes:
                    sizes.append((tw, th))

    cands = []
    if sizes:
        scaled = [resize_to(template.patch.pixels, th, tw) for tw, th in sizes]
        responses = kernels.ncc_map_multi(region_patch.pixels, scaled)
        for (tw, th), resp in zip(sizes, responses):
            for x, y, score in _peak_positions(resp, n_max):
                cands.append(Candidate(
                    box=BBox(region.x + x / rx, region.y + y / ry,
                             tw / rx, th / ry), similarity=score))

    if not cands:
        # Target hypotheses exceed the region at every scale; fall back to
        # the whole region scored against the full template.
        resp = kernels.ncc_map(region_patch.pixels,
                               resize_to(template.patch.pixels, REGION_SIDE, REGION_SIDE))
        return [Candidate(box=region.as_bbox(), similarity=float(resp[0, 0]))]

    cands.sort(key=lambda c: -c.similarity)
    return _nms(cands, NMS_IOU)[:n_max]


def peruse(model: EmbeddingModel, template: Template, region: Region, frame: Frame,
           n_max: int = DEFAULT_N_MAX, prior_size: tuple | None = None,
           config: FeatureConfig = DEFAULT_FEATURES):
    """Score every proposal with the embedding; return (best, all).

    Best is the highest confidence, ties broken by higher raw similarity,
    then by earlier proposal rank.
    """
    cands = propose(template, region, frame, n_max, prior_size)
    for c in cands:
        try:
            patch = crop_resize(frame, c.box, TEMPLATE_SIDE)
        except ValueError:
            c.confidence = 0.0
            continue
        c.confidence = confidence(model, template, patch, config)
    best = cands[0]
    for c in cands[1:]:
        if c.confidence > best.confidence or (
                c.confidence == best.confidence and c.similarity > best.similarity):
            best = c
    return best, cands
