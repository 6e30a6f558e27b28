"""Grayscale frame storage, patch resampling, hand-crafted features, and
normalized cross-correlation.

Frames hold 8-bit intensities; patches are square float grids normalized to
[0, 1]. Default working resolutions are 127 (templates, candidates) and 300
(search regions).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import BBox

TEMPLATE_SIDE = 127
REGION_SIDE = 300

MIN_FRAME_SIDE = 16


class OutsideFrameError(ValueError):
    """Raised when a candidate box does not intersect the frame at all."""


@dataclass(frozen=True)
class Frame:
    """One video frame: uint8 intensity grid, row-major."""

    pixels: np.ndarray

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 2 or p.dtype != np.uint8:
            raise ValueError("frame pixels must be a 2-D uint8 array")
        if p.shape[0] < MIN_FRAME_SIDE or p.shape[1] < MIN_FRAME_SIDE:
            raise ValueError(f"frame too small: {p.shape}")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class Patch:
    """Square resampled crop with intensities in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError("patch must be square")

    @property
    def side(self) -> int:
        return self.pixels.shape[0]


def crop_resize(frame: Frame, box: BBox, side: int) -> Patch:
    """Clip `box` to the frame and bilinearly resample the crop to side x side.

    Raises OutsideFrameError when the box misses the frame entirely.
    """
    if side < 8:
        raise ValueError(f"side must be >= 8, got {side}")
    x0 = max(box.x, 0.0)
    y0 = max(box.y, 0.0)
    x1 = min(box.x + box.w, float(frame.width))
    y1 = min(box.y + box.h, float(frame.height))
    if x1 <= x0 or y1 <= y0:
        raise OutsideFrameError(f"box {box} outside {frame.width}x{frame.height} frame")
    src = frame.pixels.astype(np.float64)
    out = kernels.bilinear_resize(src, x0, y0, x1 - x0, y1 - y0, side, side)
    return Patch(out / 255.0)


def resize_patch(patch: Patch, side: int) -> Patch:
    """Resample a whole patch to a new side."""
    out = kernels.bilinear_resize(patch.pixels, 0.0, 0.0,
                                  float(patch.side), float(patch.side), side, side)
    return Patch(out)


def resize_to(pixels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resample a full 2-D array to an arbitrary (possibly non-square) shape."""
    h, w = pixels.shape
    return kernels.bilinear_resize(pixels, 0.0, 0.0, float(w), float(h), out_h, out_w)


# --------------------------------------------------------------------------
# feature extraction


@dataclass(frozen=True)
class FeatureConfig:
    """Layout of the hand-crafted descriptor.

    intensity part: grid x grid blocks, each normalized by its own mean/std
    and summarized by subcells x subcells interior means; gradient part:
    hist_grid x hist_grid cells of orientation histograms with `bins` bins,
    each L2-normalized.
    """

    grid: int = 8
    subcells: int = 2
    hist_grid: int = 4
    bins: int = 8

    @property
    def dim(self) -> int:
        return self.grid ** 2 * self.subcells ** 2 + self.hist_grid ** 2 * self.bins


DEFAULT_FEATURES = FeatureConfig()

_STD_EPS = 1e-9


def _edges(n: int, parts: int) -> np.ndarray:
    return (np.arange(parts + 1) * n) // parts


def _block_reduce(a: np.ndarray, ex: np.ndarray, ey: np.ndarray) -> np.ndarray:
    s = np.add.reduceat(a, ey[:-1], axis=0)
    return np.add.reduceat(s, ex[:-1], axis=1)


def extract_features(patch: Patch, config: FeatureConfig = DEFAULT_FEATURES) -> np.ndarray:
    """Deterministic descriptor, invariant to positive affine intensity
    changes of the patch (flat blocks map to zeros)."""
    p = patch.pixels
    n = patch.side
    if n < 16:
        raise ValueError(f"patch side must be >= 16, got {n}")
    g, sc = config.grid, config.subcells

    # Subcell sums on the nested (g*sc) grid; 2x2 pooling gives block sums.
    fine = g * sc
    ex = _edges(n, fine)
    counts_x = np.diff(ex).astype(np.float64)
    sub_sums = _block_reduce(p, ex, ex)
    sub_sq = _block_reduce(p * p, ex, ex)
    sub_counts = counts_x[:, None] * counts_x[None, :]

    pool = lambda a: a.reshape(g, sc, g, sc).sum(axis=(1, 3))
    blk_sum = pool(sub_sums)
    blk_sq = pool(sub_sq)
    blk_cnt = pool(sub_counts)
    blk_mean = blk_sum / blk_cnt
    blk_var = np.maximum(blk_sq / blk_cnt - blk_mean ** 2, 0.0)
    blk_std = np.sqrt(blk_var)

    sub_means = sub_sums / sub_counts
    centred = sub_means.reshape(g, sc, g, sc) - blk_mean[:, None, :, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        intensity = centred / blk_std[:, None, :, None]
    intensity[np.broadcast_to(blk_std[:, None, :, None] <= _STD_EPS, intensity.shape)] = 0.0

    # Orientation histograms; np.gradient = central differences inside,
    # one-sided at the borders.
    dy, dx = np.gradient(p)
    mag = np.hypot(dx, dy)
    ang = np.arctan2(dy, dx)
    bins = np.minimum((ang + np.pi) * (config.bins / (2 * np.pi)), config.bins - 1e-9)
    bins = bins.astype(np.int64)

    hg = config.hist_grid
    he = _edges(n, hg)
    cell_row = np.searchsorted(he[1:-1], np.arange(n), side="right")
    cell_id = cell_row[:, None] * hg + cell_row[None, :]
    flat = cell_id * config.bins + bins
    hist = np.bincount(flat.ravel(), weights=mag.ravel(),
                       minlength=hg * hg * config.bins)
    hist = hist.reshape(hg * hg, config.bins)
    norms = np.sqrt((hist * hist).sum(axis=1, keepdims=True))
    with np.errstate(divide="ignore", invalid="ignore"):
        hist = hist / norms
    hist[np.broadcast_to(norms <= _STD_EPS, hist.shape)] = 0.0

    return np.concatenate([intensity.ravel(), hist.ravel()])


# --------------------------------------------------------------------------
# correlation


def ncc_map(region, template) -> np.ndarray:
    """Zero-normalized cross-correlation response grid, one value in [-1, 1]
    per valid placement of the template inside the region.

    Accepts Patch objects or raw 2-D arrays; the template may be
    rectangular but must fit inside the region.
    """
    r = region.pixels if isinstance(region, Patch) else np.asarray(region)
    t = template.pixels if isinstance(template, Patch) else np.asarray(template)
    return kernels.ncc_map(r, t)


# --------------------------------------------------------------------------
# PGM I/O (binary P5, maxval 255; bit-exact round-trip)


def write_pgm(path, frame: Frame) -> None:
    header = f"P5\n{frame.width} {frame.height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(frame.pixels.tobytes())


def _read_pgm_tokens(data: bytes, count: int, pos: int):
    tokens = []
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos


def read_pgm(path) -> Frame:
    with open(path, "rb") as fh:
        data = fh.read()
    (magic,), pos = _read_pgm_tokens(data, 1, 0)
    if magic != b"P5":
        raise ValueError(f"not a binary PGM: magic {magic!r}")
    (w, h, maxval), pos = _read_pgm_tokens(data, 3, pos)
    w, h, maxval = int(w), int(h), int(maxval)
    if maxval > 255:
        raise ValueError(f"unsupported maxval {maxval}")
    pos += 1  # single whitespace after maxval
    raw = data[pos:pos + w * h]
    if len(raw) != w * h:
        raise ValueError("truncated PGM data")
    return Frame(np.frombuffer(raw, dtype=np.uint8).reshape(h, w).copy())
