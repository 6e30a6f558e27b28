"""Deterministic synthetic long-term sequences: a textured target on a
smooth random walk over a textured background, with scheduled disappearances,
look-alike distractors, and a teleport protocol for re-detection stress
tests.

Everything is a pure function of the config (seed included); the same
config produces bit-identical frames.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, asdict

import numpy as np
from scipy import ndimage

from .geometry import BBox, iou
from .media import Frame, read_pgm, write_pgm

_MARGIN = 2


@dataclass(frozen=True)
class SynthConfig:
    frame_w: int = 320
    frame_h: int = 240
    num_frames: int = 1200
    target_side: int = 32
    num_disappearances: int = 12
    disappearance_len: int = 40
    num_distractors: int = 2
    noise_sigma: float = 2.0
    seed: int = 0
    min_present: int = 3

    def __post_init__(self):
        if self.frame_w < 32 or self.frame_h < 32:
            raise ValueError("frame must be at least 32x32")
        if self.target_side < 8:
            raise ValueError("target_side must be >= 8")
        if 2 * self.target_side > min(self.frame_w, self.frame_h):
            raise ValueError("target too large for the frame")
        if self.num_frames < 1:
            raise ValueError("num_frames must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        absent = self.num_disappearances * self.disappearance_len
        needed = absent + (self.num_disappearances + 1) * self.min_present
        if self.num_disappearances and needed > self.num_frames:
            raise ValueError(
                f"{self.num_disappearances} x {self.disappearance_len} absent "
                f"frames do not fit in {self.num_frames} frames")


@dataclass(frozen=True)
class GroundTruth:
    """Per-frame target box, None while the target is absent."""

    boxes: tuple

    def __len__(self):
        return len(self.boxes)

    def __iter__(self):
        return iter(self.boxes)

    def __getitem__(self, i):
        return self.boxes[i]

    def present_count(self) -> int:
        return sum(1 for b in self.boxes if b is not None)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            for b in self.boxes:
                if b is None:
                    fh.write("nan,nan,nan,nan\n")
                else:
                    fh.write("%.6g,%.6g,%.6g,%.6g\n" % (b.x, b.y, b.w, b.h))

    @classmethod
    def load(cls, path) -> "GroundTruth":
        boxes = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                x, y, w, h = (float(v) for v in line.split(","))
                boxes.append(None if np.isnan(x) else BBox(x, y, w, h))
        return cls(boxes=tuple(boxes))


def absence_intervals(config: SynthConfig) -> list:
    """Scheduled [start, end) absent intervals, evenly spaced present gaps."""
    nd, dl = config.num_disappearances, config.disappearance_len
    if nd == 0:
        return []
    present_total = config.num_frames - nd * dl
    base, extra = divmod(present_total, nd + 1)
    intervals = []
    t = 0
    for i in range(nd):
        t += base + (1 if i < extra else 0)
        intervals.append((t, t + dl))
        t += dl
    return intervals


def _texture(rng: np.random.Generator, h: int, w: int, smooth: float,
             mean: float, std: float) -> np.ndarray:
    t = ndimage.gaussian_filter(rng.standard_normal((h, w)), smooth)
    t = (t - t.mean()) / max(t.std(), 1e-12)
    return mean + std * t


def _clamp_pos(x: float, side: int, limit: int) -> float:
    return min(max(x, float(_MARGIN)), float(limit - side - _MARGIN))


class _Walker:
    """AR(1) velocity random walk, clamped inside the frame."""

    def __init__(self, x, y, side, frame_w, frame_h):
        self.x, self.y, self.side = x, y, side
        self.vx = self.vy = 0.0
        self.fw, self.fh = frame_w, frame_h

    def step(self, rng, accel=1.2, damp=0.85):
        self.vx = damp * self.vx + accel * rng.standard_normal()
        self.vy = damp * self.vy + accel * rng.standard_normal()
        self.x = _clamp_pos(self.x + self.vx, self.side, self.fw)
        self.y = _clamp_pos(self.y + self.vy, self.side, self.fh)

    def box(self) -> BBox:
        return BBox(round(self.x), round(self.y), self.side, self.side)


def _uniform_pos(rng, side, fw, fh):
    x = rng.uniform(_MARGIN, fw - side - _MARGIN)
    y = rng.uniform(_MARGIN, fh - side - _MARGIN)
    return x, y


def _resolve_distractor(walker: _Walker, target_box, rng) -> None:
    """Push a distractor off the target so their boxes never overlap."""
    if target_box is None or iou(walker.box(), target_box) == 0.0:
        return
    for _ in range(40):
        walker.x, walker.y = _uniform_pos(rng, walker.side, walker.fw, walker.fh)
        if iou(walker.box(), target_box) == 0.0:
            walker.vx = walker.vy = 0.0
            return
    # Deterministic escape hatch: the corner farthest from the target.
    corners = [(float(_MARGIN), float(_MARGIN)),
               (float(walker.fw - walker.side - _MARGIN), float(_MARGIN)),
               (float(_MARGIN), float(walker.fh - walker.side - _MARGIN)),
               (float(walker.fw - walker.side - _MARGIN),
                float(walker.fh - walker.side - _MARGIN))]
    tx, ty = target_box.cx, target_box.cy
    walker.x, walker.y = max(
        corners, key=lambda c: (c[0] - tx) ** 2 + (c[1] - ty) ** 2)
    walker.vx = walker.vy = 0.0


def _render(background, target_tex, target_box, distractor_texs,
            distractor_boxes, noise_sigma, rng) -> Frame:
    img = background.copy()
    for tex, box in zip(distractor_texs, distractor_boxes):
        x, y, s = int(box.x), int(box.y), int(box.w)
        img[y:y + s, x:x + s] = tex
    if target_box is not None:
        x, y, s = int(target_box.x), int(target_box.y), int(target_box.w)
        img[y:y + s, x:x + s] = target_tex
    if noise_sigma > 0:
        img = img + noise_sigma * rng.standard_normal(img.shape)
    return Frame(np.clip(np.rint(img), 0, 255).astype(np.uint8))


def generate_sequence(config: SynthConfig, with_layout: bool = False):
    """Returns (frames, GroundTruth). The target vanishes on the scheduled
    intervals and reappears at a fresh uniform position.

    with_layout additionally returns the per-frame distractor boxes as a
    third element (a tuple of tuples); it consumes no extra randomness, so
    frames are identical either way."""
    rng = np.random.default_rng(config.seed)
    fw, fh, s = config.frame_w, config.frame_h, config.target_side
    background = _texture(rng, fh, fw, smooth=3.0, mean=110.0, std=22.0)
    target_tex = _texture(rng, s, s, smooth=1.2, mean=140.0, std=45.0)
    distractor_texs = [_texture(rng, s, s, smooth=1.2, mean=140.0, std=45.0)
                       for _ in range(config.num_distractors)]

    target = _Walker(*_uniform_pos(rng, s, fw, fh), s, fw, fh)
    distractors = [_Walker(*_uniform_pos(rng, s, fw, fh), s, fw, fh)
                   for _ in range(config.num_distractors)]

    absent = set()
    intervals = absence_intervals(config)
    for a, b in intervals:
        absent.update(range(a, b))
    reappear_at = {b for _, b in intervals}

    frames, boxes, layout = [], [], []
    for t in range(config.num_frames):
        if t in reappear_at:
            target.x, target.y = _uniform_pos(rng, s, fw, fh)
            target.vx = target.vy = 0.0
        elif t > 0 and t not in absent:
            target.step(rng)
        t_box = None if t in absent else target.box()
        for d in distractors:
            if t > 0:
                d.step(rng, accel=0.8)
            _resolve_distractor(d, t_box, rng)
        d_boxes = [d.box() for d in distractors]
        frames.append(_render(background, target_tex, t_box, distractor_texs,
                              d_boxes, config.noise_sigma, rng))
        boxes.append(t_box)
        layout.append(tuple(d_boxes))
    gt = GroundTruth(boxes=tuple(boxes))
    if with_layout:
        return frames, gt, tuple(layout)
    return frames, gt


def teleport_frame(config: SynthConfig) -> int:
    return max(config.num_frames // 4, 1)


def redetection_protocol(config: SynthConfig):
    """Target sits still, then jumps to the far corner and stays. The jump
    distance must exceed twice the local search window side."""
    if config.num_frames < 4:
        raise ValueError("redetection protocol needs at least 4 frames")
    rng = np.random.default_rng(config.seed)
    fw, fh, s = config.frame_w, config.frame_h, config.target_side
    start = (float(_MARGIN), float(_MARGIN))
    end = (float(fw - s - _MARGIN), float(fh - s - _MARGIN))
    dist = np.hypot(end[0] - start[0], end[1] - start[1])
    window_side = 4 * s
    if dist <= 2 * window_side:
        raise ValueError(
            f"frame {fw}x{fh} too small: jump {dist:.0f}px needs "
            f"> {2 * window_side}px for a {s}px target")

    background = _texture(rng, fh, fw, smooth=3.0, mean=110.0, std=22.0)
    target_tex = _texture(rng, s, s, smooth=1.2, mean=140.0, std=45.0)
    distractor_texs = [_texture(rng, s, s, smooth=1.2, mean=140.0, std=45.0)
                       for _ in range(config.num_distractors)]
    distractors = [_Walker(*_uniform_pos(rng, s, fw, fh), s, fw, fh)
                   for _ in range(config.num_distractors)]

    jump = teleport_frame(config)
    frames, boxes = [], []
    for t in range(config.num_frames):
        pos = start if t < jump else end
        t_box = BBox(round(pos[0]), round(pos[1]), s, s)
        for d in distractors:
            if t > 0:
                d.step(rng, accel=0.8)
            _resolve_distractor(d, t_box, rng)
        d_boxes = [d.box() for d in distractors]
        frames.append(_render(background, target_tex, t_box, distractor_texs,
                              d_boxes, config.noise_sigma, rng))
        boxes.append(t_box)
    return frames, GroundTruth(boxes=tuple(boxes))


# --------------------------------------------------------------------------
# directory format: frames/%06d.pgm + groundtruth.txt + meta.txt


def save_sequence(out_dir, frames, gt: GroundTruth, config: SynthConfig,
                  extra_meta: dict | None = None) -> None:
    frame_dir = os.path.join(out_dir, "frames")
    os.makedirs(frame_dir, exist_ok=True)
    for i, frame in enumerate(frames):
        write_pgm(os.path.join(frame_dir, "%06d.pgm" % i), frame)
    gt.save(os.path.join(out_dir, "groundtruth.txt"))
    meta = {k: v for k, v in sorted(asdict(config).items())}
    if extra_meta:
        meta.update(sorted(extra_meta.items()))
    with open(os.path.join(out_dir, "meta.txt"), "w") as fh:
        for k, v in meta.items():
            fh.write(f"{k}={v}\n")


def load_sequence(seq_dir):
    """Returns (frames, GroundTruth, meta dict)."""
    frame_dir = os.path.join(seq_dir, "frames")
    names = sorted(n for n in os.listdir(frame_dir) if n.endswith(".pgm"))
    frames = [read_pgm(os.path.join(frame_dir, n)) for n in names]
    gt = GroundTruth.load(os.path.join(seq_dir, "groundtruth.txt"))
    meta = {}
    meta_path = os.path.join(seq_dir, "meta.txt")
    if os.path.exists(meta_path):
        with open(meta_path) as fh:
            for line in fh:
                line = line.strip()
                if line and "=" in line:
                    k, v = line.split("=", 1)
                    meta[k] = v
    return frames, gt, meta
