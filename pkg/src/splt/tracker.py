"""Per-frame tracking loop: local search while the target is judged present,
frame-wide re-detection once it is judged absent.

The presence decision is non-strict (score >= theta counts as present), so
theta = 0 keeps the tracker local forever and theta = 1 forces re-detection
on every frame whose score falls short of a perfect 1.0.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .geometry import BBox, Region, search_region_for
from .media import Frame
from .perusal import (EmbeddingModel, Template, make_template, peruse,
                      propose, DEFAULT_N_MAX)
from .skimming import SkimModel, skim_select, sliding_windows, DEFAULT_K

DEFAULT_THETA = 0.65
DEFAULT_SCALE = 4.0

VARIANTS = ("r", "sr", "rv", "srv")


@dataclass(frozen=True)
class TrackerConfig:
    theta: float = DEFAULT_THETA
    k: int = DEFAULT_K
    search_scale: float = DEFAULT_SCALE
    n_max: int = DEFAULT_N_MAX
    # Ablation switches: enable_global gates re-detection entirely,
    # use_skim prunes re-detection windows to top-k, use_verifier scores
    # candidates with the embedding instead of raw correlation.
    enable_global: bool = True
    use_skim: bool = True
    use_verifier: bool = True

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must be in [0, 1]")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.search_scale < 1:
            raise ValueError("search_scale must be >= 1")

    @classmethod
    def for_variant(cls, variant: str, **kw) -> "TrackerConfig":
        """r: local correlation only; sr: + skimmed re-detection;
        rv: + verifier with exhaustive re-detection; srv: full pipeline."""
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        return cls(enable_global=variant != "r",
                   use_skim="s" in variant,
                   use_verifier="v" in variant, **kw)


@dataclass(frozen=True)
class Models:
    embedding: EmbeddingModel
    skim: SkimModel


@dataclass(frozen=True)
class TrackerState:
    mode: str  # "local" or "global"
    last_box: BBox
    template: Template
    frame_index: int
    config: TrackerConfig
    models: Models


@dataclass(frozen=True)
class StepOutput:
    box: BBox
    confidence: float
    present: bool
    regions_perused: int
    mode: str


def init(frame: Frame, box: BBox, config: TrackerConfig, models: Models) -> TrackerState:
    if (box.x < 0 or box.y < 0 or box.x + box.w > frame.width
            or box.y + box.h > frame.height):
        raise ValueError(f"init box {box} not inside {frame.width}x{frame.height} frame")
    template = make_template(frame, box, models.embedding)
    return TrackerState(mode="local", last_box=box, template=template,
                        frame_index=1, config=config, models=models)


def _candidate_score(cand, use_verifier: bool) -> float:
    if use_verifier:
        return cand.confidence
    return min(max(cand.similarity, 0.0), 1.0)


def _peruse_region(state: TrackerState, frame: Frame, region: Region):
    cfg = state.config
    prior = (state.last_box.w, state.last_box.h)
    if cfg.use_verifier:
        best, _ = peruse(state.models.embedding, state.template, region, frame,
                         n_max=cfg.n_max, prior_size=prior)
        return best
    # Verifier bypassed: rank by raw correlation, skip embedding work.
    cands = propose(state.template, region, frame, cfg.n_max, prior_size=prior)
    return max(cands, key=lambda c: c.similarity)


def step(state: TrackerState, frame: Frame):
    """Advance one frame; returns (next_state, StepOutput)."""
    cfg = state.config
    if state.mode == "local" or not cfg.enable_global:
        region = search_region_for(state.last_box, frame.width, frame.height,
                                   cfg.search_scale)
        best = _peruse_region(state, frame, region)
        regions_perused = 1
    else:
        side = max(1, round(cfg.search_scale * max(state.last_box.w,
                                                   state.last_box.h)))
        side = max(side, 16)
        if cfg.use_skim:
            skim = state.models.skim
            frac = 1.0 / cfg.search_scale
            if abs(skim.target_frac - frac) > 1e-9:
                skim = replace(skim, target_frac=frac)
            regions = skim_select(skim, state.template, frame, cfg.k, side)
        else:
            regions = list(sliding_windows(frame.width, frame.height,
                                           side).windows)
        best = None
        for region in regions:
            cand = _peruse_region(state, frame, region)
            if best is None or _candidate_score(cand, cfg.use_verifier) > \
                    _candidate_score(best, cfg.use_verifier):
                best = cand
        regions_perused = len(regions)

    score = _candidate_score(best, cfg.use_verifier)
    present = score >= cfg.theta
    if present:
        next_mode = "local"
        last_box = best.box
    else:
        next_mode = "global" if cfg.enable_global else "local"
        last_box = state.last_box
    new_state = replace(state, mode=next_mode, last_box=last_box,
                        frame_index=state.frame_index + 1)
    return new_state, StepOutput(box=best.box, confidence=score,
                                 present=present,
                                 regions_perused=regions_perused,
                                 mode=state.mode)


@dataclass(frozen=True)
class TraceRecord:
    box: BBox
    confidence: float
    present: bool
    regions_perused: int = 1
    mode: str = "local"


@dataclass(frozen=True)
class PredictionTrace:
    records: tuple

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def save(self, path) -> None:
        with open(path, "w") as fh:
            for r in self.records:
                fh.write("%.6g,%.6g,%.6g,%.6g,%.6g,%d\n" % (
                    r.box.x, r.box.y, r.box.w, r.box.h, r.confidence,
                    1 if r.present else 0))

    @classmethod
    def load(cls, path) -> "PredictionTrace":
        records = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                x, y, w, h, conf, flag = line.split(",")
                records.append(TraceRecord(
                    box=BBox(float(x), float(y), float(w), float(h)),
                    confidence=float(conf), present=flag == "1"))
        return cls(records=tuple(records))


def run_sequence(frames, init_box: BBox, config: TrackerConfig,
                 models: Models) -> PredictionTrace:
    """Track through a full sequence; the first record echoes the init box
    with confidence 1."""
    frames = list(frames)
    if not frames:
        raise ValueError("need at least one frame")
    state = init(frames[0], init_box, config, models)
    records = [TraceRecord(box=init_box, confidence=1.0, present=True,
                           regions_perused=1, mode="local")]
    for frame in frames[1:]:
        state, out = step(state, frame)
        records.append(TraceRecord(box=out.box, confidence=out.confidence,
                                   present=out.present,
                                   regions_perused=out.regions_perused,
                                   mode=out.mode))
    return PredictionTrace(records=tuple(records))
