"""Long-term visual tracking toolkit: local search with embedding
verification, skim-pruned image-wide re-detection, synthetic long-term
benchmarks, and the matching evaluation protocols."""

__version__ = "0.1.0"

from .geometry import BBox, Region, iou, search_region_for
from .media import Frame, Patch, crop_resize, extract_features, ncc_map
from .perusal import EmbeddingModel, Template, make_template, peruse, propose
from .skimming import SkimModel, skim_select, sliding_windows
from .tracker import Models, PredictionTrace, TrackerConfig, run_sequence
from .training import TrainConfig, TripletExample, train_embedding, triplet_loss
from .evaluation import f_score, maxgm, pr_curve, redetect_metrics, tpr_tnr

__all__ = [
    "BBox", "Region", "iou", "search_region_for",
    "Frame", "Patch", "crop_resize", "extract_features", "ncc_map",
    "EmbeddingModel", "Template", "make_template", "peruse", "propose",
    "SkimModel", "skim_select", "sliding_windows",
    "Models", "PredictionTrace", "TrackerConfig", "run_sequence",
    "TrainConfig", "TripletExample", "train_embedding", "triplet_loss",
    "f_score", "maxgm", "pr_curve", "redetect_metrics", "tpr_tnr",
    "__version__",
]
