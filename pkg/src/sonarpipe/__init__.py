"""Acoustic-camera fish detection: background masks, mask denoising, multichannel
composition, pluggable detection, flash filtering, and two-level evaluation."""

from ._kernels import BACKEND_NAME
from .background import BackgroundModel, BackgroundParams, bg_apply, bg_init
from .detect import BaselineParams, detect_cc, filter_confidence, load_detections
from .evaleco import EcoEvalReport, PassageMatch, eco_report, match_passages
from .evalmodel import MatchCounts, ModelEvalReport, ap50, evaluate_model, iou, kappa_confusion, match_frame, prf
from .maskpipe import ComposedFrame, Mode, compose, extract_channels, median3x3, open_cross3x3
from .tracks import Track, build_tracks, flash_filter
from .types import (
    Annotation,
    BoundingBox,
    Camera,
    ClipManifest,
    DatasetSplit,
    Detection,
    Direction,
    Frame,
    ParseError,
    PassageRecord,
    SequencingError,
    SizeClass,
    ValidationError,
)

__version__ = "0.1.0"
