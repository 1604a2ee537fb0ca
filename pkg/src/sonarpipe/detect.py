"""Detector stage: connected-component baseline over b_f, or external detection logs.

A trained neural detector plugs in through the JSON-lines detection log read
by :func:`load_detections`; its output is assumed to be NMS-processed already.
"""

from __future__ import annotations

import enum
from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .clipio import load_detections, write_detections
from .types import BoundingBox, Detection, ValidationError

__all__ = [
    "BaselineParams",
    "ConfidenceRule",
    "DEFAULT_TAU",
    "detect_cc",
    "filter_confidence",
    "load_detections",
    "write_detections",
]

# inference threshold; a tool default, the source material reports none
DEFAULT_TAU = 0.25


class ConfidenceRule(str, enum.Enum):
    AREA_SATURATING = "area_saturating"
    MEAN_INTENSITY = "mean_intensity"


@dataclass(frozen=True)
class BaselineParams:
    min_area_px: int = 20
    connectivity: int = 8
    confidence_rule: ConfidenceRule = ConfidenceRule.AREA_SATURATING

    def __post_init__(self) -> None:
        if self.min_area_px < 1:
            raise ValidationError("min_area_px must be >= 1")
        if self.connectivity not in (4, 8):
            raise ValidationError("connectivity must be 4 or 8")
        object.__setattr__(self, "confidence_rule", ConfidenceRule(self.confidence_rule))

    def to_dict(self) -> dict:
        return {
            "min_area_px": self.min_area_px,
            "connectivity": self.connectivity,
            "confidence_rule": self.confidence_rule.value,
        }


def detect_cc(
    b_f: np.ndarray,
    raw: np.ndarray,
    params: BaselineParams = BaselineParams(),
    clip_id: str = "",
    frame_index: int = 0,
    backend: str | None = None,
) -> list[Detection]:
    """One detection per connected foreground component of at least ``min_area_px`` pixels.

    Detections come out in raster order of each component's first pixel.
    """
    mask = np.ascontiguousarray(b_f, dtype=np.uint8)
    raw = np.ascontiguousarray(raw, dtype=np.uint8)
    if mask.shape != raw.shape:
        raise ValidationError(f"mask shape {mask.shape} does not match frame shape {raw.shape}")
    _, stats = _kernels.get_backend(backend).connected_components(mask, raw, params.connectivity)

    out = []
    for area, x0, y0, x1, y1, total in stats.tolist():
        if area < params.min_area_px:
            continue
        if params.confidence_rule is ConfidenceRule.AREA_SATURATING:
            conf = min(1.0, area / (4 * params.min_area_px))
        else:
            conf = total / area / 255.0
        box = BoundingBox(x0, y0, x1 - x0 + 1, y1 - y0 + 1)
        out.append(Detection(clip_id, frame_index, box, conf))
    return out


def filter_confidence(dets: Iterable[Detection], tau: float) -> list[Detection]:
    if not 0.0 <= tau <= 1.0:
        raise ValidationError(f"tau must be in [0, 1], got {tau}")
    return [d for d in dets if d.confidence >= tau]
