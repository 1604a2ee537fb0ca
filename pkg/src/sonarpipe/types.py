"""Core record types shared by every pipeline stage."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ValidationError(ValueError):
    """Input violates a documented invariant."""


class ParseError(ValueError):
    """A text record could not be parsed; carries the offending line number."""

    def __init__(self, message: str, path: str | Path | None = None, line: int | None = None):
        self.path = None if path is None else str(path)
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class SequencingError(RuntimeError):
    """Frames of a clip were presented out of order."""


class Camera(str, enum.Enum):
    DIDSON = "DIDSON"
    ARIS = "ARIS"


class SizeClass(str, enum.Enum):
    """Operator length classes for passages. Values are the on-disk labels."""

    S20_40 = "20-40"
    S40_60 = "40-60"
    S60_80 = "60-80"
    GT80 = ">80"

    @classmethod
    def from_length_cm(cls, length_cm: float) -> SizeClass:
        # fish under 20 cm are not logged by operators; clamp into the first class
        if length_cm < 40:
            return cls.S20_40
        if length_cm < 60:
            return cls.S40_60
        if length_cm < 80:
            return cls.S60_80
        return cls.GT80


class Direction(str, enum.Enum):
    UP = "UP"
    DOWN = "DOWN"
    UNKNOWN = "UNKNOWN"


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box, top-left corner plus size, in pixels.

    Detector output is integral; annotation boxes converted from normalized
    coordinates may be fractional.
    """

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (self.w > 0 and self.h > 0):
            raise ValidationError(f"box size must be positive, got w={self.w} h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2, self.y + self.h / 2)

    def intersection(self, other: BoundingBox) -> float:
        iw = min(self.x2, other.x2) - max(self.x, other.x)
        ih = min(self.y2, other.y2) - max(self.y, other.y)
        if iw <= 0 or ih <= 0:
            return 0.0
        return iw * ih

    def inside(self, width: float, height: float) -> bool:
        return self.x >= 0 and self.y >= 0 and self.x2 <= width and self.y2 <= height

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]


@dataclass(frozen=True)
class ClipManifest:
    clip_id: str
    camera: Camera
    frame_rate_hz: float
    width_px: int
    height_px: int
    frame_paths: tuple[Path, ...]

    def __post_init__(self) -> None:
        if not self.frame_paths:
            raise ValidationError(f"clip {self.clip_id!r}: manifest lists no frames")
        if not self.frame_rate_hz > 0:
            raise ValidationError(f"clip {self.clip_id!r}: frame_rate_hz must be > 0")
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValidationError(f"clip {self.clip_id!r}: frame size must be positive")

    @property
    def n_frames(self) -> int:
        return len(self.frame_paths)


@dataclass
class Frame:
    """One raw 8-bit sonar image; ``pixels`` has shape (height, width)."""

    clip_id: str
    index: int
    timestamp_s: float
    pixels: np.ndarray = field(repr=False)

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])


@dataclass(frozen=True)
class Annotation:
    frame_index: int
    bbox: BoundingBox
    label: str

    def __post_init__(self) -> None:
        if not self.label:
            raise ValidationError("annotation label must be non-empty")


@dataclass(frozen=True)
class Detection:
    clip_id: str
    frame_index: int
    bbox: BoundingBox
    confidence: float
    label: str = "fish"

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class PassageRecord:
    clip_id: str
    timestamp_s: float
    species: str
    size_class: SizeClass
    direction: Direction = Direction.UNKNOWN

    def __post_init__(self) -> None:
        if self.timestamp_s < 0:
            raise ValidationError("passage timestamp must be non-negative")


@dataclass(frozen=True)
class DatasetSplit:
    train: list
    val: list
    test: list
