"""Mask denoising (b -> b_f) and multichannel composition of detector inputs."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .types import ValidationError


class Mode(str, enum.Enum):
    """Which channels of the composed image are populated."""

    R = "r"
    RB = "rb"
    RB_F = "rb_f"
    RBB_F = "rbb_f"

    @property
    def uses_b(self) -> bool:
        return self in (Mode.RB, Mode.RBB_F)

    @property
    def uses_bf(self) -> bool:
        return self in (Mode.RB_F, Mode.RBB_F)


def _as_mask(mask) -> np.ndarray:
    m = np.ascontiguousarray(mask, dtype=np.uint8)
    if m.ndim != 2:
        raise ValidationError(f"mask must be 2-D, got shape {m.shape}")
    if m.size and m.max() > 1:
        raise ValidationError("mask values must be 0 or 1")
    return m


def median3x3(mask, backend: str | None = None) -> np.ndarray:
    """Binary 3x3 median (majority of 9) with edge replication at the border."""
    return _kernels.get_backend(backend).median3x3(_as_mask(mask))


def open_cross3x3(mask, backend: str | None = None) -> np.ndarray:
    """Opening by the 5-pixel cross: erode (outside = background), then dilate."""
    return _kernels.get_backend(backend).open_cross3x3(_as_mask(mask))


def denoise(b, backend: str | None = None) -> np.ndarray:
    """b_f = opening(median(b))."""
    return open_cross3x3(median3x3(b, backend), backend)


@dataclass
class ComposedFrame:
    """Three 8-bit channels stored in RGB byte order.

    Semantic assignment: blue = raw frame, green = b mask, red = b_f mask, masks
    scaled to {0, 255}. Channels the mode does not use stay zero.
    """

    rgb: np.ndarray
    mode: Mode

    @property
    def width(self) -> int:
        return int(self.rgb.shape[1])

    @property
    def height(self) -> int:
        return int(self.rgb.shape[0])

    @property
    def red(self) -> np.ndarray:
        return self.rgb[:, :, 0]

    @property
    def green(self) -> np.ndarray:
        return self.rgb[:, :, 1]

    @property
    def blue(self) -> np.ndarray:
        return self.rgb[:, :, 2]


def compose(r: np.ndarray, b=None, b_f=None, mode: Mode | str = Mode.RBB_F) -> ComposedFrame:
    mode = Mode(mode)
    r = np.asarray(r)
    if r.dtype != np.uint8 or r.ndim != 2:
        raise ValidationError("raw frame must be a 2-D uint8 array")
    if mode.uses_b and b is None:
        raise ValidationError(f"mode {mode.value!r} needs the b mask")
    if mode.uses_bf and b_f is None:
        raise ValidationError(f"mode {mode.value!r} needs the b_f mask")

    rgb = np.zeros(r.shape + (3,), dtype=np.uint8)
    rgb[:, :, 2] = r
    for channel, used, mask in ((1, mode.uses_b, b), (0, mode.uses_bf, b_f)):
        if not used:
            continue
        m = _as_mask(mask)
        if m.shape != r.shape:
            raise ValidationError(f"mask shape {m.shape} does not match frame shape {r.shape}")
        rgb[:, :, channel] = m * np.uint8(255)
    return ComposedFrame(rgb, mode)


def extract_channels(composed: ComposedFrame) -> tuple[np.ndarray, np.ndarray | None, np.ndarray | None]:
    """Inverse of :func:`compose`: ``(r, b, b_f)``; masks the mode lacks are None."""
    mode = composed.mode
    r = composed.blue.copy()
    b = (composed.green // 255).astype(np.uint8) if mode.uses_b else None
    b_f = (composed.red // 255).astype(np.uint8) if mode.uses_bf else None
    return r, b, b_f
