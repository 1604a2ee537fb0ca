"""Adaptive per-pixel Gaussian-mixture background subtraction (Zivkovic style).

Each pixel keeps up to ``max_components`` Gaussians ``(weight, mean, variance)``
sorted by decreasing weight. For every frame, with learning rate
``alpha = max(1/history, 1/frame_count)``:

1. Decision. The background components are the heaviest ones whose cumulative
   weight (before them) is below ``background_ratio``. A pixel is background iff
   ``(x - mean)**2 <= var_threshold * variance`` for one of them; with no
   components at all the pixel is foreground.
2. Update. The first component with ``(x - mean)**2 < var_threshold_gen * variance``
   is the match. All weights decay as ``w*(1-alpha) - alpha*complexity_prior``,
   the match gains ``alpha`` and pulls its mean/variance toward ``x`` at rate
   ``alpha/w``; its variance is clamped to ``[min_variance, max_variance]``.
3. Components whose weight is no longer positive are dropped. Without a match
   a new component ``(alpha, x, initial_variance)`` is appended, replacing the
   lightest one when the mixture is full.
4. Weights are renormalized to sum to 1 and the mixture re-sorted (stable).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from . import _kernels
from .types import Camera, Frame, SequencingError, ValidationError

CAMERA_VAR_THRESHOLD = {Camera.DIDSON: 130.0, Camera.ARIS: 10.0}


@dataclass(frozen=True)
class BackgroundParams:
    var_threshold: float = 16.0
    history: int = 500
    max_components: int = 5
    background_ratio: float = 0.9
    initial_variance: float = 15.0
    var_threshold_gen: float = 9.0
    complexity_prior: float = 0.05
    min_variance: float = 4.0
    max_variance: float = 75.0

    def __post_init__(self) -> None:
        if not self.var_threshold > 0:
            raise ValidationError("var_threshold must be > 0")
        if not self.var_threshold_gen > 0:
            raise ValidationError("var_threshold_gen must be > 0")
        if self.history < 1:
            raise ValidationError("history must be >= 1")
        if not 1 <= self.max_components <= 8:
            raise ValidationError("max_components must be in [1, 8]")
        if not 0.0 < self.background_ratio < 1.0:
            raise ValidationError("background_ratio must be in (0, 1)")
        if not 0.0 < self.min_variance <= self.initial_variance <= self.max_variance:
            raise ValidationError("need 0 < min_variance <= initial_variance <= max_variance")
        if self.complexity_prior < 0:
            raise ValidationError("complexity_prior must be >= 0")

    @classmethod
    def for_camera(cls, camera: Camera | str, **overrides) -> BackgroundParams:
        """Camera preset: var_threshold 130 for DIDSON, 10 for ARIS."""
        camera = Camera(camera)
        return cls(var_threshold=CAMERA_VAR_THRESHOLD[camera], **overrides)

    def with_overrides(self, **changes) -> BackgroundParams:
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def to_dict(self) -> dict:
        return asdict(self)


class BackgroundModel:
    """Mixture state for one clip, updated in place frame by frame."""

    def __init__(self, params: BackgroundParams, width: int, height: int, backend: str | None = None):
        if width <= 0 or height <= 0:
            raise ValidationError(f"frame size must be positive, got {width}x{height}")
        self.params = params
        self.width = width
        self.height = height
        k = params.max_components
        self.weights = np.zeros((height, width, k), dtype=np.float64)
        self.means = np.zeros((height, width, k), dtype=np.float64)
        self.variances = np.zeros((height, width, k), dtype=np.float64)
        self.counts = np.zeros((height, width), dtype=np.int32)
        self.frame_count = 0
        self.last_index: int | None = None
        self._kernels = _kernels.get_backend(backend)

    def learning_rate(self) -> float:
        """Rate used for the next frame: 1/n during warm-up, then 1/history."""
        n = self.frame_count + 1
        return max(1.0 / self.params.history, 1.0 / n)

    def apply(self, pixels: np.ndarray, index: int | None = None) -> np.ndarray:
        """Classify ``pixels`` (uint8, height x width), update the model, return the {0,1} mask."""
        pixels = np.ascontiguousarray(pixels)
        if pixels.dtype != np.uint8:
            raise ValidationError(f"frame must be uint8, got {pixels.dtype}")
        if pixels.shape != (self.height, self.width):
            raise ValidationError(
                f"frame is {pixels.shape[1]}x{pixels.shape[0]}, model is {self.width}x{self.height}"
            )
        if index is not None:
            if self.last_index is not None and index <= self.last_index:
                raise SequencingError(f"frame {index} presented after frame {self.last_index}")
            self.last_index = index

        p = self.params
        alpha = self.learning_rate()
        mask = np.empty((self.height, self.width), dtype=np.uint8)
        self._kernels.gmm_apply(
            pixels,
            self.weights,
            self.means,
            self.variances,
            self.counts,
            mask,
            alpha,
            float(p.var_threshold),
            float(p.var_threshold_gen),
            float(p.background_ratio),
            float(p.complexity_prior),
            float(p.initial_variance),
            float(p.min_variance),
            float(p.max_variance),
        )
        self.frame_count += 1
        return mask

    def pixel_mixture(self, y: int, x: int) -> list[tuple[float, float, float]]:
        n = int(self.counts[y, x])
        return [
            (float(self.weights[y, x, k]), float(self.means[y, x, k]), float(self.variances[y, x, k]))
            for k in range(n)
        ]


def bg_init(params: BackgroundParams, width: int, height: int, backend: str | None = None) -> BackgroundModel:
    return BackgroundModel(params, width, height, backend=backend)


def bg_apply(state: BackgroundModel, frame: Frame) -> np.ndarray:
    """Return the foreground mask ``b`` for ``frame`` (1 = foreground) and update ``state``."""
    return state.apply(frame.pixels, frame.index)
