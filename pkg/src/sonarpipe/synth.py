"""Deterministic synthetic sonar clips with exact ground truth.

Background pixels are i.i.d. ``N(background_mean, background_std)`` draws,
clamped to [0, 255], with salt-and-pepper impulses at ``salt_pepper_rate``.
Each fish is an elongated ellipse crossing the frame horizontally at a
constant integer speed; its rows ripple with a travelling sine wave. Fish pixels
sit at ``intensity`` plus non-negative speckle. Ground-truth boxes are the
tight boxes of the rendered fish pixels; one passage is logged per fish at the
middle of its on-screen interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import clipio
from .types import (
    Annotation,
    BoundingBox,
    Camera,
    ClipManifest,
    Direction,
    Frame,
    PassageRecord,
    SizeClass,
    ValidationError,
)


@dataclass(frozen=True)
class FishSpec:
    entry_frame: int
    speed_px_per_frame: int  # sign gives direction: > 0 moves right (UP), < 0 left (DOWN)
    length_px: int
    thickness_px: int
    intensity: float
    undulation_amplitude: float = 0.0
    lane_y: int | None = None  # centre row; None puts the fish mid-frame
    species: str = "generic"
    undulation_period_frames: float = 12.0


@dataclass(frozen=True)
class SynthConfig:
    width: int = 320
    height: int = 240
    n_frames: int = 300
    frame_rate_hz: float = 5.0
    salt_pepper_rate: float = 0.002
    background_mean: float = 40.0
    background_std: float = 8.0
    fish_specs: tuple[FishSpec, ...] = ()
    seed: int = 0
    px_per_cm: float = 4.0
    camera: Camera = Camera.DIDSON
    clip_id: str = "synth"

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0 or self.n_frames <= 0:
            raise ValidationError("width, height and n_frames must be positive")
        if not self.frame_rate_hz > 0:
            raise ValidationError("frame_rate_hz must be > 0")
        if not 0.0 <= self.salt_pepper_rate <= 1.0:
            raise ValidationError("salt_pepper_rate must be in [0, 1]")
        if self.background_std < 0:
            raise ValidationError("background_std must be >= 0")
        if not self.px_per_cm > 0:
            raise ValidationError("px_per_cm must be > 0")
        object.__setattr__(self, "fish_specs", tuple(self.fish_specs))
        object.__setattr__(self, "camera", Camera(self.camera))
        for i, f in enumerate(self.fish_specs):
            _check_fish(self, i, f)


def _check_fish(cfg: SynthConfig, i: int, f: FishSpec) -> None:
    def bad(msg):
        raise ValidationError(f"fish {i}: {msg}")

    if f.speed_px_per_frame == 0:
        bad("speed must be non-zero")
    if f.length_px < 1 or f.thickness_px < 1:
        bad("length and thickness must be >= 1")
    if f.length_px > cfg.width:
        bad(f"length {f.length_px} exceeds frame width {cfg.width}")
    if not 0 <= f.entry_frame < cfg.n_frames:
        bad(f"entry frame {f.entry_frame} outside the clip")
    if not 0 <= f.intensity <= 255:
        bad("intensity must be in [0, 255]")
    half = _half_extent(f)
    y = cfg.height // 2 if f.lane_y is None else f.lane_y
    if y - half < 0 or y + half >= cfg.height:
        bad(f"body plus undulation ({2 * half + 1} rows around row {y}) does not fit the frame height")


def _half_extent(f: FishSpec) -> int:
    return f.thickness_px // 2 + int(math.ceil(abs(f.undulation_amplitude)))


def _template(f: FishSpec) -> list[tuple[int, int]]:
    """Column offsets with their half-thickness; every column has at least its centre row."""
    half_len = f.length_px // 2
    cols = []
    for dx in range(-half_len, -half_len + f.length_px):
        u = dx / (half_len + 0.5)
        cols.append((dx, int(math.floor((f.thickness_px / 2) * math.sqrt(max(0.0, 1.0 - u * u))))))
    return cols


def fish_pixels(f: FishSpec, t: int, cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    """Rows and columns of fish ``f`` at frame ``t``, clipped to the frame."""
    if t < f.entry_frame:
        return np.empty(0, int), np.empty(0, int)
    half_len = f.length_px // 2
    travelled = f.speed_px_per_frame * (t - f.entry_frame)
    if f.speed_px_per_frame > 0:
        cx = -(f.length_px - half_len) + travelled
    else:
        cx = cfg.width + half_len + travelled
    cy = cfg.height // 2 if f.lane_y is None else f.lane_y
    ys, xs = [], []
    phase = 2 * math.pi * t / f.undulation_period_frames
    for dx, h in _template(f):
        x = cx + dx
        if not 0 <= x < cfg.width:
            continue
        off = int(round(f.undulation_amplitude * math.sin(2 * math.pi * dx / max(f.length_px, 1) - phase)))
        for dy in range(-h, h + 1):
            ys.append(cy + off + dy)
            xs.append(x)
    return np.asarray(ys, dtype=int), np.asarray(xs, dtype=int)


@dataclass
class SynthClip:
    manifest: ClipManifest
    frames: list[Frame]
    annotations: dict[int, list[Annotation]]
    passages: list[PassageRecord]
    config: SynthConfig
    visible: list[list[int]] = field(default_factory=list)  # per fish: frames on screen


def gen_clip(cfg: SynthConfig) -> SynthClip:
    rng = np.random.default_rng(cfg.seed)
    frames = []
    annotations: dict[int, list[Annotation]] = {}
    visible: list[list[int]] = [[] for _ in cfg.fish_specs]
    half_rate = cfg.salt_pepper_rate / 2
    for t in range(cfg.n_frames):
        noise = rng.normal(cfg.background_mean, cfg.background_std, (cfg.height, cfg.width))
        impulses = rng.random((cfg.height, cfg.width))
        img = np.clip(np.rint(noise), 0, 255)
        img[impulses < half_rate] = 255
        img[(impulses >= half_rate) & (impulses < cfg.salt_pepper_rate)] = 0
        anns = []
        for i, f in enumerate(cfg.fish_specs):
            ys, xs = fish_pixels(f, t, cfg)
            if ys.size == 0:
                continue
            speckle = np.abs(noise[ys, xs] - cfg.background_mean) / 2
            img[ys, xs] = np.clip(np.rint(f.intensity + speckle), 0, 255)
            x0, x1, y0, y1 = xs.min(), xs.max(), ys.min(), ys.max()
            box = BoundingBox(int(x0), int(y0), int(x1 - x0 + 1), int(y1 - y0 + 1))
            anns.append(Annotation(t, box, f.species))
            visible[i].append(t)
        annotations[t] = anns
        frames.append(Frame(cfg.clip_id, t, t / cfg.frame_rate_hz, img.astype(np.uint8)))

    passages = []
    for i, f in enumerate(cfg.fish_specs):
        if not visible[i]:
            continue
        mid = visible[i][len(visible[i]) // 2]
        passages.append(
            PassageRecord(
                clip_id=cfg.clip_id,
                timestamp_s=mid / cfg.frame_rate_hz,
                species=f.species,
                size_class=SizeClass.from_length_cm(f.length_px / cfg.px_per_cm),
                direction=Direction.UP if f.speed_px_per_frame > 0 else Direction.DOWN,
            )
        )
    passages.sort(key=lambda p: p.timestamp_s)

    manifest = ClipManifest(
        clip_id=cfg.clip_id,
        camera=cfg.camera,
        frame_rate_hz=cfg.frame_rate_hz,
        width_px=cfg.width,
        height_px=cfg.height,
        frame_paths=tuple(Path("frames") / f"{t:06d}.pgm" for t in range(cfg.n_frames)),
    )
    return SynthClip(manifest, frames, annotations, passages, cfg, visible)


SPECIES = ("atlantic_salmon", "european_eel", "sea_lamprey", "allis_shad", "european_catfish")


def random_fish_specs(
    n_fish: int,
    width: int,
    height: int,
    n_frames: int,
    seed: int,
    min_length: int = 60,
    max_length: int | None = None,
    intensity: tuple[float, float] = (200.0, 240.0),
) -> tuple[FishSpec, ...]:
    """Draw ``n_fish`` well-separated fish: staggered entries and distinct lanes."""
    if n_fish == 0:
        return ()
    rng = np.random.default_rng(seed + 7919)
    max_length = max_length or max(min_length, min(360, width // 2))
    lane_h = height // n_fish
    if lane_h < 12:
        raise ValidationError(f"{n_fish} fish do not fit in {height} rows")
    specs = []
    slot = n_frames / n_fish
    for i in range(n_fish):
        length = int(rng.integers(min_length, max_length + 1))
        thickness = int(rng.integers(8, max(9, min(20, lane_h - 6)) + 1))
        amp = float(rng.integers(0, 3))
        while thickness // 2 + math.ceil(amp) > lane_h // 2 - 2 and thickness > 1:
            thickness -= 1
        speed = int(rng.integers(3, 7)) * (1 if rng.random() < 0.5 else -1)
        entry = int(i * slot + rng.integers(0, max(1, int(slot // 4))))
        specs.append(
            FishSpec(
                entry_frame=min(entry, n_frames - 1),
                speed_px_per_frame=speed,
                length_px=length,
                thickness_px=thickness,
                intensity=float(rng.uniform(*intensity)),
                undulation_amplitude=amp,
                lane_y=i * lane_h + lane_h // 2,
                species=SPECIES[int(rng.integers(0, len(SPECIES)))],
            )
        )
    return tuple(specs)


def write_clip(clip: SynthClip, out_dir: str | Path) -> Path:
    """Write frames, manifest, annotations and passage log; returns the manifest path."""
    out_dir = Path(out_dir)
    (out_dir / "frames").mkdir(parents=True, exist_ok=True)
    for frame, rel in zip(clip.frames, clip.manifest.frame_paths):
        clipio.write_gray(out_dir / rel, frame.pixels)
    manifest_path = out_dir / "manifest.json"
    clipio.write_manifest(
        ClipManifest(
            clip.manifest.clip_id,
            clip.manifest.camera,
            clip.manifest.frame_rate_hz,
            clip.manifest.width_px,
            clip.manifest.height_px,
            tuple(out_dir / p for p in clip.manifest.frame_paths),
        ),
        manifest_path,
    )
    size = (clip.config.width, clip.config.height)
    clipio.write_annotations(out_dir / "annotations", clip.annotations, size)
    clipio.write_passages(out_dir / "passages.csv", clip.passages)
    return manifest_path
