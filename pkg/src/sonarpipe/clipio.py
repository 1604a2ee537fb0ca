"""Disk formats: clip manifests, frames, annotations, passage and detection logs.

Layout conventions
------------------
* manifest: UTF-8 JSON ``{clip_id, camera, frame_rate_hz, width_px, height_px,
  frames: [...]}``; relative frame paths resolve against the manifest directory.
* frames: 8-bit grayscale PGM (P5) or PNG.
* annotations: one text file per frame, ``<label> <cx> <cy> <w> <h>`` per line in
  normalized center format; the frame index is the trailing integer of the
  file stem (``000012.txt``, ``clipA_12.txt``). An empty file is a frame with no fish.
* passage log: CSV with header ``clip_id,timestamp_s,species,size_class,direction``.
* detection log: JSON lines ``{clip_id, frame, x, y, w, h, conf}``.
"""

from __future__ import annotations

import csv
import json
import math
import random
import re
from collections import defaultdict
from collections.abc import Callable, Hashable, Iterable, Iterator, Sequence
from pathlib import Path

import numpy as np
from PIL import Image

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
    SizeClass,
    ValidationError,
)

PASSAGE_FIELDS = ("clip_id", "timestamp_s", "species", "size_class", "direction")
DEFAULT_SPLIT = (0.60, 0.19, 0.21)

_TRAILING_INT = re.compile(r"(\d+)$")


# -- images -------------------------------------------------------------------


def read_image(path: str | Path) -> np.ndarray:
    """Read an 8-bit grayscale image as a (height, width) uint8 array."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"frame file not found: {path}")
    with Image.open(path) as img:
        if img.mode != "L":
            img = img.convert("L")
        return np.array(img, dtype=np.uint8)


def write_gray(path: str | Path, pixels: np.ndarray) -> None:
    """Write a (height, width) uint8 array; the format follows the suffix (.pgm / .png)."""
    arr = np.ascontiguousarray(pixels, dtype=np.uint8)
    Image.fromarray(arr, mode="L").save(path)


def write_rgb(path: str | Path, rgb: np.ndarray) -> None:
    arr = np.ascontiguousarray(rgb, dtype=np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)


def read_rgb(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.array(img.convert("RGB"), dtype=np.uint8)


# -- manifests and clips --------------------------------------------------------


def load_manifest(manifest_path: str | Path) -> ClipManifest:
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise FileNotFoundError(f"manifest not found: {manifest_path}")
    try:
        raw = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", manifest_path, exc.lineno) from exc

    missing = {"clip_id", "camera", "frame_rate_hz", "width_px", "height_px", "frames"} - set(raw)
    if missing:
        raise ValidationError(f"{manifest_path}: manifest missing fields {sorted(missing)}")
    try:
        camera = Camera(raw["camera"])
    except ValueError:
        raise ValidationError(f"{manifest_path}: unknown camera {raw['camera']!r}") from None

    base = manifest_path.parent
    paths = tuple(p if p.is_absolute() else base / p for p in map(Path, raw["frames"]))
    return ClipManifest(
        clip_id=str(raw["clip_id"]),
        camera=camera,
        frame_rate_hz=float(raw["frame_rate_hz"]),
        width_px=int(raw["width_px"]),
        height_px=int(raw["height_px"]),
        frame_paths=paths,
    )


def write_manifest(manifest: ClipManifest, manifest_path: str | Path) -> None:
    manifest_path = Path(manifest_path)
    base = manifest_path.parent.resolve()
    frames = []
    for p in manifest.frame_paths:
        try:
            frames.append(Path(p).resolve().relative_to(base).as_posix())
        except ValueError:
            frames.append(str(p))
    doc = {
        "clip_id": manifest.clip_id,
        "camera": manifest.camera.value,
        "frame_rate_hz": manifest.frame_rate_hz,
        "width_px": manifest.width_px,
        "height_px": manifest.height_px,
        "frames": frames,
    }
    manifest_path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def frame_timestamp(index: int, frame_rate_hz: float) -> float:
    return index / frame_rate_hz


def iter_frames(manifest: ClipManifest) -> Iterator[Frame]:
    """Yield frames lazily in manifest order, checking every frame's size."""
    expected = (manifest.height_px, manifest.width_px)
    for index, path in enumerate(manifest.frame_paths):
        pixels = read_image(path)
        if pixels.shape != expected:
            raise ValidationError(
                f"clip {manifest.clip_id!r}: frame {index} ({path}) is "
                f"{pixels.shape[1]}x{pixels.shape[0]}, manifest says "
                f"{manifest.width_px}x{manifest.height_px}"
            )
        yield Frame(manifest.clip_id, index, frame_timestamp(index, manifest.frame_rate_hz), pixels)


def load_clip(manifest_path: str | Path) -> tuple[ClipManifest, list[Frame]]:
    """Load a manifest and all of its frames.

    Every frame path is checked up front so a missing file is reported before
    any decoding work happens.
    """
    manifest = load_manifest(manifest_path)
    for path in manifest.frame_paths:
        if not Path(path).is_file():
            raise FileNotFoundError(f"frame file not found: {path}")
    return manifest, list(iter_frames(manifest))


# -- annotations ------------------------------------------------------------------


def parse_annotation_line(line: str, path: str | Path | None = None, lineno: int | None = None):
    parts = line.split()
    if len(parts) != 5:
        raise ParseError(f"expected 5 fields 'label cx cy w h', got {len(parts)}", path, lineno)
    label = parts[0]
    try:
        cx, cy, w, h = (float(v) for v in parts[1:])
    except ValueError:
        raise ParseError("non-numeric coordinate", path, lineno) from None
    for name, v in (("cx", cx), ("cy", cy), ("w", w), ("h", h)):
        if not 0.0 <= v <= 1.0:
            raise ParseError(f"{name}={v} outside [0, 1]", path, lineno)
    if w == 0 or h == 0:
        raise ParseError("box width and height must be positive", path, lineno)
    return label, cx, cy, w, h


def read_annotation_file(path: str | Path) -> list[tuple[str, float, float, float, float]]:
    """Read raw normalized records ``(label, cx, cy, w, h)`` from one frame file."""
    path = Path(path)
    records = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            records.append(parse_annotation_line(line, path, lineno))
    return records


def write_annotation_file(path: str | Path, records: Iterable[tuple[str, float, float, float, float]]) -> None:
    lines = [f"{label} {cx!r} {cy!r} {w!r} {h!r}\n" for label, cx, cy, w, h in records]
    Path(path).write_text("".join(lines), encoding="utf-8")


def normalized_to_box(cx: float, cy: float, w: float, h: float, frame_size: tuple[int, int]) -> BoundingBox:
    width, height = frame_size
    pw, ph = w * width, h * height
    return BoundingBox(cx * width - pw / 2, cy * height - ph / 2, pw, ph)


def box_to_normalized(box: BoundingBox, frame_size: tuple[int, int]) -> tuple[float, float, float, float]:
    width, height = frame_size
    cx, cy = box.center
    return cx / width, cy / height, box.w / width, box.h / height


def annotation_frame_index(path: str | Path) -> int:
    m = _TRAILING_INT.search(Path(path).stem)
    if m is None:
        raise ParseError("annotation file name must end with the frame index", path)
    return int(m.group(1))


def load_annotations(
    directory: str | Path, frame_size: tuple[int, int], coalesce: bool = False
) -> dict[int, list[Annotation]]:
    """Load every ``*.txt`` annotation file in ``directory``.

    ``frame_size`` is ``(width, height)``. With ``coalesce`` every label is
    replaced by ``"fish"``. Frames whose file is empty map to an empty list.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"annotation directory not found: {directory}")
    out: dict[int, list[Annotation]] = {}
    for path in sorted(directory.glob("*.txt")):
        index = annotation_frame_index(path)
        if index in out:
            raise ValidationError(f"{directory}: two annotation files for frame {index}")
        anns = []
        for label, cx, cy, w, h in read_annotation_file(path):
            box = normalized_to_box(cx, cy, w, h, frame_size)
            anns.append(Annotation(index, box, "fish" if coalesce else label))
        out[index] = anns
    return dict(sorted(out.items()))


def write_annotations(
    directory: str | Path,
    per_frame: dict[int, list[Annotation]],
    frame_size: tuple[int, int],
    prefix: str = "",
) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for index, anns in per_frame.items():
        records = [(a.label, *box_to_normalized(a.bbox, frame_size)) for a in anns]
        write_annotation_file(directory / f"{prefix}{index:06d}.txt", records)


# -- passage logs -----------------------------------------------------------------


def load_passages(path: str | Path) -> list[PassageRecord]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"passage log not found: {path}")
    out = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return out
        if tuple(h.strip() for h in header) != PASSAGE_FIELDS:
            raise ParseError(f"expected header {','.join(PASSAGE_FIELDS)}", path, 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(PASSAGE_FIELDS):
                raise ParseError(f"expected {len(PASSAGE_FIELDS)} fields, got {len(row)}", path, lineno)
            clip_id, ts, species, size_class, direction = row
            try:
                record = PassageRecord(
                    clip_id=clip_id,
                    timestamp_s=float(ts),
                    species=species or "generic",
                    size_class=SizeClass(size_class),
                    direction=Direction(direction or "UNKNOWN"),
                )
            except (ValueError, ValidationError) as exc:
                raise ParseError(str(exc), path, lineno) from None
            out.append(record)
    return out


def write_passages(path: str | Path, passages: Iterable[PassageRecord]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PASSAGE_FIELDS)
        for p in passages:
            writer.writerow([p.clip_id, repr(p.timestamp_s), p.species, p.size_class.value, p.direction.value])


# -- detection logs ---------------------------------------------------------------


def _number(value, name, path, lineno) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"field {name!r} must be numeric", path, lineno)
    return value


def parse_detection_record(raw: dict, path=None, lineno=None) -> Detection:
    missing = {"clip_id", "frame", "x", "y", "w", "h", "conf"} - set(raw)
    if missing:
        raise ParseError(f"missing fields {sorted(missing)}", path, lineno)
    x, y, w, h, conf = (_number(raw[k], k, path, lineno) for k in ("x", "y", "w", "h", "conf"))
    if not (w > 0 and h > 0):
        raise ParseError(f"box size must be positive (w={w}, h={h})", path, lineno)
    if not 0.0 <= conf <= 1.0:
        raise ParseError(f"conf={conf} outside [0, 1]", path, lineno)
    frame = raw["frame"]
    if isinstance(frame, bool) or not isinstance(frame, int) or frame < 0:
        raise ParseError("frame must be a non-negative integer", path, lineno)
    return Detection(str(raw["clip_id"]), frame, BoundingBox(x, y, w, h), conf)


def load_detections(path: str | Path) -> dict[tuple[str, int], list[Detection]]:
    """Parse a JSON-lines detection log into ``(clip_id, frame) -> detections``.

    Out-of-range confidences and degenerate boxes are rejected, never clamped.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"detection log not found: {path}")
    out: dict[tuple[str, int], list[Detection]] = defaultdict(list)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", path, lineno) from None
            if not isinstance(raw, dict):
                raise ParseError("record must be a JSON object", path, lineno)
            det = parse_detection_record(raw, path, lineno)
            out[(det.clip_id, det.frame_index)].append(det)
    return dict(out)


def _plain(v: float):
    # keep integral pixel coordinates as JSON integers
    if isinstance(v, float) and v.is_integer() and abs(v) < 2**53:
        return int(v)
    return v


def detection_record(det: Detection) -> dict:
    b = det.bbox
    return {
        "clip_id": det.clip_id,
        "frame": det.frame_index,
        "x": _plain(b.x),
        "y": _plain(b.y),
        "w": _plain(b.w),
        "h": _plain(b.h),
        "conf": det.confidence,
    }


def write_detections(path: str | Path, detections: Iterable[Detection]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for det in detections:
            fh.write(json.dumps(detection_record(det)) + "\n")


# -- dataset split ----------------------------------------------------------------


def largest_remainder(n: int, ratios: Sequence[float]) -> list[int]:
    """Apportion ``n`` items to ``ratios`` by the largest-remainder method.

    Ties in the fractional part go to the larger ratio, then to the earlier slot.
    """
    quotas = [n * r for r in ratios]
    sizes = [math.floor(q) for q in quotas]
    left = n - sum(sizes)
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - sizes[i]), -ratios[i], i))
    for i in order[:left]:
        sizes[i] += 1
    return sizes


def split_dataset(
    items: Sequence,
    ratios: Sequence[float] = DEFAULT_SPLIT,
    seed: int = 0,
    stratify: Callable[[object], Hashable] | None = None,
) -> DatasetSplit:
    """Shuffle ``items`` with ``seed`` and cut them into train/val/test.

    The split is per item, so frames of one clip can land in different splits.
    ``stratify`` optionally maps an item to a group key; each group is then
    split on its own and the parts concatenated in first-seen group order.
    """
    if len(ratios) != 3:
        raise ValidationError("ratios must be (train, val, test)")
    if any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValidationError(f"ratios must be non-negative and sum to 1, got {tuple(ratios)}")
    if not items:
        raise ValidationError("cannot split an empty item list")

    if stratify is None:
        groups = {None: list(items)}
    else:
        groups = {}
        for item in items:
            groups.setdefault(stratify(item), []).append(item)

    rng = random.Random(seed)
    parts: tuple[list, list, list] = ([], [], [])
    for members in groups.values():
        shuffled = list(members)
        rng.shuffle(shuffled)
        n_train, n_val, _ = largest_remainder(len(shuffled), ratios)
        parts[0].extend(shuffled[:n_train])
        parts[1].extend(shuffled[n_train : n_train + n_val])
        parts[2].extend(shuffled[n_train + n_val :])
    return DatasetSplit(*parts)
