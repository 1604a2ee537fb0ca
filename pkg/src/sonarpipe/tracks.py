"""Temporal post-processing: flash-detection rejection and track assembly.

Two detections "overlap" when their boxes intersect with positive area and,
if ``min_iou > 0``, their IoU is at least ``min_iou``.
"""

from __future__ import annotations

import json
from collections import defaultdict
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from pathlib import Path

from .evalmodel import iou
from .types import BoundingBox, Detection, ParseError, ValidationError


@dataclass(frozen=True)
class Track:
    """Detections on consecutive frames, each overlapping the next."""

    clip_id: str
    detections: tuple[Detection, ...]

    def __post_init__(self) -> None:
        dets = self.detections
        if len(dets) < 2:
            raise ValidationError("a track needs at least two detections")
        for a, b in zip(dets, dets[1:]):
            if b.frame_index != a.frame_index + 1:
                raise ValidationError("track frames must be consecutive")
            if a.bbox.intersection(b.bbox) <= 0:
                raise ValidationError("adjacent track boxes must overlap")

    @property
    def start_frame(self) -> int:
        return self.detections[0].frame_index

    @property
    def end_frame(self) -> int:
        return self.detections[-1].frame_index

    @property
    def mean_conf(self) -> float:
        return sum(d.confidence for d in self.detections) / len(self.detections)

    def __len__(self) -> int:
        return len(self.detections)


def overlaps(a: BoundingBox, b: BoundingBox, min_iou: float = 0.0) -> bool:
    if a.intersection(b) <= 0:
        return False
    return min_iou <= 0 or iou(a, b) >= min_iou


def flash_filter(
    per_frame: Mapping[int, list[Detection]],
    min_iou: float = 0.0,
    symmetric: bool = True,
) -> dict[int, list[Detection]]:
    """Drop detections with no overlapping partner on an adjacent frame.

    With ``symmetric`` (default) a partner on the previous *or* next frame keeps
    a detection, so both ends of a two-frame passage survive. With
    ``symmetric=False`` only the next frame counts, which always drops the
    last detection of a run.
    """
    out: dict[int, list[Detection]] = {}
    for f in sorted(per_frame):
        neighbours = list(per_frame.get(f + 1, ()))
        if symmetric:
            neighbours += per_frame.get(f - 1, ())
        out[f] = [d for d in per_frame[f] if any(overlaps(d.bbox, o.bbox, min_iou) for o in neighbours)]
    return out


def build_tracks(
    per_frame: Mapping[int, list[Detection]],
    min_iou: float = 0.0,
    clip_id: str | None = None,
) -> list[Track]:
    """Link detections frame to frame into maximal chains.

    Between frames ``f`` and ``f+1`` all overlapping pairs are ranked by IoU
    (descending, ties by position in each frame's list) and accepted greedily
    one-to-one. Chains of length >= 2 are returned ordered by start frame.
    """
    succ: dict[tuple[int, int], tuple[int, int]] = {}
    has_pred: set[tuple[int, int]] = set()
    frames = sorted(f for f, dets in per_frame.items() if dets)
    for f in frames:
        nxt = per_frame.get(f + 1)
        if not nxt:
            continue
        pairs = []
        for i, a in enumerate(per_frame[f]):
            for j, b in enumerate(nxt):
                if overlaps(a.bbox, b.bbox, min_iou):
                    pairs.append((-iou(a.bbox, b.bbox), i, j))
        pairs.sort()
        used_i: set[int] = set()
        used_j: set[int] = set()
        for _, i, j in pairs:
            if i in used_i or j in used_j:
                continue
            used_i.add(i)
            used_j.add(j)
            succ[(f, i)] = (f + 1, j)
            has_pred.add((f + 1, j))

    tracks = []
    for f in frames:
        for i, det in enumerate(per_frame[f]):
            node = (f, i)
            if node in has_pred or node not in succ:
                continue
            chain = [det]
            while node in succ:
                node = succ[node]
                chain.append(per_frame[node[0]][node[1]])
            tracks.append(Track(clip_id if clip_id is not None else det.clip_id, tuple(chain)))
    return tracks


def group_by_clip(dets: Mapping[tuple[str, int], list[Detection]]) -> dict[str, dict[int, list[Detection]]]:
    """Reshape a detection-log map ``(clip, frame) -> dets`` into ``clip -> frame -> dets``."""
    out: dict[str, dict[int, list[Detection]]] = defaultdict(dict)
    for (clip, frame), items in sorted(dets.items()):
        out[clip][frame] = list(items)
    return dict(out)


# -- track log ----------------------------------------------------------------------


def track_record(track: Track) -> dict:
    return {
        "clip_id": track.clip_id,
        "start_frame": track.start_frame,
        "end_frame": track.end_frame,
        "boxes": [[_plain(v) for v in d.bbox.as_list()] for d in track.detections],
        "confs": [d.confidence for d in track.detections],
        "mean_conf": track.mean_conf,
    }


def _plain(v):
    if isinstance(v, float) and v.is_integer():
        return int(v)
    return v


def write_tracks(path: str | Path, tracks: Iterable[Track]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for t in tracks:
            fh.write(json.dumps(track_record(t)) + "\n")


def load_tracks(path: str | Path) -> list[Track]:
    """Read a track log. Per-box ``confs`` are optional; ``mean_conf`` fills in when absent."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"track log not found: {path}")
    tracks = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                clip = str(raw["clip_id"])
                start, end = int(raw["start_frame"]), int(raw["end_frame"])
                boxes = raw["boxes"]
                confs = raw.get("confs") or [float(raw["mean_conf"])] * len(boxes)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"bad track record: {exc}", path, lineno) from None
            if len(boxes) != end - start + 1 or len(confs) != len(boxes):
                raise ParseError("box count does not match the frame span", path, lineno)
            try:
                dets = tuple(
                    Detection(clip, start + k, BoundingBox(*box), float(c))
                    for k, (box, c) in enumerate(zip(boxes, confs))
                )
                tracks.append(Track(clip, dets))
            except (ValidationError, TypeError) as exc:
                raise ParseError(str(exc), path, lineno) from None
    return tracks
