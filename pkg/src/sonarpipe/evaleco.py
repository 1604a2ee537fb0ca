"""Passage-level ecological validation against operator passage logs.

A track matches a passage when the passage timestamp falls inside the track's
time span ``[start_frame/fps, end_frame/fps]`` widened by ``tol_s`` on both
sides. Matching is one-to-one and greedy by time distance (zero inside the
span), ties going to the earlier-starting track. Matched passages are TP,
unmatched passages FN, unmatched tracks FP.
"""

from __future__ import annotations

import enum
import statistics
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

from .tracks import Track
from .types import Detection, PassageRecord, SizeClass, ValidationError

DEFAULT_TOLERANCE_S = 10.0
ALL_SPECIES = "All species"


class MatchStatus(str, enum.Enum):
    TP = "TP"
    FN = "FN"


@dataclass(frozen=True)
class PassageMatch:
    passage: PassageRecord
    track: Track | None

    @property
    def status(self) -> MatchStatus:
        return MatchStatus.TP if self.track is not None else MatchStatus.FN


def _time_distance(t: float, start: float, end: float) -> float:
    if t < start:
        return start - t
    if t > end:
        return t - end
    return 0.0


def match_passages(
    tracks: Sequence[Track],
    passages: Sequence[PassageRecord],
    frame_rate_hz: float,
    tol_s: float = DEFAULT_TOLERANCE_S,
) -> tuple[list[PassageMatch], list[Track]]:
    """Returns matches in passage order and the unmatched (false positive) tracks."""
    if tol_s < 0:
        raise ValidationError(f"tolerance must be >= 0, got {tol_s}")
    if not frame_rate_hz > 0:
        raise ValidationError("frame_rate_hz must be > 0")

    candidates = []
    for ti, track in enumerate(tracks):
        start = track.start_frame / frame_rate_hz
        end = track.end_frame / frame_rate_hz
        for pi, passage in enumerate(passages):
            t = passage.timestamp_s
            if start - tol_s <= t <= end + tol_s:
                candidates.append((_time_distance(t, start, end), track.start_frame, ti, pi))
    candidates.sort()

    track_of: dict[int, int] = {}
    used_tracks: set[int] = set()
    for _, _, ti, pi in candidates:
        if pi in track_of or ti in used_tracks:
            continue
        track_of[pi] = ti
        used_tracks.add(ti)

    matches = [PassageMatch(p, tracks[track_of[i]] if i in track_of else None) for i, p in enumerate(passages)]
    unmatched = [t for i, t in enumerate(tracks) if i not in used_tracks]
    return matches, unmatched


@dataclass(frozen=True)
class ClipInfo:
    clip_id: str
    camera: str
    n_frames: int
    frame_rate_hz: float = 5.0


@dataclass
class ClipOutcome:
    clip_id: str
    camera: str
    tp: int
    fn: int
    fp: int

    @property
    def fp_tp_ratio(self) -> float | None:
        return self.fp / self.tp if self.tp else None


def _pct(tp: int, total: int) -> float | None:
    return 100.0 * tp / total if total else None


@dataclass
class EcoEvalReport:
    cameras: dict = field(default_factory=dict)
    clips: dict = field(default_factory=dict)
    overall: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"config": self.config, "overall": self.overall, "cameras": self.cameras, "clips": self.clips}

    def table(self) -> str:
        """Plain-text recall table: rows species x camera, columns size classes."""
        cols = [s.value for s in SizeClass] + ["Total"]
        header = f"{'Species':<28}{'Camera':<8}" + "".join(f"{c:>9}" for c in cols)
        lines = ["Recall (%TP) by fish size", header, "-" * len(header)]
        species_order: list[str] = [ALL_SPECIES]
        for cam in self.cameras.values():
            for sp in cam["recall_by_cell"]:
                if sp not in species_order:
                    species_order.append(sp)
        for sp in species_order:
            for cam_name, cam in sorted(self.cameras.items()):
                row = cam["recall_by_cell"].get(sp)
                if row is None:
                    continue
                cells = []
                for c in cols:
                    cell = row.get(c)
                    rec = None if cell is None else cell["recall"]
                    cells.append(f"{'NA' if rec is None else f'{rec:.2f}':>9}")
                lines.append(f"{sp[:27]:<28}{cam_name:<8}" + "".join(cells))
        for cam_name, cam in sorted(self.cameras.items()):
            tn = cam["tn"]
            med = cam["fp_tp"]["median"]
            tn_s = "NA" if tn["tn_percent"] is None else f"{tn['tn_percent']:.2f}"
            med_s = "NA" if med is None else f"{med:.2f}"
            lines.append(f"{cam_name}: TN% on empty clips = {tn_s}; median FP/TP = {med_s}")
        return "\n".join(lines) + "\n"


def _recall_cells(matches: Iterable[PassageMatch]) -> dict:
    counts: dict[str, dict[str, list[int]]] = defaultdict(lambda: defaultdict(lambda: [0, 0]))
    for m in matches:
        hit = m.track is not None
        for sp in (ALL_SPECIES, m.passage.species):
            for col in (m.passage.size_class.value, "Total"):
                cell = counts[sp][col]
                cell[0] += hit
                cell[1] += 1
    out = {}
    for sp in sorted(counts, key=lambda s: (s != ALL_SPECIES, s)):
        out[sp] = {
            col: {"tp": tp, "total": total, "recall": _pct(tp, total)}
            for col, (tp, total) in sorted(counts[sp].items(), key=lambda kv: _col_order(kv[0]))
        }
    return out


def _col_order(col: str) -> int:
    order = [s.value for s in SizeClass] + ["Total"]
    return order.index(col)


def eco_report(
    matches_per_clip: Mapping[str, tuple[Sequence[PassageMatch], Sequence[Track]]],
    clips: Mapping[str, ClipInfo],
    empty_clip_ids: Iterable[str] = (),
    per_frame: Mapping[str, Mapping[int, Sequence[Detection]]] | None = None,
    config: dict | None = None,
) -> EcoEvalReport:
    """Aggregate per-clip passage matches into recall cells, TN% and FP/TP statistics.

    ``per_frame`` holds the detections surviving the flash filter for each
    clip; it is only needed for empty clips (TN%). When a clip is missing from
    it, frames covered by its tracks count as frames with a detection.
    """
    empty = set(empty_clip_ids)
    unknown = empty - set(matches_per_clip)
    if unknown:
        raise ValidationError(f"empty clips not among evaluated clips: {sorted(unknown)}")
    missing = set(matches_per_clip) - set(clips)
    if missing:
        raise ValidationError(f"no clip info for {sorted(missing)}")

    outcomes: dict[str, ClipOutcome] = {}
    by_camera: dict[str, list[str]] = defaultdict(list)
    for clip_id in sorted(matches_per_clip):
        matches, fp_tracks = matches_per_clip[clip_id]
        if clip_id in empty and matches:
            raise ValidationError(f"clip {clip_id!r} is declared empty but has {len(matches)} passages")
        tp = sum(1 for m in matches if m.track is not None)
        info = clips[clip_id]
        outcomes[clip_id] = ClipOutcome(clip_id, info.camera, tp, len(matches) - tp, len(fp_tracks))
        by_camera[info.camera].append(clip_id)

    def tn_stats(clip_ids: Iterable[str]) -> dict:
        total = hit = 0
        for cid in clip_ids:
            if cid not in empty:
                continue
            n = clips[cid].n_frames
            if per_frame is not None and cid in per_frame:
                with_det = {f for f, d in per_frame[cid].items() if d and 0 <= f < n}
            else:
                _, fp_tracks = matches_per_clip[cid]
                with_det = {d.frame_index for t in fp_tracks for d in t.detections}
            total += n
            hit += n - len(with_det)
        return {
            "images_without_detection": hit,
            "total_images": total,
            "tn_percent": _pct(hit, total),
        }

    def fp_tp_stats(clip_ids: Sequence[str]) -> dict:
        ratios = {cid: outcomes[cid].fp_tp_ratio for cid in clip_ids if outcomes[cid].fp_tp_ratio is not None}
        return {
            "per_clip": ratios,
            "median": statistics.median(ratios.values()) if ratios else None,
            "excluded_clips": sorted(cid for cid in clip_ids if outcomes[cid].tp == 0),
        }

    def totals(clip_ids: Sequence[str]) -> dict:
        tp = sum(outcomes[c].tp for c in clip_ids)
        fn = sum(outcomes[c].fn for c in clip_ids)
        fp = sum(outcomes[c].fp for c in clip_ids)
        return {"tp": tp, "fn": fn, "fp": fp, "passages": tp + fn, "recall": _pct(tp, tp + fn)}

    cameras = {}
    for cam, clip_ids in sorted(by_camera.items()):
        cam_matches = [m for cid in clip_ids for m in matches_per_clip[cid][0]]
        cameras[cam] = {
            "recall_by_cell": _recall_cells(cam_matches),
            "recall_total": totals(clip_ids),
            "tn": tn_stats(clip_ids),
            "fp_tp": fp_tp_stats(clip_ids),
        }

    all_ids = sorted(outcomes)
    clip_table = {
        cid: {
            "camera": o.camera,
            "tp": o.tp,
            "fn": o.fn,
            "fp": o.fp,
            "fp_tp_ratio": o.fp_tp_ratio,
            "empty": cid in empty,
        }
        for cid, o in outcomes.items()
    }
    overall = totals(all_ids)
    overall["tn"] = tn_stats(all_ids)
    overall["fp_tp"] = fp_tp_stats(all_ids)
    return EcoEvalReport(cameras=cameras, clips=clip_table, overall=overall, config=dict(config or {}))
