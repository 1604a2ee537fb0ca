"""End-to-end orchestration: background -> maskpipe -> detect -> tracks -> evaluation."""

from __future__ import annotations

import logging
import os
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import clipio
from .background import BackgroundModel, BackgroundParams
from .detect import DEFAULT_TAU, BaselineParams, detect_cc, filter_confidence
from .evaleco import DEFAULT_TOLERANCE_S, ClipInfo, eco_report, match_passages
from .evalmodel import ALL_POINT, evaluate_model
from .maskpipe import Mode, compose, denoise
from .tracks import Track, build_tracks, flash_filter
from .types import Annotation, ClipManifest, Detection, Frame, PassageRecord

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    def __init__(self, stage: str, clip_id: str, message: str):
        self.stage = stage
        self.clip_id = clip_id
        super().__init__(f"[{stage}] clip {clip_id}: {message}")


@dataclass(frozen=True)
class RunConfig:
    mode: Mode = Mode.RBB_F
    detector: str = "baseline"  # or "external"
    var_threshold: float | None = None  # overrides the camera preset
    background: Mapping = field(default_factory=dict)  # extra BackgroundParams overrides
    baseline: BaselineParams = BaselineParams()
    tau: float = DEFAULT_TAU
    track_iou: float = 0.0
    symmetric_filter: bool = True
    # leading frames whose detections are discarded; frame 0 is all foreground
    # (empty model) but is normally removed by the flash filter anyway
    warmup_frames: int = 0
    tolerance_s: float = DEFAULT_TOLERANCE_S
    iou_thresh: float = 0.5
    interpolation: str = ALL_POINT
    dump_masks: Path | None = None
    dump_composed: Path | None = None
    backend: str | None = None

    def background_params(self, camera) -> BackgroundParams:
        params = BackgroundParams.for_camera(camera, **dict(self.background))
        if self.var_threshold is not None:
            params = params.with_overrides(var_threshold=self.var_threshold)
        return params

    def to_dict(self) -> dict:
        return {
            "mode": Mode(self.mode).value,
            "detector": self.detector,
            "var_threshold_override": self.var_threshold,
            "background_overrides": dict(self.background),
            "baseline": self.baseline.to_dict(),
            "tau": self.tau,
            "track_iou": self.track_iou,
            "flash_filter": "symmetric" if self.symmetric_filter else "next-frame",
            "warmup_frames": self.warmup_frames,
            "tolerance_s": self.tolerance_s,
            "iou_thresh": self.iou_thresh,
            "interpolation": self.interpolation,
        }


@dataclass
class ClipResult:
    clip_id: str
    camera: str
    n_frames: int
    frame_rate_hz: float
    background: dict
    scored: dict[int, list[Detection]]  # every detection the detector produced, per frame
    kept: dict[int, list[Detection]]  # confidence >= tau
    filtered: dict[int, list[Detection]]  # after the flash filter
    tracks: list[Track]

    @property
    def info(self) -> ClipInfo:
        return ClipInfo(self.clip_id, self.camera, self.n_frames, self.frame_rate_hz)


def preprocess(manifest: ClipManifest, frames: Iterable[Frame], cfg: RunConfig):
    """Yield ``(frame, b, b_f)`` for each frame, dumping masks/composites if configured."""
    params = cfg.background_params(manifest.camera)
    model = BackgroundModel(params, manifest.width_px, manifest.height_px, backend=cfg.backend)
    mode = Mode(cfg.mode)
    for frame in frames:
        try:
            b = model.apply(frame.pixels, frame.index)
            b_f = denoise(b, cfg.backend)
        except Exception as exc:
            raise PipelineError("preprocess", manifest.clip_id, str(exc)) from exc
        if cfg.dump_masks is not None:
            _dump_masks(cfg.dump_masks, manifest.clip_id, frame.index, b, b_f)
        if cfg.dump_composed is not None:
            composed = compose(frame.pixels, b, b_f, mode)
            Path(cfg.dump_composed).mkdir(parents=True, exist_ok=True)
            clipio.write_rgb(Path(cfg.dump_composed) / f"{manifest.clip_id}_{frame.index}_{mode.value}.png", composed.rgb)
        yield frame, b, b_f


def _dump_masks(directory, clip_id, index, b, b_f) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    clipio.write_gray(directory / f"{clip_id}_{index}_b.pgm", b * 255)
    clipio.write_gray(directory / f"{clip_id}_{index}_b_f.pgm", b_f * 255)


def process_clip(
    manifest: ClipManifest,
    cfg: RunConfig,
    frames: Iterable[Frame] | None = None,
    external: Mapping[tuple[str, int], list[Detection]] | None = None,
) -> ClipResult:
    """Run one clip through detection and temporal filtering.

    ``frames`` defaults to reading the manifest's frame files. With the
    external detector, ``external`` supplies the detections and the frames
    are only read when masks or composites are being dumped.
    """
    clip = manifest.clip_id
    params = cfg.background_params(manifest.camera)
    scored: dict[int, list[Detection]] = {}
    need_frames = cfg.detector == "baseline" or cfg.dump_masks is not None or cfg.dump_composed is not None
    if need_frames:
        if frames is None:
            frames = clipio.iter_frames(manifest)
        for frame, _, b_f in preprocess(manifest, frames, cfg):
            if cfg.detector != "baseline":
                continue
            if frame.index < cfg.warmup_frames:
                scored[frame.index] = []
                continue
            try:
                scored[frame.index] = detect_cc(b_f, frame.pixels, cfg.baseline, clip, frame.index, cfg.backend)
            except Exception as exc:
                raise PipelineError("detect", clip, str(exc)) from exc
    if cfg.detector == "external":
        if external is None:
            raise PipelineError("detect", clip, "external detector selected but no detection log given")
        for i in range(manifest.n_frames):
            scored[i] = list(external.get((clip, i), ()))
    elif cfg.detector != "baseline":
        raise PipelineError("detect", clip, f"unknown detector {cfg.detector!r}")

    kept = {f: filter_confidence(d, cfg.tau) for f, d in scored.items()}
    try:
        filtered = flash_filter(kept, cfg.track_iou, cfg.symmetric_filter)
        tracks = build_tracks(filtered, cfg.track_iou, clip)
    except Exception as exc:
        raise PipelineError("track-filter", clip, str(exc)) from exc
    return ClipResult(
        clip_id=clip,
        camera=manifest.camera.value,
        n_frames=manifest.n_frames,
        frame_rate_hz=manifest.frame_rate_hz,
        background=params.to_dict(),
        scored=scored,
        kept=kept,
        filtered=filtered,
        tracks=tracks,
    )


def _process_path(args):
    manifest_path, cfg, external = args
    return process_clip(clipio.load_manifest(manifest_path), cfg, external=external)


def resolve_jobs(jobs: int | None) -> int:
    env = os.environ.get("SONARPIPE_JOBS")
    if env:
        return max(1, int(env))
    return max(1, jobs or 1)


def process_manifests(
    manifest_paths: Sequence[str | Path],
    cfg: RunConfig,
    jobs: int | None = 1,
    external: Mapping[tuple[str, int], list[Detection]] | None = None,
) -> list[ClipResult]:
    """Process clips, in parallel across clips when ``jobs > 1``; results keep input order."""
    n = resolve_jobs(jobs)
    work = [(p, cfg, external) for p in manifest_paths]
    if n == 1 or len(work) <= 1:
        return [_process_path(w) for w in work]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(_process_path, work))


def model_report(
    results: Sequence[ClipResult],
    annotations: Mapping[str, Mapping[int, list[Annotation]]],
    cfg: RunConfig,
) -> dict:
    dets, gts = {}, {}
    for r in results:
        anns = annotations.get(r.clip_id)
        if anns is None:
            continue
        for f, items in anns.items():
            gts[(r.clip_id, f)] = items
        for f, items in r.scored.items():
            dets[(r.clip_id, f)] = items
    report = evaluate_model(dets, gts, cfg.iou_thresh, cfg.tau, cfg.interpolation)
    return report.to_dict()


def ecological_report(
    results: Sequence[ClipResult],
    passages: Iterable[PassageRecord],
    empty_clip_ids: Iterable[str],
    cfg: RunConfig,
):
    by_clip: dict[str, list[PassageRecord]] = {r.clip_id: [] for r in results}
    for p in passages:
        if p.clip_id in by_clip:
            by_clip[p.clip_id].append(p)
    matches = {}
    for r in results:
        matches[r.clip_id] = match_passages(r.tracks, by_clip[r.clip_id], r.frame_rate_hz, cfg.tolerance_s)
    config = {"tolerance_s": cfg.tolerance_s, "matching": "greedy nearest-in-time, one-to-one"}
    return eco_report(
        matches,
        {r.clip_id: r.info for r in results},
        empty_clip_ids,
        {r.clip_id: r.filtered for r in results},
        config,
    )


def run_pipeline(
    manifest_paths: Sequence[str | Path],
    cfg: RunConfig,
    annotations: Mapping[str, Mapping[int, list[Annotation]]] | None = None,
    passages: Iterable[PassageRecord] | None = None,
    empty_clip_ids: Iterable[str] = (),
    jobs: int | None = 1,
    external: Mapping[tuple[str, int], list[Detection]] | None = None,
    results: Sequence[ClipResult] | None = None,
) -> tuple[list[ClipResult], dict]:
    """Process every clip and build whichever reports the inputs allow.

    Returns ``(results, report)``; ``report`` embeds the effective configuration.
    """
    if results is None:
        results = process_manifests(manifest_paths, cfg, jobs, external)
    report: dict = {
        "config": cfg.to_dict(),
        "clips": {
            r.clip_id: {
                "camera": r.camera,
                "n_frames": r.n_frames,
                "frame_rate_hz": r.frame_rate_hz,
                "background": r.background,
                "detections": sum(len(d) for d in r.kept.values()),
                "after_flash_filter": sum(len(d) for d in r.filtered.values()),
                "tracks": len(r.tracks),
            }
            for r in results
        },
    }
    if annotations:
        report["model"] = model_report(results, annotations, cfg)
    empty = list(empty_clip_ids)
    if passages is not None or empty:
        eco = ecological_report(results, passages or (), empty, cfg)
        report["ecological"] = eco.to_dict()
        report["ecological_table"] = eco.table()
    return list(results), report
