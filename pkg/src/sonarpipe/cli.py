"""Command-line entry point: ``sonarpipe <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import defaultdict
from pathlib import Path

from . import __version__, clipio
from .background import BackgroundParams
from .detect import DEFAULT_TAU, BaselineParams, ConfidenceRule, filter_confidence
from .evaleco import DEFAULT_TOLERANCE_S, ClipInfo, eco_report, match_passages
from .evalmodel import ALL_POINT, ELEVEN_POINT, evaluate_model
from .maskpipe import Mode
from .pipeline import PipelineError, RunConfig, preprocess, process_manifests, run_pipeline
from .synth import SynthConfig, gen_clip, random_fish_specs, write_clip
from .tracks import build_tracks, flash_filter, group_by_clip, load_tracks, write_tracks
from .types import Camera, ParseError, SequencingError, ValidationError

log = logging.getLogger("sonarpipe")


def write_json(path: str | Path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_id_list(path: str | Path) -> list[str]:
    ids = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            ids.append(line)
    return ids


def parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}") from None


def _manifest_paths(args) -> list[Path]:
    paths = [Path(p) for p in (args.manifest or [])]
    if getattr(args, "manifests_dir", None):
        paths += sorted(Path(args.manifests_dir).glob("*/manifest.json"))
    return paths


def _gt_dir_for(root: Path, clip_id: str, single: bool) -> Path | None:
    if (root / clip_id).is_dir():
        return root / clip_id
    if single:
        return root
    return None


# -- shared option groups -----------------------------------------------------------


def _add_background_opts(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("background model")
    g.add_argument("--var-threshold", type=float, help="override the camera preset (DIDSON 130, ARIS 10)")
    g.add_argument("--history", type=int, help=f"learning-rate horizon (default {BackgroundParams.history})")
    g.add_argument("--max-components", type=int, help=f"default {BackgroundParams.max_components}")
    g.add_argument("--backend", choices=("compiled", "python"), help="kernel backend (default: compiled if built)")


def _add_baseline_opts(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("baseline detector")
    g.add_argument("--min-area", type=int, default=BaselineParams.min_area_px, help="minimum component area in pixels")
    g.add_argument("--connectivity", type=int, choices=(4, 8), default=8)
    g.add_argument(
        "--confidence-rule", choices=[r.value for r in ConfidenceRule], default=ConfidenceRule.AREA_SATURATING.value
    )


def _add_dump_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.RBB_F.value, help="composed-image channels")
    p.add_argument("--dump-masks", type=Path, help="write b / b_f masks as <clip>_<index>_b.pgm")
    p.add_argument("--dump-composed", type=Path, help="write composed frames as <clip>_<index>_<mode>.png")


def _run_config(args, **extra) -> RunConfig:
    background = {}
    for key in ("history", "max_components"):
        v = getattr(args, key, None)
        if v is not None:
            background[key] = v
    baseline = BaselineParams(
        min_area_px=getattr(args, "min_area", BaselineParams.min_area_px),
        connectivity=getattr(args, "connectivity", 8),
        confidence_rule=getattr(args, "confidence_rule", ConfidenceRule.AREA_SATURATING.value),
    )
    kwargs = dict(
        mode=Mode(getattr(args, "mode", Mode.RBB_F.value)),
        var_threshold=getattr(args, "var_threshold", None),
        background=background,
        baseline=baseline,
        tau=getattr(args, "tau", DEFAULT_TAU),
        track_iou=getattr(args, "track_iou", 0.0),
        symmetric_filter=not getattr(args, "next_frame_only", False),
        tolerance_s=getattr(args, "tolerance", DEFAULT_TOLERANCE_S),
        iou_thresh=getattr(args, "iou", 0.5),
        interpolation=getattr(args, "interpolation", ALL_POINT),
        dump_masks=getattr(args, "dump_masks", None),
        dump_composed=getattr(args, "dump_composed", None),
        backend=getattr(args, "backend", None),
    )
    kwargs.update(extra)
    return RunConfig(**kwargs)


# -- subcommands ------------------------------------------------------------------------


def cmd_preprocess(args) -> int:
    if args.dump_masks is None and args.dump_composed is None:
        raise ValidationError("nothing to do: pass --dump-masks and/or --dump-composed")
    cfg = _run_config(args)
    for path in _manifest_paths(args):
        manifest = clipio.load_manifest(path)
        n = sum(1 for _ in preprocess(manifest, clipio.iter_frames(manifest), cfg))
        log.info("%s: %d frames preprocessed (var_threshold=%s)", manifest.clip_id, n,
                 cfg.background_params(manifest.camera).var_threshold)
    return 0


def cmd_detect(args) -> int:
    if args.external:
        external = clipio.load_detections(args.external)
        dets = [d for key in sorted(external) for d in filter_confidence(external[key], args.tau)]
    else:
        cfg = _run_config(args, detector="baseline", tau=args.tau)
        paths = _manifest_paths(args)
        if not paths:
            raise ValidationError("--baseline needs at least one --manifest")
        dets = []
        for r in process_manifests(paths, cfg, args.jobs):
            dets += [d for f in sorted(r.kept) for d in r.kept[f]]
    clipio.write_detections(args.out, dets)
    log.info("wrote %d detections to %s", len(dets), args.out)
    return 0


def cmd_track_filter(args) -> int:
    per_clip = group_by_clip(clipio.load_detections(args.detections))
    tracks, survivors = [], []
    for clip_id, per_frame in per_clip.items():
        kept = {f: filter_confidence(d, args.tau) for f, d in per_frame.items()}
        filtered = flash_filter(kept, args.track_iou, symmetric=not args.next_frame_only)
        survivors += [d for f in sorted(filtered) for d in filtered[f]]
        tracks += build_tracks(filtered, args.track_iou, clip_id)
    write_tracks(args.out, tracks)
    if args.filtered_out:
        clipio.write_detections(args.filtered_out, survivors)
    log.info("%d tracks, %d detections after the flash filter", len(tracks), len(survivors))
    return 0


def cmd_eval_model(args) -> int:
    preds = clipio.load_detections(args.pred)
    sizes: dict[str, tuple[int, int]] = {}
    for path in args.manifest or []:
        m = clipio.load_manifest(path)
        sizes[m.clip_id] = (m.width_px, m.height_px)
    clip_ids = sorted(set(args.clip or []) | set(sizes)) or sorted({c for c, _ in preds})
    if not clip_ids:
        raise ValidationError("no clips to evaluate: pass --clip or --manifest")
    root = Path(args.gt)
    gts = {}
    for clip_id in clip_ids:
        size = sizes.get(clip_id, args.frame_size)
        if size is None:
            raise ValidationError(f"frame size unknown for clip {clip_id!r}: pass --manifest or --frame-size")
        gt_dir = _gt_dir_for(root, clip_id, len(clip_ids) == 1)
        if gt_dir is None:
            log.warning("no annotations for clip %s", clip_id)
            continue
        for f, anns in clipio.load_annotations(gt_dir, size, coalesce=True).items():
            gts[(clip_id, f)] = anns
    report = evaluate_model(preds, gts, args.iou, args.tau, args.interpolation)
    write_json(args.out, report.to_dict())
    print(f"P={report.precision:.4f} R={report.recall:.4f} F1={report.f1:.4f} "
          f"AP50={report.ap50 * 100:.2f} kappa={report.kappa:.4f}")
    return 0


def cmd_eval_eco(args) -> int:
    tracks = load_tracks(args.tracks)
    passages = [p for path in args.passages or [] for p in clipio.load_passages(path)]
    empty = read_id_list(args.empty_clips) if args.empty_clips else []
    infos: dict[str, ClipInfo] = {}
    for path in args.manifest or []:
        m = clipio.load_manifest(path)
        infos[m.clip_id] = ClipInfo(m.clip_id, m.camera.value, m.n_frames, m.frame_rate_hz)
    survivors = group_by_clip(clipio.load_detections(args.detections)) if args.detections else None

    clip_ids = sorted(set(infos) | {t.clip_id for t in tracks} | {p.clip_id for p in passages} | set(empty))
    for clip_id in clip_ids:
        if clip_id not in infos:
            if clip_id in empty:
                raise ValidationError(f"empty clip {clip_id!r} needs a --manifest to count its frames")
            infos[clip_id] = ClipInfo(clip_id, args.camera, 0, args.fps)
    tracks_by = defaultdict(list)
    for t in tracks:
        tracks_by[t.clip_id].append(t)
    passages_by = defaultdict(list)
    for p in passages:
        passages_by[p.clip_id].append(p)
    matches = {
        c: match_passages(tracks_by[c], passages_by[c], infos[c].frame_rate_hz, args.tolerance) for c in clip_ids
    }
    config = {"tolerance_s": args.tolerance, "matching": "greedy nearest-in-time, one-to-one"}
    report = eco_report(matches, infos, empty, survivors, config)
    write_json(args.out, report.to_dict())
    print(report.table(), end="")
    return 0


def cmd_synth(args) -> int:
    specs = random_fish_specs(
        args.fish, args.width, args.height, args.frames, args.seed, args.min_length, args.max_length
    )
    cfg = SynthConfig(
        width=args.width,
        height=args.height,
        n_frames=args.frames,
        frame_rate_hz=args.fps,
        salt_pepper_rate=args.salt_pepper,
        background_mean=args.noise_mean,
        background_std=args.noise_std,
        fish_specs=specs,
        seed=args.seed,
        px_per_cm=args.px_per_cm,
        camera=Camera(args.camera),
        clip_id=args.clip_id or f"synth_{args.seed}",
    )
    manifest = write_clip(gen_clip(cfg), args.out)
    print(manifest)
    return 0


def cmd_run(args) -> int:
    paths = _manifest_paths(args)
    if not paths:
        raise ValidationError("no clips: pass --manifest or --manifests-dir")
    detector = "external" if args.external else "baseline"
    cfg = _run_config(args, detector=detector)
    external = clipio.load_detections(args.external) if args.external else None
    manifests = [clipio.load_manifest(p) for p in paths]

    annotations = None
    if args.annotations:
        annotations = {}
        for path, m in zip(paths, manifests):
            if str(args.annotations) == "auto":
                gt_dir = path.parent / "annotations"
                gt_dir = gt_dir if gt_dir.is_dir() else None
            else:
                gt_dir = _gt_dir_for(Path(args.annotations), m.clip_id, len(manifests) == 1)
            if gt_dir is not None:
                annotations[m.clip_id] = clipio.load_annotations(gt_dir, (m.width_px, m.height_px), coalesce=True)
    passages = None
    if args.passages:
        passages = [p for path in args.passages for p in clipio.load_passages(path)]
    empty = read_id_list(args.empty_clips) if args.empty_clips else []

    results, report = run_pipeline(paths, cfg, annotations, passages, empty, args.jobs, external)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    clipio.write_detections(out / "detections.jsonl", [d for r in results for f in sorted(r.kept) for d in r.kept[f]])
    clipio.write_detections(
        out / "filtered.jsonl", [d for r in results for f in sorted(r.filtered) for d in r.filtered[f]]
    )
    write_tracks(out / "tracks.jsonl", [t for r in results for t in r.tracks])
    table = report.pop("ecological_table", None)
    write_json(out / "report.json", report)
    if table is not None:
        (out / "eco_table.txt").write_text(table, encoding="utf-8")
        print(table, end="")
    if "model" in report:
        m = report["model"]
        print(f"P={m['precision']:.4f} R={m['recall']:.4f} F1={m['f1']:.4f} "
              f"AP50={m['ap50_percent']:.2f} kappa={m['kappa']:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sonarpipe", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="background masks, denoising and composition")
    p.add_argument("--manifest", action="append", required=True)
    _add_background_opts(p)
    _add_dump_opts(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("detect", help="baseline detections over b_f, or filter an external log")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--baseline", action="store_true", help="connected components over b_f")
    src.add_argument("--external", type=Path, help="JSON-lines log from an external detector")
    p.add_argument("--manifest", action="append")
    p.add_argument("--tau", type=float, default=DEFAULT_TAU, help="confidence threshold (tool default 0.25)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--jobs", type=int, default=1)
    _add_background_opts(p)
    _add_baseline_opts(p)
    _add_dump_opts(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("track-filter", help="flash filter and track assembly")
    p.add_argument("--detections", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="track log (JSON lines)")
    p.add_argument("--filtered-out", type=Path, help="also write the surviving detections")
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--track-iou", type=float, default=0.0, help="minimum IoU for an overlap (0: any intersection)")
    p.add_argument("--next-frame-only", action="store_true", help="literal rule: partner required on the next frame")
    p.set_defaults(func=cmd_track_filter)

    p = sub.add_parser("eval-model", help="frame-level P/R/F1, AP@0.50, kappa, confusion matrix")
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--gt", type=Path, required=True, help="annotation dir (or dir of <clip_id>/ subdirs)")
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--tau", type=float, default=DEFAULT_TAU)
    p.add_argument("--interpolation", choices=(ALL_POINT, ELEVEN_POINT), default=ALL_POINT)
    p.add_argument("--manifest", action="append", help="clip manifests (give clip ids and frame sizes)")
    p.add_argument("--frame-size", type=parse_size, help="WIDTHxHEIGHT when no manifest is given")
    p.add_argument("--clip", action="append", help="clip id(s) to evaluate")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_eval_model)

    p = sub.add_parser("eval-eco", help="passage-level recall, TN%% on empty clips, FP/TP median")
    p.add_argument("--tracks", type=Path, required=True)
    p.add_argument("--passages", type=Path, action="append")
    p.add_argument("--empty-clips", type=Path, help="file with one empty clip id per line")
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE_S, help="seconds")
    p.add_argument("--manifest", action="append")
    p.add_argument("--detections", type=Path, help="flash-filtered detections, for TN%%")
    p.add_argument("--fps", type=float, default=5.0, help="frame rate for clips without a manifest")
    p.add_argument("--camera", default="UNKNOWN", help="camera label for clips without a manifest")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_eval_eco)

    p = sub.add_parser("synth", help="generate a synthetic clip with ground truth")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=300)
    p.add_argument("--fish", type=int, default=5)
    p.add_argument("--width", type=int, default=SynthConfig.width)
    p.add_argument("--height", type=int, default=SynthConfig.height)
    p.add_argument("--fps", type=float, default=SynthConfig.frame_rate_hz)
    p.add_argument("--camera", choices=[c.value for c in Camera], default=Camera.DIDSON.value)
    p.add_argument("--clip-id")
    p.add_argument("--noise-mean", type=float, default=SynthConfig.background_mean)
    p.add_argument("--noise-std", type=float, default=SynthConfig.background_std)
    p.add_argument("--salt-pepper", type=float, default=SynthConfig.salt_pepper_rate)
    p.add_argument("--px-per-cm", type=float, default=SynthConfig.px_per_cm)
    p.add_argument("--min-length", type=int, default=60)
    p.add_argument("--max-length", type=int)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="full pipeline with optional evaluation")
    p.add_argument("--manifest", action="append")
    p.add_argument("--manifests-dir", type=Path, help="process every <dir>/*/manifest.json")
    p.add_argument("--external", type=Path, help="use an external detection log instead of the baseline")
    p.add_argument("--tau", type=float, default=DEFAULT_TAU)
    p.add_argument("--track-iou", type=float, default=0.0)
    p.add_argument("--next-frame-only", action="store_true")
    p.add_argument(
        "--annotations",
        type=Path,
        help="annotation dir (or dir of <clip_id>/ subdirs); 'auto' uses annotations/ next to each manifest",
    )
    p.add_argument("--passages", type=Path, action="append", help="passage log(s) for ecological evaluation")
    p.add_argument("--empty-clips", type=Path)
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE_S)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--interpolation", choices=(ALL_POINT, ELEVEN_POINT), default=ALL_POINT)
    p.add_argument("--jobs", type=int, default=1, help="clips processed in parallel (env SONARPIPE_JOBS overrides)")
    p.add_argument("--out", type=Path, required=True)
    _add_background_opts(p)
    _add_baseline_opts(p)
    _add_dump_opts(p)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, ParseError, ValidationError, SequencingError, ValueError) as exc:
        print(f"error: [{args.command}] {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
