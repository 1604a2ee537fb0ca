"""Frame-level model validation: IoU matching, P/R/F1, AP@0.50, Cohen's kappa.

The confusion matrix is laid out with predictions on rows and ground truth on
columns, ``[[TP, FP], [FN, TN]]``, and normalized per column so that
``TP + FN = 1`` and ``FP + TN = 1``.
"""

from __future__ import annotations

from collections.abc import Hashable, Mapping, Sequence
from dataclasses import dataclass, field

from .types import Annotation, BoundingBox, Detection

ALL_POINT = "all-point"
ELEVEN_POINT = "11-point"


def iou(a: BoundingBox, b: BoundingBox) -> float:
    inter = a.intersection(b)
    if inter <= 0:
        return 0.0
    return inter / (a.area + b.area - inter)


def _box(item) -> BoundingBox:
    return item if isinstance(item, BoundingBox) else item.bbox


@dataclass(frozen=True)
class MatchCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: MatchCounts) -> MatchCounts:
        return MatchCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)


@dataclass(frozen=True)
class FrameMatch:
    det_is_tp: list[bool]  # aligned with the input detection order
    gt_matched: list[bool]

    @property
    def counts(self) -> MatchCounts:
        tp = sum(self.det_is_tp)
        return MatchCounts(tp=tp, fp=len(self.det_is_tp) - tp, fn=len(self.gt_matched) - sum(self.gt_matched))


def _confidence_order(dets: Sequence[Detection]) -> list[int]:
    return sorted(range(len(dets)), key=lambda i: -dets[i].confidence)


def _claim(box: BoundingBox, gts: Sequence, taken: list[bool], iou_thresh: float) -> int | None:
    best, best_iou = None, -1.0
    for g, gt in enumerate(gts):
        if taken[g]:
            continue
        v = iou(box, _box(gt))
        if v >= iou_thresh and v > best_iou:
            best, best_iou = g, v
    return best


def match_frame(dets: Sequence[Detection], gts: Sequence[Annotation | BoundingBox], iou_thresh: float = 0.5) -> FrameMatch:
    """PASCAL-style greedy matching on one image.

    Detections are visited by descending confidence (ties keep input order);
    each claims the still-unmatched ground truth with the highest IoU, provided
    that IoU is at least ``iou_thresh``.
    """
    taken = [False] * len(gts)
    is_tp = [False] * len(dets)
    for i in _confidence_order(dets):
        g = _claim(dets[i].bbox, gts, taken, iou_thresh)
        if g is not None:
            taken[g] = True
            is_tp[i] = True
    return FrameMatch(is_tp, taken)


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    degenerate: bool = False


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def prf(counts: MatchCounts) -> PRF:
    """Precision, recall, F1; any 0/0 becomes 0 and sets ``degenerate``."""
    degenerate = False
    if counts.tp + counts.fp:
        p = counts.tp / (counts.tp + counts.fp)
    else:
        p, degenerate = 0.0, True
    if counts.tp + counts.fn:
        r = counts.tp / (counts.tp + counts.fn)
    else:
        r, degenerate = 0.0, True
    if p + r == 0:
        degenerate = True
    return PRF(p, r, f1_score(p, r), degenerate)


def _ranked_outcomes(
    dets_by_image: Mapping[Hashable, Sequence[Detection]],
    gts_by_image: Mapping[Hashable, Sequence],
    iou_thresh: float,
) -> tuple[list[bool], int]:
    """TP/FP flag of every detection in global confidence order, plus the number of ground truths."""
    n_gt = sum(len(g) for g in gts_by_image.values())
    ranked = []
    for order, key in enumerate(sorted(dets_by_image, key=_image_sort_key)):
        for pos, det in enumerate(dets_by_image[key]):
            ranked.append((-det.confidence, det.frame_index, order, pos, key, det))
    ranked.sort(key=lambda t: t[:4])

    taken = {key: [False] * len(g) for key, g in gts_by_image.items()}
    outcomes = []
    for *_, key, det in ranked:
        gts = gts_by_image.get(key, ())
        g = _claim(det.bbox, gts, taken[key], iou_thresh) if gts else None
        if g is not None:
            taken[key][g] = True
        outcomes.append(g is not None)
    return outcomes, n_gt


def _image_sort_key(key):
    return key if isinstance(key, tuple) else (key,)


def pr_curve(dets_by_image, gts_by_image, iou_thresh: float = 0.5) -> tuple[list[float], list[float]]:
    """Cumulative (recall, precision) after each detection in confidence order."""
    outcomes, n_gt = _ranked_outcomes(dets_by_image, gts_by_image, iou_thresh)
    if n_gt == 0:
        raise ValueError("average precision is undefined without ground-truth boxes")
    recalls, precisions = [], []
    tp = fp = 0
    for hit in outcomes:
        tp += hit
        fp += not hit
        recalls.append(tp / n_gt)
        precisions.append(tp / (tp + fp))
    return recalls, precisions


def ap_from_curve(recalls: Sequence[float], precisions: Sequence[float], method: str = ALL_POINT) -> float:
    if method == ELEVEN_POINT:
        total = 0.0
        for t in range(11):
            level = t / 10
            total += max((p for r, p in zip(recalls, precisions) if r >= level), default=0.0)
        return total / 11
    if method != ALL_POINT:
        raise ValueError(f"unknown interpolation {method!r}")
    mrec = [0.0, *recalls, 1.0]
    mpre = [0.0, *precisions, 0.0]
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    ap = 0.0
    for i in range(len(mrec) - 1):
        if mrec[i + 1] != mrec[i]:
            ap += (mrec[i + 1] - mrec[i]) * mpre[i + 1]
    return ap


def ap50(dets_by_image, gts_by_image, iou_thresh: float = 0.5, method: str = ALL_POINT) -> float:
    """Average precision over an image set (single class).

    Both arguments map an image key to its detections / ground truths. Raises
    ``ValueError`` when there are no ground-truth boxes at all.
    """
    recalls, precisions = pr_curve(dets_by_image, gts_by_image, iou_thresh)
    return ap_from_curve(recalls, precisions, method)


@dataclass(frozen=True)
class KappaResult:
    kappa: float
    confusion: list[list[float]]
    counts: MatchCounts
    degenerate: bool = False


def confusion_from_counts(counts: MatchCounts) -> list[list[float]]:
    pos = counts.tp + counts.fn
    neg = counts.fp + counts.tn
    return [
        [counts.tp / pos if pos else 0.0, counts.fp / neg if neg else 0.0],
        [counts.fn / pos if pos else 0.0, counts.tn / neg if neg else 0.0],
    ]


def kappa_from_counts(counts: MatchCounts) -> tuple[float, bool]:
    n = counts.tp + counts.fp + counts.fn + counts.tn
    if n == 0:
        return 0.0, True
    p0 = (counts.tp + counts.tn) / n
    pred_pos = (counts.tp + counts.fp) / n
    gt_pos = (counts.tp + counts.fn) / n
    pe = pred_pos * gt_pos + (1 - pred_pos) * (1 - gt_pos)
    if pe == 1:
        return 1.0, True
    return (p0 - pe) / (1 - pe), False


def kappa_confusion(image_preds: Sequence[bool], image_gts: Sequence[bool]) -> KappaResult:
    """Image-level Cohen's kappa and column-normalized confusion matrix."""
    if len(image_preds) != len(image_gts):
        raise ValueError("prediction and ground-truth vectors differ in length")
    tp = sum(1 for p, g in zip(image_preds, image_gts) if p and g)
    fp = sum(1 for p, g in zip(image_preds, image_gts) if p and not g)
    fn = sum(1 for p, g in zip(image_preds, image_gts) if not p and g)
    tn = len(image_preds) - tp - fp - fn
    counts = MatchCounts(tp, fp, fn, tn)
    k, degenerate = kappa_from_counts(counts)
    return KappaResult(k, confusion_from_counts(counts), counts, degenerate)


@dataclass
class ModelEvalReport:
    precision: float
    recall: float
    f1: float
    ap50: float
    kappa: float
    confusion: list[list[float]]
    box_counts: MatchCounts
    image_counts: MatchCounts
    n_images: int
    config: dict = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "ap50": self.ap50,
            "ap50_percent": round(self.ap50 * 100, 2),
            "kappa": self.kappa,
            "confusion": {
                "rows": ["pred_fish", "pred_no_fish"],
                "cols": ["gt_fish", "gt_no_fish"],
                "matrix": self.confusion,
            },
            "box_counts": vars(self.box_counts),
            "image_counts": vars(self.image_counts),
            "n_images": self.n_images,
            "config": self.config,
            "flags": self.flags,
        }


def evaluate_model(
    dets_by_image: Mapping[Hashable, Sequence[Detection]],
    gts_by_image: Mapping[Hashable, Sequence[Annotation]],
    iou_thresh: float = 0.5,
    tau: float = 0.25,
    interpolation: str = ALL_POINT,
) -> ModelEvalReport:
    """Score detections against annotated images.

    The evaluated image set is the keys of ``gts_by_image`` (images with an
    empty annotation list are fish-free). AP uses every detection; P/R/F1 and
    kappa use detections with confidence >= ``tau``.
    """
    flags = []
    scored = {k: list(dets_by_image.get(k, ())) for k in gts_by_image}
    stray = sum(len(v) for k, v in dets_by_image.items() if k not in gts_by_image)
    if stray:
        flags.append(f"ignored {stray} detections on unannotated images")

    n_gt = sum(len(g) for g in gts_by_image.values())
    if n_gt:
        ap = ap50(scored, gts_by_image, iou_thresh, interpolation)
    else:
        ap = 0.0
        flags.append("ap50 undefined: no ground-truth boxes")

    box = MatchCounts()
    preds, truth = [], []
    for key in sorted(gts_by_image, key=_image_sort_key):
        kept = [d for d in scored[key] if d.confidence >= tau]
        box = box + match_frame(kept, gts_by_image[key], iou_thresh).counts
        preds.append(bool(kept))
        truth.append(bool(gts_by_image[key]))
    scores = prf(box)
    if scores.degenerate:
        flags.append("precision/recall/f1 degenerate (0/0)")
    kc = kappa_confusion(preds, truth)
    if kc.degenerate:
        flags.append("kappa degenerate (chance agreement is 1)")

    return ModelEvalReport(
        precision=scores.precision,
        recall=scores.recall,
        f1=scores.f1,
        ap50=ap,
        kappa=kc.kappa,
        confusion=kc.confusion,
        box_counts=box,
        image_counts=kc.counts,
        n_images=len(gts_by_image),
        config={"iou_thresh": iou_thresh, "tau": tau, "interpolation": interpolation},
        flags=flags,
    )
