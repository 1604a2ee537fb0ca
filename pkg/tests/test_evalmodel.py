import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import best_assignment_tp, brute_ap, corner_iou, kappa_closed_form
from sonarpipe.evalmodel import (
    ELEVEN_POINT,
    MatchCounts,
    ap50,
    ap_from_curve,
    confusion_from_counts,
    evaluate_model,
    f1_score,
    iou,
    kappa_confusion,
    kappa_from_counts,
    match_frame,
    pr_curve,
    prf,
)
from sonarpipe.types import Annotation, BoundingBox, Detection


def det(box, conf, frame=0, clip="c"):
    return Detection(clip, frame, BoundingBox(*box), conf)


def ann(box, frame=0):
    return Annotation(frame, BoundingBox(*box), "fish")


def random_instance(rng: random.Random):
    """A few images on a coarse grid so that IoU >= 0.5 happens often."""
    n_images = rng.randint(1, 3)
    budget_d, budget_g = rng.randint(0, 10), rng.randint(1, 10)
    images = [([], []) for _ in range(n_images)]
    for _ in range(budget_g):
        images[rng.randrange(n_images)][1].append(_box(rng))
    for _ in range(budget_d):
        conf = round(rng.random(), rng.choice([1, 6]))  # coarse rounding creates ties
        images[rng.randrange(n_images)][0].append((conf, _box(rng)))
    return images


def _box(rng):
    return (rng.randint(0, 6) * 2, rng.randint(0, 6) * 2, rng.randint(2, 6) * 2, rng.randint(2, 6) * 2)


def to_maps(images):
    dets = {("c", i): [det(b, c, i) for c, b in d] for i, (d, _) in enumerate(images)}
    gts = {("c", i): [ann(b, i) for b in g] for i, (_, g) in enumerate(images)}
    return dets, gts


def test_iou_examples():
    a = BoundingBox(0, 0, 10, 10)
    assert iou(a, a) == 1.0
    assert iou(a, BoundingBox(5, 0, 10, 10)) == pytest.approx(50 / 150)
    assert iou(a, BoundingBox(10, 0, 5, 5)) == 0.0
    assert iou(a, BoundingBox(20, 20, 5, 5)) == 0.0


@settings(max_examples=200)
@given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 20), st.integers(1, 12), st.integers(1, 12)), min_size=2, max_size=2))
def test_iou_symmetric_bounded(boxes):
    a, b = (BoundingBox(*x) for x in boxes)
    assert iou(a, b) == iou(b, a)
    assert 0.0 <= iou(a, b) <= 1.0
    assert iou(a, b) == pytest.approx(corner_iou(boxes[0], boxes[1]))


def test_f1_examples():
    assert f1_score(0.78, 0.61) == pytest.approx(0.6846, abs=5e-4)
    assert f1_score(0.0, 0.0) == 0.0
    assert f1_score(1.0, 1.0) == 1.0


def test_prf_counts_and_degenerate():
    r = prf(MatchCounts(tp=6, fp=2, fn=4))
    assert (r.precision, r.recall) == (0.75, 0.6)
    assert r.f1 == pytest.approx(2 * 0.75 * 0.6 / 1.35)
    assert not r.degenerate
    z = prf(MatchCounts())
    assert (z.precision, z.recall, z.f1, z.degenerate) == (0.0, 0.0, 0.0, True)


def test_match_frame_greedy_by_confidence():
    gts = [ann((0, 0, 10, 10)), ann((6, 0, 10, 10))]
    # the confident detection overlaps both truths and takes the better one
    dets = [det((5, 0, 10, 10), 0.4), det((1, 0, 10, 10), 0.9)]
    m = match_frame(dets, gts)
    assert m.det_is_tp == [True, True]
    assert m.counts == MatchCounts(tp=2, fp=0, fn=0)


def test_match_frame_duplicates_are_false_positives():
    gts = [ann((0, 0, 10, 10))]
    dets = [det((0, 0, 10, 10), 0.9), det((0, 0, 10, 10), 0.8), det((50, 50, 4, 4), 0.7)]
    assert match_frame(dets, gts).counts == MatchCounts(tp=1, fp=2, fn=0)
    assert match_frame([], gts).counts == MatchCounts(tp=0, fp=0, fn=1)


def test_match_frame_threshold_inclusive():
    gts = [ann((0, 0, 10, 10))]
    # IoU exactly 0.5: 10x10 vs 10x20 sharing the first
    assert match_frame([det((0, 0, 10, 20), 0.5)], gts).counts.tp == 1
    assert match_frame([det((0, 0, 10, 21), 0.5)], gts).counts.tp == 0


@settings(max_examples=150, deadline=None)
@given(st.randoms(use_true_random=False))
def test_match_frame_never_exceeds_optimal_assignment(rnd):
    images = random_instance(rnd)
    dets, gts = images[0]
    dets, gts = dets[:6], gts[:6]
    m = match_frame([det(b, c) for c, b in dets], [ann(b) for b in gts])
    assert m.counts.tp <= best_assignment_tp([b for _, b in dets], gts)
    assert m.counts.tp + m.counts.fp == len(dets)
    assert m.counts.tp + m.counts.fn == len(gts)


def test_ap_perfect_and_zero():
    dets, gts = to_maps([([(0.9, (0, 0, 10, 10))], [(0, 0, 10, 10)])])
    assert ap50(dets, gts) == 1.0
    dets, gts = to_maps([([(0.9, (50, 50, 10, 10))], [(0, 0, 10, 10)])])
    assert ap50(dets, gts) == 0.0


def test_ap_known_value():
    # ranking TP, FP, TP with 3 truths: envelope 1 at r=1/3, 2/3 at r=2/3
    images = [
        ([(0.9, (0, 0, 10, 10)), (0.8, (50, 50, 10, 10)), (0.7, (20, 0, 10, 10))], [(0, 0, 10, 10), (20, 0, 10, 10), (40, 0, 4, 4)])
    ]
    dets, gts = to_maps(images)
    assert ap50(dets, gts) == pytest.approx(1 / 3 + (2 / 3) / 3)
    r, p = pr_curve(dets, gts)
    assert r == pytest.approx([1 / 3, 1 / 3, 2 / 3])
    assert p == pytest.approx([1.0, 0.5, 2 / 3])


def test_ap_requires_ground_truth():
    with pytest.raises(ValueError):
        ap50({("c", 0): [det((0, 0, 1, 1), 0.5)]}, {("c", 0): []})


def test_eleven_point():
    assert ap_from_curve([0.5, 1.0], [1.0, 0.5], ELEVEN_POINT) == pytest.approx((6 * 1.0 + 5 * 0.5) / 11)
    with pytest.raises(ValueError):
        ap_from_curve([1.0], [1.0], "bogus")


@settings(max_examples=300, deadline=None)
@given(st.randoms(use_true_random=False))
def test_ap_matches_oracle(rnd):
    images = random_instance(rnd)
    dets, gts = to_maps(images)
    assert abs(ap50(dets, gts) - brute_ap(images)) <= 1e-9


def test_confusion_and_kappa_fixture():
    c = MatchCounts(tp=61, fp=13, fn=39, tn=87)
    assert confusion_from_counts(c) == [[0.61, 0.13], [0.39, 0.87]]
    k, degenerate = kappa_from_counts(c)
    assert not degenerate
    assert abs(k - kappa_closed_form(61, 39, 13, 87)) <= 1e-12
    assert abs(k - 0.48) <= 1e-9


@settings(max_examples=200)
@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=40))
def test_kappa_matches_closed_form(pairs):
    preds = [p for p, _ in pairs]
    truth = [g for _, g in pairs]
    r = kappa_confusion(preds, truth)
    c = r.counts
    assert c.tp + c.fp + c.fn + c.tn == len(pairs)
    if r.degenerate:
        assert r.kappa == 1.0
        assert len(set(preds)) == 1 and preds == truth
    else:
        assert r.kappa == pytest.approx(kappa_closed_form(c.tp, c.fn, c.fp, c.tn), abs=1e-12)
        assert -1.0 - 1e-12 <= r.kappa <= 1.0 + 1e-12


def test_kappa_length_mismatch():
    with pytest.raises(ValueError):
        kappa_confusion([True], [True, False])


def test_evaluate_model_tau_and_images():
    gts = {("c", 0): [ann((0, 0, 10, 10))], ("c", 1): [], ("c", 2): [ann((0, 0, 10, 10), 2)]}
    dets = {
        ("c", 0): [det((0, 0, 10, 10), 0.9)],
        ("c", 1): [det((0, 0, 10, 10), 0.1, 1)],  # below tau: no image-level positive
        ("c", 2): [det((0, 0, 10, 10), 0.2, 2)],  # below tau but still ranked for AP
        ("c", 9): [det((0, 0, 10, 10), 0.9, 9)],  # unannotated image
    }
    rep = evaluate_model(dets, gts, tau=0.25)
    assert rep.box_counts == MatchCounts(tp=1, fp=0, fn=1)
    assert rep.image_counts == MatchCounts(tp=1, fp=0, fn=1, tn=1)
    assert rep.ap50 == pytest.approx(1.0)
    assert rep.n_images == 3
    assert any("unannotated" in f for f in rep.flags)
    d = rep.to_dict()
    assert d["ap50_percent"] == 100.0
    assert d["confusion"]["matrix"] == [[0.5, 0.0], [0.5, 1.0]]
