import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import overlap_chains
from sonarpipe.tracks import Track, build_tracks, flash_filter, group_by_clip, load_tracks, overlaps, write_tracks
from sonarpipe.types import BoundingBox, Detection, ParseError, ValidationError


def d(frame, x, y, w=10, h=6, conf=0.9):
    return Detection("c", frame, BoundingBox(x, y, w, h), conf)


def per_frame_from(boxes):
    return {f: [d(f, *b) for b in items] for f, items in boxes.items()}


def test_overlap_definition():
    a = BoundingBox(0, 0, 10, 10)
    assert overlaps(a, BoundingBox(9, 9, 5, 5))
    assert not overlaps(a, BoundingBox(10, 0, 5, 5))  # touching edges do not overlap
    assert not overlaps(a, BoundingBox(9, 9, 5, 5), min_iou=0.1)
    assert overlaps(a, BoundingBox(2, 0, 10, 10), min_iou=0.5)


def test_flash_filter_symmetric_and_forward():
    pf = per_frame_from({0: [(0, 0)], 1: [(3, 0), (100, 100)], 2: [], 3: [(50, 50)]})
    sym = flash_filter(pf)
    assert [len(sym[f]) for f in range(4)] == [1, 1, 0, 0]
    fwd = flash_filter(pf, symmetric=False)
    assert [len(fwd[f]) for f in range(4)] == [1, 0, 0, 0]


def test_flash_filter_keeps_frame_keys_and_order():
    pf = per_frame_from({5: [(0, 0), (40, 0)], 6: [(42, 0), (2, 0)]})
    out = flash_filter(pf)
    assert sorted(out) == [5, 6]
    assert out[5] == pf[5] and out[6] == pf[6]


def _two_fish_fixture():
    # fish A moves right along y=0, fish B moves left along y=40; 6 frames
    boxes = {f: [(5 * f, 0), (80 - 5 * f, 40)] for f in range(6)}
    boxes[2].append((200, 200))  # an isolated flash
    return per_frame_from(boxes)


def test_two_disjoint_fish_give_two_tracks():
    pf = _two_fish_fixture()
    tracks = build_tracks(flash_filter(pf), clip_id="c")
    chains = [c for c in overlap_chains({f: [x.bbox.as_list() for x in v] for f, v in pf.items()}) if len(c) >= 2]
    got = {frozenset((det.frame_index, pf[det.frame_index].index(det)) for det in t.detections) for t in tracks}
    assert got == set(chains)
    assert len(tracks) == 2
    assert all(t.start_frame == 0 and t.end_frame == 5 and len(t) == 6 for t in tracks)


def test_tracks_prefer_highest_iou():
    pf = per_frame_from({0: [(0, 0)], 1: [(8, 0), (1, 0)]})
    (t,) = build_tracks(pf)
    assert t.detections[1].bbox.x == 1


def test_tracks_split_on_gap():
    pf = per_frame_from({0: [(0, 0)], 1: [(1, 0)], 2: [], 3: [(2, 0)], 4: [(3, 0)]})
    tracks = build_tracks(pf)
    assert [(t.start_frame, t.end_frame) for t in tracks] == [(0, 1), (3, 4)]


@settings(max_examples=100, deadline=None)
@given(
    st.lists(
        st.tuples(st.integers(0, 25), st.integers(1, 8), st.integers(-4, 4)),
        min_size=1,
        max_size=6,
    ),
    st.lists(st.tuples(st.integers(0, 30), st.integers(0, 300)), max_size=15),
)
def test_tracks_equal_chain_enumeration(fish, flashes):
    """Fish in separate lanes plus far-away single flashes: tracks are exactly the overlap chains."""
    boxes: dict[int, list] = {f: [] for f in range(40)}
    for lane, (start, length, speed) in enumerate(fish):
        for k in range(length):
            boxes[start + k].append((100 + speed * k, lane * 20))
    for frame, x in flashes:
        boxes[frame].append((1000 + x * 20, 1000))
    pf = per_frame_from(boxes)
    chains = [c for c in overlap_chains({f: [x.bbox.as_list() for x in v] for f, v in pf.items()}) if len(c) >= 2]
    tracks = build_tracks(pf)
    got = {frozenset((det.frame_index, pf[det.frame_index].index(det)) for det in t.detections) for t in tracks}
    assert got == set(chains)
    kept = flash_filter(pf)
    kept_ids = {(f, pf[f].index(x)) for f, v in kept.items() for x in v}
    assert kept_ids == set().union(*chains) if chains else kept_ids == set()


def test_track_invariants():
    with pytest.raises(ValidationError):
        Track("c", (d(0, 0, 0),))
    with pytest.raises(ValidationError):
        Track("c", (d(0, 0, 0), d(2, 0, 0)))
    with pytest.raises(ValidationError):
        Track("c", (d(0, 0, 0), d(1, 50, 0)))
    t = Track("c", (d(3, 0, 0, conf=0.5), d(4, 1, 0, conf=1.0)))
    assert (t.start_frame, t.end_frame, t.mean_conf) == (3, 4, 0.75)


def test_group_by_clip():
    a = Detection("a", 1, BoundingBox(0, 0, 1, 1), 0.5)
    b = Detection("b", 0, BoundingBox(0, 0, 1, 1), 0.5)
    assert group_by_clip({("b", 0): [b], ("a", 1): [a]}) == {"a": {1: [a]}, "b": {0: [b]}}


def test_track_log_round_trip(tmp_path):
    tracks = build_tracks(_two_fish_fixture(), clip_id="c")
    path = tmp_path / "tracks.jsonl"
    write_tracks(path, tracks)
    assert load_tracks(path) == tracks
    first = json.loads(path.read_text().splitlines()[0])
    assert set(first) == {"clip_id", "start_frame", "end_frame", "boxes", "confs", "mean_conf"}


def test_track_log_errors(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"clip_id": "c", "start_frame": 0, "end_frame": 3, "boxes": [[0,0,1,1]], "mean_conf": 0.5}\n')
    with pytest.raises(ParseError) as exc:
        load_tracks(path)
    assert exc.value.line == 1
    path.write_text("not json\n")
    with pytest.raises(ParseError):
        load_tracks(path)
    with pytest.raises(FileNotFoundError):
        load_tracks(tmp_path / "missing.jsonl")
