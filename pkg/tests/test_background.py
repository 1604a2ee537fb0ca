import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import reference_gmm
from sonarpipe.background import BackgroundModel, BackgroundParams, bg_apply, bg_init
from sonarpipe.types import Camera, Frame, SequencingError, ValidationError


def _run(seqs, params, backend):
    """Feed P sequences of length T as a 1 x P clip; returns (T, P) masks and the model."""
    seqs = np.asarray(seqs, dtype=np.uint8)
    n, length = seqs.shape
    model = BackgroundModel(params, n, 1, backend=backend)
    masks = np.stack([model.apply(seqs[:, t].reshape(1, n), t)[0] for t in range(length)])
    return masks, model


def test_camera_presets():
    assert BackgroundParams.for_camera("DIDSON").var_threshold == 130.0
    assert BackgroundParams.for_camera(Camera.ARIS).var_threshold == 10.0
    p = BackgroundParams.for_camera("ARIS", history=50)
    assert p.history == 50 and p.max_components == 5 and p.background_ratio == 0.9


@pytest.mark.parametrize(
    "kwargs",
    [
        {"var_threshold": 0},
        {"history": 0},
        {"max_components": 0},
        {"max_components": 9},
        {"background_ratio": 1.0},
        {"min_variance": 20.0},
        {"complexity_prior": -0.1},
    ],
)
def test_invalid_params(kwargs):
    with pytest.raises(ValidationError):
        BackgroundParams(**kwargs)


def test_first_frame_all_foreground(backend):
    model = bg_init(BackgroundParams(), 7, 5, backend)
    mask = model.apply(np.full((5, 7), 90, np.uint8), 0)
    assert mask.dtype == np.uint8 and mask.shape == (5, 7)
    assert mask.all()


def test_constant_scene_becomes_background(backend):
    model = bg_init(BackgroundParams.for_camera("DIDSON"), 6, 4, backend)
    frame = np.full((4, 6), 50, np.uint8)
    masks = [model.apply(frame, t) for t in range(5)]
    assert masks[0].all()
    for m in masks[1:]:
        assert not m.any()
    # the single component absorbed all weight and sits on the value
    (w, mu, var), = model.pixel_mixture(0, 0)
    assert (w, mu) == (1.0, 50.0) and 4.0 <= var < 15.0


def test_bright_object_is_foreground(backend):
    rng = np.random.default_rng(3)
    model = bg_init(BackgroundParams.for_camera("ARIS"), 16, 12, backend)
    for t in range(30):
        model.apply(np.clip(rng.normal(40, 3, (12, 16)), 0, 255).astype(np.uint8), t)
    frame = np.clip(rng.normal(40, 3, (12, 16)), 0, 255).astype(np.uint8)
    frame[4:8, 5:11] = 220
    mask = model.apply(frame, 30)
    assert mask[4:8, 5:11].all()
    assert mask.sum() - mask[4:8, 5:11].sum() <= 4


def test_learning_rate_schedule():
    model = BackgroundModel(BackgroundParams(history=4), 2, 2, backend="python")
    rates = []
    for t in range(6):
        rates.append(model.learning_rate())
        model.apply(np.zeros((2, 2), np.uint8), t)
    assert rates == [1.0, 0.5, 1 / 3, 0.25, 0.25, 0.25]


def test_shape_dtype_and_order_errors(backend):
    model = bg_init(BackgroundParams(), 4, 3, backend)
    with pytest.raises(ValidationError):
        model.apply(np.zeros((4, 3), np.uint8))
    with pytest.raises(ValidationError):
        model.apply(np.zeros((3, 4), np.float32))
    model.apply(np.zeros((3, 4), np.uint8), 5)
    with pytest.raises(SequencingError):
        model.apply(np.zeros((3, 4), np.uint8), 5)
    with pytest.raises(ValidationError):
        BackgroundModel(BackgroundParams(), 0, 3)


def test_bg_apply_uses_frame_index(backend):
    model = bg_init(BackgroundParams(), 3, 2, backend)
    bg_apply(model, Frame("c", 2, 0.4, np.zeros((2, 3), np.uint8)))
    with pytest.raises(SequencingError):
        bg_apply(model, Frame("c", 1, 0.2, np.zeros((2, 3), np.uint8)))


def test_scalar_oracle_handcrafted(backend):
    # regime switches exercise matching, pruning, replacement and re-sorting
    seq = [50] * 20 + [200] * 15 + [50] * 10 + [120, 30, 250, 10, 90, 160] * 5 + [50] * 20
    params = BackgroundParams(var_threshold=16.0, history=20, max_components=3)
    masks, model = _run([seq], params, backend)
    expected, mixture = reference_gmm(
        seq, 16.0, history=20, max_components=3
    )
    assert masks[:, 0].tolist() == expected
    assert model.pixel_mixture(0, 0) == mixture


@settings(max_examples=40, deadline=None)
@given(
    seqs=st.lists(st.lists(st.integers(0, 255), min_size=60, max_size=60), min_size=1, max_size=6),
    vt=st.sampled_from([10.0, 16.0, 130.0]),
    history=st.integers(1, 40),
    k=st.integers(1, 6),
)
def test_scalar_oracle_property(seqs, vt, history, k):
    params = BackgroundParams(var_threshold=vt, history=history, max_components=k)
    for name in ("python", "compiled"):
        try:
            masks, model = _run(seqs, params, name)
        except ImportError:
            continue
        for p, seq in enumerate(seqs):
            expected, mixture = reference_gmm(seq, vt, history=history, max_components=k)
            assert masks[:, p].tolist() == expected
            assert model.pixel_mixture(0, p) == mixture


def test_mixture_invariants(backend):
    rng = np.random.default_rng(11)
    model = bg_init(BackgroundParams(history=30, max_components=4), 20, 10, backend)
    for t in range(80):
        model.apply(rng.integers(0, 256, (10, 20), dtype=np.uint8), t)
        assert (model.counts >= 1).all() and (model.counts <= 4).all()
        sums = model.weights.sum(axis=2)
        np.testing.assert_allclose(sums, 1.0, atol=1e-12)
        w = model.weights
        assert (np.diff(w, axis=2) <= 0).all()
        used = np.arange(4)[None, None, :] < model.counts[..., None]
        v = model.variances[used]
        assert ((v >= 4.0) & (v <= 75.0)).all()
        assert (w[~used] == 0).all()
