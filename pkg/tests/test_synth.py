import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from p2p.errors import InvalidSpec
from p2p.evaluation import ade
from p2p.ingest import track_to_text
from p2p.predictors import predict_tracking_only
from p2p.synth import SynthSpec, class_tallies, generate_dataset, generate_distractor, generate_track, track_seed
from p2p.tokenizer import TokenizerConfig, make_examples, tokenize
from p2p.tracks import BehaviorClass, validate_track

SPEC = SynthSpec(n_tracks=20, seed=5)


def test_hover_without_noise_is_still():
    t = generate_track(BehaviorClass.HOVER, SynthSpec(noise_px=0.0), seed=1)
    assert np.all(tokenize(t)[:, 2:4] == 0)


def test_pass_by_without_noise_is_constant_velocity():
    t = generate_track(BehaviorClass.PASS_BY, SynthSpec(noise_px=0.0), seed=2, speed=2.0, heading=0.0)
    c = t.centers()
    assert np.allclose(np.diff(c[:, 0]), 2.0, atol=1e-9)
    assert np.allclose(np.diff(c[:, 1]), 0.0, atol=1e-9)
    exs = make_examples(t, TokenizerConfig())
    assert max(ade(e.future, predict_tracking_only(e).positions) for e in exs) == pytest.approx(0.0, abs=1e-9)


def test_pass_by_that_cannot_fit_is_rejected():
    with pytest.raises(InvalidSpec):
        generate_track(BehaviorClass.PASS_BY, SynthSpec(track_len=400), seed=0, speed=6.0, heading=0.0)


@pytest.mark.parametrize("seed", range(5))
def test_evade_has_an_acceleration_burst(seed):
    t = generate_track(BehaviorClass.EVADE, SynthSpec(noise_px=0.0), seed=seed)
    acc = tokenize(t)[:, 4:6]
    assert np.hypot(acc[:, 0], acc[:, 1]).max() >= 1.0


def test_approach_scale_grows_one_percent_per_frame():
    t = generate_track(BehaviorClass.APPROACH, SynthSpec(noise_px=0.0), seed=3)
    s = tokenize(t)[:, 6]
    assert np.allclose(s[1:] / s[:-1], 1.01)


def test_loiter_stays_on_a_circle():
    t = generate_track(BehaviorClass.LOITER, SynthSpec(noise_px=0.0), seed=4)
    c = t.centers()
    center = (c.max(0) + c.min(0)) / 2
    r = np.linalg.norm(c - center, axis=1)
    assert 30 - 1 <= r.mean() <= 80 + 1


@pytest.mark.parametrize("seed", range(5))
def test_distractor_is_less_smooth_than_pass_by_at_equal_speed(seed):
    spec = SynthSpec()
    bird = generate_distractor(spec, seed, speed=4.0)
    drone = generate_track(BehaviorClass.PASS_BY, spec, seed, speed=4.0)
    assert tokenize(bird)[:, 7].mean() > tokenize(drone)[:, 7].mean()
    assert bird.labels.is_drone is False
    assert bird.labels.behavior is BehaviorClass.PASS_BY and bird.labels.intent == 0.0


def test_dataset_split_and_ids():
    ds = generate_dataset(SynthSpec(n_tracks=10, seed=1))
    assert sum(t.labels.is_drone for t in ds) == 5
    assert [t.labels.behavior for t in ds[:5]] == list(BehaviorClass)
    assert ds[0].id == "synth-00000"
    assert class_tallies(ds) == {"Approach": 1, "Evade": 1, "Hover": 1, "Loiter": 1, "PassBy": 1, "distractor": 5}


def test_empty_dataset():
    assert generate_dataset(SynthSpec(n_tracks=0)) == []


def test_dataset_is_deterministic():
    a = [track_to_text(t) for t in generate_dataset(SPEC)]
    b = [track_to_text(t) for t in generate_dataset(SPEC)]
    assert a == b
    c = [track_to_text(t) for t in generate_dataset(SynthSpec(n_tracks=20, seed=6))]
    assert a != c


def test_per_track_seed_is_order_independent():
    ds = generate_dataset(SPEC)
    alone = generate_track(BehaviorClass(3), SPEC, track_seed(SPEC.seed, 3), "synth-00003")
    assert track_to_text(alone) == track_to_text(ds[3])


@given(seed=st.integers(0, 10_000), behavior=st.sampled_from(list(BehaviorClass)))
@settings(max_examples=40, deadline=None)
def test_tracks_valid_and_inside_image(seed, behavior):
    spec = SynthSpec()
    for t in (generate_track(behavior, spec, seed), generate_distractor(spec, seed)):
        validate_track(t)
        c, s = t.centers(), t.sizes()
        assert np.all(c - s / 2 >= 0) and np.all(c[:, 0] + s[:, 0] / 2 <= spec.image_width)
        assert np.all(c[:, 1] + s[:, 1] / 2 <= spec.image_height)
        assert 0.0 <= t.labels.intent <= 1.0
        assert len(t) == spec.track_len


@given(seed=st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_label_consistency(seed):
    spec = SynthSpec()
    hover = generate_track(BehaviorClass.HOVER, spec, seed).centers()
    assert np.linalg.norm(hover - hover[0], axis=1).max() < 5 * spec.noise_px + 3
    pb = generate_track(BehaviorClass.PASS_BY, spec, seed).centers()
    assert np.linalg.norm(pb[-1] - pb[0]) >= 0.8 * spec.track_len * 2.0


def test_invalid_specs():
    with pytest.raises(InvalidSpec):
        SynthSpec(drone_fraction=1.5)
    with pytest.raises(InvalidSpec):
        SynthSpec(noise_px=-1)
