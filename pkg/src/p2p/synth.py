"""Seeded synthetic drone and bird-like distractor tracks.

Each behaviour class has its own motion model; measurement noise is added
to the box centre afterwards and boxes are kept inside the image.  Intent is
derived from the noise-free path so labels are exactly reproducible.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpec
from .tracks import BehaviorClass, LabelSet, Track

MARGIN = 20.0
INTENT_ACCEL_SCALE = 2.0


@dataclass(frozen=True)
class SynthSpec:
    n_tracks: int = 200
    track_len: int = 120
    image_width: int = 640
    image_height: int = 512
    fps: float = 25.0
    drone_fraction: float = 0.5
    noise_px: float = 0.5
    seed: int = 42

    def __post_init__(self):
        if self.n_tracks < 0:
            raise InvalidSpec("n_tracks must be nonnegative")
        if self.track_len < 3:
            raise InvalidSpec("track_len must be at least 3")
        if self.image_width <= 4 * MARGIN or self.image_height <= 4 * MARGIN:
            raise InvalidSpec("image too small")
        if not 0.0 <= self.drone_fraction <= 1.0:
            raise InvalidSpec("drone_fraction must be in [0, 1]")
        if self.noise_px < 0 or not self.fps > 0:
            raise InvalidSpec("noise_px must be >= 0 and fps > 0")

    @property
    def image_size(self) -> tuple[int, int]:
        return (self.image_width, self.image_height)


def intent_score(centers: np.ndarray, accel_scale: float = INTENT_ACCEL_SCALE) -> float:
    """Mean second-difference magnitude over the track, scaled and clipped to [0, 1]."""
    centers = np.asarray(centers, dtype=np.float64)
    acc = np.zeros(len(centers))
    if len(centers) > 2:
        acc[2:] = np.linalg.norm(centers[2:] - 2 * centers[1:-1] + centers[:-2], axis=1)
    return float(np.clip(acc.mean() / accel_scale, 0.0, 1.0))


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def _unit(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta)])


class _Bounds:
    def __init__(self, spec: SynthSpec, margin: float = MARGIN):
        self.lo = np.array([margin, margin])
        self.hi = np.array([spec.image_width - margin, spec.image_height - margin])
        self.center = np.array([spec.image_width / 2.0, spec.image_height / 2.0])

    def inside(self, p) -> bool:
        return bool(np.all(p >= self.lo) and np.all(p <= self.hi))

    def uniform(self, rng, inset: float = 0.0) -> np.ndarray:
        return rng.uniform(self.lo + inset, self.hi - inset)


def _walk(rng, bounds: _Bounds, p0, n, speed_fn, heading_fn):
    """Integrate a heading/speed process; leaving the bounds re-rolls the heading."""
    pos = np.empty((n, 2))
    pos[0] = p0
    heading = heading_fn(0, None)
    for t in range(1, n):
        heading = heading_fn(t, heading)
        speed = speed_fn(t)
        nxt = pos[t - 1] + speed * _unit(heading)
        if not bounds.inside(nxt):
            to_center = bounds.center - pos[t - 1]
            heading = math.atan2(to_center[1], to_center[0]) + rng.uniform(-math.pi / 4, math.pi / 4)
            heading_fn(t, heading, reset=True)
            nxt = np.clip(pos[t - 1] + speed * _unit(heading), bounds.lo, bounds.hi)
        pos[t] = nxt
    return pos


def _box_size(rng, lo=12.0, hi=40.0):
    s = rng.uniform(lo, hi)
    aspect = rng.uniform(0.8, 1.6)
    return s * math.sqrt(aspect), s / math.sqrt(aspect)


def _hover(rng, spec, bounds):
    n = spec.track_len
    p = np.repeat(bounds.uniform(rng, 50.0)[None], n, axis=0)
    w, h = _box_size(rng)
    return p, np.tile([w, h], (n, 1))


def _loiter(rng, spec, bounds):
    n = spec.track_len
    r = rng.uniform(30.0, 80.0)
    speed = rng.uniform(0.5, 1.5)
    omega = speed / r * rng.choice([-1.0, 1.0])
    c = bounds.uniform(rng, r)
    phi = rng.uniform(0, 2 * math.pi) + omega * np.arange(n)
    p = c + r * np.stack([np.cos(phi), np.sin(phi)], axis=1)
    w, h = _box_size(rng)
    return p, np.tile([w, h], (n, 1))


def _approach(rng, spec, bounds):
    n = spec.track_len
    t = np.arange(n, dtype=np.float64)
    v0 = rng.uniform(0.5, 1.5)
    a = rng.uniform(0.01, 0.03)
    direction = _unit(rng.uniform(0, 2 * math.pi))
    dist = v0 * t + 0.5 * a * t * t
    # the path passes through the image centre, heading towards it at first
    start = bounds.center - direction * dist[-1] / 2 + rng.normal(0, 10.0, 2)
    p = start + dist[:, None] * direction
    w, h = _box_size(rng, 8.0, 16.0)
    growth = 1.01 ** t
    return p, np.stack([w * growth, h * growth], axis=1)


def _evade(rng, spec, bounds):
    n = spec.track_len
    state = {"heading": rng.uniform(0, 2 * math.pi), "speed": rng.uniform(2.0, 4.0),
             "target": None, "next_turn": int(rng.integers(15, 26))}

    def heading_fn(t, heading, reset=False):
        if reset:
            state["heading"] = heading
            return heading
        if t == state["next_turn"]:
            turn = rng.uniform(math.radians(60), math.radians(120)) * rng.choice([-1.0, 1.0])
            state["heading"] += turn
            state["target"] = rng.uniform(2.0, 5.0)
            state["next_turn"] = t + int(rng.integers(15, 26))
        return state["heading"]

    def speed_fn(t):
        # acceleration burst: move a third of the way to the new speed each frame
        if state["target"] is not None:
            state["speed"] += (state["target"] - state["speed"]) / 3.0
        return state["speed"]

    p = _walk(rng, bounds, bounds.uniform(rng, 120.0), n, speed_fn, heading_fn)
    w, h = _box_size(rng)
    return p, np.tile([w, h], (n, 1))


def _pass_by(rng, spec, bounds, speed=None, heading=None):
    n = spec.track_len
    span = bounds.hi - bounds.lo
    for _ in range(1000):
        s = rng.uniform(2.0, 6.0) if speed is None else speed
        theta = rng.uniform(0, 2 * math.pi) if heading is None else heading
        d = _unit(theta) * s * (n - 1)
        if np.all(np.abs(d) <= span):
            break
        if speed is not None and heading is not None:
            raise InvalidSpec(f"pass-by at {s} px/frame does not fit in {n} frames")
    else:
        raise InvalidSpec(f"track_len={n} too long for a pass-by inside the image")
    lo = bounds.lo + np.maximum(-d, 0)
    hi = bounds.hi - np.maximum(d, 0)
    start = rng.uniform(lo, hi)
    p = start + np.arange(n)[:, None] * (d / (n - 1))
    w, h = _box_size(rng)
    return p, np.tile([w, h], (n, 1))


_GENERATORS = {
    BehaviorClass.HOVER: _hover,
    BehaviorClass.LOITER: _loiter,
    BehaviorClass.APPROACH: _approach,
    BehaviorClass.EVADE: _evade,
    BehaviorClass.PASS_BY: _pass_by,
}


def _finish(rng, spec, clean, sizes, track_id, labels) -> Track:
    noisy = clean + rng.normal(0.0, spec.noise_px, clean.shape) if spec.noise_px > 0 else clean.copy()
    img = np.array([spec.image_width, spec.image_height], dtype=np.float64)
    sizes = np.minimum(sizes, img - 1.0)
    half = sizes / 2
    noisy = np.clip(noisy, half, img - half)
    return Track.from_arrays(track_id, noisy, sizes, spec.fps, labels, image_size=spec.image_size)


def generate_track(behavior: BehaviorClass, spec: SynthSpec, seed, track_id: str | None = None, **kwargs) -> Track:
    """One labelled drone track.  Extra keyword arguments pin class parameters
    where supported (``speed``/``heading`` for pass-by)."""
    behavior = BehaviorClass(behavior)
    rng = _rng(seed)
    bounds = _Bounds(spec)
    clean, sizes = _GENERATORS[behavior](rng, spec, bounds, **kwargs)
    labels = LabelSet(is_drone=True, behavior=behavior, intent=intent_score(clean))
    tid = track_id or f"{behavior.label.lower()}-{seed}"
    return _finish(rng, spec, clean, sizes, tid, labels)


def generate_distractor(spec: SynthSpec, seed, track_id: str | None = None, speed: float | None = None) -> Track:
    """Bird-like track: jittery heading, flapping speed and box shape."""
    rng = _rng(seed)
    bounds = _Bounds(spec)
    n = spec.track_len
    s0 = rng.uniform(2.0, 6.0) if speed is None else speed
    flap = rng.uniform(0.15, 0.35)
    phase = rng.uniform(0, 2 * math.pi)
    jitter = math.radians(25.0)
    state = {"heading": rng.uniform(0, 2 * math.pi)}

    def heading_fn(t, heading, reset=False):
        if reset:
            state["heading"] = heading
        elif t > 0:
            state["heading"] += rng.normal(0.0, jitter)
        return state["heading"]

    def speed_fn(t):
        v = s0 * (1.0 + 0.5 * math.sin(2 * math.pi * flap * t + phase)) + rng.normal(0.0, 0.25 * s0)
        return max(v, 0.1 * s0)

    clean = _walk(rng, bounds, bounds.uniform(rng, 60.0), n, speed_fn, heading_fn)
    base = rng.uniform(8.0, 30.0)
    wing = np.sin(2 * math.pi * flap * np.arange(n) + phase)
    # wingbeats change both the apparent area and the aspect ratio
    area = base * (1 + 0.15 * wing)
    sizes = np.stack([area * (1 + 0.2 * wing), area * (1 - 0.2 * wing)], axis=1)
    labels = LabelSet(is_drone=False, behavior=BehaviorClass.PASS_BY, intent=0.0)
    return _finish(rng, spec, clean, sizes, track_id or f"distractor-{seed}", labels)


def track_seed(master: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master), int(index)])


def generate_dataset(spec: SynthSpec) -> list[Track]:
    """``round(n * drone_fraction)`` drones cycling through the five behaviours, then distractors."""
    n_drone = int(round(spec.n_tracks * spec.drone_fraction))
    tracks = []
    for i in range(spec.n_tracks):
        seed = track_seed(spec.seed, i)
        tid = f"synth-{i:05d}"
        if i < n_drone:
            tracks.append(generate_track(BehaviorClass(i % 5), spec, seed, tid))
        else:
            tracks.append(generate_distractor(spec, seed, tid))
    return tracks


def class_tallies(tracks) -> dict[str, int]:
    c = Counter()
    for t in tracks:
        if t.labels is None:
            c["unlabelled"] += 1
        elif not t.labels.is_drone:
            c["distractor"] += 1
        else:
            c[t.labels.behavior.label] += 1
    return dict(sorted(c.items()))
