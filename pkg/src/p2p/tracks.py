"""Core track types: boxes, labelled tracks, behaviour classes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import FrameGap, NonFinite, NonPositiveDims, TooShort, ValidationError


class BehaviorClass(IntEnum):
    HOVER = 0
    LOITER = 1
    APPROACH = 2
    EVADE = 3
    PASS_BY = 4

    @property
    def label(self) -> str:
        return _BEHAVIOR_NAMES[self]

    @classmethod
    def parse(cls, value: str | int) -> "BehaviorClass":
        """Accept an integer code, an enum name or a display name ("PassBy")."""
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        for member, name in _BEHAVIOR_NAMES.items():
            if name.lower() == key:
                return member
        raise ValueError(f"unknown behavior class {value!r}")


_BEHAVIOR_NAMES = {
    BehaviorClass.HOVER: "Hover",
    BehaviorClass.LOITER: "Loiter",
    BehaviorClass.APPROACH: "Approach",
    BehaviorClass.EVADE: "Evade",
    BehaviorClass.PASS_BY: "PassBy",
}

N_BEHAVIORS = len(BehaviorClass)


def encode_behavior(c: BehaviorClass) -> int:
    return int(c)


def decode_behavior(code: int) -> BehaviorClass:
    return BehaviorClass(code)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box; ``(x, y)`` is the box centre in pixels."""

    x: float
    y: float
    w: float
    h: float


@dataclass(frozen=True)
class TrackPoint:
    frame: int
    bbox: BBox


@dataclass(frozen=True)
class LabelSet:
    is_drone: bool
    behavior: BehaviorClass
    intent: float

    def __post_init__(self):
        if not (0.0 <= self.intent <= 1.0):
            raise ValidationError(f"intent {self.intent} outside [0, 1]")
        object.__setattr__(self, "behavior", BehaviorClass(self.behavior))


@dataclass(frozen=True)
class Track:
    id: str
    points: tuple[TrackPoint, ...]
    fps: float
    labels: LabelSet | None = None
    image_size: tuple[int, int] | None = None
    _centers: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def frames(self) -> np.ndarray:
        return np.array([p.frame for p in self.points], dtype=np.int64)

    def centers(self) -> np.ndarray:
        """(N, 2) array of box centres.  Read-only, cached."""
        if self._centers is None:
            arr = np.array([(p.bbox.x, p.bbox.y) for p in self.points], dtype=np.float64)
            arr = arr.reshape(-1, 2)
            arr.setflags(write=False)
            object.__setattr__(self, "_centers", arr)
        return self._centers

    def sizes(self) -> np.ndarray:
        """(N, 2) array of box widths and heights."""
        return np.array([(p.bbox.w, p.bbox.h) for p in self.points], dtype=np.float64).reshape(-1, 2)

    @classmethod
    def from_arrays(
        cls,
        id: str,
        centers,
        sizes,
        fps: float,
        labels: LabelSet | None = None,
        start_frame: int = 0,
        image_size: tuple[int, int] | None = None,
    ) -> "Track":
        centers = np.asarray(centers, dtype=np.float64)
        sizes = np.broadcast_to(np.asarray(sizes, dtype=np.float64), centers.shape)
        points = tuple(
            TrackPoint(start_frame + i, BBox(float(c[0]), float(c[1]), float(s[0]), float(s[1])))
            for i, (c, s) in enumerate(zip(centers, sizes))
        )
        return cls(id=id, points=points, fps=float(fps), labels=labels, image_size=image_size)


def validate_track(track: Track) -> Track:
    """Check every track invariant and return the track unchanged.

    Raises the most specific :class:`ValidationError` subclass for the first
    violation found.
    """
    if len(track.points) < 2:
        raise TooShort(f"track {track.id!r} has {len(track.points)} point(s); need at least 2")
    if not (math.isfinite(track.fps) and track.fps > 0):
        raise ValidationError(f"track {track.id!r}: fps must be positive and finite, got {track.fps}")
    prev = None
    for p in track.points:
        b = p.bbox
        if not all(math.isfinite(v) for v in (b.x, b.y, b.w, b.h)):
            raise NonFinite(f"track {track.id!r}: non-finite box at frame {p.frame}")
        if b.w <= 0 or b.h <= 0:
            raise NonPositiveDims(f"track {track.id!r}: box w={b.w}, h={b.h} at frame {p.frame}")
        if p.frame < 0:
            raise ValidationError(f"track {track.id!r}: negative frame index {p.frame}")
        if prev is not None and p.frame != prev + 1:
            raise FrameGap(f"track {track.id!r}: frame {prev} followed by {p.frame}")
        prev = p.frame
    return track
