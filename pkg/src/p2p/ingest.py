"""Canonical track files, external annotation adapters and a rule-based labeller.

Canonical files are JSON Lines.  The first line is the header::

    {"type": "track", "id": "seq-1", "fps": 25.0, "image_width": 640,
     "image_height": 512, "labels": {"is_drone": true, "behavior": "Hover",
     "intent": 0.0}}

``image_width``/``image_height``/``labels`` may be ``null``.  Every further
line is one frame::

    {"frame": 0, "x": 320.5, "y": 200.0, "w": 24.0, "h": 18.0}

with ``(x, y)`` the box centre in pixels.  Floats are written with Python's
shortest round-trip repr, so write -> read -> write is byte-identical.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import atomic_write
from .errors import GapTooLarge, MappingError, ParseError
from .synth import intent_score
from .tracks import BBox, BehaviorClass, LabelSet, Track, TrackPoint, validate_track

TRACK_SUFFIX = ".track.jsonl"


# -- canonical format -------------------------------------------------------

def _labels_to_json(labels: LabelSet | None):
    if labels is None:
        return None
    return {"is_drone": bool(labels.is_drone), "behavior": labels.behavior.label, "intent": float(labels.intent)}


def track_to_text(track: Track) -> str:
    w, h = track.image_size if track.image_size else (None, None)
    header = {
        "type": "track",
        "id": track.id,
        "fps": float(track.fps),
        "image_width": w,
        "image_height": h,
        "labels": _labels_to_json(track.labels),
    }
    lines = [json.dumps(header)]
    for p in track.points:
        b = p.bbox
        lines.append(json.dumps({"frame": int(p.frame), "x": float(b.x), "y": float(b.y),
                                 "w": float(b.w), "h": float(b.h)}))
    return "\n".join(lines) + "\n"


def write_track(track: Track, path) -> None:
    atomic_write(path, track_to_text(track))


def _num(rec, key, lineno, kind=float):
    if key not in rec:
        raise ParseError(f"missing field {key!r}", lineno)
    v = rec[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ParseError(f"field {key!r} must be a number, got {v!r}", lineno)
    if kind is int:
        if isinstance(v, float) and not v.is_integer():
            raise ParseError(f"field {key!r} must be an integer, got {v!r}", lineno)
        return int(v)
    return float(v)


def _parse_labels(raw, lineno) -> LabelSet | None:
    if raw is None:
        return None
    try:
        return LabelSet(is_drone=bool(raw["is_drone"]), behavior=BehaviorClass.parse(raw["behavior"]),
                        intent=float(raw["intent"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad labels: {exc}", lineno) from None


def interpolate_gaps(frames, boxes, max_gap: int) -> tuple[list[int], np.ndarray]:
    """Fill runs of missing frames by linear interpolation of (x, y, w, h).

    ``max_gap`` is the longest run of missing frames that may be filled.
    """
    frames = list(frames)
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    out_f, out_b = [frames[0]], [boxes[0]]
    for i in range(1, len(frames)):
        missing = frames[i] - frames[i - 1] - 1
        if missing > max_gap:
            raise GapTooLarge(f"{missing} missing frames between {frames[i - 1]} and {frames[i]} (max {max_gap})")
        for k in range(1, missing + 1):
            a = k / (missing + 1)
            out_f.append(frames[i - 1] + k)
            out_b.append((1 - a) * boxes[i - 1] + a * boxes[i])
        out_f.append(frames[i])
        out_b.append(boxes[i])
    return out_f, np.array(out_b)


def _build_track(track_id, frames, boxes, fps, labels, image_size) -> Track:
    points = tuple(TrackPoint(int(f), BBox(*map(float, b))) for f, b in zip(frames, boxes))
    return validate_track(Track(id=track_id, points=points, fps=float(fps), labels=labels, image_size=image_size))


def parse_track(text: str, max_gap: int = 5, source: str = "<string>") -> Track:
    lines = text.splitlines()
    header = None
    frames, boxes = [], []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{source}: invalid JSON ({exc.msg})", lineno) from None
        if not isinstance(rec, dict):
            raise ParseError(f"{source}: expected a JSON object", lineno)
        if header is None:
            if rec.get("type") != "track":
                raise ParseError(f"{source}: first record must be the track header", lineno)
            if not isinstance(rec.get("id"), str):
                raise ParseError(f"{source}: header needs a string 'id'", lineno)
            fps = _num(rec, "fps", lineno)
            w, h = rec.get("image_width"), rec.get("image_height")
            image_size = None if w is None or h is None else (int(w), int(h))
            header = (rec["id"], fps, _parse_labels(rec.get("labels"), lineno), image_size)
            continue
        f = _num(rec, "frame", lineno, int)
        if frames and f <= frames[-1]:
            raise ParseError(f"{source}: frame {f} does not follow frame {frames[-1]}", lineno)
        frames.append(f)
        boxes.append([_num(rec, k, lineno) for k in ("x", "y", "w", "h")])
    if header is None:
        raise ParseError(f"{source}: empty track file", 1)
    if not frames:
        raise ParseError(f"{source}: track has no frame records", len(lines))
    frames, boxes = interpolate_gaps(frames, boxes, max_gap)
    track_id, fps, labels, image_size = header
    return _build_track(track_id, frames, boxes, fps, labels, image_size)


def read_track(path, max_gap: int = 5) -> Track:
    path = Path(path)
    return parse_track(path.read_text(encoding="utf-8"), max_gap=max_gap, source=str(path))


def list_track_files(directory) -> list[Path]:
    return sorted(Path(directory).glob("*" + TRACK_SUFFIX))


def read_track_dir(directory, max_gap: int = 5) -> list[Track]:
    return [read_track(p, max_gap) for p in list_track_files(directory)]


# -- external annotations --------------------------------------------------

@dataclass(frozen=True)
class ExternalMapping:
    """How to read a per-sequence annotation JSON (Anti-UAV style by default).

    ``rect_field`` names a list of ``[x, y, w, h]`` rows, one per frame;
    ``exist_field`` an optional list of 0/1 flags.  Without flags, empty or
    all-zero rows mark a missing frame.
    """

    rect_field: str = "gt_rect"
    exist_field: str | None = "exist"
    rect_origin: str = "corner"  # "corner" (top-left) or "center"
    fps: float = 25.0
    image_width: int | None = None
    image_height: int | None = None

    def __post_init__(self):
        if self.rect_origin not in ("corner", "center"):
            raise MappingError(f"rect_origin must be 'corner' or 'center', got {self.rect_origin!r}")


def _external_rows(path, mapping: ExternalMapping):
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg})", exc.lineno) from None
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: expected a JSON object at top level", 1)
    if mapping.rect_field not in doc:
        raise MappingError(f"{path}: mapped rectangle field {mapping.rect_field!r} not found")
    rects = doc[mapping.rect_field]
    flags = None
    if mapping.exist_field is not None and mapping.exist_field in doc:
        flags = doc[mapping.exist_field]
        if len(flags) != len(rects):
            raise ParseError(f"{path}: {len(flags)} existence flags for {len(rects)} rectangles")
    frames, boxes = [], []
    for i, r in enumerate(rects):
        present = bool(flags[i]) if flags is not None else True
        if not isinstance(r, (list, tuple)) or len(r) == 0:
            present = False
        elif len(r) != 4:
            raise ParseError(f"{path}: rectangle {i} has {len(r)} values, expected 4")
        elif flags is None and all(v == 0 for v in r):
            present = False
        if not present:
            continue
        x, y, w, h = map(float, r)
        if w <= 0 or h <= 0:
            continue
        if mapping.rect_origin == "corner":
            x, y = x + w / 2, y + h / 2
        frames.append(i)
        boxes.append((x, y, w, h))
    return frames, boxes


def _image_size(mapping):
    if mapping.image_width and mapping.image_height:
        return (int(mapping.image_width), int(mapping.image_height))
    return None


def adapt_external(path, mapping: ExternalMapping = ExternalMapping(), max_gap: int = 5,
                   track_id: str | None = None) -> Track:
    """Convert one external annotation file into a canonical track (unlabelled)."""
    frames, boxes = _external_rows(path, mapping)
    if not frames:
        raise ParseError(f"{path}: no frames with a visible target")
    frames, boxes = interpolate_gaps(frames, boxes, max_gap)
    return _build_track(track_id or Path(path).stem, frames, boxes, mapping.fps, None, _image_size(mapping))


def adapt_external_segments(path, mapping: ExternalMapping = ExternalMapping(), max_gap: int = 5,
                            min_len: int = 2, track_id: str | None = None) -> list[Track]:
    """Like :func:`adapt_external` but splits at gaps longer than ``max_gap``."""
    frames, boxes = _external_rows(path, mapping)
    base = track_id or Path(path).stem
    runs, start = [], 0
    for i in range(1, len(frames) + 1):
        if i == len(frames) or frames[i] - frames[i - 1] - 1 > max_gap:
            runs.append((start, i))
            start = i
    tracks = []
    for k, (a, b) in enumerate(runs):
        if b - a < min_len:
            continue
        f, bx = interpolate_gaps(frames[a:b], boxes[a:b], max_gap)
        tracks.append(_build_track(f"{base}-{k:03d}", f, bx, mapping.fps, None, _image_size(mapping)))
    return tracks


# -- heuristic labelling ---------------------------------------------------

@dataclass(frozen=True)
class LabelerConfig:
    hover_max_disp: float = 10.0         # px from the first position
    loiter_min_sweep_deg: float = 30.0   # angle swept around the fitted centre
    loiter_max_radius: float = 150.0     # px
    loiter_max_residual: float = 0.1     # circle-fit rms / radius
    approach_min_growth: float = 0.005   # per frame
    evade_turn_deg: float = 60.0
    evade_min_turns: int = 2
    turn_lag: int = 5                    # frames on each side of a turn
    turn_min_move: float = 6.0           # px over ``turn_lag`` frames
    intent_accel_scale: float = 2.0


def fit_circle(points: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Algebraic least-squares circle fit.  Returns (centre, radius, rms residual)."""
    x, y = points[:, 0], points[:, 1]
    A = np.column_stack([x, y, np.ones_like(x)])
    b = x * x + y * y
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    c = sol[:2] / 2
    r2 = sol[2] + c @ c
    if not r2 > 0:
        return c, math.inf, math.inf
    r = math.sqrt(r2)
    resid = np.linalg.norm(points - c, axis=1) - r
    return c, r, float(np.sqrt(np.mean(resid ** 2)))


def angular_sweep(points: np.ndarray, center: np.ndarray) -> float:
    """Net angle (degrees) swept by ``points`` around ``center``."""
    ang = np.unwrap(np.arctan2(points[:, 1] - center[1], points[:, 0] - center[0]))
    return float(abs(np.degrees(ang[-1] - ang[0])))


def count_turns(points: np.ndarray, lag: int, min_move: float, turn_deg: float) -> int:
    """Number of separate events where the heading changes by more than ``turn_deg``."""
    n = len(points)
    flagged = []
    cos_thr = math.cos(math.radians(turn_deg))
    for t in range(lag, n - lag):
        a = points[t] - points[t - lag]
        b = points[t + lag] - points[t]
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na < min_move or nb < min_move:
            continue
        if a @ b / (na * nb) < cos_thr:
            flagged.append(t)
    events = 0
    last = None
    for t in flagged:
        if last is None or t - last > lag:
            events += 1
        last = t
    return events


def heuristic_label(track: Track, cfg: LabelerConfig = LabelerConfig()) -> LabelSet:
    """Rule-based behaviour/intent labels for an (assumed drone) track."""
    p = np.asarray(track.centers())
    intent = intent_score(p, cfg.intent_accel_scale)

    def make(b):
        return LabelSet(is_drone=True, behavior=b, intent=intent)

    if np.max(np.linalg.norm(p - p[0], axis=1)) < cfg.hover_max_disp:
        return make(BehaviorClass.HOVER)
    if len(p) >= 3:
        c, r, rms = fit_circle(p)
        if (r <= cfg.loiter_max_radius and rms <= cfg.loiter_max_residual * r
                and angular_sweep(p, c) >= cfg.loiter_min_sweep_deg):
            return make(BehaviorClass.LOITER)
    wh = track.sizes()
    log_s = 0.5 * np.log(wh[:, 0] * wh[:, 1])
    slope = np.polyfit(np.arange(len(p)), log_s, 1)[0] if len(p) >= 2 else 0.0
    if math.expm1(slope) > cfg.approach_min_growth:
        return make(BehaviorClass.APPROACH)
    if count_turns(p, cfg.turn_lag, cfg.turn_min_move, cfg.evade_turn_deg) >= cfg.evade_min_turns:
        return make(BehaviorClass.EVADE)
    return make(BehaviorClass.PASS_BY)


def ensure_dir(path) -> Path:
    path = Path(path)
    os.makedirs(path, exist_ok=True)
    return path
