"""Interceptor reach time and the Intercept Success Rate (ISR).

The interceptor starts at rest and follows the time-optimal bang-bang
profile: full acceleration until ``v_max`` is reached, then cruise.  For a
straight-line distance ``d`` this gives::

    t(d) = sqrt(2 d / a_max)                        d <= d_c
    t(d) = v_max / a_max + (d - d_c) / v_max        d >  d_c

with ``d_c = v_max**2 / (2 a_max)``.  Pixel-space predictions are converted
to metres with a :class:`ScaleModel`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptySet, InvalidSpec, NegativeDistance


@dataclass(frozen=True)
class InterceptorSpec:
    v_max: float = 15.0  # m/s
    a_max: float = 5.0   # m/s^2

    def __post_init__(self):
        if not (self.v_max > 0 and self.a_max > 0):
            raise InvalidSpec(f"interceptor limits must be positive: {self}")


@dataclass(frozen=True)
class ScaleModel:
    meters_per_pixel: float = 0.05
    fps: float = 25.0

    def __post_init__(self):
        for name in ("meters_per_pixel", "fps"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidSpec(f"{name} must be positive and finite, got {v}")


@dataclass(frozen=True)
class FeasibilityQuery:
    predicted: tuple[float, float]
    origin: tuple[float, float]
    horizon_frames: int

    def __post_init__(self):
        if self.horizon_frames < 1:
            raise InvalidSpec(f"horizon_frames must be >= 1, got {self.horizon_frames}")


def critical_distance(spec: InterceptorSpec) -> float:
    return spec.v_max ** 2 / (2.0 * spec.a_max)


def reach_time(spec: InterceptorSpec, d: float) -> float:
    """Minimum time (s) to cover ``d`` metres from rest."""
    if not d >= 0:
        raise NegativeDistance(f"distance must be >= 0, got {d}")
    d_c = critical_distance(spec)
    if d <= d_c:
        return math.sqrt(2.0 * d / spec.a_max)
    return spec.v_max / spec.a_max + (d - d_c) / spec.v_max


def reach_time_array(spec: InterceptorSpec, d: np.ndarray) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 0) or np.any(np.isnan(d)):
        raise NegativeDistance("distances must be >= 0")
    d_c = critical_distance(spec)
    accel = np.sqrt(2.0 * np.minimum(d, d_c) / spec.a_max)
    cruise = spec.v_max / spec.a_max + (d - d_c) / spec.v_max
    return np.where(d <= d_c, accel, cruise)


def is_feasible(spec: InterceptorSpec, scale: ScaleModel, q: FeasibilityQuery) -> bool:
    dx = q.predicted[0] - q.origin[0]
    dy = q.predicted[1] - q.origin[1]
    d = math.hypot(dx, dy) * scale.meters_per_pixel
    return reach_time(spec, d) <= q.horizon_frames / scale.fps


def feasible_mask(
    spec: InterceptorSpec,
    scale: ScaleModel,
    predicted: np.ndarray,
    origin: np.ndarray,
    horizon_frames: np.ndarray | int,
) -> np.ndarray:
    """Vectorised :func:`is_feasible` over arrays of shape (..., 2)."""
    predicted = np.asarray(predicted, dtype=np.float64)
    origin = np.asarray(origin, dtype=np.float64)
    d = np.hypot(*np.moveaxis(predicted - origin, -1, 0)) * scale.meters_per_pixel
    return reach_time_array(spec, d) <= np.asarray(horizon_frames) / scale.fps


def intercept_success_rate(
    spec: InterceptorSpec, scale: ScaleModel, queries: Iterable[FeasibilityQuery]
) -> float:
    hits = n = 0
    for q in queries:
        hits += is_feasible(spec, scale, q)
        n += 1
    if n == 0:
        raise EmptySet("ISR needs at least one query")
    return hits / n


def prediction_queries(
    positions: np.ndarray, origin: Sequence[float], all_steps: bool = False
) -> list[FeasibilityQuery]:
    """Queries for one H-step prediction: the final position, or every step."""
    positions = np.asarray(positions, dtype=np.float64)
    H = len(positions)
    o = (float(origin[0]), float(origin[1]))
    steps = range(1, H + 1) if all_steps else [H]
    return [FeasibilityQuery((float(positions[k - 1, 0]), float(positions[k - 1, 1])), o, k) for k in steps]


def prediction_feasible(
    spec: InterceptorSpec,
    scale: ScaleModel,
    positions: np.ndarray,
    origin: Sequence[float],
    all_steps: bool = False,
) -> bool:
    """One ISR indicator per prediction; with ``all_steps`` every step must be reachable."""
    return all(is_feasible(spec, scale, q) for q in prediction_queries(positions, origin, all_steps))
