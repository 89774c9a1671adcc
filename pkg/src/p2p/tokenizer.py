"""Motion tokens and sliding-window examples.

A token is the 8-vector ``(x, y, vx, vy, ax, ay, s, sigma)`` for one frame:
box centre, first and second finite differences of the centre, the scale
``sqrt(w*h)`` and the population std of displacement magnitudes over a short
trailing window.  Differences are zero-padded at the start of a track so
there is exactly one token per frame.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidSpec, OutOfRange, TooShort
from .tracks import BBox, LabelSet, Track

TOKEN_FIELDS = ("x", "y", "vx", "vy", "ax", "ay", "s", "sigma")
TOKEN_DIM = len(TOKEN_FIELDS)
ACCEL_DIMS = (4, 5)


class MotionToken(NamedTuple):
    x: float
    y: float
    vx: float
    vy: float
    ax: float
    ay: float
    s: float
    sigma: float


@dataclass(frozen=True)
class TokenizerConfig:
    window: int = 12
    horizon: int = 20
    step: int = 5
    smoothness_span: int = 5
    normalize: bool = False
    image_width: float = 640.0
    image_height: float = 512.0

    def __post_init__(self):
        if self.window < 2:
            raise InvalidSpec(f"window must be >= 2, got {self.window}")
        if self.horizon < 1:
            raise InvalidSpec(f"horizon must be >= 1, got {self.horizon}")
        if self.step < 1:
            raise InvalidSpec(f"step must be >= 1, got {self.step}")
        if self.smoothness_span < 2:
            raise InvalidSpec(f"smoothness_span must be >= 2, got {self.smoothness_span}")
        if self.image_width <= 0 or self.image_height <= 0:
            raise InvalidSpec("image size must be positive")


@dataclass(frozen=True, eq=False)
class Example:
    """One observation window plus its supervision.

    ``tokens`` is the model input (normalised when the tokenizer says so);
    ``positions``, ``future`` and ``anchor`` are always raw pixels.
    """

    tokens: np.ndarray      # (W, 8)
    positions: np.ndarray   # (W, 2) observed centres
    future: np.ndarray      # (H, 2)
    labels: LabelSet | None
    anchor: np.ndarray      # (2,) centre at the last observed frame
    source_id: str
    t_index: int

    @property
    def window(self) -> int:
        return self.tokens.shape[0]

    @property
    def horizon(self) -> int:
        return self.future.shape[0]


def _check_t(track: Track, t: int) -> None:
    if not 0 <= t < len(track):
        raise OutOfRange(f"frame index {t} outside track of length {len(track)}")


def velocity(track: Track, t: int) -> tuple[float, float]:
    _check_t(track, t)
    if t == 0:
        return (0.0, 0.0)
    c = track.centers()
    return (float(c[t, 0] - c[t - 1, 0]), float(c[t, 1] - c[t - 1, 1]))


def acceleration(track: Track, t: int) -> tuple[float, float]:
    _check_t(track, t)
    if t < 2:
        return (0.0, 0.0)
    v1 = velocity(track, t)
    v0 = velocity(track, t - 1)
    return (v1[0] - v0[0], v1[1] - v0[1])


def scale(bbox: BBox) -> float:
    return float(np.sqrt(bbox.w * bbox.h))


def smoothness(track: Track, t: int, span: int = 5) -> float:
    """Population std of ``|p_i - p_{i-1}|`` for the ``span`` frames ending at ``t``."""
    _check_t(track, t)
    if span < 2:
        raise InvalidSpec(f"span must be >= 2, got {span}")
    c = track.centers()
    lo = max(1, t - span + 1)
    if t - lo + 1 < 2:
        return 0.0
    mags = np.hypot(*(c[lo:t + 1] - c[lo - 1:t]).T)
    return float(np.std(mags))


def _smoothness_series(centers: np.ndarray, span: int) -> np.ndarray:
    n = len(centers)
    out = np.zeros(n)
    if n < 3:
        return out
    mags = np.zeros(n)
    mags[1:] = np.hypot(*(centers[1:] - centers[:-1]).T)
    for t in range(2, n):
        lo = max(1, t - span + 1)
        out[t] = np.std(mags[lo:t + 1])
    return out


def raw_tokens(track: Track, span: int = 5) -> np.ndarray:
    """(N, 8) token array in pixel units."""
    c = track.centers()
    n = len(c)
    tok = np.zeros((n, TOKEN_DIM))
    tok[:, 0:2] = c
    if n > 1:
        tok[1:, 2:4] = c[1:] - c[:-1]
    if n > 2:
        tok[2:, 4:6] = tok[2:, 2:4] - tok[1:-1, 2:4]
    wh = track.sizes()
    tok[:, 6] = np.sqrt(wh[:, 0] * wh[:, 1])
    tok[:, 7] = _smoothness_series(c, span)
    return tok


def normalize_tokens(tokens: np.ndarray, image_width: float, image_height: float) -> np.ndarray:
    out = np.array(tokens, dtype=np.float64, copy=True)
    out[..., 0] /= image_width
    out[..., 1] /= image_height
    out[..., 2:] /= image_width
    return out


def tokenize(track: Track, cfg: TokenizerConfig | None = None) -> np.ndarray:
    """One token per track point, as an (N, 8) array with columns ``TOKEN_FIELDS``."""
    cfg = cfg or TokenizerConfig()
    tok = raw_tokens(track, cfg.smoothness_span)
    if cfg.normalize:
        w, h = track.image_size or (cfg.image_width, cfg.image_height)
        tok = normalize_tokens(tok, w, h)
    return tok


def as_motion_tokens(tokens: np.ndarray) -> list[MotionToken]:
    return [MotionToken(*map(float, row)) for row in np.asarray(tokens)]


def n_windows(length: int, window: int, horizon: int, step: int) -> int:
    if length < window + horizon:
        return 0
    return (length - window - horizon) // step + 1


def make_examples(track: Track, cfg: TokenizerConfig | None = None) -> list[Example]:
    cfg = cfg or TokenizerConfig()
    W, H = cfg.window, cfg.horizon
    n = len(track)
    if n < W + H:
        raise TooShort(f"track {track.id!r} has {n} points; need at least {W + H}")
    tokens = tokenize(track, cfg)
    centers = np.asarray(track.centers())
    frames = track.frames
    examples = []
    for off in range(0, n - W - H + 1, cfg.step):
        last = off + W - 1
        examples.append(Example(
            tokens=tokens[off:off + W].copy(),
            positions=centers[off:off + W].copy(),
            future=centers[off + W:off + W + H].copy(),
            labels=track.labels,
            anchor=centers[last].copy(),
            source_id=track.id,
            t_index=int(frames[last]),
        ))
    return examples


def final_window(track: Track, cfg: TokenizerConfig | None = None) -> Example:
    """The last W frames of a track as an example with an empty future."""
    cfg = cfg or TokenizerConfig()
    W = cfg.window
    if len(track) < W:
        raise TooShort(f"track {track.id!r} has {len(track)} points; need at least {W}")
    tokens = tokenize(track, cfg)
    centers = np.asarray(track.centers())
    return Example(
        tokens=tokens[-W:].copy(),
        positions=centers[-W:].copy(),
        future=np.zeros((0, 2)),
        labels=track.labels,
        anchor=centers[-1].copy(),
        source_id=track.id,
        t_index=int(track.points[-1].frame),
    )
