"""Trajectory predictors sharing one call signature: ``Example -> Prediction``.

The three kinematic baselines extrapolate from raw observed centres and emit
degenerate semantic outputs (``drone_prob = 0``, uniform behaviour, zero
intent) so they run through exactly the same evaluation path as the model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import UnknownPredictor
from .tokenizer import Example
from .tracks import N_BEHAVIORS
from .transformer import ModelConfig, Params, check_params, forward_batch

UNIFORM_BEHAVIOR = np.full(N_BEHAVIORS, 1.0 / N_BEHAVIORS)


@dataclass(frozen=True, eq=False)
class Prediction:
    positions: np.ndarray        # (H, 2) absolute pixels
    drone_prob: float = 0.0
    behavior_probs: np.ndarray = UNIFORM_BEHAVIOR
    intent: float = 0.0


Predictor = Callable[[Example], Prediction]


def _extrapolate(anchor: np.ndarray, v: np.ndarray, horizon: int) -> np.ndarray:
    steps = np.arange(1, horizon + 1, dtype=np.float64)[:, None]
    return anchor[None, :] + steps * v[None, :]


def predict_frame_based(example: Example) -> Prediction:
    """Target assumed stationary at its last observed position."""
    return Prediction(positions=np.repeat(example.anchor[None, :], example.horizon, axis=0))


def predict_tracking_only(example: Example) -> Prediction:
    """Constant velocity from the last two observed frames."""
    p = example.positions
    v = p[-1] - p[-2]
    return Prediction(positions=_extrapolate(example.anchor, v, example.horizon))


def predict_naive_velocity(example: Example, n_avg: int = 5) -> Prediction:
    """Constant velocity equal to the mean of the last ``n_avg`` displacements."""
    p = example.positions
    disp = np.diff(p[-(n_avg + 1):], axis=0)
    return Prediction(positions=_extrapolate(example.anchor, disp.mean(axis=0), example.horizon))


def predict_ground_truth(example: Example) -> Prediction:
    """Oracle returning the true future; useful as a metric sanity check."""
    drone = 1.0 if example.labels is not None and example.labels.is_drone else 0.0
    return Prediction(positions=example.future.copy(), drone_prob=drone)


BASELINES: dict[str, Predictor] = {
    "frame": predict_frame_based,
    "track": predict_tracking_only,
    "naive": predict_naive_velocity,
}

DISPLAY_NAMES = {
    "frame": "Frame-based",
    "track": "Tracking Only",
    "naive": "Naive Velocity",
    "p2p": "P2P",
    "oracle": "Ground truth",
}

PREDICTOR_NAMES = ("frame", "track", "naive", "p2p")


def get_baseline(name: str) -> Predictor:
    try:
        return BASELINES[name]
    except KeyError:
        raise UnknownPredictor(f"unknown predictor {name!r}; choose from {', '.join(PREDICTOR_NAMES)}") from None


class ModelPredictor:
    """Wraps trained transformer parameters as a predictor."""

    def __init__(self, params: Params, cfg: ModelConfig):
        check_params(params, cfg)
        self.params = params
        self.cfg = cfg

    def predict_many(self, examples, chunk: int = 512) -> list[Prediction]:
        preds = []
        for s in range(0, len(examples), chunk):
            part = examples[s:s + chunk]
            out, _ = forward_batch(np.stack([e.tokens for e in part]), self.params, self.cfg)
            for i, e in enumerate(part):
                preds.append(Prediction(
                    positions=e.anchor[None, :] + out["traj"][i],
                    drone_prob=float(out["drone"][i]),
                    behavior_probs=out["behavior"][i],
                    intent=float(out["intent"][i]),
                ))
        return preds

    def __call__(self, example: Example) -> Prediction:
        return self.predict_many([example])[0]
