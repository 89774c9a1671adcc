"""Multi-task loss, gradients, AdamW and the training loop."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import EmptyDataset, InvalidSpec, LengthMismatch, NonFinite, ShapeMismatch
from .kinematics import InterceptorSpec, ScaleModel, feasible_mask
from .tokenizer import Example
from .tracks import N_BEHAVIORS
from .transformer import ModelConfig, Params, backward_batch, fit_input_stats, forward_batch, init_params

logger = logging.getLogger(__name__)

PROB_EPS = 1e-7
BETA1, BETA2, ADAM_EPS = 0.9, 0.999, 1e-8
SMOOTH_L1_BETA = 1.0


@dataclass(frozen=True)
class LossWeights:
    w_d: float = 1.0
    w_b: float = 1.0
    w_i: float = 0.5
    w_t: float = 0.5

    def __post_init__(self):
        if min(self.w_d, self.w_b, self.w_i, self.w_t) < 0:
            raise InvalidSpec(f"loss weights must be nonnegative: {self}")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 128
    epochs: int = 50
    clip_norm: float = 1.0
    seed: int = 0
    val_fraction: float = 0.2
    multitask: bool = True
    split_by: str = "window"  # or "sequence"

    def __post_init__(self):
        if not (self.learning_rate > 0 and self.batch_size > 0 and self.clip_norm > 0):
            raise InvalidSpec("learning_rate, batch_size and clip_norm must be positive")
        if self.weight_decay < 0 or self.epochs < 0:
            raise InvalidSpec("weight_decay and epochs must be nonnegative")
        if not 0 < self.val_fraction < 1:
            raise InvalidSpec(f"val_fraction must be in (0, 1), got {self.val_fraction}")
        if self.split_by not in ("window", "sequence"):
            raise InvalidSpec(f"split_by must be 'window' or 'sequence', got {self.split_by!r}")


# -- per-sample losses -----------------------------------------------------

def loss_drone(y: float, y_hat: float) -> float:
    p = min(max(y_hat, PROB_EPS), 1 - PROB_EPS)
    return -(y * math.log(p) + (1 - y) * math.log(1 - p))


def loss_behavior(y, probs) -> float:
    """Categorical cross-entropy; ``y`` is a one-hot vector or a class index."""
    probs = np.clip(np.asarray(probs, dtype=np.float64), PROB_EPS, 1 - PROB_EPS)
    y = np.asarray(y)
    if y.ndim == 0:
        y = np.eye(N_BEHAVIORS)[int(y)]
    return float(-(y * np.log(probs)).sum())


def loss_intent(y: float, y_hat: float) -> float:
    return (y - y_hat) ** 2


def smooth_l1(e):
    a = np.abs(e)
    return np.where(a <= SMOOTH_L1_BETA, 0.5 * a * a / SMOOTH_L1_BETA, a - 0.5 * SMOOTH_L1_BETA)


def _smooth_l1_grad(e):
    return np.where(np.abs(e) <= SMOOTH_L1_BETA, e / SMOOTH_L1_BETA, np.sign(e))


def loss_traj(truth, pred) -> float:
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if truth.shape != pred.shape:
        raise LengthMismatch(f"truth {truth.shape} vs prediction {pred.shape}")
    return float(smooth_l1(truth - pred).sum() / len(truth))


def total_loss(components: dict[str, float], weights: LossWeights, multitask: bool = True) -> float:
    """Weighted sum of the ``drone``/``behavior``/``intent``/``traj`` components."""
    traj = weights.w_t * components["traj"]
    if not multitask:
        return traj
    return (weights.w_d * components["drone"] + weights.w_b * components["behavior"]
            + weights.w_i * components["intent"] + traj)


# -- batches ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Batch:
    tokens: np.ndarray    # (B, W, 8)
    anchors: np.ndarray   # (B, 2)
    futures: np.ndarray   # (B, H, 2)
    is_drone: np.ndarray  # (B,)
    behavior: np.ndarray  # (B,) int
    intent: np.ndarray    # (B,)

    def __len__(self):
        return len(self.tokens)

    def subset(self, idx) -> "Batch":
        return Batch(*(getattr(self, f)[idx] for f in
                       ("tokens", "anchors", "futures", "is_drone", "behavior", "intent")))


def stack_examples(examples: Sequence[Example]) -> Batch:
    if not examples:
        raise EmptyDataset("no examples")
    missing = [e.source_id for e in examples if e.labels is None]
    if missing:
        raise EmptyDataset(f"examples without labels cannot be used for training: {missing[:3]}")
    return Batch(
        tokens=np.stack([e.tokens for e in examples]),
        anchors=np.stack([e.anchor for e in examples]),
        futures=np.stack([e.future for e in examples]),
        is_drone=np.array([float(e.labels.is_drone) for e in examples]),
        behavior=np.array([int(e.labels.behavior) for e in examples], dtype=np.int64),
        intent=np.array([e.labels.intent for e in examples]),
    )


def batch_losses(outputs: dict, batch: Batch) -> dict[str, np.ndarray]:
    """Per-example loss components for a forward pass."""
    pd = np.clip(outputs["drone"], PROB_EPS, 1 - PROB_EPS)
    y = batch.is_drone
    pb = np.clip(outputs["behavior"][np.arange(len(batch)), batch.behavior], PROB_EPS, 1 - PROB_EPS)
    pred = batch.anchors[:, None, :] + outputs["traj"]
    H = pred.shape[1]
    return dict(
        drone=-(y * np.log(pd) + (1 - y) * np.log(1 - pd)),
        behavior=-np.log(pb),
        intent=(batch.intent - outputs["intent"]) ** 2,
        traj=smooth_l1(batch.futures - pred).sum(axis=(1, 2)) / H,
    )


def _combine(parts: dict[str, np.ndarray], weights: LossWeights, multitask: bool) -> np.ndarray:
    return total_loss(parts, weights, multitask)


def backward(
    batch: Batch,
    params: Params,
    cfg: ModelConfig,
    weights: LossWeights = LossWeights(),
    multitask: bool = True,
) -> tuple[float, Params]:
    """Mean batch loss and its gradient with respect to every parameter."""
    outputs, cache = forward_batch(batch.tokens, params, cfg)
    parts = batch_losses(outputs, batch)
    loss = float(_combine(parts, weights, multitask).mean())
    B = len(batch)
    w_d, w_b, w_i = (weights.w_d, weights.w_b, weights.w_i) if multitask else (0.0, 0.0, 0.0)

    p = outputs["drone"]
    y = batch.is_drone
    inside = (p > PROB_EPS) & (p < 1 - PROB_EPS)
    pc = np.clip(p, PROB_EPS, 1 - PROB_EPS)
    d_p = np.where(inside, -y / pc + (1 - y) / (1 - pc), 0.0)
    d_drone = w_d * d_p * p * (1 - p) / B

    probs = outputs["behavior"]
    rows = np.arange(B)
    pt = probs[rows, batch.behavior]
    d_probs = np.zeros_like(probs)
    ok = (pt > PROB_EPS) & (pt < 1 - PROB_EPS)
    d_probs[rows, batch.behavior] = np.where(ok, -1.0 / np.clip(pt, PROB_EPS, None), 0.0)
    d_beh = w_b * probs * (d_probs - (d_probs * probs).sum(axis=1, keepdims=True)) / B

    yi = outputs["intent"]
    d_int = w_i * 2.0 * (yi - batch.intent) * yi * (1 - yi) / B

    H = cfg.horizon
    err = batch.futures - (batch.anchors[:, None, :] + outputs["traj"])
    d_traj = -weights.w_t * _smooth_l1_grad(err) / (H * B)

    grads = backward_batch(cache, params, cfg, d_drone, d_beh, d_int, d_traj)
    if not all(np.all(np.isfinite(g)) for g in grads.values()):
        raise NonFinite("gradient contains NaN or Inf")
    return loss, grads


def batch_loss(batch: Batch, params: Params, cfg: ModelConfig,
               weights: LossWeights = LossWeights(), multitask: bool = True) -> float:
    outputs, _ = forward_batch(batch.tokens, params, cfg)
    return float(_combine(batch_losses(outputs, batch), weights, multitask).mean())


# -- optimisation ----------------------------------------------------------

def global_norm(grads: Params) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def clip_gradients(grads: Params, clip_norm: float) -> Params:
    if clip_norm <= 0:
        raise InvalidSpec("clip_norm must be positive")
    norm = global_norm(grads)
    if norm <= clip_norm:
        return grads
    s = clip_norm / norm
    return {k: g * s for k, g in grads.items()}


@dataclass
class AdamWState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(params: Params, grads: Params, state: AdamWState,
               learning_rate: float = 1e-3, weight_decay: float = 1e-4) -> tuple[Params, AdamWState]:
    """One decoupled-weight-decay Adam update.  Returns new params and state.

    Entries of ``params`` without a gradient (buffers) are carried over untouched.
    """
    if not set(grads) <= set(params):
        raise ShapeMismatch(f"gradients for unknown parameters: {sorted(set(grads) - set(params))}")
    t = state.step + 1
    bc1 = 1 - BETA1 ** t
    bc2 = 1 - BETA2 ** t
    new_params, m_new, v_new = {}, {}, {}
    for name, p in params.items():
        if name not in grads:
            new_params[name] = p
            continue
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"{name}: gradient {g.shape} vs parameter {p.shape}")
        m = BETA1 * state.m.get(name, 0.0) + (1 - BETA1) * g
        v = BETA2 * state.v.get(name, 0.0) + (1 - BETA2) * g * g
        decayed = p - learning_rate * weight_decay * p
        new_params[name] = decayed - learning_rate * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
        m_new[name], v_new[name] = m, v
    return new_params, AdamWState(t, m_new, v_new)


# -- training loop ---------------------------------------------------------

HISTORY_FIELDS = ("epoch", "train_loss", "val_loss", "val_ade", "val_isr", "val_acc")


@dataclass
class TrainResult:
    params: Params
    history: list[dict]
    best_epoch: int
    train_idx: np.ndarray
    val_idx: np.ndarray


def split_indices(examples: Sequence[Example], cfg: TrainConfig) -> tuple[np.ndarray, np.ndarray]:
    """Seeded train/val split over windows or over source sequences."""
    n = len(examples)
    rng = np.random.default_rng([cfg.seed, 1])
    if n < 2:
        return np.arange(n), np.arange(0)
    target = min(max(int(round(cfg.val_fraction * n)), 1), n - 1)
    if cfg.split_by == "window":
        perm = rng.permutation(n)
        return np.sort(perm[target:]), np.sort(perm[:target])
    ids = sorted({e.source_id for e in examples})
    order = [ids[i] for i in rng.permutation(len(ids))]
    val_ids: set[str] = set()
    count = 0
    counts: dict[str, int] = {}
    for e in examples:
        counts[e.source_id] = counts.get(e.source_id, 0) + 1
    for sid in order[:-1]:
        if count >= target:
            break
        val_ids.add(sid)
        count += counts[sid]
    is_val = np.array([e.source_id in val_ids for e in examples])
    return np.flatnonzero(~is_val), np.flatnonzero(is_val)


def evaluate_batch(batch: Batch, params: Params, cfg: ModelConfig, weights: LossWeights,
                   multitask: bool, interceptor: InterceptorSpec, scale: ScaleModel,
                   chunk: int = 512) -> dict[str, float]:
    """Loss, ADE, final-position ISR and drone accuracy over a batch."""
    losses, ade, feas, correct = [], [], [], []
    for s in range(0, len(batch), chunk):
        sub = batch.subset(slice(s, s + chunk))
        out, _ = forward_batch(sub.tokens, params, cfg)
        losses.append(_combine(batch_losses(out, sub), weights, multitask))
        pred = sub.anchors[:, None, :] + out["traj"]
        ade.append(np.linalg.norm(pred - sub.futures, axis=-1).mean(axis=1))
        feas.append(feasible_mask(interceptor, scale, pred[:, -1], sub.anchors, cfg.horizon))
        correct.append((out["drone"] > 0.5) == (sub.is_drone > 0.5))
    return dict(
        loss=float(np.concatenate(losses).mean()),
        ade=float(np.concatenate(ade).mean()),
        isr=float(np.concatenate(feas).mean()),
        acc=float(np.concatenate(correct).mean()),
    )


def train(
    examples: Sequence[Example],
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    weights: LossWeights = LossWeights(),
    interceptor: InterceptorSpec = InterceptorSpec(),
    scale: ScaleModel = ScaleModel(),
    params: Params | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Seeded minibatch AdamW training; keeps the parameters with the best val loss."""
    if len(examples) == 0:
        raise EmptyDataset("training needs at least one example")
    train_idx, val_idx = split_indices(examples, train_cfg)
    data = stack_examples(examples)
    tr = data.subset(train_idx)
    va = data.subset(val_idx) if len(val_idx) else None
    if params is None:
        params = fit_input_stats(init_params(model_cfg, train_cfg.seed), tr.tokens, model_cfg)
    best = params
    best_loss = math.inf
    best_epoch = 0
    state = AdamWState()
    rng = np.random.default_rng([train_cfg.seed, 2])
    history = []
    for epoch in range(1, train_cfg.epochs + 1):
        order = rng.permutation(len(tr))
        total = 0.0
        for s in range(0, len(order), train_cfg.batch_size):
            mb = tr.subset(order[s:s + train_cfg.batch_size])
            loss, grads = backward(mb, params, model_cfg, weights, train_cfg.multitask)
            grads = clip_gradients(grads, train_cfg.clip_norm)
            params, state = adamw_step(params, grads, state, train_cfg.learning_rate, train_cfg.weight_decay)
            total += loss * len(mb)
        row = {"epoch": epoch, "train_loss": total / len(tr)}
        if va is not None:
            m = evaluate_batch(va, params, model_cfg, weights, train_cfg.multitask, interceptor, scale)
            row.update(val_loss=m["loss"], val_ade=m["ade"], val_isr=m["isr"], val_acc=m["acc"])
            score = m["loss"]
        else:
            row.update(val_loss=math.nan, val_ade=math.nan, val_isr=math.nan, val_acc=math.nan)
            score = row["train_loss"]
        history.append(row)
        logger.info("epoch %d train %.4f val %.4f", epoch, row["train_loss"], row["val_loss"])
        if on_epoch is not None:
            on_epoch(row)
        if score < best_loss:
            best_loss, best, best_epoch = score, params, epoch
    return TrainResult(params=best, history=history, best_epoch=best_epoch,
                       train_idx=train_idx, val_idx=val_idx)


def history_csv(history: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HISTORY_FIELDS)
    for row in history:
        w.writerow([row["epoch"]] + [repr(float(row[k])) for k in HISTORY_FIELDS[1:]])
    return buf.getvalue()
