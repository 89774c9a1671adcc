"""Causal transformer over motion tokens, written directly in numpy.

Layout (row-vector convention, ``y = x @ W``)::

    x  = (tokens - mu) / sd            # fixed standardization buffers
    h0 = x @ W_emb + PE
    for each layer:
        h = LayerNorm(h + CausalMHA(h))
        h = LayerNorm(h + FFN(h))
    z = h[-1]                         # last observed position
    drone    = sigmoid(z @ W_d)
    behavior = softmax(z @ W_b)
    intent   = sigmoid(z @ W_i)
    offsets  = traj_scale * (z @ W_t).reshape(H, 2)   # pixels, relative to the anchor

Everything runs batched on float64 arrays.  :func:`forward_batch` returns a
cache that :func:`backward_batch` consumes to produce exact gradients.

``input.mean`` and ``input.std`` are buffers, not trainable weights: they are
fitted once from training tokens (:func:`fit_input_stats`) and travel with
the checkpoint.  ``traj_scale`` is the number of pixels per unit of the
trajectory head, so the head works with O(1) numbers.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any

import numpy as np

from .errors import InvalidSpec, NonFinite, ShapeMismatch
from .tokenizer import ACCEL_DIMS, TOKEN_DIM
from .tracks import N_BEHAVIORS

LN_EPS = 1e-5

Params = dict[str, np.ndarray]

BUFFERS = ("input.mean", "input.std")


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 128
    layers: int = 4
    heads: int = 4
    window: int = 12
    horizon: int = 20
    ffn_mult: int = 4
    use_acceleration: bool = True
    traj_scale: int = 10

    def __post_init__(self):
        for name in ("d_model", "layers", "heads", "window", "horizon", "ffn_mult", "traj_scale"):
            if getattr(self, name) < 1:
                raise InvalidSpec(f"{name} must be positive")
        if self.d_model % self.heads:
            raise InvalidSpec(f"d_model={self.d_model} is not divisible by heads={self.heads}")

    @property
    def input_dims(self) -> tuple[int, ...]:
        if self.use_acceleration:
            return tuple(range(TOKEN_DIM))
        return tuple(i for i in range(TOKEN_DIM) if i not in ACCEL_DIMS)

    @property
    def head_dim(self) -> int:
        return self.d_model // self.heads

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class ForwardOutput:
    drone_prob: float
    behavior_probs: np.ndarray   # (5,)
    intent: float
    trajectory: np.ndarray       # (H, 2) offsets from the anchor
    hidden_states: np.ndarray    # (W, d_model)


def param_shapes(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Buffer and parameter names and shapes in canonical (checkpoint) order."""
    D, F, M = cfg.d_model, len(cfg.input_dims), cfg.ffn_mult * cfg.d_model
    shapes = [("input.mean", (F,)), ("input.std", (F,)), ("emb.w", (F, D))]
    for l in range(cfg.layers):
        p = f"layers.{l}."
        shapes += [
            (p + "attn.wq", (D, D)),
            (p + "attn.wk", (D, D)),
            (p + "attn.wv", (D, D)),
            (p + "attn.wo", (D, D)),
            (p + "ln1.g", (D,)),
            (p + "ln1.b", (D,)),
            (p + "ffn.w1", (D, M)),
            (p + "ffn.b1", (M,)),
            (p + "ffn.w2", (M, D)),
            (p + "ffn.b2", (D,)),
            (p + "ln2.g", (D,)),
            (p + "ln2.b", (D,)),
        ]
    shapes += [
        ("head.drone", (D, 1)),
        ("head.behavior", (D, N_BEHAVIORS)),
        ("head.intent", (D, 1)),
        ("head.traj", (D, 2 * cfg.horizon)),
    ]
    return shapes


def trainable_names(cfg: ModelConfig) -> list[str]:
    return [n for n, _ in param_shapes(cfg) if n not in BUFFERS]


def init_params(cfg: ModelConfig, seed: int = 0) -> Params:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases 0; norm gains 1.

    The standardization buffers start as the identity (mean 0, std 1).
    """
    rng = np.random.default_rng(seed)
    params: Params = {}
    for name, shape in param_shapes(cfg):
        if name.endswith(".g") or name == "input.std":
            params[name] = np.ones(shape)
        elif len(shape) == 1:
            params[name] = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(shape[0])
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def check_params(params: Params, cfg: ModelConfig) -> None:
    for name, shape in param_shapes(cfg):
        if name not in params:
            raise ShapeMismatch(f"missing parameter {name}")
        if params[name].shape != shape:
            raise ShapeMismatch(f"{name}: expected {shape}, got {params[name].shape}")
    extra = set(params) - {n for n, _ in param_shapes(cfg)}
    if extra:
        raise ShapeMismatch(f"unexpected parameters: {sorted(extra)}")


def fit_input_stats(params: Params, tokens: np.ndarray, cfg: ModelConfig) -> Params:
    """Copy of ``params`` with the buffers set to per-feature mean and std of ``tokens``.

    Features with (near) zero spread keep a std of 1.
    """
    x = np.asarray(tokens, dtype=np.float64)[..., list(cfg.input_dims)].reshape(-1, len(cfg.input_dims))
    if len(x) == 0:
        raise ShapeMismatch("cannot fit input statistics on zero tokens")
    sd = x.std(axis=0)
    out = dict(params)
    out["input.mean"] = x.mean(axis=0)
    out["input.std"] = np.where(sd > 1e-8, sd, 1.0)
    return out


def _standardize(tokens: np.ndarray, params: Params, cfg: ModelConfig) -> np.ndarray:
    return (tokens[..., list(cfg.input_dims)] - params["input.mean"]) / params["input.std"]


# -- building blocks -------------------------------------------------------

def sinusoidal_pe(t: int, d_model: int) -> np.ndarray:
    i = np.arange(d_model)
    angle = t / np.power(10000.0, (i - i % 2) / d_model)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def pe_table(n: int, d_model: int) -> np.ndarray:
    return np.stack([sinusoidal_pe(t, d_model) for t in range(n)]) if n else np.zeros((0, d_model))


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z, axis=-1):
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def _layer_norm(u, g, b):
    mu = u.mean(axis=-1, keepdims=True)
    var = u.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (u - mu) * inv
    return xhat * g + b, (xhat, inv)


def _layer_norm_backward(dy, g, cache):
    xhat, inv = cache
    dxhat = dy * g
    du = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    red = tuple(range(dy.ndim - 1))
    return du, (dy * xhat).sum(axis=red), dy.sum(axis=red)


def causal_mask(n: int) -> np.ndarray:
    """Boolean (n, n) matrix, True where the key is in the query's future."""
    return np.triu(np.ones((n, n), dtype=bool), k=1)


def _split_heads(x, heads):
    B, T, D = x.shape
    return x.reshape(B, T, heads, D // heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    B, nh, T, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, T, nh * dh)


def _block_forward(h, params, layer, cfg):
    p = f"layers.{layer}."
    nh, dh = cfg.heads, cfg.head_dim
    T = h.shape[1]
    q = _split_heads(h @ params[p + "attn.wq"], nh)
    k = _split_heads(h @ params[p + "attn.wk"], nh)
    v = _split_heads(h @ params[p + "attn.wv"], nh)
    scores = (q @ k.transpose(0, 1, 3, 2)) / np.sqrt(dh)
    scores = np.where(causal_mask(T), -np.inf, scores)
    attn = softmax(scores)
    ctx = _merge_heads(attn @ v)
    u1 = h + ctx @ params[p + "attn.wo"]
    h1, ln1 = _layer_norm(u1, params[p + "ln1.g"], params[p + "ln1.b"])
    z1 = h1 @ params[p + "ffn.w1"] + params[p + "ffn.b1"]
    r = np.maximum(z1, 0.0)
    u2 = h1 + r @ params[p + "ffn.w2"] + params[p + "ffn.b2"]
    h2, ln2 = _layer_norm(u2, params[p + "ln2.g"], params[p + "ln2.b"])
    cache = dict(h=h, q=q, k=k, v=v, attn=attn, ctx=ctx, h1=h1, ln1=ln1, z1=z1, r=r, ln2=ln2)
    return h2, cache


def _block_backward(dh2, params, layer, cfg, cache, grads):
    p = f"layers.{layer}."
    dh = cfg.head_dim
    du2, grads[p + "ln2.g"], grads[p + "ln2.b"] = _layer_norm_backward(dh2, params[p + "ln2.g"], cache["ln2"])
    h1, r, z1 = cache["h1"], cache["r"], cache["z1"]
    grads[p + "ffn.w2"] = _wgrad(r, du2)
    grads[p + "ffn.b2"] = du2.sum(axis=(0, 1))
    dz1 = (du2 @ params[p + "ffn.w2"].T) * (z1 > 0)
    grads[p + "ffn.w1"] = _wgrad(h1, dz1)
    grads[p + "ffn.b1"] = dz1.sum(axis=(0, 1))
    dh1 = du2 + dz1 @ params[p + "ffn.w1"].T
    du1, grads[p + "ln1.g"], grads[p + "ln1.b"] = _layer_norm_backward(dh1, params[p + "ln1.g"], cache["ln1"])
    h, q, k, v, attn, ctx = (cache[n] for n in ("h", "q", "k", "v", "attn", "ctx"))
    grads[p + "attn.wo"] = _wgrad(ctx, du1)
    dctx = _split_heads(du1 @ params[p + "attn.wo"].T, cfg.heads)
    dattn = dctx @ v.transpose(0, 1, 3, 2)
    dv = attn.transpose(0, 1, 3, 2) @ dctx
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True)) / np.sqrt(dh)
    dq = dscores @ k
    dk = dscores.transpose(0, 1, 3, 2) @ q
    dh_in = du1
    for name, d in (("wq", dq), ("wk", dk), ("wv", dv)):
        d = _merge_heads(d)
        grads[p + "attn." + name] = _wgrad(h, d)
        dh_in = dh_in + d @ params[p + "attn." + name].T
    return dh_in


def _wgrad(x, dy):
    """Gradient of ``x @ W`` w.r.t. W, summed over all leading axes."""
    return x.reshape(-1, x.shape[-1]).T @ dy.reshape(-1, dy.shape[-1])


# -- public api ------------------------------------------------------------

def _check_tokens(tokens: np.ndarray, cfg: ModelConfig, exact: bool) -> np.ndarray:
    tokens = np.asarray(tokens, dtype=np.float64)
    if tokens.ndim == 2:
        tokens = tokens[None]
    if tokens.ndim != 3 or tokens.shape[-1] != TOKEN_DIM:
        raise ShapeMismatch(f"expected (..., T, {TOKEN_DIM}) tokens, got {tokens.shape}")
    T = tokens.shape[1]
    if (exact and T != cfg.window) or not 1 <= T <= cfg.window:
        raise ShapeMismatch(f"expected {cfg.window} tokens, got {T}")
    if not np.all(np.isfinite(tokens)):
        raise NonFinite("tokens contain NaN or Inf")
    return tokens


def embed(tokens: np.ndarray, params: Params, cfg: ModelConfig) -> np.ndarray:
    """Linear token projection plus sinusoidal positions; (T, 8) -> (T, d_model)."""
    single = np.asarray(tokens).ndim == 2
    x = _standardize(_check_tokens(tokens, cfg, exact=False), params, cfg)
    out = x @ params["emb.w"] + pe_table(x.shape[1], cfg.d_model)
    return out[0] if single else out


def block_forward(h: np.ndarray, params: Params, layer: int, cfg: ModelConfig, return_attention: bool = False):
    """One post-norm block.  Accepts (T, D) or (B, T, D)."""
    h = np.asarray(h, dtype=np.float64)
    single = h.ndim == 2
    hb = h[None] if single else h
    if hb.ndim != 3 or hb.shape[-1] != cfg.d_model:
        raise ShapeMismatch(f"expected (..., T, {cfg.d_model}) hidden states, got {h.shape}")
    if not np.all(np.isfinite(hb)):
        raise NonFinite("hidden states contain NaN or Inf")
    out, cache = _block_forward(hb, params, layer, cfg)
    attn = cache["attn"]
    if single:
        out, attn = out[0], attn[0]
    return (out, attn) if return_attention else out


def hidden_states(tokens: np.ndarray, params: Params, cfg: ModelConfig) -> np.ndarray:
    """Final-layer representations for every position (prefixes allowed)."""
    tokens = np.asarray(tokens)
    single = tokens.ndim == 2
    h = embed(tokens[None] if single else tokens, params, cfg)
    for l in range(cfg.layers):
        h, _ = _block_forward(h, params, l, cfg)
    return h[0] if single else h


def forward_batch(tokens: np.ndarray, params: Params, cfg: ModelConfig):
    """Run a (B, W, 8) batch.  Returns ``(outputs, cache)``.

    ``outputs`` holds ``drone``, ``behavior``, ``intent`` probabilities,
    ``traj`` offsets of shape (B, H, 2) and ``hidden`` (B, W, D).
    """
    tokens = _check_tokens(tokens, cfg, exact=True)
    x = _standardize(tokens, params, cfg)
    h = x @ params["emb.w"] + pe_table(cfg.window, cfg.d_model)
    caches = []
    for l in range(cfg.layers):
        h, c = _block_forward(h, params, l, cfg)
        caches.append(c)
    z = h[:, -1, :]
    drone = sigmoid(z @ params["head.drone"])[:, 0]
    behavior = softmax(z @ params["head.behavior"])
    intent = sigmoid(z @ params["head.intent"])[:, 0]
    traj = cfg.traj_scale * (z @ params["head.traj"]).reshape(-1, cfg.horizon, 2)
    outputs = dict(drone=drone, behavior=behavior, intent=intent, traj=traj, hidden=h)
    if not all(np.all(np.isfinite(v)) for v in outputs.values()):
        raise NonFinite("forward pass produced NaN or Inf")
    cache = dict(x=x, blocks=caches, z=z)
    return outputs, cache


def forward(tokens: np.ndarray, params: Params, cfg: ModelConfig) -> ForwardOutput:
    out, _ = forward_batch(np.asarray(tokens)[None], params, cfg)
    return ForwardOutput(
        drone_prob=float(out["drone"][0]),
        behavior_probs=out["behavior"][0],
        intent=float(out["intent"][0]),
        trajectory=out["traj"][0],
        hidden_states=out["hidden"][0],
    )


def backward_batch(
    cache: dict,
    params: Params,
    cfg: ModelConfig,
    d_drone_logit: np.ndarray,
    d_behavior_logit: np.ndarray,
    d_intent_logit: np.ndarray,
    d_traj: np.ndarray,
) -> Params:
    """Back-propagate head-input gradients to every trainable parameter.

    Gradients are taken w.r.t. the pre-activation head outputs (logits for
    the three classification/regression heads, pixel offsets for the
    trajectory head), each already summed/averaged as the caller wants.
    Buffers get no gradient.
    """
    z = cache["z"]
    grads: Params = {}
    B = z.shape[0]
    d_traj = cfg.traj_scale * d_traj.reshape(B, -1)
    grads["head.drone"] = z.T @ d_drone_logit.reshape(B, 1)
    grads["head.behavior"] = z.T @ d_behavior_logit
    grads["head.intent"] = z.T @ d_intent_logit.reshape(B, 1)
    grads["head.traj"] = z.T @ d_traj
    dz = (d_drone_logit.reshape(B, 1) @ params["head.drone"].T
          + d_behavior_logit @ params["head.behavior"].T
          + d_intent_logit.reshape(B, 1) @ params["head.intent"].T
          + d_traj @ params["head.traj"].T)
    dh = np.zeros((B, cfg.window, cfg.d_model))
    dh[:, -1, :] = dz
    for l in reversed(range(cfg.layers)):
        dh = _block_backward(dh, params, l, cfg, cache["blocks"][l], grads)
    grads["emb.w"] = _wgrad(cache["x"], dh)
    return {name: grads[name] for name in trainable_names(cfg)}
