"""Flat binary checkpoint format for model parameters.

Layout, all integers little-endian u32, all floats little-endian f64::

    b"P2PM"
    version                     (= 1)
    n_config, then n_config u32 ModelConfig fields in the order
        d_model, layers, heads, window, horizon, ffn_mult, use_acceleration, traj_scale
    n_tensors
    per tensor (buffers first), in ``param_shapes`` order:
        rank, dims[rank], prod(dims) f64 values (C order)

Names are not stored; the config fully determines names and order.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import CheckpointError, InvalidSpec
from .transformer import ModelConfig, Params, check_params, param_shapes

MAGIC = b"P2PM"
VERSION = 1
CONFIG_FIELDS = ("d_model", "layers", "heads", "window", "horizon", "ffn_mult", "use_acceleration", "traj_scale")


def to_bytes(params: Params, cfg: ModelConfig) -> bytes:
    check_params(params, cfg)
    parts = [MAGIC, struct.pack("<II", VERSION, len(CONFIG_FIELDS))]
    parts.append(struct.pack(f"<{len(CONFIG_FIELDS)}I", *(int(getattr(cfg, f)) for f in CONFIG_FIELDS)))
    shapes = param_shapes(cfg)
    parts.append(struct.pack("<I", len(shapes)))
    for name, shape in shapes:
        parts.append(struct.pack(f"<I{len(shape)}I", len(shape), *shape))
        parts.append(np.ascontiguousarray(params[name], dtype="<f8").tobytes())
    return b"".join(parts)


def from_bytes(data: bytes) -> tuple[Params, ModelConfig]:
    view = memoryview(data)
    pos = 0

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(view):
            raise CheckpointError("truncated checkpoint")
        out = struct.unpack_from(fmt, view, pos)
        pos += size
        return out

    if bytes(view[:4]) != MAGIC:
        raise CheckpointError("not a P2PM checkpoint (bad magic)")
    pos = 4
    version, n_cfg = take("<II")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if n_cfg != len(CONFIG_FIELDS):
        raise CheckpointError(f"expected {len(CONFIG_FIELDS)} config fields, found {n_cfg}")
    values = dict(zip(CONFIG_FIELDS, take(f"<{n_cfg}I")))
    values["use_acceleration"] = bool(values["use_acceleration"])
    try:
        cfg = ModelConfig(**values)
    except InvalidSpec as exc:
        raise CheckpointError(f"invalid model config in checkpoint: {exc}") from None
    (n_tensors,) = take("<I")
    shapes = param_shapes(cfg)
    if n_tensors != len(shapes):
        raise CheckpointError(f"expected {len(shapes)} tensors, found {n_tensors}")
    params: Params = {}
    for name, shape in shapes:
        (rank,) = take("<I")
        dims = take(f"<{rank}I")
        if tuple(dims) != shape:
            raise CheckpointError(f"{name}: expected shape {shape}, found {tuple(dims)}")
        count = int(np.prod(dims))
        if pos + 8 * count > len(view):
            raise CheckpointError("truncated checkpoint")
        params[name] = np.frombuffer(view, dtype="<f8", count=count, offset=pos).reshape(dims).astype(np.float64)
        pos += 8 * count
    if pos != len(view):
        raise CheckpointError(f"{len(view) - pos} trailing bytes after last tensor")
    return params, cfg


def atomic_write(path: str | os.PathLike, data: bytes | str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(path, params: Params, cfg: ModelConfig) -> None:
    atomic_write(path, to_bytes(params, cfg))


def load_checkpoint(path) -> tuple[Params, ModelConfig]:
    return from_bytes(Path(path).read_bytes())
