"""Application configuration: one YAML file, per-key command-line overrides.

Example file::

    tokenizer: {window: 12, horizon: 20, step: 5}
    model: {d_model: 64, layers: 2}
    train: {epochs: 20, batch_size: 64, seed: 42}
    interceptor: {v_max: 15.0, a_max: 5.0}
    scale: {meters_per_pixel: 0.05, fps: 25.0}

Unknown sections or keys are rejected.  ``model.window``/``model.horizon``
default to the tokenizer's values and must agree with them.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError, P2PError
from .ingest import ExternalMapping, LabelerConfig
from .kinematics import InterceptorSpec, ScaleModel
from .synth import SynthSpec
from .tokenizer import TokenizerConfig
from .training import LossWeights, TrainConfig
from .transformer import ModelConfig


@dataclass(frozen=True)
class IngestConfig:
    max_gap: int = 5
    mapping: ExternalMapping = ExternalMapping()


@dataclass(frozen=True)
class EvalConfig:
    all_steps: bool = False
    threshold: float = 0.5
    split: str = "all"  # "all" examples in the data dir, or the training "val" split

    def __post_init__(self):
        if self.split not in ("all", "val"):
            raise ConfigError(f"eval.split must be 'all' or 'val', got {self.split!r}")


@dataclass(frozen=True)
class PathsConfig:
    data_dir: str | None = None
    checkpoint: str | None = None
    out: str | None = None


@dataclass(frozen=True)
class AppConfig:
    tokenizer: TokenizerConfig = TokenizerConfig()
    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()
    loss: LossWeights = LossWeights()
    interceptor: InterceptorSpec = InterceptorSpec()
    scale: ScaleModel = ScaleModel()
    synth: SynthSpec = SynthSpec()
    labeler: LabelerConfig = LabelerConfig()
    ingest: IngestConfig = IngestConfig()
    eval: EvalConfig = EvalConfig()
    paths: PathsConfig = PathsConfig()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _build(cls, raw: Any, where: str):
    if dataclasses.is_dataclass(raw):
        return raw
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(raw).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for name, value in raw.items():
        default = getattr(cls(), name) if name in fields else None
        if dataclasses.is_dataclass(default):
            value = _build(type(default), value, f"{where}.{name}")
        elif isinstance(default, tuple) and isinstance(value, list):
            value = tuple(value)
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except P2PError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _section_types():
    return {f.name: type(getattr(AppConfig(), f.name)) for f in dataclasses.fields(AppConfig)}


def config_from_dict(raw: dict | None) -> AppConfig:
    raw = dict(raw or {})
    types = _section_types()
    unknown = sorted(set(raw) - set(types))
    if unknown:
        raise ConfigError(f"unknown config section(s) {', '.join(unknown)}")
    tok = _build(TokenizerConfig, raw.get("tokenizer"), "tokenizer")
    model_raw = dict(raw.get("model") or {})
    for k in ("window", "horizon"):
        if k in model_raw and model_raw[k] != getattr(tok, k):
            raise ConfigError(f"model.{k}={model_raw[k]} disagrees with tokenizer.{k}={getattr(tok, k)}")
        model_raw[k] = getattr(tok, k)
    sections = {"tokenizer": tok, "model": _build(ModelConfig, model_raw, "model")}
    for name, cls in types.items():
        if name not in sections:
            sections[name] = _build(cls, raw.get(name), name)
    return AppConfig(**sections)


def _set_path(raw: dict, dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = raw
    for k in keys[:-1]:
        nxt = node.get(k)
        if nxt is None:
            nxt = node[k] = {}
        if not isinstance(nxt, dict):
            raise ConfigError(f"cannot set {dotted}: {k} is not a section")
        node = nxt
    node[keys[-1]] = value


def parse_override(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like section.key=value")
    key, value = text.split("=", 1)
    return key.strip(), yaml.safe_load(value)


def load_config(path=None, overrides: list[str] | None = None, seed: int | None = None) -> AppConfig:
    raw: dict = {}
    if path is not None:
        path = Path(path)
        try:
            raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    for item in overrides or []:
        _set_path(raw, *parse_override(item))
    if seed is not None:
        _set_path(raw, "synth.seed", seed)
        _set_path(raw, "train.seed", seed)
    return config_from_dict(raw)


def dump_config(cfg: AppConfig) -> str:
    return yaml.safe_dump(json.loads(json.dumps(cfg.to_dict())), sort_keys=False)
