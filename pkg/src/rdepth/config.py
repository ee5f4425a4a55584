"""Flat key=value run configuration with section prefixes.

Layering: built-in defaults < config file < command-line flags.  Unknown
keys are rejected.  Every command writes its fully resolved configuration
next to its outputs so any run can be reproduced from the dump.
"""

from __future__ import annotations

from .errors import ConfigError
from .losses import LossWeights
from .model import DENSE_SLAM, KINDS, ModelConfig
from .training import TrainConfig

DEFAULTS = {
    "model.height": "32",
    "model.width": "48",
    "model.encoder_depth": "4",
    "model.base_channels": "16",
    "model.channel_cap": "128",
    "model.window": "10",
    "model.disp_min": "0.05",
    "model.disp_max": "1.0",
    "loss.w_depth": "500",
    "loss.w_grad": "1000",
    "loss.w_rot": "500",
    "loss.w_trans": "100",
    "train.kind": DENSE_SLAM,
    "train.lr": "0.0002",
    "train.beta1": "0.9",
    "train.beta2": "0.999",
    "train.eps": "1e-08",
    "train.decay": "0.9",
    "train.decay_interval": "10000",
    "train.max_steps": "3000",
    "train.window_stride": "0",
    "train.seed": "0",
    "train.checkpoint_interval": "500",
    "train.clip_norm": "10",
    "data.path": "",
    "data.scenes": "20",
    "data.frames": "15",
    "data.difficulty": "easy",
    "data.motion_scale": "2.5",
    "data.eval_cap": "0",
}

_INT_KEYS = {
    "model.height", "model.width", "model.encoder_depth", "model.base_channels",
    "model.channel_cap", "model.window", "train.decay_interval", "train.max_steps",
    "train.window_stride", "train.seed", "train.checkpoint_interval",
    "data.scenes", "data.frames",
}
_FLOAT_KEYS = {
    "model.disp_min", "model.disp_max", "loss.w_depth", "loss.w_grad", "loss.w_rot",
    "loss.w_trans", "train.lr", "train.beta1", "train.beta2", "train.eps",
    "train.decay", "train.clip_norm", "data.motion_scale", "data.eval_cap",
}


def parse_config_text(text: str, origin: str = "<config>") -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{origin}:{lineno}: expected key=value, got {line!r}")
        values[key.strip()] = value.strip()
    return values


def read_config_file(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), origin=str(path))


def resolve(file_values: dict | None = None, flag_values: dict | None = None) -> dict:
    resolved = dict(DEFAULTS)
    for layer in (file_values or {}, flag_values or {}):
        for key, value in layer.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key: {key}")
            resolved[key] = str(value)
    _typecheck(resolved)
    return resolved


def _typecheck(values: dict) -> None:
    for key in _INT_KEYS:
        try:
            int(values[key])
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {values[key]!r}") from None
    for key in _FLOAT_KEYS:
        try:
            float(values[key])
        except ValueError:
            raise ConfigError(f"{key} must be a number, got {values[key]!r}") from None
    if values["train.kind"] not in KINDS:
        raise ConfigError(f"train.kind must be one of {KINDS}")
    if values["data.difficulty"] not in ("easy", "textured", "cluttered"):
        raise ConfigError("data.difficulty must be easy, textured or cluttered")


def dump(values: dict) -> str:
    return "".join(f"{k}={values[k]}\n" for k in sorted(values))


def to_train_config(values: dict) -> TrainConfig:
    model = ModelConfig(
        height=int(values["model.height"]), width=int(values["model.width"]),
        encoder_depth=int(values["model.encoder_depth"]),
        base_channels=int(values["model.base_channels"]),
        channel_cap=int(values["model.channel_cap"]),
        window=int(values["model.window"]),
        disp_min=float(values["model.disp_min"]),
        disp_max=float(values["model.disp_max"]),
    )
    weights = LossWeights(
        w_depth=float(values["loss.w_depth"]), w_grad=float(values["loss.w_grad"]),
        w_rot=float(values["loss.w_rot"]), w_trans=float(values["loss.w_trans"]))
    return TrainConfig(
        model=model, kind=values["train.kind"], weights=weights,
        lr=float(values["train.lr"]), beta1=float(values["train.beta1"]),
        beta2=float(values["train.beta2"]), eps=float(values["train.eps"]),
        decay=float(values["train.decay"]),
        decay_interval=int(values["train.decay_interval"]),
        max_steps=int(values["train.max_steps"]),
        window_stride=int(values["train.window_stride"]),
        seed=int(values["train.seed"]),
        checkpoint_interval=int(values["train.checkpoint_interval"]),
        clip_norm=float(values["train.clip_norm"]),
    ).validate()
