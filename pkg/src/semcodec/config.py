"""Flat dotted-key configuration with file plus command-line overrides.

A config is a plain dict from dotted key to value. Files are line-based
``key = value`` text with ``#`` comments; values are parsed as JSON where
possible and kept as bare strings otherwise, so ``train.ber_mode = fixed``
and ``train.lr_milestones = [0.5, 0.8]`` both work. Unknown keys are
rejected by name, never silently dropped.
"""

from __future__ import annotations

import json

from .training import TrainConfig, LossWeights


class ConfigError(ValueError):
    """Raised for unknown keys, bad values, or malformed config lines."""


# key -> (default, kind); kind drives validation in _coerce
_SPECS = {
    "data.kind": ("synthetic-shapes", "str"),
    "data.n_samples": (512, "int"),
    "data.seed": (42, "int"),
    "data.val_fraction": (0.25, "float"),
    "data.n_classes": (4, "int"),
    "task.epochs": (20, "int"),
    "task.lr": (0.1, "float"),
    "task.batch_size": (32, "int"),
    "task.seed": (0, "int"),
    "codec.channels": (4, "int"),
    "codec.centers": (8, "int"),
    "codec.blocks": (3, "int"),
    "codec.gate_hidden": (8, "int"),
    "codec.seed": (100, "int"),
    "codec.use_log_ber": (True, "bool"),
    "train.stage1_epochs": (10, "int"),
    "train.stage2_epochs": (30, "int"),
    "train.batch_size": (32, "int"),
    "train.lr": (0.005, "float"),
    "train.lr_factor": (0.2, "float"),
    "train.lr_milestones": ([0.5, 0.8], "floatlist"),
    "train.ber_mode": ("uniform_range", "str"),
    "train.ber": (0.0, "float"),
    "train.ber_lo": (1e-4, "float"),
    "train.ber_hi": (0.05, "float"),
    "train.per_sample_ber": (True, "bool"),
    "train.seed": (0, "int"),
    "train.sigma_start": (1.0, "float"),
    "train.sigma_end": (300.0, "float"),
    "train.one_stage": (False, "bool"),
    "train.fixed_gate": (False, "bool"),
    "train.slice_ratio": (None, "float_or_null"),
    "train.recovery": ("reflection", "str"),
    "train.side_info": ("true", "str"),
    "train.attribution": ("grad_x_input", "str"),
    "loss.alpha": (2.0, "float"),
    "loss.beta": (1.0, "float"),
    "loss.gamma": (1.0, "float"),
    "loss.lam": (0.5, "float"),
    "loss.r": (1.0, "float"),
    "eval.ber_grid": ([1e-4, 2.5e-3, 0.025, 0.05], "floatlist"),
    "eval.reps": (6, "int"),
    "eval.seed": (0, "int"),
}


def default_config():
    """Fresh dict of every known key at its default."""
    return {k: (list(v[0]) if isinstance(v[0], list) else v[0]) for k, v in _SPECS.items()}


def _coerce(key, value):
    kind = _SPECS[key][1]
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"config key {key!r} wants an integer, got {value!r}")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key {key!r} wants a number, got {value!r}")
        return float(value)
    if kind == "bool":
        if isinstance(value, bool):
            return value
        if value in ("true", "false"):
            return value == "true"
        raise ConfigError(f"config key {key!r} wants true/false, got {value!r}")
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"config key {key!r} wants a string, got {value!r}")
        return value
    if kind == "floatlist":
        if not isinstance(value, list) or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in value
        ):
            raise ConfigError(f"config key {key!r} wants a list of numbers, got {value!r}")
        return [float(x) for x in value]
    if kind == "float_or_null":
        if value is None or value == "null":
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key {key!r} wants a number or null, got {value!r}")
        return float(value)
    raise AssertionError(f"unhandled kind {kind}")


def set_key(cfg, key, value):
    """Set one key with validation; unknown keys are an error."""
    if key not in _SPECS:
        raise ConfigError(f"unknown config key: {key!r}")
    cfg[key] = _coerce(key, value)
    return cfg


def parse_value(text):
    """JSON if it parses, bare string otherwise."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text.strip()


def apply_sets(cfg, pairs):
    """Apply ``key=value`` override strings in order."""
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        key, _, raw = pair.partition("=")
        set_key(cfg, key.strip(), parse_value(raw))
    return cfg


def load_config_file(path, cfg=None):
    """Read ``key = value`` lines into cfg (defaults unless given)."""
    if cfg is None:
        cfg = default_config()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ConfigError(f"{path}:{lineno}: expected key = value, got {body!r}")
            key, _, raw = body.partition("=")
            set_key(cfg, key.strip(), parse_value(raw))
    return cfg


def resolve_config(config_path=None, sets=(), seed=None):
    """Defaults, then file, then --set overrides, then an explicit seed."""
    cfg = default_config()
    if config_path is not None:
        load_config_file(config_path, cfg)
    apply_sets(cfg, list(sets))
    if seed is not None:
        cfg["train.seed"] = int(seed)
    return cfg


def format_config(cfg):
    """Deterministic text form, one sorted ``key = value`` line each."""
    lines = []
    for key in sorted(cfg):
        if key not in _SPECS:
            raise ConfigError(f"unknown config key: {key!r}")
        lines.append(f"{key} = {json.dumps(cfg[key])}")
    return "\n".join(lines) + "\n"


def train_config_from(cfg):
    """Build the training dataclass from a resolved config dict."""
    return TrainConfig(
        stage1_epochs=cfg["train.stage1_epochs"],
        stage2_epochs=cfg["train.stage2_epochs"],
        batch_size=cfg["train.batch_size"],
        lr_codec=cfg["train.lr"],
        lr_factor=cfg["train.lr_factor"],
        lr_milestones=tuple(cfg["train.lr_milestones"]),
        ber_mode=cfg["train.ber_mode"],
        ber=cfg["train.ber"],
        ber_range=(cfg["train.ber_lo"], cfg["train.ber_hi"]),
        per_sample_ber=cfg["train.per_sample_ber"],
        seed=cfg["train.seed"],
        sigma_start=cfg["train.sigma_start"],
        sigma_end=cfg["train.sigma_end"],
        one_stage=cfg["train.one_stage"],
        fixed_gate=cfg["train.fixed_gate"],
        slice_ratio=cfg["train.slice_ratio"],
        recovery_mode=cfg["train.recovery"],
        side_info=cfg["train.side_info"],
        attribution=cfg["train.attribution"],
    )


def loss_weights_from(cfg):
    return LossWeights(
        loss_weight_alpha=cfg["loss.alpha"],
        beta=cfg["loss.beta"],
        gamma=cfg["loss.gamma"],
        lam=cfg["loss.lam"],
        r=cfg["loss.r"],
    )
