"""Flat key=value run configuration.

Keys are section-prefixed (`model.blocks=9`), one per line; `#` starts a
comment. Unknown keys are hard errors so typos cannot silently fall back
to defaults. `CROSSMLP_SEED`, when set in the environment, overrides the
configured seed at load time.

Integer fields that conceptually mean "pick automatically" use 0 as the
sentinel (token_dim, bridge_channels).
"""

import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigurationError

SEED_ENV_VAR = "CROSSMLP_SEED"

INIT_CHOICES = ("gaussian", "gaussian-wide", "xavier")
LOSS_VARIANTS = ("refined", "baseline")


@dataclass
class RunSection:
    seed: int = 0
    out_dir: str = "runs/default"
    epochs: int = 35
    batch_size: int = 4
    checkpoint_every: int = 100
    init: str = "gaussian"


@dataclass
class DataSection:
    manifest: str = "data/manifest.tsv"
    image_size: int = 64
    classes: int = 4
    augment: bool = False


@dataclass
class ModelSection:
    blocks: int = 9
    n_down: int = 2
    base_channels: int = 32
    patch_size: int = 4
    mixer_layers: int = 7
    token_dim: int = 0
    bridge_channels: int = 0
    n_candidates: int = 4
    selection_width: int = 32
    unet_width: int = 16
    disc_channels: int = 64


@dataclass
class LossSection:
    variant: str = "refined"
    lambda_image: float = 0.5
    lambda_semantic: float = 0.5
    lambda_tv: float = 1.0


@dataclass
class OptimSection:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    loss: LossSection = field(default_factory=LossSection)
    optim: OptimSection = field(default_factory=OptimSection)


def _convert(raw: str, target_type: type, key: str):
    raw = raw.strip()
    if target_type is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigurationError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return target_type(raw)
    except ValueError:
        raise ConfigurationError(
            f"{key}: expected {target_type.__name__}, got {raw!r}"
        ) from None


def _validate(cfg: RunConfig) -> RunConfig:
    if cfg.run.init not in INIT_CHOICES:
        raise ConfigurationError(
            f"run.init must be one of {INIT_CHOICES}, got {cfg.run.init!r}"
        )
    if cfg.loss.variant not in LOSS_VARIANTS:
        raise ConfigurationError(
            f"loss.variant must be one of {LOSS_VARIANTS}, got {cfg.loss.variant!r}"
        )
    if cfg.run.epochs < 0:
        raise ConfigurationError(f"run.epochs must be >= 0, got {cfg.run.epochs}")
    for key, value in (("run.batch_size", cfg.run.batch_size),
                       ("data.image_size", cfg.data.image_size),
                       ("data.classes", cfg.data.classes),
                       ("model.blocks", cfg.model.blocks)):
        if value < 1:
            raise ConfigurationError(f"{key} must be >= 1, got {value}")
    return cfg


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    sections = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected key=value, got {raw_line!r}")
        key, raw_value = line.split("=", 1)
        key = key.strip()
        if key.count(".") != 1:
            raise ConfigurationError(f"line {lineno}: key must be section.field, got {key!r}")
        section_name, field_name = key.split(".")
        section = sections.get(section_name)
        if section is None:
            raise ConfigurationError(f"line {lineno}: unknown section {section_name!r}")
        section_fields = {f.name: f for f in fields(section)}
        if field_name not in section_fields:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        target_type = type(getattr(section, field_name))
        setattr(section, field_name, _convert(raw_value, target_type, key))
    return _validate(cfg)


def serialize_config(cfg: RunConfig) -> str:
    lines = []
    for section_field in fields(cfg):
        section = getattr(cfg, section_field.name)
        for f in fields(section):
            value = getattr(section, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{section_field.name}.{f.name}={value}")
    return "\n".join(lines) + "\n"


def load_config(path) -> RunConfig:
    """Parse a config file and apply the seed environment override."""
    cfg = parse_config(Path(path).read_text())
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            cfg.run.seed = int(env_seed)
        except ValueError:
            raise ConfigurationError(
                f"{SEED_ENV_VAR} must be an integer, got {env_seed!r}"
            ) from None
    return cfg


def config_dict(cfg: RunConfig) -> dict:
    """Nested plain-dict view (checkpoint metadata, logging)."""
    return asdict(cfg)


def config_from_dict(tree: dict) -> RunConfig:
    cfg = RunConfig()
    for section_field in fields(cfg):
        section = getattr(cfg, section_field.name)
        payload = tree.get(section_field.name, {})
        for f in fields(section):
            if f.name in payload:
                setattr(section, f.name, payload[f.name])
    return _validate(cfg)
