"""Run configuration: four sections (audio, model, train, eval) serialized as
flat sectioned key=value text. Every key has a default; unknown sections or
keys are rejected. The same text rides inside checkpoint blobs so a trained
model carries its effective configuration.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field

from .dsp import AudioConfig
from .errors import ConfigurationError
from .metrics import EvalConfig
from .model import ModelConfig
from .training import TrainConfig

SECTION_TYPES = {
    "audio": AudioConfig,
    "model": ModelConfig,
    "train": TrainConfig,
    "eval": EvalConfig,
}


@dataclass
class RunConfig:
    audio: AudioConfig = field(default_factory=AudioConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def section(self, name: str):
        if name not in SECTION_TYPES:
            raise ConfigurationError(f"unknown config section {name!r}")
        return getattr(self, name)


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def _parse_value(raw: str, default, key: str):
    raw = raw.strip()
    if raw.lower() == "none":
        if default is None:
            return None
        raise ConfigurationError(f"{key}: 'none' is not valid here")
    if default is None:
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigurationError(f"{key}: expected an integer or 'none', got {raw!r}") from exc
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigurationError(f"{key}: expected a boolean, got {raw!r}")
    try:
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigurationError(f"{key}: cannot parse {raw!r}") from exc
    return raw


def to_text(config: RunConfig) -> str:
    lines = []
    for name in SECTION_TYPES:
        section = getattr(config, name)
        lines.append(f"[{name}]")
        for f in dataclasses.fields(section):
            lines.append(f"{f.name} = {_format_value(getattr(section, f.name))}")
        lines.append("")
    return "\n".join(lines)


def from_text(text: str) -> RunConfig:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from exc
    config = RunConfig()
    for section_name in parser.sections():
        if section_name not in SECTION_TYPES:
            raise ConfigurationError(f"unknown config section [{section_name}]")
        section = getattr(config, section_name)
        known = {f.name: getattr(section, f.name) for f in dataclasses.fields(section)}
        updates = {}
        for key, raw in parser.items(section_name):
            if key not in known:
                raise ConfigurationError(f"unknown key {key!r} in section [{section_name}]")
            updates[key] = _parse_value(raw, known[key], f"{section_name}.{key}")
        config = dataclasses.replace(config, **{section_name: dataclasses.replace(section, **updates)})
    return config


def read_config(path) -> RunConfig:
    with open(path) as fh:
        return from_text(fh.read())


def apply_overrides(config: RunConfig, overrides) -> RunConfig:
    """Apply 'section.key=value' strings on top of a RunConfig."""
    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigurationError(f"override must look like section.key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        section_name, key = dotted.strip().split(".", 1)
        if section_name not in SECTION_TYPES:
            raise ConfigurationError(f"unknown config section {section_name!r}")
        section = getattr(config, section_name)
        names = {f.name for f in dataclasses.fields(section)}
        if key not in names:
            raise ConfigurationError(f"unknown key {key!r} in section [{section_name}]")
        value = _parse_value(raw, getattr(section, key), dotted)
        config = dataclasses.replace(
            config, **{section_name: dataclasses.replace(section, **{key: value})}
        )
    return config


def toy_preset(seed: int = 0) -> RunConfig:
    """Small-everything configuration sized for the bundled synthetic corpus:
    trains in minutes on a laptop CPU while leaving the method intact."""
    return RunConfig(
        audio=AudioConfig(),
        model=ModelConfig(
            num_speakers=2,
            codebook_size=64,
            content_dim=16,
            enc_channels=96,
            dec_channels=96,
            pext_channels=64,
            cls_channels=64,
            speaker_embed_dim=16,
        ),
        train=TrainConfig(
            steps=2000,
            batch_size=8,
            t_crop=64,
            tau_anneal_steps=1200,
            checkpoint_every=500,
            seed=seed,
        ),
    )


def full_scale_preset() -> RunConfig:
    """Reference-architecture configuration mirroring a corpus-scale run
    (1,000 samples per speaker order of magnitude). Not an acceptance target."""
    return RunConfig(
        train=TrainConfig(steps=312_500, batch_size=16, t_crop=128, tau_anneal_steps=5000)
    )
