"""Experiment configuration: a TOML file mapped onto nested dataclasses.

Every leaf is addressable by a dotted key (``tasks.combined.epochs``); the
CLI exposes the same keys as flags.  Unknown keys are errors.
"""

from __future__ import annotations

import dataclasses
import hashlib
import sys
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from synswitch.data import SynthSpec
from synswitch.errors import ConfigError


def derive_seed(seed: int, tag: str) -> int:
    """Per-purpose seed: 63 bits of BLAKE2b over ``"<seed>/<tag>"``."""
    digest = hashlib.blake2b(f"{seed}/{tag}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


@dataclass
class SynthSection:
    """Generator parameters; the generator seed is derived from the global seed."""

    n_identities: int = 53
    n_emotions: int = 3
    samples_per_cell: int = 1
    region_rows: list[int] = field(default_factory=lambda: [12, 16])
    prototype_noise: float = 0.0
    sample_noise: float = 0.05
    template_amplitude: float = 0.2
    template_density: float = 0.25
    lookalike_fraction: float = 0.0
    lookalike_mix: float = 0.5
    block: int = 1

    def spec(self, seed: int) -> SynthSpec:
        kw = dataclasses.asdict(self)
        kw["region_rows"] = tuple(kw["region_rows"])
        return SynthSpec(seed=seed, **kw)


@dataclass
class DataSection:
    source: str = "synthetic"  # or "images"
    directory: str = ""
    synth: SynthSection = field(default_factory=SynthSection)


@dataclass
class TrainSection:
    learning_rate: float = 0.02
    epochs: int = 25
    weight_decay: float = 0.0


@dataclass
class TasksSection:
    hidden: int = 80
    half_range: float = 0.5
    tau: float = 0.03
    superposition: list[str] = field(default_factory=lambda: ["emotion=smiling", "identity=22"])
    combined: TrainSection = field(default_factory=lambda: TrainSection(epochs=32))
    subtask_a: TrainSection = field(default_factory=TrainSection)
    subtask_b: TrainSection = field(default_factory=TrainSection)


@dataclass
class GenSynthOverrides:
    """Generator settings that replace ``data.synth`` values for this experiment only."""

    prototype_noise: float = 0.0
    template_amplitude: float = 0.05
    lookalike_fraction: float = 0.3
    lookalike_mix: float = 0.85
    block: int = 1


@dataclass
class GenSection:
    hidden: int = 10
    half_range: float = 0.5
    train_per_identity: int = 2
    with_emotion: bool = False
    synth: GenSynthOverrides = field(default_factory=GenSynthOverrides)
    generalize: TrainSection = field(default_factory=lambda: TrainSection(0.02, 1000, 2e-3))
    memorize: TrainSection = field(default_factory=lambda: TrainSection(0.1, 2000, 0.0))
    low_activation: float = 0.2


@dataclass
class SweepSection:
    linear_steps: int = 11
    subset_steps: int = 20
    selection: str = "random"


@dataclass
class ExperimentConfig:
    seed: int = 0
    output_dir: str = "out"
    data: DataSection = field(default_factory=DataSection)
    tasks: TasksSection = field(default_factory=TasksSection)
    generalization: GenSection = field(default_factory=GenSection)
    sweep: SweepSection = field(default_factory=SweepSection)

    def validate(self) -> "ExperimentConfig":
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if self.data.source not in ("synthetic", "images"):
            raise ConfigError(f"data.source must be 'synthetic' or 'images', got {self.data.source!r}")
        if self.data.source == "images" and not self.data.directory:
            raise ConfigError("data.directory is required when data.source = 'images'")
        for name in ("tasks", "generalization"):
            sec = getattr(self, name)
            if sec.hidden < 1:
                raise ConfigError(f"{name}.hidden must be >= 1")
            if not sec.half_range > 0:
                raise ConfigError(f"{name}.half_range must be > 0")
        for key in ("tasks.combined", "tasks.subtask_a", "tasks.subtask_b",
                    "generalization.generalize", "generalization.memorize"):
            t = get_key(self, key)
            if t.learning_rate < 0 or t.epochs < 0 or t.weight_decay < 0:
                raise ConfigError(f"{key}: learning_rate, epochs and weight_decay must be >= 0")
        if not self.tasks.tau > 0:
            raise ConfigError("tasks.tau must be > 0")
        if self.generalization.train_per_identity < 1:
            raise ConfigError("generalization.train_per_identity must be >= 1")
        if self.sweep.linear_steps < 3 or self.sweep.subset_steps < 3:
            raise ConfigError("sweep steps must be >= 3")
        if self.sweep.selection not in ("random", "magnitude"):
            raise ConfigError("sweep.selection must be 'random' or 'magnitude'")
        for f in self.tasks.superposition:
            parse_filter(f)
        try:
            self.data.synth.spec(0)
            self.gen_synth().spec(0)
        except ValueError as exc:
            raise ConfigError(f"synthetic data: {exc}") from exc
        return self

    def gen_synth(self) -> SynthSection:
        return dataclasses.replace(self.data.synth, **dataclasses.asdict(self.generalization.synth))


def parse_filter(text: str) -> dict[str, int | str]:
    """``"emotion=smiling"``, ``"identity=22"`` or both joined with ``,``."""
    out: dict[str, int | str] = {}
    for part in text.split(","):
        key, sep, value = part.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or key not in ("identity", "emotion") or not value or key in out:
            raise ConfigError(f"bad filter {text!r}; expected identity=<n> and/or emotion=<name|n>")
        out[key] = int(value) if value.isdigit() else value
    if isinstance(out.get("identity"), str):
        raise ConfigError(f"bad filter {text!r}: identity must be an integer")
    return out


# -- dotted-key access ------------------------------------------------------------


def _hints(cls) -> dict[str, Any]:
    return typing.get_type_hints(cls)


def leaf_keys(cls=ExperimentConfig, prefix: str = "") -> dict[str, Any]:
    """Dotted key -> annotated type for every scalar or list leaf."""
    out = {}
    for f in dataclasses.fields(cls):
        t = _hints(cls)[f.name]
        key = prefix + f.name
        if dataclasses.is_dataclass(t):
            out.update(leaf_keys(t, key + "."))
        else:
            out[key] = t
    return out


def get_key(cfg, key: str):
    obj = cfg
    for part in key.split("."):
        obj = getattr(obj, part)
    return obj


def _coerce(value, t, key):
    origin = typing.get_origin(t)
    if origin is list:
        (inner,) = typing.get_args(t)
        if not isinstance(value, list):
            raise ConfigError(f"{key}: expected a list")
        return [_coerce(v, inner, key) for v in value]
    if t is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if t is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if t is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if t is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{key}: unsupported type {t}")


def set_key(cfg, key: str, value) -> None:
    types = leaf_keys(type(cfg))
    if key not in types:
        raise ConfigError(f"unknown config key {key!r}")
    *path, last = key.split(".")
    obj = cfg
    for part in path:
        obj = getattr(obj, part)
    setattr(obj, last, _coerce(value, types[key], key))


def _flatten(doc: dict, prefix: str = "") -> dict[str, Any]:
    out = {}
    for k, v in doc.items():
        if isinstance(v, dict):
            out.update(_flatten(v, f"{prefix}{k}."))
        else:
            out[prefix + k] = v
    return out


def parse_value(text: str):
    """A TOML literal (``3``, ``0.5``, ``true``, ``[1, 2]``, ``"x"``); bare words stay strings."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def load_config(path=None, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if path is not None:
        try:
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"{path}: unreadable ({exc})") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: invalid TOML ({exc})") from exc
        for key, value in _flatten(doc).items():
            set_key(cfg, key, value)
    for key, value in (overrides or {}).items():
        set_key(cfg, key, value)
    return cfg.validate()


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return repr(v)


def dump_config(cfg: ExperimentConfig) -> str:
    """Render as TOML that :func:`load_config` reads back to an equal config."""
    lines: list[str] = []

    def emit(obj, section):
        scalars = [f for f in dataclasses.fields(obj) if not dataclasses.is_dataclass(getattr(obj, f.name))]
        tables = [f for f in dataclasses.fields(obj) if dataclasses.is_dataclass(getattr(obj, f.name))]
        if section and scalars:
            lines.append(f"\n[{section}]")
        for f in scalars:
            lines.append(f"{f.name} = {_toml_value(getattr(obj, f.name))}")
        for f in tables:
            emit(getattr(obj, f.name), f"{section}.{f.name}" if section else f.name)

    emit(cfg, "")
    return "\n".join(lines).lstrip("\n") + "\n"


def write_default(path) -> None:
    Path(path).write_text(dump_config(ExperimentConfig()))
