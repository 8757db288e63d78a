"""Run configuration: nested dataclasses parsed strictly from JSON.

Every field must be present in the file, so a config on disk is a complete
record of the run. ``default_config()`` produces a full template.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, ContractError
from .mine import ProbeConfig
from .rl import RLCoefficients
from .svgd import SVGDConfig

VARIANTS = ("vanilla_a2c", "a2c_noise", "svib_uniform", "svib_gaussian")


@dataclass
class EnvConfig:
    name: str = "gridworld"
    horizon: int = 50
    d_pad: int = 103
    noise_scale: float = 1.0
    mix: bool = False


@dataclass
class ModelConfig:
    d_z: int = 8
    noise_dim: int = 8
    noise_var: float = 0.1
    encoder_hidden: list = field(default_factory=lambda: [64, 64])
    head_hidden: list = field(default_factory=lambda: [64, 64])


@dataclass
class OptimConfig:
    optimizer: str = "rmsprop"
    lr: float = 7e-4
    total_updates: int = 1500
    num_envs: int = 8
    rollout_length: int = 5
    checkpoint_every: int = 500
    return_window: int = 100
    probe_pool: int = 512


@dataclass
class RunConfig:
    variant: str = "svib_uniform"
    seed: int = 0
    env: EnvConfig = field(default_factory=EnvConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    svgd: SVGDConfig = field(default_factory=SVGDConfig)
    rl: RLCoefficients = field(default_factory=RLCoefficients)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError("variant", f"must be one of {VARIANTS}, got {self.variant!r}")

    @property
    def is_svib(self):
        return self.variant.startswith("svib")

    @property
    def stochastic_encoder(self):
        return self.variant != "vanilla_a2c"

    def to_dict(self):
        return dataclasses.asdict(self)

    def config_hash(self):
        """Hash of everything except the seed (runs of one config share it)."""
        d = self.to_dict()
        d.pop("seed")
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


SECTIONS = {
    "env": EnvConfig,
    "model": ModelConfig,
    "svgd": SVGDConfig,
    "rl": RLCoefficients,
    "probe": ProbeConfig,
    "optim": OptimConfig,
}


def default_config():
    return RunConfig().to_dict()


def _check_type(path, value, default):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, list):
        ok = isinstance(value, list) and all(isinstance(v, int) and v > 0 for v in value)
    else:
        ok = True
    if not ok:
        raise ConfigError(path, f"expected {type(default).__name__}, got {value!r}")
    return value


def _build(cls, data, prefix):
    if not isinstance(data, dict):
        raise ConfigError(prefix, "expected an object")
    template = cls()
    names = [f.name for f in dataclasses.fields(cls)]
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"{prefix}.{unknown[0]}", "unknown field")
    kwargs = {}
    for name in names:
        path = f"{prefix}.{name}"
        if name not in data:
            raise ConfigError(path, "missing field")
        kwargs[name] = _check_type(path, data[name], getattr(template, name))
    try:
        return cls(**kwargs)
    except ContractError as exc:
        raise ConfigError(prefix, str(exc)) from None


def from_dict(data):
    if not isinstance(data, dict):
        raise ConfigError("<root>", "expected an object")
    unknown = sorted(set(data) - {"variant", "seed", *SECTIONS})
    if unknown:
        raise ConfigError(unknown[0], "unknown field")
    for key in ("variant", "seed", *SECTIONS):
        if key not in data:
            raise ConfigError(key, "missing field")
    seed = data["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed", f"expected a non-negative int, got {seed!r}")
    sections = {name: _build(cls, data[name], name) for name, cls in SECTIONS.items()}
    return RunConfig(variant=data["variant"], seed=seed, **sections)


def apply_overrides(data, overrides):
    """Apply ``key.path=value`` strings; values are parsed as JSON when possible."""
    data = copy.deepcopy(data)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like key.path=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(node.get(part), dict):
                raise ConfigError(key, "no such section")
            node = node[part]
        node[parts[-1]] = value
    return data


def load_config(path, overrides=()):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(str(path), "config file not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON: {exc}") from None
    return from_dict(apply_overrides(data, overrides))
