import json
import os
from dataclasses import dataclass, field, fields
from typing import Any, Dict, Optional, Tuple

from errors import ConfigError
from model import ModelConfig, config_from_dict, config_hash
from logger import get_logger

logger = get_logger(__name__)

DEFAULT_SETTINGS = os.path.join(os.path.dirname(os.path.abspath(__file__)), "conf.json")


@dataclass
class PdeSettings:
    nodes: int = 400
    dt: float = 0.01
    tol: float = 1e-6
    rel_tol: float = 1e-3
    max_levels: int = 8
    min_dt: float = 1e-8
    radii: Tuple[float, ...] = (2.0, 4.0, 8.0, 16.0)
    eps_ladder: Tuple[float, ...] = (0.2, 0.1, 0.05, 0.025)
    probe_r: float = 0.0
    probe_t: float = 1.0


@dataclass
class ParticleSettings:
    n: int = 200
    replicas: int = 400
    rate_dt: float = 0.05
    hard_cap: int = 1_000_000
    escape_radius: float = 1e6
    chunk: int = 50


@dataclass
class RunSettings:
    seed: int = 0
    threads: int = 4
    out: str = "./output"


@dataclass
class Settings:
    model: ModelConfig = field(default_factory=ModelConfig)
    pde: PdeSettings = field(default_factory=PdeSettings)
    particles: ParticleSettings = field(default_factory=ParticleSettings)
    run: RunSettings = field(default_factory=RunSettings)

    @property
    def config_hash(self) -> str:
        return config_hash(self.model)


def _section(cls, values: Optional[Dict[str, Any]]):
    values = dict(values or {})
    known = {f.name: f for f in fields(cls)}
    unknown = set(values) - set(known)
    if unknown:
        raise ConfigError(f"unknown keys in [{cls.__name__}]: {sorted(unknown)}")
    for name, value in values.items():
        if isinstance(value, list):
            values[name] = tuple(value)
    return cls(**values)


def parse_settings(data: Dict[str, Any]) -> Settings:
    """
    :param data: dict with optional sections model, pde, particles, run
    :return: Settings with defaults filled in
    """
    unknown = set(data) - {"model", "pde", "particles", "run"}
    if unknown:
        raise ConfigError(f"unknown settings sections: {sorted(unknown)}")
    try:
        settings = Settings(
            model=config_from_dict(data.get("model", {})),
            pde=_section(PdeSettings, data.get("pde")),
            particles=_section(ParticleSettings, data.get("particles")),
            run=_section(RunSettings, data.get("run")),
        )
    except (KeyError, TypeError, ValueError) as error:
        raise ConfigError(f"malformed settings: {error}") from error

    threads = os.environ.get("SUPCRIT_THREADS")
    if threads:
        settings.run.threads = int(threads)
    return settings


def load_settings(path: Optional[str] = None) -> Settings:
    path = path or DEFAULT_SETTINGS
    with open(path, "r") as f:
        data = json.load(f)
    logger.info(f"Loaded settings from {path}")
    return parse_settings(data)


def apply_overrides(model: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """
    applies dotted-key overrides ("motion.m": 3) to a model section dict.
    """
    merged = json.loads(json.dumps(model))
    for key, value in (overrides or {}).items():
        target = merged
        parts = key.split(".")
        for part in parts[:-1]:
            node = target.get(part)
            if not isinstance(node, dict):
                node = {}
                target[part] = node
            target = node
        target[parts[-1]] = value
    return merged
