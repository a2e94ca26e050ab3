"""Run configuration files.

Configs are flat TOML documents; unknown keys are rejected so that a typo
in ``nu_list`` or ``alpha`` cannot silently fall back to a default. A bare
name such as ``smoke`` resolves to a config bundled with the package, and
a ``manifest.json`` written by a previous run can be fed back in.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from importlib import resources

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .dist import check_seed
from .montecarlo import SimConfig


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


BUNDLED = ("paper_tables", "smoke", "rate", "bounds", "bounds_tiny")


def bundled_path(name):
    return resources.files("qqvar").joinpath("configs", f"{name}.toml")


def read_mapping(path):
    """Parse a config file (TOML, or a run manifest) into a flat dict."""
    if not os.path.exists(path) and path in BUNDLED:
        text = bundled_path(path).read_text(encoding="utf-8")
        source = f"<bundled {path}>"
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
        source = path
    try:
        if source.endswith(".json"):
            doc = json.loads(text)
            return dict(doc["config"]) if "config" in doc else doc
        return tomllib.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot parse {source}: {exc}") from exc


def load_sim_config(path, seed=None):
    data = read_mapping(path)
    if seed is not None:
        data["master_seed"] = seed
    try:
        return SimConfig.from_mapping(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


@dataclass
class BoundsConfig:
    p: int = 5
    rho: float = 0.5
    nu: float = 10.0
    alpha: float = 0.95
    w0: list = None
    radius: float = 0.05
    grid_size: int = 100
    calibration_seed: int = 1
    holdout_seed: int = 2
    which: str = "both"
    constant: float = None
    safety: float = 1.5
    fit_method: str = "envelope"
    n_mc: int = 0
    mc_seed: int = 3

    def __post_init__(self):
        if self.w0 is None:
            self.w0 = [1.0 / self.p] * self.p
        if len(self.w0) != self.p:
            raise ValueError(f"w0 has length {len(self.w0)}, expected p={self.p}")
        if self.which not in ("both", "t_model", "generic"):
            raise ValueError(f"which must be both, t_model or generic, got {self.which!r}")
        if self.fit_method not in ("envelope", "lsq"):
            raise ValueError(f"fit_method must be envelope or lsq, got {self.fit_method!r}")
        if self.constant is not None and not self.constant > 0:
            raise ValueError("constant must be positive")
        if not (0 < self.alpha < 1) or not self.radius > 0 or self.grid_size < 1:
            raise ValueError("alpha must lie in (0, 1), radius > 0, grid_size >= 1")
        for name in ("calibration_seed", "holdout_seed", "mc_seed"):
            setattr(self, name, check_seed(getattr(self, name)))

    @property
    def kinds(self):
        return ("t_model", "generic") if self.which == "both" else (self.which,)


def load_bounds_config(path, seed=None):
    data = read_mapping(path)
    known = set(BoundsConfig.__dataclass_fields__)
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown config keys: {', '.join(unknown)}")
    if seed is not None:
        data["mc_seed"] = seed
    try:
        return BoundsConfig(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
