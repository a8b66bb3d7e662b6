"""INI experiment configs: parsing, grids, and static validation."""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BYTES_PER_ENTRY = 16
MATRICES_IN_FLIGHT = 8
DEFAULT_BUDGET_GB = 4.0

MODELS = ("tfim", "xy_chain", "local_perturbation", "qubit")
_LINSPACE = re.compile(r"^linspace\(\s*([^,]+),\s*([^,]+),\s*(\d+)\s*\)$")
_RANGE = re.compile(r"^range\(\s*(-?\d+)\s*,\s*(-?\d+)\s*(?:,\s*(-?\d+)\s*)?\)$")


class ConfigError(ValueError):
    pass


def parse_grid(text: str) -> np.ndarray:
    """'linspace(a, b, n)', 'range(a, b[, step])' (end exclusive), or a comma list."""
    text = text.strip()
    if not text:
        return np.array([])
    m = _LINSPACE.match(text)
    if m:
        return np.linspace(float(m[1]), float(m[2]), int(m[3]))
    m = _RANGE.match(text)
    if m:
        return np.arange(int(m[1]), int(m[2]), int(m[3] or 1)).astype(float)
    try:
        return np.array([float(x) for x in text.split(",") if x.strip()])
    except ValueError as e:
        raise ConfigError(f"cannot parse grid {text!r}") from e


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    output: Path
    sections: dict
    source: Path | None = None
    checks: tuple[str, ...] = ()

    # typed section access
    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    def float(self, section: str, key: str, default=None):
        v = self.get(section, key)
        if v is None:
            return default
        if isinstance(v, str) and v.strip().lower() in ("", "auto", "none"):
            return None
        return float(v)

    def int(self, section: str, key: str, default=None):
        v = self.get(section, key)
        return default if v is None else int(v)

    def bool(self, section: str, key: str, default=False):
        v = self.get(section, key)
        if v is None:
            return default
        return str(v).strip().lower() in ("1", "true", "yes", "on")

    def grid(self, key: str, default: str | None = None) -> np.ndarray:
        v = self.get("grid", key, default)
        if v is None:
            raise ConfigError(f"missing grid '{key}'")
        return parse_grid(v)

    def tol(self, key: str, default: float) -> float:
        return self.float("tolerance", key, default)

    @property
    def model(self) -> dict:
        return dict(self.sections.get("model", {}))

    def echo(self) -> dict:
        return {"experiment": self.experiment, "seed": self.seed, "sections": self.sections}


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read(path)
    except configparser.Error as e:
        raise ConfigError(str(e)) from e
    return from_parser(cp, source=path)


def from_text(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(str(e)) from e
    return from_parser(cp)


def from_parser(cp: configparser.ConfigParser, source: Path | None = None) -> ExperimentConfig:
    if not cp.has_section("experiment"):
        raise ConfigError("missing [experiment] section")
    ex = cp["experiment"]
    name = ex.get("name", "").strip()
    if not name:
        raise ConfigError("[experiment] name is required")
    try:
        seed = int(ex.get("seed", "0"))
    except ValueError as e:
        raise ConfigError("seed must be an integer") from e
    out = Path(ex.get("output", f"results/{name}"))
    if source is not None and not out.is_absolute():
        out = (source.parent / out).resolve()
    checks = tuple(c.strip() for c in ex.get("checks", "").split(",") if c.strip())
    sections = {s: dict(cp[s]) for s in cp.sections()}
    return ExperimentConfig(name, seed, out, sections, source, checks)


def memory_estimate(L: int, local_dim: int = 2) -> int:
    """Bytes for one dense complex matrix on L sites."""
    return BYTES_PER_ENTRY * (local_dim ** L) ** 2


def _sizes(cfg: ExperimentConfig) -> list[int]:
    sizes = []
    if cfg.get("model", "l") is not None:
        sizes.append(int(cfg.get("model", "l")))
    if cfg.get("grid", "volumes") is not None:
        sizes += [int(v) for v in parse_grid(cfg.get("grid", "volumes"))]
    return sizes


def validate(cfg: ExperimentConfig) -> list[str]:
    """Static diagnostics; an empty list means the config is runnable."""
    from .experiments import EXPERIMENTS

    diags = []
    if cfg.experiment not in EXPERIMENTS:
        diags.append(f"unknown experiment '{cfg.experiment}'")
        return diags
    spec = EXPERIMENTS[cfg.experiment]
    unknown = [c for c in cfg.checks if c not in spec.checks]
    if unknown:
        diags.append(f"unknown checks {unknown} for {cfg.experiment}; known: {list(spec.checks)}")
    if spec.needs_model:
        name = cfg.get("model", "name")
        if name is None:
            diags.append("[model] name is required")
        elif name not in MODELS:
            diags.append(f"unknown model '{name}'")
        elif spec.models and name not in spec.models:
            diags.append(f"model '{name}' is not supported by {cfg.experiment}")
    for key in spec.grids:
        raw = cfg.get("grid", key)
        if raw is None:
            diags.append(f"missing grid '{key}'")
            continue
        try:
            g = parse_grid(raw)
        except ConfigError as e:
            diags.append(str(e))
            continue
        if g.size == 0:
            diags.append(f"grid '{key}' is empty")
        elif np.any(np.diff(g) <= 0):
            diags.append(f"grid '{key}' is not strictly ascending")
        elif not np.all(np.isfinite(g)):
            diags.append(f"grid '{key}' has non-finite entries")
    for key, val in cfg.sections.get("tolerance", {}).items():
        try:
            v = float(val)
        except ValueError:
            diags.append(f"tolerance '{key}' is not a number")
            continue
        if not v > 0:
            diags.append(f"tolerance '{key}' must be positive, got {v}")
    budget = float(cfg.get("run", "memory_budget_gb", DEFAULT_BUDGET_GB)) * 2 ** 30
    for L in _sizes(cfg):
        if L < 1:
            diags.append(f"system size {L} must be positive")
            continue
        need = MATRICES_IN_FLIGHT * memory_estimate(L)
        if need > budget:
            diags.append(f"L={L} needs about {need / 2 ** 30:.3g} GiB of dense matrices "
                         f"(budget {budget / 2 ** 30:.3g} GiB): refused")
    try:
        seed = int(cfg.seed)
        if seed < 0:
            diags.append("seed must be non-negative")
    except (TypeError, ValueError):
        diags.append("seed must be an integer")
    diags += spec.validate(cfg) if spec.validate else []
    return diags
