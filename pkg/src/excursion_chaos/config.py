"""Run configuration: strict YAML parsing into typed sections.

The grammar is documented in ``docs/config.md``. Every section and key is
optional, but unknown keys are rejected with the dotted key path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .errors import InvalidInputError
from .models import (
    constant_model,
    discrete_model,
    exp_power_model,
    spherical_exp_model,
    spherical_from_spectrum,
    spherical_geodesic_model,
)
from .moments import default_orders


class ConfigError(InvalidInputError):
    pass


@dataclass
class ModelSpec:
    family: str = "euclidean"
    d: int = 1
    kernel: str | None = None
    alpha: float | None = None
    scale: float = 5.0
    box: list | None = None
    spectrum: list | None = None
    matrix: list | None = None
    strict: bool = True


@dataclass
class AnalysisSpec:
    orders: object = "default"
    Q: int | None = None
    tol: float = 1e-10
    beta_window: list | None = None
    level: float = 0.0
    q_min: int = 64
    q_max: int = 8192
    p_max: int | None = None
    absolute: bool = False
    moments_file: str | None = None
    mehler_points: list = field(default_factory=lambda: [-3.0, -1.0, 0.0, 1.0, 3.0])
    mehler_correlations: list = field(default_factory=lambda: [-0.9, -0.5, 0.1, 0.5, 0.9])
    mehler_Q: int = 400


@dataclass
class SimulationSpec:
    resolution: int = 64
    replications: int = 2000
    seed: int = 0
    bootstrap: int = 1000
    se_method: str = "bootstrap"
    workers: int = 1
    Q: int = 400


@dataclass
class OutputSpec:
    path: str | None = None
    format: str = "json"
    timestamp: bool = True
    quiet: bool = False


@dataclass
class RunConfig:
    model: ModelSpec = field(default_factory=ModelSpec)
    analysis: AnalysisSpec = field(default_factory=AnalysisSpec)
    simulation: SimulationSpec = field(default_factory=SimulationSpec)
    output: OutputSpec = field(default_factory=OutputSpec)


_SECTIONS = {"model": ModelSpec, "analysis": AnalysisSpec, "simulation": SimulationSpec, "output": OutputSpec}


def _section(name: str, cls, raw) -> object:
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"section '{name}' must be a mapping")
    known = {f.name for f in fields(cls)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown config key '{name}.{key}'")
    return cls(**raw)


def parse_config(data) -> RunConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of sections")
    for key in data:
        if key not in _SECTIONS:
            raise ConfigError(f"unknown config key '{key}'")
    cfg = RunConfig(**{k: _section(k, cls, data.get(k)) for k, cls in _SECTIONS.items()})
    validate_config(cfg)
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    return parse_config(data)


def _int(name, value, lo=None, hi=None, optional=False):
    if value is None and optional:
        return
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if (lo is not None and value < lo) or (hi is not None and value > hi):
        raise ConfigError(f"{name} = {value} outside [{lo}, {hi}]")


def _real(name, value, lo=-math.inf, hi=math.inf, optional=False):
    if value is None and optional:
        return
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{name} must be a finite number, got {value!r}")
    if not lo <= value <= hi:
        raise ConfigError(f"{name} = {value} outside [{lo}, {hi}]")


def _bool(name, value):
    if not isinstance(value, bool):
        raise ConfigError(f"{name} must be true or false, got {value!r}")


def validate_config(cfg: RunConfig) -> None:
    m, a, s, o = cfg.model, cfg.analysis, cfg.simulation, cfg.output
    if m.family not in ("euclidean", "spherical", "discrete"):
        raise ConfigError(f"model.family must be euclidean, spherical or discrete, got {m.family!r}")
    _int("model.d", m.d, 0, 8)
    _real("model.alpha", m.alpha, 0, 2, optional=True)
    _real("model.scale", m.scale, 0)
    _bool("model.strict", m.strict)
    _int("analysis.Q", a.Q, 1, 1_000_000, optional=True)
    _real("analysis.tol", a.tol, 1e-15, 1e-2)
    _real("analysis.level", a.level, -40, 40)
    _int("analysis.q_min", a.q_min, 1)
    _int("analysis.q_max", a.q_max, a.q_min, 1_000_000)
    _int("analysis.p_max", a.p_max, 0, 64, optional=True)
    _bool("analysis.absolute", a.absolute)
    _int("analysis.mehler_Q", a.mehler_Q, 1, 100_000)
    if a.beta_window is not None:
        if not (isinstance(a.beta_window, list) and len(a.beta_window) == 2):
            raise ConfigError("analysis.beta_window must be a list [lo, hi]")
        _int("analysis.beta_window[0]", a.beta_window[0], 1)
        _int("analysis.beta_window[1]", a.beta_window[1], a.beta_window[0])
    for name in ("mehler_points", "mehler_correlations"):
        vals = getattr(a, name)
        if not isinstance(vals, list) or not vals:
            raise ConfigError(f"analysis.{name} must be a nonempty list")
        for v in vals:
            _real(f"analysis.{name}", v, -40, 40)
    if any(not abs(r) < 1 for r in a.mehler_correlations):
        raise ConfigError("analysis.mehler_correlations must lie strictly inside (-1, 1)")
    parse_orders(a.orders)
    _int("simulation.resolution", s.resolution, 2, 4096)
    _int("simulation.replications", s.replications, 100, 10_000_000)
    _int("simulation.seed", s.seed, 0, 2**63 - 1)
    _int("simulation.bootstrap", s.bootstrap, 10, 100_000)
    _int("simulation.workers", s.workers, 1, 256)
    _int("simulation.Q", s.Q, 1, 100_000)
    if s.se_method not in ("bootstrap", "normal"):
        raise ConfigError(f"simulation.se_method must be bootstrap or normal, got {s.se_method!r}")
    if o.format not in ("json", "csv", "text"):
        raise ConfigError(f"output.format must be json, csv or text, got {o.format!r}")
    _bool("output.timestamp", o.timestamp)
    _bool("output.quiet", o.quiet)


def parse_orders(spec) -> np.ndarray:
    """Orders from ``default``, ``lo:hi`` (every integer), ``lo:hi:log``, ``q1,q2,...`` or a list."""
    if isinstance(spec, list):
        items = spec
    elif isinstance(spec, (int, np.integer)) and not isinstance(spec, bool):
        items = [spec]
    elif isinstance(spec, str):
        text = spec.strip()
        if text == "default":
            return default_orders()
        if ":" in text:
            parts = text.split(":")
            if len(parts) not in (2, 3) or (len(parts) == 3 and parts[2] != "log"):
                raise ConfigError(f"bad orders range {spec!r}; use lo:hi or lo:hi:log")
            try:
                lo, hi = int(parts[0]), int(parts[1])
            except ValueError:
                raise ConfigError(f"bad orders range {spec!r}") from None
            if not 1 <= lo <= hi:
                raise ConfigError(f"orders range needs 1 <= lo <= hi, got {spec!r}")
            if len(parts) == 3:
                return default_orders(lo, hi)
            return np.arange(lo, hi + 1)
        try:
            items = [int(t) for t in text.split(",")]
        except ValueError:
            raise ConfigError(f"bad orders list {spec!r}") from None
    else:
        raise ConfigError(f"orders must be a string or list, got {spec!r}")
    for q in items:
        if isinstance(q, bool) or not isinstance(q, (int, np.integer)) or q < 1:
            raise ConfigError(f"orders must be integers >= 1, got {q!r}")
    return np.unique(np.asarray(items, dtype=int))


def build_model(spec: ModelSpec):
    """Instantiate the covariance model a ``model`` section describes."""
    if spec.family == "euclidean":
        box = spec.box if spec.box is not None else [1.0] * spec.d
        if not isinstance(box, list):
            raise ConfigError("model.box must be a list of side lengths")
        kernel = spec.kernel or "exp-power"
        if kernel == "exp-power":
            if spec.alpha is None:
                raise ConfigError("model.alpha is required for the exp-power kernel")
            return exp_power_model(spec.alpha, spec.d, box)
        if kernel == "constant":
            return constant_model(spec.d, box)
        raise ConfigError(f"unknown euclidean kernel {kernel!r}; use exp-power or constant")
    if spec.family == "spherical":
        if spec.d < 1:
            raise ConfigError("model.d must be at least 1 on the sphere")
        kernel = spec.kernel or ("spectrum" if spec.spectrum is not None else "exp")
        if kernel == "spectrum":
            if not isinstance(spec.spectrum, list):
                raise ConfigError("model.spectrum must be a list of nonnegative numbers")
            return spherical_from_spectrum(spec.spectrum, spec.d)
        if kernel == "exp":
            return spherical_exp_model(spec.d, spec.scale)
        if kernel == "geodesic":
            if spec.alpha is None:
                raise ConfigError("model.alpha is required for the geodesic kernel")
            return spherical_geodesic_model(spec.alpha, spec.d)
        raise ConfigError(f"unknown spherical kernel {kernel!r}; use exp, geodesic or spectrum")
    if spec.matrix is None:
        raise ConfigError("model.matrix is required for the discrete family")
    try:
        matrix = np.asarray(spec.matrix, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("model.matrix must be a square list of lists of numbers") from None
    return discrete_model(matrix, strict=spec.strict)
