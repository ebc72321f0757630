"""Run configuration: ``key = value`` files, presets and initial data."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .driver import SCHEMES
from .harness import experiment_presets
from .model import ModelParams
from .spectral import Grid2D

OUTPUT_DIR_ENV = "PFBCP_OUTPUT_DIR"
SWEEPS = ("table1", "table2", "table3")


class ConfigError(ValueError):
    """Invalid configuration; ``key`` and ``line`` locate the culprit."""

    def __init__(self, message: str, key: Optional[str] = None, line=None):
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.key = key
        self.line = line


def _floats(text: str) -> tuple:
    parts = [p for p in text.replace(",", " ").split() if p]
    return tuple(float(p) for p in parts)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class RunConfig:
    scheme: str = "cn"
    n: int = 128
    epsilon: float = 0.06
    alpha: float = 0.001
    mobility: float = 1.0
    lam: float = 1.0
    nu: float = 1.0
    beta: float = 0.0
    dt: float = 1e-3
    t_end: float = 1.0
    snapshot_times: tuple = ()
    seed: int = 0
    phi_mean: float = 0.0
    amplitude: float = 0.01
    output_dir: str = field(default_factory=lambda: os.environ.get(OUTPUT_DIR_ENV, "output"))
    tol: float = 1e-10
    max_iter: int = 500
    log_stride: int = 10
    preset: Optional[str] = None
    extended: bool = False
    label: str = "run"
    # convergence sweeps
    sweep: Optional[str] = None
    dts: tuple = ()
    reference: str = "exact"
    benchmark_dt: float = 1e-5
    workers: int = 1

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.epsilon, self.alpha, self.mobility, self.lam, self.nu, self.beta)

    @property
    def grid(self) -> Grid2D:
        return Grid2D(self.n, self.n)


_PARSERS = {
    "scheme": str, "n": int, "seed": int, "max_iter": int, "log_stride": int, "workers": int,
    "snapshot_times": _floats, "dts": _floats, "output_dir": str, "preset": str, "label": str,
    "extended": _bool, "sweep": str, "reference": str,
}
KEYS = tuple(f.name for f in fields(RunConfig))
REQUIRED = ("scheme", "dt", "t_end")


def _parse_value(key: str, text: str):
    parser = _PARSERS.get(key, float)
    return parser(text.strip())


def read_pairs(text: str) -> list:
    """``(key, raw_value, line_number)`` triples from ``key = value`` text."""
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", key, lineno)
        pairs.append((key, value, lineno))
    return pairs


def parse_config(text: str, overrides: Optional[dict] = None, mode: str = "simulate") -> RunConfig:
    """Build a validated ``RunConfig`` from file text plus command-line overrides.

    A ``preset`` key expands to the preset's values first; explicit keys
    then override them. ``mode="convergence"`` relaxes the required keys
    when a named ``sweep`` is given, and never asks for ``dt``.
    """
    pairs = read_pairs(text)
    for key, value in (overrides or {}).items():
        key = key.replace("-", "_")
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", key, "command line")
        pairs.append((key, str(value), "command line"))

    values, where = {}, {}
    for key, raw, lineno in pairs:
        try:
            values[key] = _parse_value(key, raw)
        except ValueError as exc:
            raise ConfigError(f"bad value {raw!r}: {exc}", key, lineno) from None
        where[key] = lineno

    base = {}
    if values.get("preset"):
        name = values["preset"]
        presets = experiment_presets()
        if name not in presets:
            raise ConfigError(f"no preset named {name!r}; known: {', '.join(presets)}",
                              "preset", where["preset"])
        base = preset_values(presets[name], bool(values.get("extended", False)))
        if "t_end" in values and "snapshot_times" not in values:
            base["snapshot_times"] = tuple(t for t in base["snapshot_times"]
                                           if t <= values["t_end"])
    elif mode == "convergence" and values.get("sweep"):
        pass
    else:
        required = REQUIRED
        if mode == "convergence":
            # each row has its own step size
            required = tuple(k for k in REQUIRED if k != "dt")
        missing = [k for k in required if k not in values]
        if missing:
            raise ConfigError(f"missing required key {missing[0]!r}", missing[0])

    merged = {**base, **values}
    config = RunConfig(**merged)
    validate(config, where, mode)
    return config


def preset_values(preset, extended: bool = False) -> dict:
    run = preset.runs[0]
    return {"scheme": run.scheme, "alpha": run.alpha, "phi_mean": run.phi_mean,
            "beta": run.beta, "dt": run.dt, "t_end": preset.t_end(extended),
            "snapshot_times": preset.snapshots(extended), "label": preset.name}


def validate(config: RunConfig, where: Optional[dict] = None, mode: str = "simulate") -> None:
    where = where or {}

    def fail(key, message):
        raise ConfigError(message, key, where.get(key))

    if config.scheme not in SCHEMES:
        fail("scheme", f"scheme must be one of {SCHEMES}, got {config.scheme!r}")
    if config.n < 4 or config.n % 2:
        fail("n", f"grid size must be even and >= 4, got {config.n}")
    for key in ("epsilon", "mobility", "lam", "nu", "alpha", "beta"):
        try:
            ModelParams(**{key: getattr(config, key)})
        except ValueError as exc:
            fail(key, str(exc))
    if not (config.dt > 0 and math.isfinite(config.dt)):
        fail("dt", f"dt must be positive, got {config.dt}")
    if not (config.t_end >= config.dt):
        fail("t_end", f"t_end must be >= dt, got {config.t_end}")
    for t in config.snapshot_times:
        if not 0.0 <= t <= config.t_end:
            fail("snapshot_times", f"snapshot time {t} outside [0, {config.t_end}]")
    if config.amplitude < 0:
        fail("amplitude", "amplitude must be >= 0")
    if config.tol <= 0:
        fail("tol", "tol must be positive")
    if config.max_iter < 1:
        fail("max_iter", "max_iter must be >= 1")
    if config.log_stride < 1:
        fail("log_stride", "log_stride must be >= 1")
    if config.workers < 1:
        fail("workers", "workers must be >= 1")
    if config.sweep is not None and config.sweep not in SWEEPS:
        fail("sweep", f"sweep must be one of {SWEEPS}")
    if config.reference not in ("exact", "benchmark"):
        fail("reference", "reference must be 'exact' or 'benchmark'")
    if any(b >= a for a, b in zip(config.dts, config.dts[1:])):
        fail("dts", "dts must be strictly decreasing")
    if any(d <= 0 for d in config.dts):
        fail("dts", "dts must be positive")
    if mode == "convergence" and config.sweep is None and not config.dts:
        fail("dts", "a convergence run needs 'sweep' or 'dts'")


def expand_runs(config: RunConfig) -> list:
    """Per-run configurations; multi-run presets fan out to one config each."""
    if not config.preset:
        return [config]
    preset = experiment_presets()[config.preset]
    if len(preset.runs) == 1:
        return [config]
    return [replace(config, scheme=run.scheme, alpha=run.alpha, phi_mean=run.phi_mean,
                    beta=run.beta, dt=run.dt, label=f"{preset.name}_{_slug(run.label)}")
            for run in preset.runs]


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() or c in "-." else "_" for c in text)


def random_initial_field(grid: Grid2D, mean_value: float, amplitude: float,
                         seed: int) -> np.ndarray:
    """``mean_value + amplitude * r`` with ``r`` uniform in [-1, 1] and exactly mean zero."""
    if amplitude < 0:
        raise ValueError("amplitude must be >= 0")
    if amplitude == 0:
        return np.full(grid.shape, float(mean_value))
    rng = np.random.default_rng(seed)
    r = amplitude * rng.uniform(-1.0, 1.0, size=grid.shape)
    r -= r.mean()
    r -= r.mean()  # second pass removes the residual rounding of the first
    return mean_value + r
