"""Sweep configuration and its ``key = value`` file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from camp.model import is_power_of_two
from camp.solvers import ALGORITHMS

PAPER_TRIALS = 100_000


class ConfigError(ValueError):
    pass


def default_theta_grid() -> Tuple[float, ...]:
    """30 log-spaced thresholds on [0.02, 10]."""
    return tuple(float(v) for v in np.geomspace(0.02, 10.0, 30))


@dataclass(frozen=True)
class SweepConfig:
    M: int = 614
    N: int = 1024
    rho: float = 0.1
    snr_db: float = 30.0
    T: int = 100
    condition_numbers: Tuple[float, ...] = (1.0, 10.0, 100.0, 1000.0)
    algorithms: Tuple[str, ...] = ALGORITHMS
    trials: int = 200
    pilot_trials: int = 64
    theta_grid: Tuple[float, ...] = field(default_factory=default_theta_grid)
    master_seed: int = 20200101
    output_path: Optional[str] = None
    divergence_mse: float = 100.0
    max_diverged_fraction: Optional[float] = None

    def __post_init__(self):
        if self.trials < 1 or self.pilot_trials < 1:
            raise ConfigError("trials and pilot_trials must be >= 1")
        if not self.theta_grid:
            raise ConfigError("theta_grid must not be empty")
        if any(t < 0 for t in self.theta_grid):
            raise ConfigError("thresholds must be nonnegative")
        if not is_power_of_two(self.N):
            raise ConfigError(f"N must be a power of two, got {self.N}")
        if not 2 <= self.M <= self.N:
            raise ConfigError(f"need 2 <= M <= N, got M={self.M}")
        if not 0.0 < self.rho <= 1.0:
            raise ConfigError("rho must lie in (0, 1]")
        if self.T < 1:
            raise ConfigError("T must be >= 1")
        if any(k < 1 for k in self.condition_numbers) or not self.condition_numbers:
            raise ConfigError("condition numbers must be >= 1")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad or not self.algorithms:
            raise ConfigError(f"unknown algorithms {bad}")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")

    @property
    def delta(self) -> float:
        return self.M / self.N

    @property
    def noise_variance(self) -> float:
        return 10.0 ** (-self.snr_db / 10.0)

    def replace(self, **changes) -> "SweepConfig":
        return dataclasses.replace(self, **changes)


_INT_KEYS = {"M", "N", "T", "trials", "pilot_trials", "master_seed"}
_FLOAT_KEYS = {"rho", "snr_db", "divergence_mse", "max_diverged_fraction"}
_LIST_KEYS = {"condition_numbers", "theta_grid"}


def parse_config(text: str) -> SweepConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment, lists are comma-separated."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            if key in _INT_KEYS:
                values[key] = int(value)
            elif key in _FLOAT_KEYS:
                values[key] = float(value)
            elif key in _LIST_KEYS:
                values[key] = tuple(float(v) for v in value.split(",") if v.strip())
            elif key == "algorithms":
                values[key] = tuple(v.strip() for v in value.split(",") if v.strip())
            elif key == "output_path":
                values[key] = value
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {value!r}") from None
    return SweepConfig(**values)


def load_config(path) -> SweepConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def format_config(cfg: SweepConfig) -> str:
    """Inverse of ``parse_config`` (round-trips every field)."""
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if v is None:
            continue
        if isinstance(v, tuple):
            v = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
