"""Atlas configuration: environment defaults and run recipes."""

import os
from dataclasses import dataclass, field
from typing import Dict, Optional

from dotenv import dotenv_values, load_dotenv

from models.errors import ConfigError

# Load environment variables
load_dotenv()

ATLAS_VERSION = "0.1.0"


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return float(raw)
    except ValueError as e:
        raise ConfigError(f"{name} must be a number, got {raw!r}") from e


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError as e:
        raise ConfigError(f"{name} must be an integer, got {raw!r}") from e


def parse_complex(text: str) -> complex:
    """Parse '0.5', '1+2j', '2/3' or '1.2,-0.4' into a complex number."""
    value = text.strip().replace(" ", "")
    if not value:
        raise ConfigError("empty complex value")
    try:
        if "," in value:
            re_part, im_part = value.split(",", 1)
            return complex(float(re_part), float(im_part))
        if "/" in value and "j" not in value:
            num, den = value.split("/", 1)
            return complex(float(num) / float(den))
        return complex(value)
    except (ValueError, ZeroDivisionError) as e:
        raise ConfigError(f"cannot parse complex value {text!r}") from e


class AtlasConfig:
    """Numerical tunables shared by every service."""

    def __init__(self):
        self.rho = parse_complex(os.getenv("ATLAS_RHO", "2/3"))
        self.threads = max(1, _env_int("ATLAS_THREADS", 1))
        self.overflow_guard = _env_float("ATLAS_OVERFLOW_GUARD", 50.0)
        self.pole_tolerance = _env_float("ATLAS_POLE_TOLERANCE", 1e-12)
        self.branch_window = _env_int("ATLAS_BRANCH_WINDOW", 64)
        self.max_iter = _env_int("ATLAS_MAX_ITER", 2000)
        self.trap_factor = _env_float("ATLAS_TRAP_FACTOR", 0.25)
        self.symbol_window = _env_int("ATLAS_SYMBOL_WINDOW", 8)
        self.tract_depth = _env_float("ATLAS_TRACT_DEPTH", 2e4)
        self.max_trace_depth = _env_int("ATLAS_MAX_TRACE_DEPTH", 200)
        self.output_dir = os.getenv("ATLAS_OUTPUT_DIR", "output")

    def trap_radius(self, rho: complex, lam: complex, mu: complex) -> float:
        """Origin trap radius (1 - |rho|)/4 * min(|lambda|, |mu|, 1)."""
        return self.trap_factor * (1.0 - abs(rho)) * min(abs(lam), abs(mu), 1.0)


@dataclass(frozen=True)
class IterationBudget:
    """Orbit iteration budget and tolerances."""
    max_iter: int = 2000
    tol: float = 1e-6

    def __post_init__(self):
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if self.tol <= 0:
            raise ConfigError("tol must be positive")


@dataclass
class RunConfig:
    """A run recipe: rho plus command-specific key-value blocks."""
    rho: complex
    values: Dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: Optional[str], overrides: Optional[Dict[str, str]] = None,
                  default_rho: complex = 2.0 / 3.0) -> "RunConfig":
        """Read a dotenv-syntax recipe file, then apply command-line overrides."""
        values: Dict[str, str] = {}
        if path:
            if not os.path.exists(path):
                raise ConfigError(f"config file not found: {path}")
            values.update({k.upper(): v for k, v in dotenv_values(path).items() if v is not None})
        for key, value in (overrides or {}).items():
            if value is not None:
                values[key.upper()] = str(value)
        rho = parse_complex(values["RHO"]) if "RHO" in values else complex(default_rho)
        if not 0.0 < abs(rho) < 1.0:
            raise ConfigError(f"RHO must satisfy 0 < |rho| < 1, got {rho!r}")
        return cls(rho=rho, values=values)

    def get(self, key: str, default: Optional[str] = None) -> Optional[str]:
        return self.values.get(key.upper(), default)

    def get_int(self, key: str, default: int) -> int:
        raw = self.get(key)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError as e:
            raise ConfigError(f"{key} must be an integer, got {raw!r}") from e

    def get_float(self, key: str, default: float, positive: bool = False) -> float:
        raw = self.get(key)
        if raw is None:
            value = default
        else:
            try:
                value = float(raw)
            except ValueError as e:
                raise ConfigError(f"{key} must be a number, got {raw!r}") from e
        if positive and value <= 0:
            raise ConfigError(f"{key} must be positive, got {value!r}")
        return value

    def get_complex(self, key: str, default: Optional[complex] = None) -> Optional[complex]:
        raw = self.get(key)
        if raw is None:
            return default
        return parse_complex(raw)

    def budget(self) -> IterationBudget:
        return IterationBudget(
            max_iter=self.get_int("MAX_ITER", 2000),
            tol=self.get_float("TOL", 1e-6, positive=True),
        )
