"""
Experiment configuration, tolerances and defaults.
"""

import math
import os
from dataclasses import asdict, dataclass, fields, replace

from src.crossing_scheme import COUPLED, WALK
from src.gaussian_core import Hurst
from src.weights import weight_names

PARTS = ("P1", "P1_critical", "P2", "P3", "P4", "identities", "constants")

# Short names accepted on the command line.
PART_ALIASES = {
    "p1": "P1",
    "p1c": "P1_critical",
    "p2": "P2",
    "p3": "P3",
    "p4": "P4",
    "identities": "identities",
    "constants": "constants",
}

IDENTITY_TOL = 1e-9
VARIANCE_TOL = 0.15
VARIANCE_TOL_LOCAL_TIME = 0.20
KS_ALPHA = 0.01
MAX_SPAN_RETRIES = 5
MIN_REPLICATIONS = 30

DEFAULT_LEVELS = (8, 10, 12, 14, 16)
DEFAULT_REPLICATIONS = {
    "P1": 500,
    "P1_critical": 500,
    "P2": 2000,
    "P3": 500,
    "P4": 2000,
    "identities": 200,
    "constants": 0,
}
DEFAULT_SPAN_MULTIPLIER = 6.0
MIN_SPAN_MULTIPLIER = 4.0
FORMATS = ("csv", "json")

THREADS_ENV = "FBMBT_THREADS"


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def thread_count():
    """Worker count from FBMBT_THREADS, else the number of CPUs."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got '{raw}'") from None
    if value < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {value}")
    return value


# Range of each limit theorem, worded as the theorem states it.
HYPOTHESES = {
    "P1": "H > 1/6",
    "P1_critical": "H = 1/6",
    "P2": "1/6 < H < 1/2 and any integer r ≥ 2",
    "P3": "H > 1/2 and any integer r ≥ 1",
    "P4": "1/4 < H ≤ 1/2 and any integer r ≥ 1",
}


def _hypothesis_holds(part, H, r):
    if part == "P1":
        return H > 1 / 6
    if part == "P1_critical":
        return math.isclose(H, 1 / 6, abs_tol=1e-12)
    if part == "P2":
        return 1 / 6 < H < 1 / 2 and r >= 2
    if part == "P3":
        return H > 1 / 2
    if part == "P4":
        return 1 / 4 < H <= 1 / 2
    return True


def _hypothesis_error(part, hurst, r):
    if _hypothesis_holds(part, float(hurst), r):
        return None
    return f"part {part} requires {HYPOTHESES[part]}"


@dataclass(frozen=True)
class ExperimentConfig:
    """
    One experiment: which limit to check, at which parameters, how often.

    replications=None picks the per-part default.
    """

    part: str
    hurst: float
    r: int = 1
    weight: str = "one"
    horizon: float = 1.0
    levels: tuple = DEFAULT_LEVELS
    replications: int = None
    master_seed: int = 0
    mode: str = WALK
    span_multiplier: float = DEFAULT_SPAN_MULTIPLIER
    output: str = None
    fmt: str = "csv"

    def __post_init__(self):
        part = PART_ALIASES.get(self.part, self.part)
        object.__setattr__(self, "part", part)
        object.__setattr__(self, "levels", tuple(int(n) for n in self.levels))
        if self.replications is None and part in DEFAULT_REPLICATIONS:
            object.__setattr__(self, "replications", DEFAULT_REPLICATIONS[part])
        self.validate()

    def validate(self):
        if self.part not in PARTS:
            raise ConfigError(f"unknown part '{self.part}'; expected one of {', '.join(PARTS)}")
        try:
            Hurst(self.hurst)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if self.r < 1:
            raise ConfigError(f"r must be a positive integer, got {self.r}")
        if self.weight not in weight_names():
            raise ConfigError(f"unknown weight '{self.weight}'; registered: {', '.join(weight_names())}")
        if not self.horizon > 0:
            raise ConfigError(f"horizon t must be positive, got {self.horizon}")
        if self.mode not in (WALK, COUPLED):
            raise ConfigError(f"mode must be '{WALK}' or '{COUPLED}', got '{self.mode}'")
        if self.fmt not in FORMATS:
            raise ConfigError(f"format must be one of {', '.join(FORMATS)}, got '{self.fmt}'")
        if self.span_multiplier < MIN_SPAN_MULTIPLIER:
            raise ConfigError(
                f"span multiplier must be at least {MIN_SPAN_MULTIPLIER}, got {self.span_multiplier}"
            )
        if not 0 <= self.master_seed < 2 ** 64:
            raise ConfigError(f"master seed must be a 64-bit nonnegative integer, got {self.master_seed}")
        if self.part == "constants":
            return
        if not self.levels:
            raise ConfigError("at least one level is required")
        if min(self.levels) < 0 or len(set(self.levels)) != len(self.levels):
            raise ConfigError(f"levels must be distinct nonnegative integers, got {list(self.levels)}")
        if any(math.floor(math.ldexp(self.horizon, n) + 1e-9) < 1 for n in self.levels):
            raise ConfigError(f"every level needs ⌊2^n t⌋ >= 1 (t={self.horizon}, levels {list(self.levels)})")
        if self.replications < MIN_REPLICATIONS:
            raise ConfigError(
                f"at least {MIN_REPLICATIONS} replications are required, got {self.replications}"
            )
        problem = _hypothesis_error(self.part, self.hurst, self.r)
        if problem:
            raise ConfigError(f"{problem} (got H={self.hurst}, r={self.r})")

    @property
    def sorted_levels(self):
        return tuple(sorted(self.levels))

    @property
    def span(self):
        """Initial X span L = multiplier·√t."""
        return self.span_multiplier * math.sqrt(self.horizon)

    def to_dict(self):
        out = asdict(self)
        out["levels"] = list(self.levels)
        return out

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
        return cls(**data)

    def with_changes(self, **changes):
        return replace(self, **changes)
