"""Result records for orbits, charts, paths and rasters."""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

from config.settings import IterationBudget
from models.errors import ConfigError, InadmissibleWord
from models.itinerary import Itinerary


class OrbitKind(str, Enum):
    ATTRACTED_TO_ORIGIN = "AttractedToOrigin"
    ATTRACTED_TO_CYCLE = "AttractedToCycle"
    UNRESOLVED = "Unresolved"


class Region(str, Enum):
    SHIFT = "Shift"
    M_LAMBDA = "MLambda"
    M_MU = "MMu"
    UNRESOLVED = "Unresolved"


class ShiftSide(str, Enum):
    """Sub-division of the shift locus by which asymptotic value bounds O_lambda."""
    S0_LAMBDA = "S0_lambda"
    S0_MU = "S0_mu"
    S_STAR = "S_star"


class Normalization(str, Enum):
    DERIVATIVE_ONE = "DerivativeOne"
    ASYMPTOTIC_VALUE_TO_R0 = "AsymptoticValueToR0"


class TargetKind(str, Enum):
    VIRTUAL_CENTER = "virtual_center"
    PARABOLIC = "parabolic"
    MISIUREWICZ_LIKE = "misiurewicz"


@dataclass(frozen=True)
class OrbitVerdict:
    """Classification of one forward orbit."""
    kind: OrbitKind
    period: int = 0
    multiplier: complex = 0j
    iterations_used: int = 0
    representative: complex = 0j
    # orbit passed through a pole and was continued along the lambda tract
    through_pole: bool = False


@dataclass(frozen=True)
class ParameterClass:
    region: Region
    period_lambda: Optional[int] = None
    period_mu: Optional[int] = None
    shift_side: Optional[ShiftSide] = None
    ambiguous: bool = False


@dataclass(frozen=True)
class FatouCoordinate:
    """(X_{j_n}, r, theta) with theta = t + pi*(n - 1), t in [-pi, pi).

    The empty word is the base chart inside the linearization disk.
    """
    word: Tuple[int, ...]
    r: float
    theta: float

    @classmethod
    def from_angle(cls, word: Tuple[int, ...], r: float, t: float) -> "FatouCoordinate":
        return cls(word=tuple(word), r=r, theta=t + math.pi * (len(word) - 1))

    @property
    def n(self) -> int:
        return len(self.word)

    @property
    def t(self) -> float:
        return self.theta - math.pi * (self.n - 1)

    @property
    def domain_kind(self) -> str:
        """'A' when the word ends in 0, 'B' otherwise, '' for the base chart."""
        if not self.word:
            return ""
        return "A" if self.word[-1] == 0 else "B"

    def shell_index(self, r0: float, rho_abs: float) -> Optional[int]:
        """k for B-type domains, read off from r."""
        if self.domain_kind != "B" or self.r <= 0:
            return None
        landed = self.r * rho_abs ** self.n
        return max(0, int(math.floor(math.log(landed / r0) / math.log(rho_abs))))

    def validate(self) -> None:
        if self.r < 0 or not math.isfinite(self.r):
            raise InadmissibleWord(f"level must be finite and >= 0, got {self.r!r}")


@dataclass
class TreePath:
    target: Itinerary
    samples: List[Tuple[float, complex]] = field(default_factory=list)
    node_indices: List[int] = field(default_factory=list)
    # index where the final branch (level arc / tract asymptote) starts
    final_branch_start: int = 0
    # final-branch samples out in the tract: log(zeta - phi0(lambda_0)) of the chart
    # value reached after `landing_steps` + 1 forward steps
    chart_offsets: Dict[int, complex] = field(default_factory=dict)
    landing_steps: int = 0

    @property
    def terminal(self) -> complex:
        return self.samples[-1][1]


@dataclass
class TracedPath:
    target: Itinerary
    target_kind: TargetKind
    t_samples: List[float] = field(default_factory=list)
    lambda_samples: List[complex] = field(default_factory=list)
    levels: List[float] = field(default_factory=list)
    words: List[Tuple[int, ...]] = field(default_factory=list)
    residuals: List[float] = field(default_factory=list)
    terminal_estimate: Optional[complex] = None
    solver_estimate: Optional[complex] = None
    solver_distance: Optional[float] = None
    solver_error: Optional[str] = None
    final_branch_start: int = 0
    # branches of the model tree that were traced
    depth: int = 0
    # tolerances the trace was run with, by name
    tolerances: Dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class RasterJob:
    rho: complex
    window: Tuple[float, float, float, float]
    resolution: Tuple[int, int]
    budget: IterationBudget = IterationBudget()

    def __post_init__(self):
        re_min, re_max, im_min, im_max = self.window
        if not (re_max > re_min and im_max > im_min):
            raise ConfigError(f"invalid window {self.window!r}")
        width, height = self.resolution
        if width < 1 or height < 1:
            raise ConfigError(f"invalid resolution {self.resolution!r}")

    def pixel_to_lambda(self, x: int, y: int) -> complex:
        """Pixel centers; row 0 is the top (largest Im)."""
        re_min, re_max, im_min, im_max = self.window
        width, height = self.resolution
        re = re_min + (x + 0.5) * (re_max - re_min) / width
        im = im_max - (y + 0.5) * (im_max - im_min) / height
        return complex(re, im)
