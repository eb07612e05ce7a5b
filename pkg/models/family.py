"""Models for one slice of the meromorphic family and its points."""

import cmath
import math
from dataclasses import dataclass

from models.errors import BadMultiplier, DegenerateParameter

# The point at infinity (the value at a pole, the symbol reached by a
# prepole orbit) is this sentinel.
INFINITY: complex = complex(math.inf, math.inf)


def is_infinity(z: complex) -> bool:
    """True when z is the infinity flag (or any non-finite value)."""
    return not cmath.isfinite(z)


@dataclass(frozen=True)
class FamilySlice:
    """The triple (rho, lambda, mu) defining one map f_lambda.

    The constraint 1/lambda - 1/mu = 2/rho makes f'(0) = rho.
    """
    rho: complex
    lam: complex
    mu: complex

    @classmethod
    def make(cls, rho: complex, lam: complex) -> "FamilySlice":
        """Build a slice, solving mu from 1/mu = 1/lambda - 2/rho."""
        rho = complex(rho)
        lam = complex(lam)
        if not 0.0 < abs(rho) < 1.0:
            raise BadMultiplier(f"|rho| must lie in (0, 1), got {abs(rho)!r}")
        if lam == 0 or abs(lam - rho / 2) <= 1e-15 * max(1.0, abs(rho)):
            raise DegenerateParameter(f"f is not defined for lambda = {lam!r}")
        mu = 1.0 / (1.0 / lam - 2.0 / rho)
        return cls(rho=rho, lam=lam, mu=mu)

    def constraint_residual(self) -> float:
        """Relative residual of 1/lambda - 1/mu = 2/rho."""
        target = 2.0 / self.rho
        return abs((1.0 / self.lam - 1.0 / self.mu) - target) / abs(target)
