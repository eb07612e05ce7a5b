"""Exception hierarchy for the shift-locus atlas."""


class AtlasError(Exception):
    """Base class for every error raised by the atlas."""


class ConfigError(AtlasError):
    """Run configuration could not be parsed or validated."""


class DegenerateParameter(AtlasError):
    """The map is not defined for this parameter (lambda = 0 or rho/2)."""


class BadMultiplier(AtlasError):
    """Multiplier at the origin must satisfy 0 < |rho| < 1."""


class InfinityFlag(AtlasError):
    """Raised where a finite value is required but the point is a pole."""


class AsymptoticValueHit(AtlasError):
    """An asymptotic value has no preimage."""


class Unresolvable(AtlasError):
    """A branch index could not be confirmed within the search window."""


class NoConvergence(AtlasError):
    """Newton or fixed-point iteration failed to converge."""


class NotAttracting(AtlasError):
    """The fixed point is not attracting."""


class NotInBasin(AtlasError):
    """Point is not in the attracting basin of the linearized fixed point."""


class OutsideInjectivityDisk(AtlasError):
    """Koenigs inverse requested outside the disk of radius r0."""


class NoSolutionInWindow(AtlasError):
    """Model parameter search found no solution in the scan window."""


class InadmissibleWord(AtlasError):
    """Itinerary or coordinate word violates an admissibility rule."""


class NotInK0(AtlasError):
    """Point is not in the immediate basin of q0 for the model map."""


class NotInShiftLocus(AtlasError):
    """Parameter does not classify as Shift."""


class WrongNormalizationSide(AtlasError):
    """Parameter lies in S0_mu or S_* rather than S0_lambda."""


class LeftShiftLocus(AtlasError):
    """A continuation iterate classified outside the shift locus."""


class CollapsedToAttracting(AtlasError):
    """Parabolic solve landed on an attracting cycle."""


class NotRepelling(AtlasError):
    """Landing cycle of a Misiurewicz-like solve is not repelling."""


class ContinuationStalled(AtlasError):
    """Path continuation halved its step below the allowed minimum."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial
