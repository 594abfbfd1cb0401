"""Exception types shared across the package."""


class MixbenchError(Exception):
    """Base class for all package-specific errors."""


class NegativeOrderNonzeroMean(MixbenchError):
    """Negative-order Sobolev norm requested for a field whose mean is not zero."""


class ResolutionMismatch(MixbenchError):
    """Grid resolution incompatible with the requested tiling or rescaling."""


class ResolutionOverflow(MixbenchError):
    """Rasterization would exceed the resolution cap; lower the base resolution."""


class LabelNotInFamily(MixbenchError):
    """Substitution encountered a tile label missing from the rule table."""


class SigmaOutOfRange(MixbenchError):
    """Decay-constant order outside the admissible window 1 < sigma*gamma < 2."""


class ZeroField(MixbenchError):
    """Operation undefined for the identically-zero field."""


class InsufficientData(MixbenchError):
    """Too few samples to fit a decay law."""


class FluxNotZero(MixbenchError):
    """Normal-velocity data has nonzero total flux along the curve."""


class TubeTooWide(MixbenchError):
    """Requested tube half-width exceeds the curve's tubular radius."""


class NotAreaPreserving(MixbenchError):
    """Flow Jacobian deviates from 1 beyond tolerance."""


class NotSimplyConnected(MixbenchError):
    """Caller declared a domain that is not simply connected."""


class PreconditionFailed(MixbenchError):
    """A locality-check precondition is violated; carries the failing clause."""

    def __init__(self, clause: str, message: str = ""):
        self.clause = clause
        super().__init__(f"precondition ({clause}) failed" + (f": {message}" if message else ""))


class CFLViolation(MixbenchError):
    """Advection time step violates the CFL bound."""


class ScheduleOutOfRange(MixbenchError):
    """Requested time lies outside the patching schedule."""


class ClockNotMonotone(MixbenchError):
    """Time-reparametrization clock is not increasing."""


class OutOfTimeRange(MixbenchError):
    """Velocity field queried outside its time interval."""


class UnmixableField(MixbenchError):
    """No radius in the search grid satisfies the mixing threshold."""
