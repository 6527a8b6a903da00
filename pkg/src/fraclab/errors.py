"""Exception types raised across fraclab."""


class FraclabError(Exception):
    """Base class for all fraclab errors."""


class InvalidField(FraclabError, ValueError):
    pass


class NonHermitianSpectrum(FraclabError, ValueError):
    pass


class ScaleTooFine(FraclabError, ValueError):
    pass


class InvalidExponent(FraclabError, ValueError):
    pass


class InvalidAlpha(FraclabError, ValueError):
    pass


class InvalidDelta(FraclabError, ValueError):
    pass


class InvalidInput(FraclabError, ValueError):
    pass


class InvalidRange(FraclabError, ValueError):
    pass


class DimensionMismatch(FraclabError, ValueError):
    pass


class SpecMismatch(FraclabError, ValueError):
    pass


class NonZeroMeanVorticity(FraclabError, ValueError):
    pass


class NoPositiveMaximum(FraclabError, ValueError):
    pass


class DegenerateGradient(FraclabError, ValueError):
    pass


class BlowUpDetected(FraclabError):
    """A run left the resolvable regime.

    This is an expected outcome for inviscid or supercritical runs, so it
    carries the time, the gradient size and (when raised from ``run``) the
    partial trajectory recorded up to that point.
    """

    def __init__(self, time, max_gradient, reason="nan", trajectory=None):
        self.time = float(time)
        self.max_gradient = float(max_gradient)
        self.reason = reason
        self.trajectory = trajectory
        super().__init__(
            f"blow-up detected at t={self.time:.6g} "
            f"(max gradient {self.max_gradient:.6g}, reason: {reason})"
        )
