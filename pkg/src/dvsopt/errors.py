class DVSError(ValueError):
    """Base class for all errors raised by dvsopt."""


class InfeasibleSetpoint(DVSError):
    """No real PCC voltage exists: |r*iq + x*id| > vg (loss of synchronism)."""


class NondifferentiablePoint(DVSError):
    """The setpoint sits on the stability boundary where V has no gradient."""


class AssumptionViolated(DVSError):
    pass


class PreconditionViolated(DVSError):
    pass


class RootNotBracketed(DVSError):
    pass


class ConfigInvalid(DVSError):
    pass


class NonConvergence(DVSError):
    def __init__(self, message, last_iterates=None):
        super().__init__(message)
        self.last_iterates = last_iterates
