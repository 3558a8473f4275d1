"""Exception hierarchy.

Every error carries a stable ``code`` string so that reports and the CLI can
name the failure without depending on Python class names.
"""


class McmcCertError(ValueError):
    code = "McmcCertError"

    def __init__(self, message="", **details):
        super().__init__(message or self.code)
        self.details = details


class ExactModeRequired(McmcCertError):
    code = "ExactModeRequired"


class EmptyDistribution(McmcCertError):
    code = "EmptyDistribution"


class SupportTooLarge(McmcCertError):
    code = "SupportTooLarge"


class NonPositiveCurvature(McmcCertError):
    code = "NonPositiveCurvature"

    def __init__(self, message="", witness=None, ratio=None):
        super().__init__(message, witness=witness, ratio=ratio)
        self.witness = witness
        self.ratio = ratio


class UnboundedSpace(McmcCertError):
    code = "UnboundedSpace"


class UnboundedSupport(McmcCertError):
    code = "UnboundedSupport"


class UnboundedDiffusion(McmcCertError):
    code = "UnboundedDiffusion"


class StationarySolveFailed(McmcCertError):
    code = "StationarySolveFailed"


class InvalidDimension(McmcCertError):
    code = "InvalidDimension"


class InvalidKappa(McmcCertError):
    code = "InvalidKappa"


class MissingSFunction(McmcCertError):
    code = "MissingSFunction"


class PlanMismatch(McmcCertError):
    code = "PlanMismatch"


class OracleTooLarge(McmcCertError):
    code = "OracleTooLarge"


class LambdaOutOfRange(McmcCertError):
    code = "LambdaOutOfRange"


class InvalidRate(McmcCertError):
    code = "InvalidRate"


class StabilityViolated(McmcCertError):
    code = "StabilityViolated"

    def __init__(self, message="", witness=None):
        super().__init__(message, witness=witness)
        self.witness = witness


class ContractionViolated(McmcCertError):
    code = "ContractionViolated"

    def __init__(self, message="", witness=None):
        super().__init__(message, witness=witness)
        self.witness = witness


class SpecError(McmcCertError):
    """Invalid JSON job/chain document; ``pointer`` is a JSON pointer."""

    code = "SpecError"

    def __init__(self, message="", pointer=""):
        super().__init__(f"{pointer or '/'}: {message}", pointer=pointer)
        self.pointer = pointer
