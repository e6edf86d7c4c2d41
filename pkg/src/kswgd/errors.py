"""Exception hierarchy.

Every error carries a ``category`` string so the command line can map it to an
exit code and a machine-readable message.
"""


class KSWGDError(Exception):
    category = "error"
    module = None

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details


class ContractError(KSWGDError, ValueError):
    """Inputs violate a documented precondition (shapes, ranges)."""

    category = "contract"


class InsufficientDataError(ContractError):
    category = "insufficient_data"


class ConfigError(KSWGDError):
    category = "config"

    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = list(errors or [])


class NumericalError(KSWGDError, ArithmeticError):
    category = "numerical"


class DivergenceError(NumericalError):
    category = "divergence"

    def __init__(self, message, step=None, **details):
        super().__init__(message, step=step, **details)
        self.step = step


class RenormalizationError(NumericalError):
    category = "renormalization"


class DegenerateBandwidthError(NumericalError):
    category = "degenerate_bandwidth"


class FarQueryError(NumericalError):
    category = "far_query"


class RegularizationRequiredError(NumericalError):
    category = "regularization_required"


class ConditioningError(NumericalError):
    category = "conditioning"

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message, min_eigenvalue=min_eigenvalue)
        self.min_eigenvalue = min_eigenvalue


class RankDeficiencyError(NumericalError):
    category = "rank_deficiency"

    def __init__(self, message, found=None, requested=None):
        super().__init__(message, found=found, requested=requested)
        self.found = found
        self.requested = requested


class BlowupError(NumericalError):
    category = "blowup"

    def __init__(self, message, particle=None):
        super().__init__(message, particle=particle)
        self.particle = particle
