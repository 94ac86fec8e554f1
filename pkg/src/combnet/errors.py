"""Exception types shared across the package."""


class CombnetError(Exception):
    """Base class for all package errors."""


class GridRangeError(CombnetError):
    """Channel index outside the supported ITU grid range."""


class DegeneratePairError(CombnetError):
    """Signal and idler coincide with the pump (no conjugate partner)."""


class CapacityError(CombnetError):
    """Not enough usable channels for the requested network size."""


class ConfigurationError(CombnetError):
    """Inconsistent or out-of-regime configuration values."""


class ValidationError(CombnetError):
    """Scenario config failed validation.

    Collects every problem found in one pass so the CLI can report them all.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class EmptyDataError(CombnetError):
    """An operation received no events/counts to work with."""


class FitFailureError(CombnetError):
    """Least-squares fit did not converge; carries the last iterate."""

    def __init__(self, message, last_params=None, residual_norm=None):
        super().__init__(message)
        self.last_params = last_params
        self.residual_norm = residual_norm


class InconsistentRatesError(CombnetError):
    """Coincidence rate exceeds a singles rate (unphysical input)."""


class StageError(CombnetError):
    """A pipeline stage failed; carries the stage name for the CLI."""

    def __init__(self, stage, message):
        self.stage = stage
        super().__init__(f"stage '{stage}': {message}")
