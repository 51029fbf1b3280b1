"""Exception types shared across the package.

The CLI maps these onto exit codes: data problems exit 2, numerical
failures exit 3. Plain ``ValueError`` is reserved for caller contract
violations (bad parameter ranges and the like).
"""


class FlowSieveError(Exception):
    """Base class for package-specific failures."""


class DataError(FlowSieveError, ValueError):
    """Input data cannot be used as given."""


class DegenerateInputError(DataError):
    """Filtering left one of the coupled tensors empty."""


class MalformedInputError(DataError):
    """An input file is unreadable or exceeds the malformed-line budget."""


class EmptyBlockError(FlowSieveError, ValueError):
    """A score was requested for a block with an empty role set."""


class InfeasibleSamplingError(DataError):
    """Requested sample sizes exceed what the candidate pools can supply."""


class NumericError(FlowSieveError, RuntimeError):
    """A numerical routine failed to produce a usable result."""


class ConvergenceError(NumericError):
    """Likelihood maximization did not converge."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DegenerateFitError(NumericError):
    """The tail sample carries no variation, so no distribution fits it."""
