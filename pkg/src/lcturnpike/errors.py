"""Exception hierarchy.

Each class carries the process exit code the command-line driver maps it to.
"""


class TurnpikeError(Exception):
    exit_code = 1


class ConfigError(TurnpikeError, ValueError):
    """Invalid or dimensionally inconsistent input.

    ``field`` names the offending entry as a dotted path (``"system.A"``).
    """

    exit_code = 4

    def __init__(self, message, field=None, line=None, column=None):
        super().__init__(message)
        self.field = field
        self.line = line
        self.column = column


class DecompositionError(TurnpikeError):
    exit_code = 3


class AssumptionViolation(TurnpikeError):
    """A structural assumption needed for any turnpike behaviour fails."""

    exit_code = 2


class FeasibilityError(TurnpikeError):
    exit_code = 2


class SolverError(TurnpikeError):
    """Newton iteration did not converge.

    ``history`` holds the residual norm of every accepted iterate.
    """

    exit_code = 3

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class ConsistencyError(TurnpikeError):
    exit_code = 3


class SynthesisError(TurnpikeError):
    exit_code = 3


class FitError(TurnpikeError):
    exit_code = 3
