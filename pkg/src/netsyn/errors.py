"""Exception hierarchy shared by every netsyn module."""


class NetsynError(Exception):
    """Base class for all errors raised by netsyn."""


class StructureError(NetsynError):
    """Block partitions are inconsistent or a matrix lacks required structure."""


class FormatError(NetsynError):
    """A system or design file violates the JSON schema or its invariants."""


class ConfigError(NetsynError):
    """An option or parameter is out of its admissible range."""


class SpecError(NetsynError):
    """A design or supply-rate specification violates a precondition of the chosen method."""


class SolverError(NetsynError):
    """The conic backend failed (as opposed to reporting infeasibility)."""


class NumericalError(NetsynError):
    """A factorization is too ill-conditioned to give a trustworthy verdict."""


class StateError(NetsynError):
    """An operation was attempted out of the sequential protocol order."""


class DiagnosticError(NetsynError):
    """A necessary condition fails before any LMI is posed."""

    def __init__(self, message, subsystem=None):
        super().__init__(message)
        self.subsystem = subsystem


class StepInfeasible(NetsynError):
    """A local synthesis problem had no solution.

    ``subsystem`` is the 0-based index of the failing subsystem, ``step`` its
    position in the processing order and ``result`` the partial
    :class:`~netsyn.synthesis.SynthesisResult` accumulated so far.
    """

    def __init__(self, subsystem, step, status="infeasible", result=None):
        super().__init__(
            f"local LMI at subsystem {subsystem + 1} (step {step + 1}) is {status}")
        self.subsystem = subsystem
        self.step = step
        self.status = status
        self.result = result


class SimulationError(NetsynError):
    """A trajectory diverged past the overflow guard."""


class PreconditionError(NetsynError):
    """Inputs do not satisfy the method's stated precondition."""


class VerificationError(NetsynError):
    """A solver-reported success failed the independent post-hoc check."""


class GenerationError(NetsynError):
    """The random generator could not produce a certified instance."""
