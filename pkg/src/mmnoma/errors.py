"""Exception types raised across the package."""


class MmNomaError(Exception):
    """Base class for all package errors."""


class InvalidInputError(MmNomaError, ValueError):
    """Argument shapes or values violate an operation's preconditions."""


class InfeasibleScenarioError(MmNomaError):
    """A drop cannot be clustered (some selected beam has fewer than two users)."""


class DegenerateChannelError(MmNomaError):
    """The strong-user effective channel matrix is (numerically) singular."""


class InfeasibleError(MmNomaError):
    """The minimum-rate requirements cannot be met within the power budget."""


class FeasibilityRestorationError(MmNomaError):
    """An SCA expansion point violates the constraints it must satisfy."""
