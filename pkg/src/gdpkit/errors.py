"""Exception taxonomy shared across the toolkit."""


class GdpkitError(Exception):
    """Base class for all toolkit-specific errors."""


class InvalidInputError(GdpkitError, ValueError):
    """An argument is outside the operation's documented domain."""


class ContractError(GdpkitError, ValueError):
    """A caller-attested precondition is missing or an input violates a
    structural invariant (e.g. rows not normalized, missing attestation)."""


class SizeGuardError(GdpkitError, ValueError):
    """Exhaustive enumeration was requested on an instance too large for it."""


class InfeasibleBudgetError(GdpkitError, ValueError):
    """No noise level can meet the requested privacy budget.

    Carries the epsilon floor contributed by the fixed components.
    """

    def __init__(self, message: str, floor: float):
        super().__init__(message)
        self.floor = floor


class InvalidQueryError(GdpkitError, ValueError):
    """A prediction was requested for a node outside the transductive contract."""


class ConfigurationError(GdpkitError, ValueError):
    """Pipeline or CLI configuration is internally inconsistent."""
