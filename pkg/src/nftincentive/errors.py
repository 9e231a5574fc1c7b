"""Exception hierarchy shared by every module of the package."""


class IncentiveError(Exception):
    """Base class for all package errors."""


class DomainError(IncentiveError, ValueError):
    """A scalar argument lies outside its admissible range."""


class SimplexError(IncentiveError, ValueError):
    """Weights are negative or do not sum to one."""


class InconsistentActionError(IncentiveError, ValueError):
    """An action combines fields that the cost function does not allow together."""


class ShapeError(IncentiveError, ValueError):
    """Aligned sequences have mismatched lengths."""


class IntegrityError(IncentiveError):
    """A reference points at an NFT that does not exist or breaks acyclicity."""


class ExpiredReferenceError(IncentiveError):
    """A reference points at an NFT that has already settled."""


class SequencingError(IncentiveError):
    """Block heights were advanced out of order."""


class UnknownNftError(IncentiveError, KeyError):
    """Lookup of an NFT id that the ledger never minted."""


class GuardError(IncentiveError):
    """An enumeration would exceed its configured size bound."""


class ConfigError(IncentiveError, ValueError):
    """Invalid experiment or CLI configuration; ``field`` names the offender."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class FinalityError(IncentiveError, AssertionError):
    """A finality check found a counterexample."""

    def __init__(self, sigma, d, message):
        super().__init__(f"finality violated at sigma={sigma!r}, d={d!r}: {message}")
        self.sigma = sigma
        self.d = d
