"""Exception hierarchy shared across the package."""


class SegannError(Exception):
    """Base class for all package errors."""


class ContractError(SegannError, ValueError):
    """A value violates an operation's contract (bad arguments, invalid state)."""


class PatternError(SegannError, ValueError):
    """A delimiter pattern is empty or fails to compile."""


class InfeasibleError(SegannError, ValueError):
    """The requested segmentation cannot be produced from the input."""


class TransportError(SegannError):
    """A backend call failed at the transport level (after retries)."""


class ProtocolError(SegannError):
    """A backend responded, but the body could not be interpreted."""


class ObjectiveError(SegannError):
    """Too many seed evaluations failed to produce a usable objective value."""


class SearchError(SegannError):
    """The search run could not produce any scored trial."""


class DatasetError(SegannError, ValueError):
    """A dataset file is malformed."""


class IntegrityError(SegannError, ValueError):
    """A run log contains duplicate or inconsistent records."""
