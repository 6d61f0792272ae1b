"""Exception hierarchy shared by the library and the command line."""


class TncError(Exception):
    """Base class for all library errors."""


class DataFormatError(TncError):
    """Malformed IDX/PGM input. ``offset`` is the byte position, when known."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ShapeError(TncError, ValueError):
    pass


class DomainError(TncError, ValueError):
    pass


class SelectionError(TncError, ValueError):
    pass


class DegenerateStatsError(TncError, ValueError):
    pass


class NumericalRankError(TncError):
    def __init__(self, message, site=None):
        super().__init__(message)
        self.site = site


class NormalizationError(TncError):
    pass


class TrainingError(TncError):
    def __init__(self, message, sweep=None):
        super().__init__(message)
        self.sweep = sweep


class PreconditionError(TncError):
    pass


class DecompositionError(TncError):
    pass


class GateError(TncError):
    pass


class PostSelectionError(TncError):
    """The post-selected branch has (numerically) zero weight."""


class PersistenceError(TncError):
    pass
