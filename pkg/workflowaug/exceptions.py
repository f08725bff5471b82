"""Exception hierarchy.

ConfigError maps to CLI exit code 2, every DataError to exit code 3.
"""


class WorkflowAugError(Exception):
    """Base class for all errors raised by workflowaug."""


class ConfigError(WorkflowAugError):
    """Invalid configuration or argument value."""


class DataError(WorkflowAugError):
    """Input data that cannot be processed."""


class ParseError(DataError):
    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}: "
        if line is not None:
            message = f"{message} at line {line}"
        super().__init__(f"{where}{message}")


class CatalogError(DataError):
    """Unknown class or tool combination, or an inconsistent catalog file."""


class GraphError(DataError):
    pass


class WalkError(DataError):
    """A workflow walk hit a dead end or did not terminate."""


class UncoveredTransitionError(DataError):
    def __init__(self, pair: tuple, message: str | None = None):
        self.pair = pair
        super().__init__(message or f"no segment covers transition {pair[0]} -> {pair[1]}")


class FrameNotFoundError(DataError):
    def __init__(self, video_id: str, index: int):
        self.video_id = video_id
        self.index = index
        super().__init__(f"frame not found: ({video_id}, {index})")


class MetricsError(DataError):
    pass
