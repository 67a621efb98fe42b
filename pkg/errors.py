"""Exception types raised across the simulator."""

from typing import Optional


class SurfaceError(Exception):
    """Base class for every error raised by the simulator."""


class DomainError(SurfaceError, ValueError):
    """Input outside the physical validity envelope."""


class BoundsError(DomainError):
    """A roll length outside that roll's bounds."""

    def __init__(self, roll_id: int, length: float, low: float, high: float):
        self.roll_id = roll_id
        self.length = length
        super().__init__(
            f"Roll {roll_id}: length {length:.4f} m outside [{low:.4f}, {high:.4f}] m"
        )


class ConsistencyError(SurfaceError):
    """A configuration that does not match the scene it is applied to."""


class FeedbackTimeout(SurfaceError):
    """Expected reports or acknowledgements did not arrive in time."""

    def __init__(self, node_id: str, detail: str = ""):
        self.node_id = node_id
        message = f"No response from node '{node_id}'"
        if detail:
            message += f": {detail}"
        super().__init__(message)


class SearchSpaceTooLarge(SurfaceError):
    """Exhaustive search refused because the configuration count is too large."""

    def __init__(self, size: int, limit: int):
        self.size = size
        self.limit = limit
        super().__init__(f"Search space N^R = {size} exceeds limit {limit}")


class DecodeError(SurfaceError, ValueError):
    """A malformed wire record."""

    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)


class ParameterError(SurfaceError, ValueError):
    """Unknown or badly typed parameter override."""


class SceneFileError(SurfaceError):
    """A scene, spec or cache file that cannot be read."""


class ExperimentError(SurfaceError):
    """Unknown experiment or invalid experiment spec."""
