"""Exception types shared across the package."""


class IsotetError(Exception):
    """Base class for all package errors."""


class ConfigError(IsotetError):
    """Invalid configuration value or combination."""


class DomainError(IsotetError):
    """Geometric input outside the valid domain (non-finite point,
    point outside the bounding box, degenerate box, ...)."""


class PointMerged(IsotetError):
    """Insertion rejected: the point lies within the merge radius of an
    existing vertex.  Carries the id of that vertex."""

    def __init__(self, vertex_id, message="point merged with existing vertex"):
        super().__init__(f"{message} (vertex {vertex_id})")
        self.vertex_id = vertex_id


class NoActiveCells(IsotetError):
    """The sampling distribution has no active cells left (all trimmed
    or zero probability); the caller should stop sampling."""


class InternalConsistencyError(IsotetError):
    """An internal invariant was violated; indicates a pipeline bug."""
