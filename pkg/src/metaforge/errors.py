"""Exception types shared across the toolkit."""


class MetaforgeError(Exception):
    """Base class for toolkit errors."""


class MeshFormatError(MetaforgeError):
    """Mesh file cannot be parsed, or it references invalid vertex indices."""


class EmptyMeshError(MetaforgeError):
    """Mesh has no vertices or no faces."""


class DegenerateGeometryError(MetaforgeError):
    """Geometry too degenerate to operate on (zero-area face, zero extent, ...)."""


class RankDeficiencyError(MetaforgeError):
    """Coordinate system is singular, e.g. a connected component without a control point."""


class DivergenceError(MetaforgeError):
    """Optimization produced a non-finite objective. Carries the trace so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = [] if trace is None else list(trace)


class QualityGateError(MetaforgeError):
    """A pipeline-level quality threshold was violated."""


class BundleFormatError(MetaforgeError):
    """Deformation bundle failed structural validation."""


class PreconditionError(MetaforgeError):
    """Command invoked on inputs that do not support it (e.g. wrong mode)."""
