"""Exception hierarchy shared across the package."""


class DeformSynthError(Exception):
    """Base class for all package errors."""


class MeshFormatError(DeformSynthError):
    """Malformed OBJ content; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MeshStructureError(DeformSynthError):
    """Indices out of range, non-manifold edges, dangling vertices."""


class DegenerateGeometryError(DeformSynthError):
    """Zero-area face or otherwise unusable geometry."""


class DegenerateNeighborhoodError(DeformSynthError):
    """One-ring too degenerate to fit a deformation gradient."""


class NumericError(DeformSynthError):
    """Non-finite values where finite ones are required."""


class ShapeError(DeformSynthError):
    """Mismatched vertex/frame counts or feature dimensions."""


class ConnectivityError(DeformSynthError):
    """Linear system singular because a component has no anchor."""


class DivergenceError(DeformSynthError):
    """Training loss became non-finite; carries the epoch."""

    def __init__(self, message: str, epoch: int):
        self.epoch = epoch
        super().__init__(f"{message} (epoch {epoch})")


class AlignmentError(DeformSynthError):
    """Paired sequences have mismatched lengths."""


class StateError(DeformSynthError):
    """Operation requires state (e.g. trained weights) that is missing."""


class ConfigError(DeformSynthError):
    """Invalid run configuration."""


class RefinementFailure(DeformSynthError):
    """Collision refinement did not converge; non-fatal report."""

    def __init__(self, message: str, iterations: int):
        self.iterations = iterations
        super().__init__(message)
