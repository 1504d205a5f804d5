"""Exception types shared across the package."""


class CapLabError(Exception):
    """Base class for all package errors."""


class InvalidSpecError(CapLabError, ValueError):
    """Family specification violates its invariants."""


class DegenerateFamilyError(InvalidSpecError):
    """Family parameters produce a degenerate surface (e.g. vanishing cap rim)."""


class UnsupportedFamilyError(CapLabError):
    """Operation requires analytic structure this family does not provide."""


class InvalidMeshError(CapLabError, ValueError):
    """Mesh arrays are structurally unusable."""


class MeshValidationError(CapLabError):
    """Mesh failed invariant validation."""

    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)


class ParseError(CapLabError, ValueError):
    """Malformed input file; carries the 1-based offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DegenerateElementError(CapLabError):
    """A triangle has numerically vanishing area."""


class FitFailureError(CapLabError):
    """Curvature fit stencil too small at a vertex."""


class InvalidAngleError(CapLabError, ValueError):
    """Contact angle outside the open interval (0, pi)."""


class SolverFailureError(CapLabError):
    """Eigenvalue iteration did not converge; carries the residual norm."""

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class NoCommonOriginError(CapLabError):
    """Wall planes share no common point."""


class DependentNormalsError(CapLabError):
    """Wall normals are numerically linearly dependent."""


class ConstraintViolationError(CapLabError, ValueError):
    """Input violates a required constraint (e.g. nonzero mean)."""
