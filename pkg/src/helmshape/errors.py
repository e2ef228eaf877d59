"""Exception taxonomy shared across the package."""


class HelmshapeError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(HelmshapeError, ValueError):
    """A scalar or option argument violates its precondition."""


class GeometryError(HelmshapeError):
    """Requested geometry is inconsistent (overlaps, out-of-domain features)."""


class ResolutionError(HelmshapeError):
    """Mesh is too coarse to represent a requested feature; refine and retry."""


class DeformationError(HelmshapeError):
    """Node motion inverted an element.

    Attributes
    ----------
    worst_triangle : int
        Index of the triangle with the most negative signed area.
    """

    def __init__(self, message, worst_triangle=None):
        super().__init__(message)
        self.worst_triangle = worst_triangle


class MeshQualityError(HelmshapeError):
    """Minimum-angle floor violated after a mesh modification."""


class TagNotFoundError(HelmshapeError, LookupError):
    """Boundary tag not present in the mesh."""


class ParseError(HelmshapeError, ValueError):
    """Malformed input file; message carries the line number and section."""

    def __init__(self, message, line=None, section=None):
        super().__init__(message)
        self.line = line
        self.section = section


class AssemblyError(HelmshapeError):
    """Element-level assembly failure (degenerate triangle)."""


class BCError(HelmshapeError):
    """Essential boundary condition refers to a node off the tagged boundary."""


class ResonanceError(HelmshapeError):
    """k^2 is within the resonance margin of a discrete eigenvalue.

    Attributes
    ----------
    nearest_eigenvalue : float
        Closest discrete eigenvalue found.
    margin : float
        Relative distance between k^2 and the nearest eigenvalue.
    """

    def __init__(self, message, nearest_eigenvalue=None, margin=None):
        super().__init__(message)
        self.nearest_eigenvalue = nearest_eigenvalue
        self.margin = margin


class MultiplicityError(HelmshapeError):
    """Operation requires a simple eigenvalue but the cluster has p >= 2."""


class SolverError(HelmshapeError):
    """Linear or eigenvalue solver failed to converge; message has residual."""


class PreconditionError(HelmshapeError):
    """A documented operation precondition does not hold."""


class EvaluationError(HelmshapeError):
    """Point evaluation outside the mesh or too close to a boundary."""


class FitError(HelmshapeError, ValueError):
    """Convergence-rate fit received non-positive data."""


class StallError(HelmshapeError):
    """Line search found no admissible step above the minimum step size."""


class ConfigError(HelmshapeError, ValueError):
    """Run configuration is malformed; message names the offending key path."""
