"""Exception hierarchy shared by every module of :mod:`hall_lab`."""


class HallLabError(Exception):
    """Base class for all errors raised by the package."""


class MalformedPathError(HallLabError, ValueError):
    """Edge list does not chain (target of one edge != source of the next)."""


class InexactFormError(HallLabError, ValueError):
    """One-form has non-zero circulation on some cycle of the region.

    ``witness`` holds a closed list of oriented edges with that circulation.
    """

    def __init__(self, message, witness=None, circulation=None):
        super().__init__(message)
        self.witness = witness
        self.circulation = circulation


class ConfigurationError(HallLabError, ValueError):
    """Geometry or numerical parameters do not fit the lattice/problem."""


class EmptyBoundaryError(HallLabError, ValueError):
    """Boundary requested for the empty set or the whole torus."""


class CapacityError(HallLabError, MemoryError):
    """Requested Hilbert-space dimension exceeds the configured cap."""


class BasisMismatchError(HallLabError, ValueError):
    """Operators living on different sector bases were combined."""


class CommensurabilityError(HallLabError, ValueError):
    """Base flux is not an integer multiple of 2*pi/L."""


class OrientationError(HallLabError, ValueError):
    """Dual path is not compatible with the boundary of any region."""


class AssumptionViolation(HallLabError, RuntimeError):
    """Spectral gap assumption fails (degenerate or near-degenerate ground state)."""

    def __init__(self, message, gap=None, points=None):
        super().__init__(message)
        self.gap = gap
        self.points = points


class SolverError(HallLabError, RuntimeError):
    """Iterative eigensolver or propagator did not reach the requested accuracy."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class CapabilityError(HallLabError, RuntimeError):
    """Operation needs full eigendata but only the ground state is cached."""


class FrequencyOutOfGapError(HallLabError, ValueError):
    """Kubo frequency not strictly inside half the spectral gap."""


class BandTouchingError(HallLabError, RuntimeError):
    """Requested Bloch band is not isolated from its neighbours."""
