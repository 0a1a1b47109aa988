"""Exception types shared across the laboratory."""

from __future__ import annotations


class DriftLabError(Exception):
    """Base class for all library-specific failures."""


class CapacityError(DriftLabError):
    """A requested allocation exceeds the configured memory cap."""


class GridAlignmentError(DriftLabError):
    """A time or window does not sit on the required dyadic grid."""


class WindowError(DriftLabError):
    """An invalid time window (empty, reversed, or out of range)."""


class UnsupportedDimensionError(DriftLabError):
    """The operation is only implemented for a smaller state dimension."""


class UnsupportedFamilyError(DriftLabError):
    """The drift family does not support the requested operation."""


class MissingMetadataError(DriftLabError):
    """A drift lacks the integrability/regularity metadata an op needs."""


class DegenerateNormalizerError(DriftLabError):
    """A tail statistic's normalizer is zero (coincident shifts)."""


class FitUnsupportedError(DriftLabError):
    """Too few supported bins or points to fit a curve."""


class MCError(DriftLabError):
    """A Monte Carlo run produced too many invalid samples."""


class PdeSolverError(DriftLabError):
    """The backward PDE march produced non-finite values."""


class LambdaSearchError(DriftLabError):
    """No relaxation rate below the cap meets the gradient target."""


class ExtrapolationError(DriftLabError):
    """A query point lies outside the solved space-time domain."""


class HullError(DriftLabError):
    """Interpolation was requested outside the table's x-hull."""


class NetTooLargeError(DriftLabError):
    """Explicit enumeration was requested for an implicit-only net."""


class ExperimentInfeasibleError(DriftLabError):
    """An experiment's sampling plan cannot be satisfied."""


class DegeneratePairError(DriftLabError):
    """A pairwise fit received coincident points or too few pairs."""


class CertificateInapplicableError(DriftLabError):
    """The integrability gate rejects the drift's envelope exponents."""


class BinaryFormatError(DriftLabError):
    """The byte stream is not a well-formed columnar dump."""
