"""Exception types for the library's input and numeric contracts."""


class KoopgaitError(Exception):
    """Base class for all errors raised by this package."""


# --- file and image ingestion ---------------------------------------------

class MissingDirectoryError(KoopgaitError):
    """Input directory does not exist."""


class TooFewFramesError(KoopgaitError):
    """A silhouette sequence needs at least two frames."""


class UnreadableImageError(KoopgaitError):
    """An image file could not be parsed; the message names the file."""


class TensorIOError(KoopgaitError):
    """A tensor file could not be read or written."""


class BadMagicError(KoopgaitError):
    """Tensor file does not start with the IKA1 magic bytes."""


class DimMismatchError(KoopgaitError):
    """Array dimensions are inconsistent with what an operation expects."""


class BadSpecError(KoopgaitError):
    """A declarative spec (synthetic dataset, layer, config) violates its invariants."""


# --- segmentation ----------------------------------------------------------

class ShapeMismatchError(KoopgaitError):
    """Two frames that must share a shape do not."""


class NonBinaryInputError(KoopgaitError):
    """Frame values must be exactly 0 or 1."""


class SequenceTooShortError(KoopgaitError):
    """Sequence is shorter than the minimum needed for segmentation."""


class NoPeriodicityError(KoopgaitError):
    """Fewer than two usable peaks were found in a similarity series."""


# --- coder and operator numerics -------------------------------------------

class OddResolutionError(KoopgaitError):
    """Checkerboard partitioning needs an even frame width."""


class NonFiniteLossError(KoopgaitError):
    """A loss or gradient became NaN/inf; usually the learning rate is too large."""


class DegenerateCycleError(KoopgaitError):
    """Cycle carries no signal (all frames zero); no operator can be fitted."""


class NumericalFailureError(KoopgaitError):
    """A linear-algebra routine failed to converge or left a large residue."""


class BranchCutError(KoopgaitError):
    """Eigenvalue on the closed negative real axis; principal power undefined."""


class NotDiagonalizableError(KoopgaitError):
    """Eigenvector matrix is too ill-conditioned for a spectral function."""


# --- classification ---------------------------------------------------------

class SingleClassError(KoopgaitError):
    """Classifier training needs at least two distinct labels."""


class EmptyInputError(KoopgaitError):
    """Operation needs at least one sample."""


class UnfittedModelError(KoopgaitError):
    """Model has no fitted weights."""


class InconsistentShapesError(KoopgaitError):
    """Training inputs do not all share the same (T, w, w) shape."""
