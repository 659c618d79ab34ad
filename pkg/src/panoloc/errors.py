"""Exception hierarchy for the panoloc pipeline."""


class PanolocError(Exception):
    """Base class for all panoloc errors."""


# -- geometry ---------------------------------------------------------------

class ZeroVector(PanolocError):
    """A direction vector with (near-)zero norm cannot be normalized."""


class GrazingRay(PanolocError):
    """Ray is (near-)parallel to the encoded scene plane."""


class UnknownDepth(PanolocError):
    """Back-projection requested at a pixel with no depth information."""


class BehindCamera(PanolocError):
    """Point projects behind the image plane."""


# -- vocabulary / retrieval --------------------------------------------------

class InsufficientData(PanolocError):
    """Not enough descriptors to train a vocabulary."""


class KindMismatch(PanolocError):
    """Descriptor kind does not match the vocabulary kind."""


class InconsistentYawCount(PanolocError):
    """Panoramas contribute differing numbers of rectilinear views."""


class ColdStart(PanolocError):
    """Windowed query issued without a previous hit or start hint."""


# -- pose estimation ---------------------------------------------------------

class DegenerateInput(PanolocError):
    """Too few or geometrically degenerate correspondences for PnP."""


class NoConsensus(PanolocError):
    """RANSAC found no hypothesis with a minimal inlier set."""


class DivergedOptimization(PanolocError):
    """Nonlinear refinement produced a non-finite cost."""


class NoValidPairs(PanolocError):
    """Every candidate pair failed upstream; nothing to bundle-adjust."""


# -- geodesy -----------------------------------------------------------------

class OutOfBand(PanolocError):
    """Latitude outside the valid band of the map projection."""


class NonConvergence(PanolocError):
    """Iterative inverse projection failed to converge."""


# -- dataset / persistence ---------------------------------------------------

class MissingFile(PanolocError):
    """A file referenced by a manifest does not exist."""


class FormatError(PanolocError):
    """A dataset file is malformed."""


class InvariantViolation(PanolocError):
    """A loaded record violates a domain-type invariant."""


class VersionMismatch(PanolocError):
    """Persisted artifact was written by an incompatible format version."""


class CorruptFile(PanolocError):
    """Persisted artifact failed its checksum or is truncated."""


class MissingGroundTruth(PanolocError):
    """Evaluation requested for frames without ground truth."""


class ConfigError(PanolocError):
    """Pipeline configuration file is invalid."""
