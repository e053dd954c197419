"""Exception types shared across the pipeline."""


class SegQualityError(Exception):
    """Base class for all failures raised by this package."""


# --- binary tensor I/O ---

class BadMagic(SegQualityError):
    pass


class BadVersion(SegQualityError):
    pass


class BadHeader(SegQualityError):
    """Structurally invalid header field (dtype, ndim, provenance, dims)."""


class KindMismatch(SegQualityError):
    """File holds a different kind of payload than the caller asked for."""


class DimMismatch(SegQualityError):
    pass


class InvalidProbability(SegQualityError):
    pass


class InvalidLabel(SegQualityError):
    pass


class IoFailure(SegQualityError):
    pass


# --- segmentation / metrics ---

class ContainsIgnoreLabel(SegQualityError):
    pass


class EmptyRegion(SegQualityError):
    pass


class EmptyInterior(SegQualityError):
    pass


# --- datasets / models ---

class TooFewRows(SegQualityError):
    pass


class BinTooSmall(SegQualityError):
    pass


class RankDeficient(SegQualityError):
    pass


class SingleClass(SegQualityError):
    pass


class NoValidationSet(SegQualityError):
    pass


class ZeroVariance(SegQualityError):
    pass


# --- rendering / synthesis ---

class MissingValue(SegQualityError):
    pass


class BlobOutOfBounds(SegQualityError):
    pass
