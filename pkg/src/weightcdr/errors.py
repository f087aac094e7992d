"""Exception hierarchy. Every error carries a stable ``code`` for CLI/JSON output."""

from __future__ import annotations


class WeightCdrError(Exception):
    """Base class for all library errors."""

    code = "error"


class MalformedHeader(WeightCdrError):
    """Container header is structurally invalid (bad length field, bad JSON, bad magic)."""

    code = "malformed_header"


class TruncatedData(WeightCdrError):
    """Declared tensor data extends past the available bytes."""

    code = "truncated_data"


class OverlappingOffsets(WeightCdrError):
    """Tensor data regions overlap, leave gaps, or fail to cover the data buffer."""

    code = "overlapping_offsets"


class UnsupportedFormat(WeightCdrError):
    """Requested serialization cannot represent this container."""

    code = "unsupported_format"


class EmptySelection(WeightCdrError):
    """A tensor selection matched nothing; there is nothing to attack or disarm."""

    code = "empty_selection"


class PayloadTooLarge(WeightCdrError):
    """Framed payload does not fit the selection's bit capacity."""

    code = "payload_too_large"

    def __init__(self, capacity_bytes: int, needed_bytes: int):
        self.capacity_bytes = capacity_bytes
        self.needed_bytes = needed_bytes
        super().__init__(
            f"payload needs {needed_bytes} bytes but selection holds {capacity_bytes}"
        )


class LengthMismatch(WeightCdrError):
    """Two byte sequences that must be compared have different lengths."""

    code = "length_mismatch"


class ShapeMismatch(WeightCdrError):
    """Tensor or vector shapes are incompatible for the requested operation."""

    code = "shape_mismatch"


class SubnormalOrNonFinite(WeightCdrError):
    """Perturbation bound is undefined for NaN or infinity."""

    code = "subnormal_or_nonfinite"
