"""Independent cross-check that disarmed weight containers stay loadable by
mainstream ecosystem readers, bit-for-bit."""

__version__ = "0.1.0"

from .validator import InteropResult, LoadFailure, TensorMismatch, validate_load

__all__ = ["InteropResult", "LoadFailure", "TensorMismatch", "validate_load"]
