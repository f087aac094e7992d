"""Exact IEEE-754 binary32 bit manipulation.

A float32 word is ``sign(1) | exponent(8) | mantissa(23)``. All attack and
disarm transforms in this package edit only a low window of the 23 mantissa
bits, so sign and exponent are never touched and the worst-case value change
is bounded in closed form. Everything here is pure and thread-safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SubnormalOrNonFinite

MANTISSA_BITS = 23
MANTISSA_MASK = 0x007F_FFFF
SIGN_EXPONENT_MASK = 0xFF80_0000
EXPONENT_MASK = 0x7F80_0000
EXPONENT_BIAS = 127

_U32 = np.uint32
_F32 = np.float32


@dataclass(frozen=True)
class BitWindow:
    """A contiguous window over the k lowest mantissa bits (bit 0 is the LSB).

    The window can never reach the sign or exponent: k is capped at 23.
    """

    k: int

    def __post_init__(self) -> None:
        if not 1 <= self.k <= MANTISSA_BITS:
            raise ValueError(f"window width must be in [1, {MANTISSA_BITS}], got {self.k}")

    @property
    def mask(self) -> int:
        return (1 << self.k) - 1


def _window(w: BitWindow | int) -> BitWindow:
    return w if isinstance(w, BitWindow) else BitWindow(w)


def float_to_bits(x: float | np.float32) -> int:
    """Reinterpret a float32 value as its 32-bit pattern.

    Python floats are rounded to float32 first; numpy float32 scalars pass
    through bit-exactly (including NaN payloads, which a pack/unpack round
    trip through C double could quiet).
    """
    return int(_F32(x).view(_U32))


def bits_to_float(b: int) -> np.float32:
    """Reinterpret a 32-bit pattern as float32, with no rounding or FP ops."""
    return _U32(b).view(_F32)


def read_window(b: int, w: BitWindow | int) -> int:
    """Return the k low mantissa bits of ``b``."""
    return b & _window(w).mask


def write_window(b: int, w: BitWindow | int, payload_bits: int) -> int:
    """Substitute the k low mantissa bits of ``b`` with ``payload_bits``."""
    w = _window(w)
    if not 0 <= payload_bits <= w.mask:
        raise ValueError(f"payload {payload_bits:#x} does not fit a {w.k}-bit window")
    return (b & ~w.mask) | payload_bits


def read_window_array(words: np.ndarray, w: BitWindow | int) -> np.ndarray:
    """Vectorized :func:`read_window` over a uint32 array."""
    return words & _U32(_window(w).mask)


def write_window_array(words: np.ndarray, w: BitWindow | int, values: np.ndarray) -> np.ndarray:
    """Vectorized :func:`write_window`; returns a new uint32 array."""
    mask = _U32(_window(w).mask)
    return (words & ~mask) | values.astype(_U32)


def max_abs_perturbation(x: float | np.float32, w: BitWindow | int) -> float:
    """Largest |delta| any k-bit window substitution can cause on ``x``.

    For a normal number with biased exponent e this is
    ``2**(e-127) * (2**k - 1) / 2**23``. For subnormals (and zero) the same
    formula with e clamped to 1 is returned, which is a safe bound at
    ULP scale 2**-149. NaN and infinity have no meaningful bound.
    """
    w = _window(w)
    b = float_to_bits(x)
    e = (b >> MANTISSA_BITS) & 0xFF
    if e == 0xFF:
        raise SubnormalOrNonFinite(f"no perturbation bound for {x!r}")
    return math.ldexp(w.mask, max(e, 1) - EXPONENT_BIAS - MANTISSA_BITS)
