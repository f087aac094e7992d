"""Deterministic, seedable randomness built on SplitMix64.

SplitMix64 has a closed-form state: output i of a stream seeded with s is
``mix64(s + (i+1)*GAMMA)``. That makes every stream random-access and lets the
vectorized paths produce bit-identical output to the scalar reference
regardless of chunking or scheduling. Per-element streams are seeded with
``global_seed XOR fnv1a64(tensor_name) XOR element_index`` so that disarm
output does not depend on traversal or parallel order.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E37_79B9_7F4A_7C15

FNV1A64_OFFSET = 0xCBF2_9CE4_8422_2325
FNV1A64_PRIME = 0x0000_0100_0000_01B3

_U64 = np.uint64
_GAMMA64 = _U64(GAMMA)


def fnv1a64(data: bytes | str) -> int:
    """FNV-1a 64-bit hash, used to give each tensor name its own seed domain."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = FNV1A64_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV1A64_PRIME) & MASK64
    return h


def mix64(z: int) -> int:
    """SplitMix64 output mix (scalar reference)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58_476D_1CE4_E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D0_49BB_1331_11EB) & MASK64
    return z ^ (z >> 31)


def mix64_array(z: np.ndarray) -> np.ndarray:
    """Vectorized :func:`mix64` over a uint64 array (wrapping multiplies)."""
    z = (z ^ (z >> _U64(30))) * _U64(0xBF58_476D_1CE4_E5B9)
    z = (z ^ (z >> _U64(27))) * _U64(0x94D0_49BB_1331_11EB)
    return z ^ (z >> _U64(31))


class SplitMix64:
    """Scalar stream; the reference implementation the vector paths must match."""

    def __init__(self, seed: int):
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + GAMMA) & MASK64
        return mix64(self._state)


class VectorSplitMix64:
    """One independent SplitMix64 stream per lane, advanced in lockstep or per lane."""

    def __init__(self, seeds: np.ndarray):
        self.state = seeds.astype(_U64, copy=True)

    def next_all(self) -> np.ndarray:
        self.state += _GAMMA64
        return mix64_array(self.state)

    def next_at(self, idx: np.ndarray) -> np.ndarray:
        """Advance only the lanes in ``idx``; returns their outputs, aligned to idx."""
        s = self.state[idx] + _GAMMA64
        self.state[idx] = s
        return mix64_array(s)


def element_seeds(global_seed: int, tensor_name: str, n: int, start: int = 0) -> np.ndarray:
    """Per-element stream seeds for elements ``start .. start+n`` of a tensor."""
    base = _U64((global_seed ^ fnv1a64(tensor_name)) & MASK64)
    return base ^ np.arange(start, start + n, dtype=_U64)


def stream_u64(seed: int, n: int, offset: int = 0) -> np.ndarray:
    """Outputs ``offset .. offset+n`` of the scalar stream, computed in one shot."""
    idx = np.arange(offset + 1, offset + n + 1, dtype=_U64)
    return mix64_array(_U64(seed & MASK64) + idx * _GAMMA64)


def random_bytes(seed: int, n: int) -> bytes:
    """n deterministic bytes from one stream."""
    words = stream_u64(seed, (n + 7) // 8)
    return words.astype("<u8").tobytes()[:n]


def uniform_f32(seed: int, n: int, low: float = -0.5, high: float = 0.5) -> np.ndarray:
    """n float32 values uniform on [low, high), on a 2**-24 grid."""
    u = (stream_u64(seed, n) >> _U64(40)).astype(np.float64) * 2.0**-24
    return (low + u * (high - low)).astype(np.float32)
