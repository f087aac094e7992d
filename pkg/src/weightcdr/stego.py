"""LSB substitution attacks: payload framing, embedding, extraction, capacity.

The three named attacks differ only in window width: 23 bits (full mantissa),
12 bits (half mantissa), 4 bits (half byte). A payload is wrapped in a fixed
48-byte frame (magic, version, length, SHA-256 digest) and written as one
contiguous bit stream across the selected tensors: frame bytes in order, MSB
first within each byte, each element's window filled from bit k-1 down to
bit 0. The stream crosses tensor boundaries mid-frame; elements past the end
of the frame are never touched.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import numpy as np

from .containers import ModelContainer, TensorSelection, select_tensors
from .errors import PayloadTooLarge
from .floatbits import BitWindow

MAGIC = b"NNSG"
FRAME_VERSION = 1
FRAME_HEADER_BYTES = 48

FMLA_BITS = 23
HMLA_BITS = 12
HBLA_BITS = 4
ATTACK_PRESETS = {"fmla": FMLA_BITS, "hmla": HMLA_BITS, "hbla": HBLA_BITS}

_U32 = np.uint32


@dataclass(frozen=True)
class AttackSpec:
    """A k-bit window plus the tensor selection and traversal it applies to.

    Traversal is fixed: selection order, then flat row-major element order
    within each tensor. Embed and extract must share the spec.
    """

    window: BitWindow
    selection: TensorSelection

    @classmethod
    def for_container(
        cls,
        c: ModelContainer,
        k: int,
        mode: str = "all_f32",
        param: str | int | None = None,
    ) -> "AttackSpec":
        return cls(window=BitWindow(k), selection=select_tensors(c, mode, param))

    @property
    def k(self) -> int:
        return self.window.k


@dataclass(frozen=True)
class PayloadFrame:
    """Verifiable wrapper around a hidden payload.

    Layout (48-byte header, all integers little-endian):
    magic "NNSG" (4) | version 0x01 (1) | attack_k (1) | reserved 0x0000 (2) |
    payload_len (8) | SHA-256 of payload (32) | payload.
    """

    attack_k: int
    payload: bytes

    def encode(self) -> bytes:
        digest = hashlib.sha256(self.payload).digest()
        return (
            MAGIC
            + bytes([FRAME_VERSION, self.attack_k])
            + b"\x00\x00"
            + len(self.payload).to_bytes(8, "little")
            + digest
            + self.payload
        )


class ExtractionOutcome(str, Enum):
    PAYLOAD_RECOVERED = "PAYLOAD_RECOVERED"
    NO_FRAME = "NO_FRAME"
    LENGTH_OVERRUN = "LENGTH_OVERRUN"
    DIGEST_MISMATCH = "DIGEST_MISMATCH"


@dataclass(frozen=True)
class ExtractionResult:
    """Outcome of an extraction attempt; ``stage`` names the first failed check."""

    outcome: ExtractionOutcome
    stage: str | None = None  # MAGIC | VERSION | LENGTH | DIGEST
    details: str = ""
    payload: bytes | None = None
    header_attack_k: int | None = None
    declared_len: int | None = None

    @property
    def ok(self) -> bool:
        return self.outcome is ExtractionOutcome.PAYLOAD_RECOVERED

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "outcome": self.outcome.value,
            "stage": self.stage,
            "details": self.details,
            "payload_bytes": len(self.payload) if self.payload is not None else None,
            "header_attack_k": self.header_attack_k,
            "declared_len": self.declared_len,
        }


# --------------------------------------------------------------------------- #
# Capacity
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class TensorCapacity:
    name: str
    element_count: int
    capacity_bytes: int


@dataclass(frozen=True)
class CapacityReport:
    k: int
    per_tensor: tuple[TensorCapacity, ...]
    total_bits: int
    total_bytes: int
    total_mib_floor: int

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "k": self.k,
            "per_tensor": [
                {"name": t.name, "element_count": t.element_count, "capacity_bytes": t.capacity_bytes}
                for t in self.per_tensor
            ],
            "total_bits": self.total_bits,
            "total_bytes": self.total_bytes,
            "total_mib_floor": self.total_mib_floor,
        }


def capacity(element_counts: Iterable[tuple[str, int]], k: int) -> CapacityReport:
    """Hiding capacity of a selection at window width k.

    Per tensor: floor(elements * k / 8) bytes. The total is floor of the summed
    bit capacity, since the embedded stream runs contiguously across tensors.
    """
    window = BitWindow(k)  # validates k
    per = tuple(
        TensorCapacity(name, count, count * window.k // 8) for name, count in element_counts
    )
    total_bits = sum(t.element_count for t in per) * window.k
    total_bytes = total_bits // 8
    return CapacityReport(
        k=window.k,
        per_tensor=per,
        total_bits=total_bits,
        total_bytes=total_bytes,
        total_mib_floor=total_bytes // 2**20,
    )


def capacity_for(c: ModelContainer, spec: AttackSpec) -> CapacityReport:
    counts = [(name, c.tensor(name).element_count) for name in spec.selection.resolved]
    return capacity(counts, spec.k)


# --------------------------------------------------------------------------- #
# Embed / extract
# --------------------------------------------------------------------------- #

def _window_weights(k: int) -> np.ndarray:
    # Stream bit j of an element's chunk lands on window bit k-1-j (MSB first).
    return (np.uint32(1) << np.arange(k - 1, -1, -1, dtype=np.uint32)).astype(_U32)


def embed(c: ModelContainer, payload: bytes, spec: AttackSpec) -> ModelContainer:
    """Hide a framed payload in the window bits of the traversed elements.

    Returns a new container; only window bits of elements covered by the frame
    change, everything else is byte-identical.
    """
    report = capacity_for(c, spec)
    frame = PayloadFrame(attack_k=spec.k, payload=bytes(payload)).encode()
    if len(frame) > report.total_bytes:
        raise PayloadTooLarge(report.total_bytes, len(frame))

    k = spec.k
    mask = _U32(spec.window.mask)
    weights = _window_weights(k)
    bits = np.unpackbits(np.frombuffer(frame, dtype=np.uint8))
    n_windows = math.ceil(bits.size / k)
    bits = np.concatenate([bits, np.zeros(n_windows * k - bits.size, dtype=np.uint8)])

    out = c
    offset = 0
    for name in spec.selection.resolved:
        if offset >= bits.size:
            break
        tensor = c.tensor(name)
        take = min(tensor.element_count * k, bits.size - offset)
        n_here = take // k
        values = bits[offset : offset + take].reshape(n_here, k).astype(_U32) @ weights
        words = tensor.as_u32().copy()
        words[:n_here] = (words[:n_here] & ~mask) | values.astype(_U32)
        out = out.with_tensor_data(name, words.astype("<u4").tobytes())
        offset += take
    return out


def read_stream_bytes(c: ModelContainer, spec: AttackSpec, n_bytes: int, skip_bytes: int = 0) -> bytes:
    """Raw, unverified read of the embedded bit stream (analysis/BER use only).

    Returns up to ``n_bytes`` starting ``skip_bytes`` into the stream; shorter
    if the selection runs out of window bits.
    """
    k = spec.k
    needed_bits = (skip_bytes + n_bytes) * 8
    chunks = []
    got = 0
    shifts = np.arange(k - 1, -1, -1, dtype=np.uint32)
    for name in spec.selection.resolved:
        if got >= needed_bits:
            break
        tensor = c.tensor(name)
        n_here = min(tensor.element_count, math.ceil((needed_bits - got) / k))
        windows = tensor.as_u32()[:n_here]
        chunk = ((windows[:, None] >> shifts) & _U32(1)).astype(np.uint8).reshape(-1)
        chunks.append(chunk)
        got += chunk.size
    if not chunks:
        return b""
    bits = np.concatenate(chunks)[:needed_bits]
    usable = bits.size - bits.size % 8
    return np.packbits(bits[:usable]).tobytes()[skip_bytes:]


def extract(c: ModelContainer, spec: AttackSpec) -> ExtractionResult:
    """Attempt to recover a framed payload, with zero knowledge of any embed.

    Reads the 48 header bytes off the traversal, validates magic and version,
    then reads the declared payload and verifies its SHA-256 digest.
    """
    report = capacity_for(c, spec)
    if report.total_bytes < FRAME_HEADER_BYTES:
        return ExtractionResult(
            ExtractionOutcome.NO_FRAME,
            stage="MAGIC",
            details=f"selection holds {report.total_bytes} bytes, less than a frame header",
        )
    header = read_stream_bytes(c, spec, FRAME_HEADER_BYTES)
    if header[:4] != MAGIC:
        return ExtractionResult(
            ExtractionOutcome.NO_FRAME,
            stage="MAGIC",
            details=f"magic {header[:4].hex()} != {MAGIC.hex()}",
        )
    if header[4] != FRAME_VERSION:
        return ExtractionResult(
            ExtractionOutcome.NO_FRAME,
            stage="VERSION",
            details=f"frame version {header[4]} unsupported",
        )
    attack_k = header[5]
    declared = int.from_bytes(header[8:16], "little")
    if FRAME_HEADER_BYTES + declared > report.total_bytes:
        return ExtractionResult(
            ExtractionOutcome.LENGTH_OVERRUN,
            stage="LENGTH",
            details=f"declared payload of {declared} bytes exceeds capacity {report.total_bytes}",
            header_attack_k=attack_k,
            declared_len=declared,
        )
    digest = header[16:48]
    payload = read_stream_bytes(c, spec, declared, skip_bytes=FRAME_HEADER_BYTES)
    if hashlib.sha256(payload).digest() != digest:
        return ExtractionResult(
            ExtractionOutcome.DIGEST_MISMATCH,
            stage="DIGEST",
            details="payload digest does not match frame header",
            header_attack_k=attack_k,
            declared_len=declared,
        )
    return ExtractionResult(
        ExtractionOutcome.PAYLOAD_RECOVERED,
        payload=payload,
        header_attack_k=attack_k,
        declared_len=declared,
    )
