"""Zero-trust disarm transforms, applied to every model regardless of suspicion.

Three policies:

* FLP: replace all 23 mantissa bits of every selected element with PRNG bits.
* K-LRBP(k): per element, choose k distinct mantissa bit positions from the
  element's PRNG stream (successive outputs reduced mod 23, rejecting repeats)
  and set each chosen bit to a fresh random bit, so a chosen bit flips with
  probability 1/2.
* Qint8: symmetric per-tensor int8 quantization. ``scale = amax / 128``,
  ``q = clip(round(x / scale), -128, 127)`` with round-half-away-from-zero;
  the reconstruction writes ``q * scale`` back as float32.

FLP and K-LRBP never touch sign or exponent bits. All transforms are
deterministic functions of (container, policy): per-element PRNG streams are
seeded from (seed, tensor name, element index), so output is independent of
traversal or parallel order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .containers import ModelContainer, WeightTensor, select_tensors
from .errors import UnsupportedFormat
from .floatbits import MANTISSA_BITS, MANTISSA_MASK, SIGN_EXPONENT_MASK
from .rng import VectorSplitMix64, element_seeds

_U32 = np.uint32
_U64 = np.uint64

KLRBP_EVALUATED_KS = (1, 5, 10)


class PolicyKind(str, Enum):
    FLP = "flp"
    KLRBP = "klrbp"
    QINT8 = "qint8"


class QuantOutput(str, Enum):
    DEQUANT_F32 = "dequant_f32"
    INT8_SIDE_CAR = "int8_sidecar"


@dataclass(frozen=True)
class CdrPolicy:
    """Disarm configuration: what to do, with what seed, on which tensors."""

    kind: PolicyKind
    k: int | None = None
    seed: int = 0
    output: QuantOutput = QuantOutput.DEQUANT_F32
    selection_mode: str = "all_f32"
    selection_param: str | int | None = None

    def __post_init__(self) -> None:
        if self.kind is PolicyKind.KLRBP:
            if self.k is None or not 1 <= self.k <= MANTISSA_BITS:
                raise ValueError(f"KLRBP needs k in [1, {MANTISSA_BITS}], got {self.k}")
        elif self.k is not None:
            raise ValueError(f"{self.kind.value} does not take k")

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "kind": self.kind.value,
            "k": self.k,
            "seed": self.seed,
            "output": self.output.value,
            "selection": {"mode": self.selection_mode, "param": self.selection_param},
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "CdrPolicy":
        sel = doc.get("selection", {})
        return cls(
            kind=PolicyKind(doc["kind"]),
            k=doc.get("k"),
            seed=int(doc.get("seed", 0)),
            output=QuantOutput(doc.get("output", QuantOutput.DEQUANT_F32.value)),
            selection_mode=sel.get("mode", "all_f32"),
            selection_param=sel.get("param"),
        )


@dataclass(frozen=True)
class QuantParams:
    """Per-tensor symmetric quantization parameters (exact float32 values)."""

    amax: float
    scale: float


@dataclass(frozen=True)
class QuantWarning:
    tensor: str
    nonfinite_count: int


@dataclass(frozen=True)
class DisarmResult:
    container: ModelContainer
    warnings: tuple[QuantWarning, ...] = field(default=())

    def warnings_json(self) -> dict:
        return {
            "schema_version": 1,
            "warnings": [
                {"tensor": w.tensor, "nonfinite_count": w.nonfinite_count} for w in self.warnings
            ],
        }


# --------------------------------------------------------------------------- #
# Random bit substitution
# --------------------------------------------------------------------------- #

def _flp_words(words: np.ndarray, seeds: np.ndarray) -> np.ndarray:
    mantissa = (VectorSplitMix64(seeds).next_all() & _U64(MANTISSA_MASK)).astype(_U32)
    return (words & _U32(SIGN_EXPONENT_MASK)) | mantissa


def _klrbp_words(words: np.ndarray, seeds: np.ndarray, k: int) -> np.ndarray:
    n = words.size
    rng = VectorSplitMix64(seeds)
    chosen = np.zeros(n, dtype=_U32)
    positions = np.zeros((n, k), dtype=_U32)
    count = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    while active.size:
        z = rng.next_at(active)
        cand = (z % _U64(MANTISSA_BITS)).astype(_U32)
        bit = _U32(1) << cand
        fresh = (chosen[active] & bit) == 0
        hit = active[fresh]
        positions[hit, count[hit]] = cand[fresh]
        chosen[hit] |= bit[fresh]
        count[hit] += 1
        active = active[count[active] < k]
    values = rng.next_at(np.arange(n))
    out = words.copy()
    for j in range(k):
        pos = positions[:, j]
        pos_mask = _U32(1) << pos
        rnd = ((values >> _U64(j)) & _U64(1)).astype(_U32) << pos
        out = (out & ~pos_mask) | rnd
    return out


def _substitute(c: ModelContainer, policy: CdrPolicy, fn) -> ModelContainer:
    selection = select_tensors(c, policy.selection_mode, policy.selection_param)
    out = c
    for name in selection.resolved:
        tensor = c.tensor(name)
        if tensor.element_count == 0:
            continue
        seeds = element_seeds(policy.seed, name, tensor.element_count)
        words = fn(tensor.as_u32(), seeds)
        out = out.with_tensor_data(name, words.astype("<u4").tobytes())
    return out


def cdr_flp(c: ModelContainer, policy: CdrPolicy) -> ModelContainer:
    """Randomize all 23 mantissa bits of every selected element."""
    if policy.kind is not PolicyKind.FLP:
        raise ValueError(f"expected an FLP policy, got {policy.kind.value}")
    return _substitute(c, policy, _flp_words)


def cdr_klrbp(c: ModelContainer, policy: CdrPolicy) -> ModelContainer:
    """Set k randomly chosen mantissa bits per selected element to random bits."""
    if policy.kind is not PolicyKind.KLRBP:
        raise ValueError(f"expected a KLRBP policy, got {policy.kind.value}")
    return _substitute(c, policy, lambda words, seeds: _klrbp_words(words, seeds, policy.k))


# --------------------------------------------------------------------------- #
# Qint8 quantize / dequantize
# --------------------------------------------------------------------------- #

def quantize_array(x: np.ndarray) -> tuple[np.ndarray, QuantParams, int]:
    """Symmetric int8 quantization of a float32 array.

    Returns (int8 codes, params, nonfinite count). NaN/Inf are excluded from
    amax and quantized to 0. amax == 0 degenerates to an all-zero output.
    """
    finite = np.isfinite(x)
    nonfinite = int(x.size - np.count_nonzero(finite))
    if x.size and finite.any():
        amax = np.float32(np.abs(x[finite]).max())
    else:
        amax = np.float32(0.0)
    scale = np.float32(amax / np.float32(128.0))  # exact: power-of-two divide
    if scale == 0.0:
        q = np.zeros(x.shape, dtype=np.int8)
    else:
        v = x.astype(np.float64) / float(scale)
        r = np.copysign(np.floor(np.abs(v) + 0.5), v)  # round half away from zero
        r[~finite] = 0.0
        q = np.clip(r, -128, 127).astype(np.int8)
    return q, QuantParams(amax=float(amax), scale=float(scale)), nonfinite


def dequantize_array(q: np.ndarray, params: QuantParams) -> np.ndarray:
    """Reconstruct float32 values ``q * scale`` (rounded to nearest float32)."""
    return q.astype(np.float32) * np.float32(params.scale)


def _qint8_with_warnings(c: ModelContainer, policy: CdrPolicy) -> DisarmResult:
    selection = select_tensors(c, policy.selection_mode, policy.selection_param)
    out = c
    warnings = []
    sidecars: list[WeightTensor] = []
    meta: dict[str, str] = {}
    for name in selection.resolved:
        tensor = c.tensor(name)
        q, params, nonfinite = quantize_array(tensor.as_f32())
        if nonfinite:
            warnings.append(QuantWarning(tensor=name, nonfinite_count=nonfinite))
        out = out.with_tensor_data(name, dequantize_array(q, params).astype("<f4").tobytes())
        if policy.output is QuantOutput.INT8_SIDE_CAR:
            side_name = f"{name}.qint8"
            if side_name in c.names():
                raise UnsupportedFormat(f"sidecar name {side_name!r} already exists")
            sidecars.append(WeightTensor(side_name, tensor.shape, "I8", q.tobytes()))
            meta[f"{name}.amax"] = repr(params.amax)
            meta[f"{name}.scale"] = repr(params.scale)
    if sidecars:
        out = out.with_added_tensors(sidecars, meta)
    return DisarmResult(container=out, warnings=tuple(warnings))


def cdr_qint8(c: ModelContainer, policy: CdrPolicy) -> ModelContainer:
    """Quantize every selected tensor to int8 and write the dequantized float32 back."""
    if policy.kind is not PolicyKind.QINT8:
        raise ValueError(f"expected a QINT8 policy, got {policy.kind.value}")
    return _qint8_with_warnings(c, policy).container


def apply_policy(c: ModelContainer, policy: CdrPolicy) -> DisarmResult:
    """Dispatch a policy; the result carries any per-tensor warnings."""
    if policy.kind is PolicyKind.FLP:
        return DisarmResult(container=cdr_flp(c, policy))
    if policy.kind is PolicyKind.KLRBP:
        return DisarmResult(container=cdr_klrbp(c, policy))
    return _qint8_with_warnings(c, policy)
