"""Reports that quantify attacks and defenses: perturbation statistics,
bit error rates, capacity tables, and seeded prevention trials."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .cdr import CdrPolicy, apply_policy
from .containers import ContainerFormat, ModelContainer
from .errors import LengthMismatch, ShapeMismatch
from .rng import fnv1a64, random_bytes, stream_u64, uniform_f32
from .stego import (
    AttackSpec,
    CapacityReport,
    ExtractionOutcome,
    FRAME_HEADER_BYTES,
    capacity,
    embed,
    extract,
    read_stream_bytes,
)

# Conv-layer float32 counts of well-known ImageNet models, used for capacity
# reporting against familiar architectures.
KNOWN_MODEL_NEURON_COUNTS = {
    "ResNet101": 42_394_816,
    "Vgg19": 20_018_880,
    "Vgg16": 14_710_464,
    "Inception": 24_307_040,
    "ResNet50": 23_454_912,
    "ResNet18": 11_166_912,
    "Mobilenet": 2_942_472,
}

# Checked on parse; values below 2**-126 are subnormal and get an absolute
# delta reported in the relative slot instead.
_SMALLEST_NORMAL = 2.0**-126


@dataclass(frozen=True)
class TensorPerturbation:
    name: str
    element_count: int
    count_changed: int
    max_abs_delta: float
    max_rel_delta: float
    mean_abs_delta: float


@dataclass(frozen=True)
class PerturbationReport:
    per_tensor: tuple[TensorPerturbation, ...]
    total_elements: int
    total_changed: int
    max_abs_delta: float
    max_rel_delta: float
    mean_abs_delta: float

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "per_tensor": [dataclasses.asdict(t) for t in self.per_tensor],
            "total_elements": self.total_elements,
            "total_changed": self.total_changed,
            "max_abs_delta": self.max_abs_delta,
            "max_rel_delta": self.max_rel_delta,
            "mean_abs_delta": self.mean_abs_delta,
        }

    def to_text(self) -> str:
        lines = [
            f"{'tensor':<24} {'elements':>10} {'changed':>10} "
            f"{'max|d|':>12} {'max rel':>12} {'mean|d|':>12}"
        ]
        for t in self.per_tensor:
            lines.append(
                f"{t.name:<24} {t.element_count:>10} {t.count_changed:>10} "
                f"{t.max_abs_delta:>12.5g} {t.max_rel_delta:>12.5g} {t.mean_abs_delta:>12.5g}"
            )
        lines.append(
            f"{'TOTAL':<24} {self.total_elements:>10} {self.total_changed:>10} "
            f"{self.max_abs_delta:>12.5g} {self.max_rel_delta:>12.5g} {self.mean_abs_delta:>12.5g}"
        )
        return "\n".join(lines)


def perturbation_report(before: ModelContainer, after: ModelContainer) -> PerturbationReport:
    """Elementwise weight deltas between two structurally identical containers.

    Relative deltas divide by |before|; where |before| is subnormal or zero the
    absolute delta is reported in its place. Only F32 tensors are compared.
    """
    if before.names() != after.names():
        raise ShapeMismatch("containers hold different tensor names")
    per = []
    total = changed = 0
    sum_abs = 0.0
    max_abs = max_rel = 0.0
    for t_before in before.tensors:
        t_after = after.tensor(t_before.name)
        if t_before.shape != t_after.shape or t_before.dtype != t_after.dtype:
            raise ShapeMismatch(f"tensor {t_before.name!r} changed shape or dtype")
        if not t_before.is_f32:
            continue
        x = t_before.as_f32().astype(np.float64)
        y = t_after.as_f32().astype(np.float64)
        n_changed = int(np.count_nonzero(t_before.as_u32() != t_after.as_u32()))
        delta = np.abs(y - x)
        denom = np.abs(x)
        rel = np.where(denom >= _SMALLEST_NORMAL, delta / np.maximum(denom, _SMALLEST_NORMAL), delta)
        per.append(
            TensorPerturbation(
                name=t_before.name,
                element_count=x.size,
                count_changed=n_changed,
                max_abs_delta=float(delta.max(initial=0.0)),
                max_rel_delta=float(rel.max(initial=0.0)),
                mean_abs_delta=float(delta.mean()) if x.size else 0.0,
            )
        )
        total += x.size
        changed += n_changed
        sum_abs += float(delta.sum())
        max_abs = max(max_abs, per[-1].max_abs_delta)
        max_rel = max(max_rel, per[-1].max_rel_delta)
    return PerturbationReport(
        per_tensor=tuple(per),
        total_elements=total,
        total_changed=changed,
        max_abs_delta=max_abs,
        max_rel_delta=max_rel,
        mean_abs_delta=sum_abs / total if total else 0.0,
    )


def bit_error_rate(original: bytes, extracted: bytes) -> float:
    """Hamming distance over total bits between two equal-length byte strings."""
    if len(original) != len(extracted):
        raise LengthMismatch(f"{len(original)} bytes vs {len(extracted)} bytes")
    if not original:
        return 0.0
    a = np.frombuffer(original, dtype=np.uint8)
    b = np.frombuffer(extracted, dtype=np.uint8)
    differing = int(np.unpackbits(a ^ b).sum())
    return differing / (8 * len(original))


# --------------------------------------------------------------------------- #
# Prevention trials
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class PreventionTrialReport:
    attack_k: int
    policy: dict | None  # policy JSON, or None for the no-CDR control arm
    trials: int
    outcomes: dict[str, int]
    prevention_rate: float
    mean_payload_ber: float

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "attack_k": self.attack_k,
            "policy": self.policy,
            "trials": self.trials,
            "outcomes": dict(self.outcomes),
            "prevention_rate": self.prevention_rate,
            "mean_payload_ber": self.mean_payload_ber,
        }

    def to_text(self) -> str:
        policy = "none (control)" if self.policy is None else _policy_label(self.policy)
        parts = [f"attack k={self.attack_k}  policy={policy}  trials={self.trials}"]
        for name, count in self.outcomes.items():
            parts.append(f"  {name:<18} {count}")
        parts.append(f"  prevention_rate    {self.prevention_rate:.4f}")
        parts.append(f"  mean_payload_ber   {self.mean_payload_ber:.6f}")
        return "\n".join(parts)


def _policy_label(doc: dict) -> str:
    kind = doc.get("kind", "?")
    return f"{kind}(k={doc['k']})" if doc.get("k") is not None else str(kind)


def _trial_container(seed: int, element_count: int) -> ModelContainer:
    weights = uniform_f32(seed, element_count)
    return ModelContainer.from_arrays({"weights": weights}, ContainerFormat.SAFETENSORS)


def prevention_trials(
    attack_k: int,
    policy: CdrPolicy | None,
    payload_size: int,
    trials: int,
    seed: int = 0,
    element_count: int | None = None,
) -> PreventionTrialReport:
    """Embed, disarm, extract over fresh seeded trials; counts the outcomes.

    Each trial builds a synthetic float32 carrier (just large enough for the
    frame unless ``element_count`` says otherwise), embeds a fresh random
    payload, applies the policy (or nothing, as the control arm), then runs a
    zero-knowledge extraction. The payload BER is measured on a raw no-verify
    read of the payload region.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    frame_bits = (FRAME_HEADER_BYTES + payload_size) * 8
    n_elements = element_count or math.ceil(frame_bits / attack_k) + 256
    trial_seeds = stream_u64(seed ^ fnv1a64("prevention-trial"), trials)
    outcomes = {o.value: 0 for o in ExtractionOutcome}
    bers = []
    for i in range(trials):
        trial_seed = int(trial_seeds[i])
        payload = random_bytes(trial_seed ^ fnv1a64("payload"), payload_size)
        carrier = _trial_container(trial_seed ^ fnv1a64("carrier"), n_elements)
        spec = AttackSpec.for_container(carrier, attack_k)
        attacked = embed(carrier, payload, spec)
        if policy is None:
            received = attacked
        else:
            per_trial = dataclasses.replace(policy, seed=policy.seed ^ trial_seed)
            received = apply_policy(attacked, per_trial).container
        result = extract(received, spec)
        outcomes[result.outcome.value] += 1
        raw = read_stream_bytes(received, spec, payload_size, skip_bytes=FRAME_HEADER_BYTES)
        bers.append(bit_error_rate(payload, raw))
    recovered = outcomes[ExtractionOutcome.PAYLOAD_RECOVERED.value]
    return PreventionTrialReport(
        attack_k=attack_k,
        policy=policy.to_json_dict() if policy is not None else None,
        trials=trials,
        outcomes=outcomes,
        prevention_rate=1.0 - recovered / trials,
        mean_payload_ber=float(np.mean(bers)),
    )


# --------------------------------------------------------------------------- #
# Capacity table
# --------------------------------------------------------------------------- #

def capacity_rows(counts: dict[str, int], ks: tuple[int, ...] = (23, 12, 4)) -> list[dict]:
    rows = []
    for name, count in counts.items():
        row: dict[str, object] = {"name": name, "element_count": count}
        for k in ks:
            row[f"mib_k{k}"] = capacity([(name, count)], k).total_mib_floor
        rows.append(row)
    return rows


def capacity_table(counts: dict[str, int], ks: tuple[int, ...] = (23, 12, 4)) -> str:
    """Aligned text table: one row per model, one MiB column per window width."""
    headers = ["Net", "#Neurons"] + [f"k={k} [MiB]" for k in ks]
    rows = [
        [r["name"], f"{r['element_count']:,}"] + [str(r[f"mib_k{k}"]) for k in ks]
        for r in capacity_rows(counts, ks)
    ]
    widths = [max(len(h), *(len(row[i]) for row in rows)) for i, h in enumerate(headers)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    return "\n".join([fmt.format(*headers)] + [fmt.format(*row) for row in rows])


def capacity_report_json(counts: dict[str, int], ks: tuple[int, ...] = (23, 12, 4)) -> dict:
    return {"schema_version": 1, "rows": capacity_rows(counts, ks)}


__all__ = [
    "KNOWN_MODEL_NEURON_COUNTS",
    "PerturbationReport",
    "TensorPerturbation",
    "PreventionTrialReport",
    "perturbation_report",
    "bit_error_rate",
    "prevention_trials",
    "capacity_rows",
    "capacity_table",
    "capacity_report_json",
    "CapacityReport",
]
