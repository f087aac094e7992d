"""Minimal deterministic dense-network forward pass over container weights.

Stands in for a full accuracy harness at desk scale: weight-bit perturbations
are judged by how far the logits of a small fixture MLP drift. Per layer, the
dot products accumulate in float64 and the result is rounded back to float32,
which removes summation-order sensitivity from golden tests.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .containers import ContainerFormat, ModelContainer
from .errors import ShapeMismatch
from .rng import fnv1a64, uniform_f32

_WEIGHT_RE = re.compile(r"fc(\d+)\.weight")


class Activation(str, Enum):
    RELU = "relu"
    NONE = "none"


@dataclass(frozen=True)
class MlpLayer:
    weights: np.ndarray  # float32 [n_out, n_in]
    bias: np.ndarray  # float32 [n_out]
    activation: Activation


@dataclass(frozen=True)
class MlpModel:
    layers: tuple[MlpLayer, ...]

    def __post_init__(self) -> None:
        if not self.layers:
            raise ShapeMismatch("model has no layers")
        for i, layer in enumerate(self.layers):
            if layer.weights.ndim != 2 or layer.bias.shape != (layer.weights.shape[0],):
                raise ShapeMismatch(f"layer {i}: weights {layer.weights.shape} / bias {layer.bias.shape}")
            if i and layer.weights.shape[1] != self.layers[i - 1].weights.shape[0]:
                raise ShapeMismatch(
                    f"layer {i} expects {layer.weights.shape[1]} inputs, "
                    f"previous layer emits {self.layers[i - 1].weights.shape[0]}"
                )
        if self.layers[-1].activation is not Activation.NONE:
            raise ShapeMismatch("final layer must emit raw logits (activation none)")

    @property
    def n_in(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.layers[-1].weights.shape[0]

    @classmethod
    def from_container(cls, c: ModelContainer) -> "MlpModel":
        """Load layers named ``fc{i}.weight`` / ``fc{i}.bias``; hidden layers get
        ReLU, the last layer none."""
        indices = sorted(
            int(m.group(1)) for t in c.tensors if (m := _WEIGHT_RE.fullmatch(t.name))
        )
        if not indices:
            raise ShapeMismatch("container holds no fc{i}.weight tensors")
        layers = []
        for pos, i in enumerate(indices):
            w = c.tensor(f"fc{i}.weight")
            b = c.tensor(f"fc{i}.bias")
            act = Activation.NONE if pos == len(indices) - 1 else Activation.RELU
            layers.append(
                MlpLayer(
                    weights=w.as_f32().reshape(w.shape),
                    bias=b.as_f32().reshape(b.shape),
                    activation=act,
                )
            )
        return cls(tuple(layers))

    def to_container(self) -> ModelContainer:
        arrays: dict[str, np.ndarray] = {}
        for i, layer in enumerate(self.layers):
            arrays[f"fc{i}.weight"] = layer.weights
            arrays[f"fc{i}.bias"] = layer.bias
        return ModelContainer.from_arrays(arrays, ContainerFormat.SAFETENSORS)


def forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Logits for one float32 input vector."""
    x = np.asarray(x, dtype=np.float32)
    if x.shape != (model.n_in,):
        raise ShapeMismatch(f"input shape {x.shape} != ({model.n_in},)")
    h = x
    for layer in model.layers:
        acc = layer.weights.astype(np.float64) @ h.astype(np.float64)
        acc += layer.bias.astype(np.float64)
        h = acc.astype(np.float32)
        if layer.activation is Activation.RELU:
            h = np.maximum(h, np.float32(0.0))
    return h


@dataclass(frozen=True)
class DriftReport:
    top1_agreement: float
    mean_rel_l2: float

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "top1_agreement": self.top1_agreement,
            "mean_rel_l2": self.mean_rel_l2,
        }


def drift_inputs(seed: int, n_inputs: int, n_in: int) -> list[np.ndarray]:
    """The seeded uniform[-0.5, 0.5) input batch used by :func:`drift`."""
    return [
        uniform_f32(seed ^ fnv1a64("drift-input") ^ i, n_in) for i in range(n_inputs)
    ]


def drift(m_ref: MlpModel, m_mod: MlpModel, n_inputs: int, seed: int) -> DriftReport:
    """Argmax agreement and mean relative logit distance over seeded inputs."""
    if m_ref.n_in != m_mod.n_in or m_ref.n_out != m_mod.n_out:
        raise ShapeMismatch("models are not shape-compatible")
    agree = 0
    rels = []
    for x in drift_inputs(seed, n_inputs, m_ref.n_in):
        ref = forward(m_ref, x).astype(np.float64)
        mod = forward(m_mod, x).astype(np.float64)
        agree += int(np.argmax(ref) == np.argmax(mod))
        rels.append(float(np.linalg.norm(mod - ref) / np.linalg.norm(ref)))
    return DriftReport(top1_agreement=agree / n_inputs, mean_rel_l2=float(np.mean(rels)))
