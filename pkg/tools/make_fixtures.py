#!/usr/bin/env python3
"""Regenerate the checked-in test fixtures (byte-identical on every run).

Produces, under tests/fixtures/:
  three_tensor.safetensors   golden container for byte-identity tests
  npy_dir/                   golden NPY directory container
  raw_blob.bin + .json       golden raw-f32 container
  mlp_784x128x64x10.safetensors  the drift fixture model
  golden_logits.json         logits of the fixture on a fixed seeded input
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from weightcdr.containers import ContainerFormat, ModelContainer, save_container
from weightcdr.mlp import MlpModel, forward
from weightcdr.rng import fnv1a64, uniform_f32

FIXTURES = Path(__file__).resolve().parents[1] / "tests" / "fixtures"

MLP_SEED = 20240107
MLP_DIMS = (784, 128, 64, 10)
GOLDEN_INPUT_SEED = 314159


def small_container(fmt: ContainerFormat) -> ModelContainer:
    arrays = {
        "conv1.weight": uniform_f32(fnv1a64("fx-conv1"), 96).reshape(8, 4, 3),
        "conv2.weight": uniform_f32(fnv1a64("fx-conv2"), 128).reshape(16, 8),
        "fc.bias": uniform_f32(fnv1a64("fx-bias"), 10),
    }
    return ModelContainer.from_arrays(arrays, fmt, metadata={"origin": "fixture", "rev": "1"})


def build_fixture_mlp(seed: int = MLP_SEED, dims: tuple[int, ...] = MLP_DIMS) -> ModelContainer:
    arrays: dict[str, np.ndarray] = {}
    for i, (n_in, n_out) in enumerate(zip(dims, dims[1:])):
        w = uniform_f32(seed ^ fnv1a64(f"fc{i}.weight"), n_out * n_in).reshape(n_out, n_in)
        b = uniform_f32(seed ^ fnv1a64(f"fc{i}.bias"), n_out)
        arrays[f"fc{i}.weight"] = w
        arrays[f"fc{i}.bias"] = b
    return ModelContainer.from_arrays(arrays, ContainerFormat.SAFETENSORS)


def golden_input(n_in: int = MLP_DIMS[0]) -> np.ndarray:
    return uniform_f32(GOLDEN_INPUT_SEED ^ fnv1a64("golden-input"), n_in)


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)

    save_container(small_container(ContainerFormat.SAFETENSORS), FIXTURES / "three_tensor.safetensors")
    save_container(small_container(ContainerFormat.NPY_DIR), FIXTURES / "npy_dir")
    save_container(small_container(ContainerFormat.RAW_F32), FIXTURES / "raw_blob.bin")

    mlp_container = build_fixture_mlp()
    save_container(mlp_container, FIXTURES / "mlp_784x128x64x10.safetensors")

    logits = forward(MlpModel.from_container(mlp_container), golden_input())
    doc = {
        "schema_version": 1,
        "mlp_seed": MLP_SEED,
        "dims": list(MLP_DIMS),
        "input_seed": GOLDEN_INPUT_SEED,
        "logits": [float(v) for v in logits],
    }
    (FIXTURES / "golden_logits.json").write_text(json.dumps(doc, indent=2) + "\n")
    print(f"fixtures written to {FIXTURES}")


if __name__ == "__main__":
    main()
