"""Load weight containers with the ecosystem's own readers and compare them
bit-for-bit against the canonical JSON dump produced by ``weight-cdr inspect
--dump-json``.

Reader routing: ``safetensors.numpy`` for safetensors files, ``numpy.load``
for NPY-directory members, and a plain ``numpy.frombuffer`` over the blob for
raw float32 containers. This package deliberately does not import the
producing toolkit; the files and the JSON dump are the whole contract.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from safetensors.numpy import load_file

DTYPE_MAP = {
    "F64": np.float64, "F32": np.float32, "F16": np.float16,
    "I64": np.int64, "I32": np.int32, "I16": np.int16, "I8": np.int8,
    "U64": np.uint64, "U32": np.uint32, "U16": np.uint16, "U8": np.uint8,
    "BOOL": np.bool_,
}


class LoadFailure(Exception):
    """The ecosystem reader could not load the file."""


@dataclass(frozen=True)
class TensorMismatch:
    name: str
    first_differing_index: int  # element index; -1 for missing/shape problems


@dataclass(frozen=True)
class InteropResult:
    file: str
    loaded: bool
    tensor_mismatches: tuple[TensorMismatch, ...] = ()
    notes: tuple[str, ...] = field(default=())

    @property
    def ok(self) -> bool:
        return self.loaded and not self.tensor_mismatches

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "file": self.file,
            "loaded": self.loaded,
            "tensor_mismatches": [
                {"name": m.name, "first_differing_index": m.first_differing_index}
                for m in self.tensor_mismatches
            ],
            "notes": list(self.notes),
        }


def _load_with_ecosystem_reader(path: Path) -> dict[str, np.ndarray]:
    try:
        if path.is_dir():
            manifest = json.loads((path / "manifest.json").read_text("utf-8"))
            return {
                entry["name"]: np.load(path / entry["file"])
                for entry in manifest["tensors"]
            }
        sidecar = path.with_name(path.name + ".json")
        if sidecar.is_file():
            blob = path.read_bytes()
            doc = json.loads(sidecar.read_text("utf-8"))
            arrays: dict[str, np.ndarray] = {}
            pos = 0
            for entry in doc["tensors"]:
                shape = tuple(entry["shape"])
                n = int(np.prod(shape, dtype=np.int64)) * 4
                arrays[entry["name"]] = np.frombuffer(blob[pos : pos + n], "<f4").reshape(shape)
                pos += n
            if pos != len(blob):
                raise ValueError(f"{len(blob) - pos} blob bytes not described by the sidecar")
            return arrays
        return load_file(str(path))
    except Exception as exc:
        raise LoadFailure(f"{type(exc).__name__}: {exc}") from exc


def validate_load(path: str | Path, dump_path: str | Path) -> InteropResult:
    """Load ``path`` with the ecosystem reader and compare against the dump.

    ``loaded`` is true when every tensor named in the dump came back with its
    declared shape and dtype; byte differences are reported per tensor as the
    first differing element index.
    """
    path = Path(path)
    dump = json.loads(Path(dump_path).read_text("utf-8"))
    arrays = _load_with_ecosystem_reader(path)

    mismatches: list[TensorMismatch] = []
    notes: list[str] = []
    loaded = True
    for entry in dump["tensors"]:
        name = entry["name"]
        if name not in arrays:
            loaded = False
            mismatches.append(TensorMismatch(name, -1))
            notes.append(f"tensor {name!r} missing from ecosystem load")
            continue
        arr = arrays[name]
        if tuple(arr.shape) != tuple(entry["shape"]):
            loaded = False
            mismatches.append(TensorMismatch(name, -1))
            notes.append(f"tensor {name!r} shape {arr.shape} != declared {entry['shape']}")
            continue
        expected_np = DTYPE_MAP.get(entry["dtype"])
        if expected_np is not None and arr.dtype != np.dtype(expected_np):
            loaded = False
            mismatches.append(TensorMismatch(name, -1))
            notes.append(f"tensor {name!r} dtype {arr.dtype} != declared {entry['dtype']}")
            continue
        got = arr.tobytes()
        want = bytes.fromhex(entry["data_hex"])
        if got != want:
            width = arr.dtype.itemsize
            byte_idx = next(i for i, (a, b) in enumerate(zip(got, want)) if a != b)
            mismatches.append(TensorMismatch(name, byte_idx // width))
    extras = set(arrays) - {entry["name"] for entry in dump["tensors"]}
    if extras:
        notes.append(f"file holds tensors absent from the dump: {sorted(extras)}")
    return InteropResult(
        file=str(path),
        loaded=loaded,
        tensor_mismatches=tuple(mismatches),
        notes=tuple(notes),
    )
