"""Bit-exact parsing and serialization of model-weight containers.

Three formats are supported without any ML framework:

* SAFETENSORS: one file, ``u64-LE header length + UTF-8 JSON header + data``.
  The JSON header maps tensor name to ``{dtype, shape, data_offsets}``; an
  optional ``__metadata__`` object carries string key/value pairs.
* NPY_DIR: a directory of NPY v1.0 files plus a ``manifest.json`` naming them.
* RAW_F32: a flat little-endian float32 blob plus a ``<blob>.json`` sidecar.

Parsing never reads past declared lengths and caches the raw header bytes it
saw, so ``serialize(parse(bytes)) == bytes`` holds for any well-formed input
as long as tensor data was only replaced size-for-size. Freshly built
containers serialize in a canonical form (sorted JSON keys, no padding) that
round-trips through parse byte-identically as well.
"""

from __future__ import annotations

import ast
import json
import math
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    EmptySelection,
    MalformedHeader,
    OverlappingOffsets,
    TruncatedData,
    UnsupportedFormat,
)

F32 = "F32"

# Element widths for the safetensors-style dtype tags we understand. Unknown
# tags still pass through opaquely; they just skip the width consistency check.
DTYPE_WIDTHS = {
    "F64": 8, "F32": 4, "F16": 2, "BF16": 2,
    "I64": 8, "I32": 4, "I16": 2, "I8": 1,
    "U64": 8, "U32": 4, "U16": 2, "U8": 1,
    "BOOL": 1,
}

_NPY_MAGIC = b"\x93NUMPY"
_NPY_DESCR = {"<f4": "F32", "<f8": "F64", "<f2": "F16", "<i8": "I64", "<i4": "I32",
              "<i2": "I16", "|i1": "I8", "<u8": "U64", "<u4": "U32", "<u2": "U16",
              "|u1": "U8", "|b1": "BOOL"}
_NPY_DESCR_FOR_TAG = {tag: descr for descr, tag in _NPY_DESCR.items()}

MANIFEST_NAME = "manifest.json"


class ContainerFormat(str, Enum):
    SAFETENSORS = "SAFETENSORS"
    NPY_DIR = "NPY_DIR"
    RAW_F32 = "RAW_F32"


@dataclass(frozen=True)
class WeightTensor:
    """A named, shaped, little-endian tensor backed by raw bytes."""

    name: str
    shape: tuple[int, ...]
    dtype: str
    data: bytes
    # Original NPY member header, kept so unmodified members re-serialize
    # byte-identically even if a foreign writer used different padding.
    npy_header: bytes | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.name:
            raise MalformedHeader("tensor name must be non-empty")
        if any(d < 0 for d in self.shape):
            raise MalformedHeader(f"negative dimension in shape {self.shape} of {self.name!r}")
        width = DTYPE_WIDTHS.get(self.dtype)
        if width is not None:
            expected = self.element_count * width
            if len(self.data) != expected:
                raise TruncatedData(
                    f"tensor {self.name!r}: {len(self.data)} data bytes, "
                    f"expected {expected} for dtype {self.dtype} shape {list(self.shape)}"
                )

    @property
    def element_count(self) -> int:
        return math.prod(self.shape)

    @property
    def is_f32(self) -> bool:
        return self.dtype == F32

    def as_f32(self) -> np.ndarray:
        if not self.is_f32:
            raise UnsupportedFormat(f"tensor {self.name!r} has dtype {self.dtype}, not F32")
        return np.frombuffer(self.data, dtype="<f4")

    def as_u32(self) -> np.ndarray:
        if not self.is_f32:
            raise UnsupportedFormat(f"tensor {self.name!r} has dtype {self.dtype}, not F32")
        return np.frombuffer(self.data, dtype="<u4")


def _fingerprint(tensors: tuple[WeightTensor, ...], metadata: dict[str, str]):
    return (
        tuple((t.name, t.shape, t.dtype, len(t.data)) for t in tensors),
        tuple(sorted(metadata.items())),
    )


@dataclass(frozen=True)
class ModelContainer:
    """An ordered collection of tensors plus format metadata.

    Immutable; mutation helpers return new containers. Safe to share
    read-only across threads.
    """

    format: ContainerFormat
    tensors: tuple[WeightTensor, ...]
    metadata: dict[str, str] = field(default_factory=dict)
    # Raw safetensors header (length prefix + JSON) plus the container shape it
    # described, reused on serialize while the shape still matches.
    raw_header: bytes | None = field(default=None, repr=False, compare=False)
    raw_header_fingerprint: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        names = [t.name for t in self.tensors]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise MalformedHeader(f"duplicate tensor names: {dupes}")

    @classmethod
    def build(
        cls,
        format: ContainerFormat,
        tensors: list[WeightTensor] | tuple[WeightTensor, ...],
        metadata: dict[str, str] | None = None,
    ) -> "ModelContainer":
        """Construct a container, normalizing tensor order for the format.

        SAFETENSORS keeps the given order (it becomes the data-offset order);
        NPY_DIR and RAW_F32 store tensors sorted lexicographically by name.
        """
        tensors = tuple(tensors)
        if format is not ContainerFormat.SAFETENSORS:
            tensors = tuple(sorted(tensors, key=lambda t: t.name))
        return cls(format=format, tensors=tensors, metadata=dict(metadata or {}))

    @classmethod
    def from_arrays(
        cls,
        arrays: dict[str, np.ndarray],
        format: ContainerFormat = ContainerFormat.SAFETENSORS,
        metadata: dict[str, str] | None = None,
    ) -> "ModelContainer":
        """Convenience constructor from float32 numpy arrays (insertion order kept)."""
        tensors = []
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr, dtype="<f4")
            tensors.append(WeightTensor(name, tuple(arr.shape), F32, arr.tobytes()))
        return cls.build(format, tensors, metadata)

    def names(self) -> list[str]:
        return [t.name for t in self.tensors]

    def tensor(self, name: str) -> WeightTensor:
        for t in self.tensors:
            if t.name == name:
                return t
        raise KeyError(name)

    def f32_tensors(self) -> list[WeightTensor]:
        return [t for t in self.tensors if t.is_f32]

    def with_tensor_data(self, name: str, data: bytes) -> "ModelContainer":
        """Replace one tensor's bytes. Same-size replacement keeps header caches."""
        hit = self.tensor(name)
        same_size = len(data) == len(hit.data)
        new_tensors = tuple(
            replace(t, data=data, npy_header=t.npy_header if same_size else None)
            if t.name == name else t
            for t in self.tensors
        )
        return ModelContainer(
            format=self.format,
            tensors=new_tensors,
            metadata=self.metadata,
            raw_header=self.raw_header if same_size else None,
            raw_header_fingerprint=self.raw_header_fingerprint if same_size else None,
        )

    def with_added_tensors(
        self, tensors: list[WeightTensor], metadata_updates: dict[str, str] | None = None
    ) -> "ModelContainer":
        """Append tensors (and metadata); drops raw-header caches."""
        md = dict(self.metadata)
        md.update(metadata_updates or {})
        return ModelContainer(
            format=self.format, tensors=self.tensors + tuple(tensors), metadata=md
        )


# --------------------------------------------------------------------------- #
# SAFETENSORS
# --------------------------------------------------------------------------- #

def _parse_safetensors(data: bytes) -> ModelContainer:
    if len(data) < 8:
        raise MalformedHeader("file shorter than the 8-byte header length field")
    header_len = int.from_bytes(data[:8], "little")
    if 8 + header_len > len(data):
        raise MalformedHeader(
            f"declared header length {header_len} exceeds file size {len(data)}"
        )
    try:
        header = json.loads(data[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedHeader(f"header is not valid UTF-8 JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise MalformedHeader("header JSON must be an object")

    metadata = header.pop("__metadata__", {})
    if not isinstance(metadata, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in metadata.items()
    ):
        raise MalformedHeader("__metadata__ must map strings to strings")

    buffer = data[8 + header_len :]
    entries = []
    for name, info in header.items():
        if not isinstance(info, dict):
            raise MalformedHeader(f"tensor entry {name!r} is not an object")
        try:
            dtype = info["dtype"]
            shape = tuple(info["shape"])
            begin, end = info["data_offsets"]
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedHeader(f"tensor entry {name!r} is malformed: {exc}") from exc
        if not all(isinstance(d, int) and d >= 0 for d in shape):
            raise MalformedHeader(f"tensor entry {name!r} has invalid shape {shape}")
        if not (isinstance(begin, int) and isinstance(end, int) and 0 <= begin <= end):
            raise MalformedHeader(f"tensor entry {name!r} has invalid offsets [{begin}, {end}]")
        if end > len(buffer):
            raise TruncatedData(
                f"tensor {name!r} ends at {end} but data buffer holds {len(buffer)} bytes"
            )
        entries.append((begin, end, name, str(dtype), shape))

    entries.sort(key=lambda e: (e[0], e[1], e[2]))
    pos = 0
    tensors = []
    for begin, end, name, dtype, shape in entries:
        if begin < pos:
            raise OverlappingOffsets(f"tensor {name!r} region [{begin}, {end}) overlaps a previous one")
        if begin > pos:
            raise OverlappingOffsets(f"gap of {begin - pos} bytes before tensor {name!r}")
        tensors.append(WeightTensor(name, shape, dtype, bytes(buffer[begin:end])))
        pos = end
    if pos != len(buffer):
        raise OverlappingOffsets(f"{len(buffer) - pos} trailing bytes not covered by any tensor")

    container = ModelContainer(
        format=ContainerFormat.SAFETENSORS,
        tensors=tuple(tensors),
        metadata=dict(metadata),
        raw_header=bytes(data[: 8 + header_len]),
        raw_header_fingerprint=None,
    )
    return replace(
        container, raw_header_fingerprint=_fingerprint(container.tensors, container.metadata)
    )


def _serialize_safetensors(c: ModelContainer) -> bytes:
    if c.raw_header is not None and c.raw_header_fingerprint == _fingerprint(c.tensors, c.metadata):
        header = c.raw_header
    else:
        entries: dict[str, object] = {}
        if c.metadata:
            entries["__metadata__"] = dict(c.metadata)
        pos = 0
        for t in c.tensors:
            entries[t.name] = {
                "dtype": t.dtype,
                "shape": list(t.shape),
                "data_offsets": [pos, pos + len(t.data)],
            }
            pos += len(t.data)
        body = json.dumps(entries, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        encoded = body.encode("utf-8")
        header = len(encoded).to_bytes(8, "little") + encoded
    return header + b"".join(t.data for t in c.tensors)


# --------------------------------------------------------------------------- #
# NPY members
# --------------------------------------------------------------------------- #

def _parse_npy(data: bytes, name: str = "arr_0") -> WeightTensor:
    if not data.startswith(_NPY_MAGIC):
        raise MalformedHeader("missing NPY magic")
    if len(data) < 10:
        raise MalformedHeader("NPY file shorter than its fixed preamble")
    major, minor = data[6], data[7]
    if (major, minor) != (1, 0):
        raise UnsupportedFormat(f"only NPY v1.0 is supported, got v{major}.{minor}")
    hlen = int.from_bytes(data[8:10], "little")
    if 10 + hlen > len(data):
        raise MalformedHeader(f"NPY header length {hlen} exceeds file size {len(data)}")
    try:
        info = ast.literal_eval(data[10 : 10 + hlen].decode("latin-1").strip())
        descr, fortran, shape = info["descr"], info["fortran_order"], tuple(info["shape"])
    except Exception as exc:
        raise MalformedHeader(f"invalid NPY header dict: {exc}") from exc
    if fortran:
        raise UnsupportedFormat("fortran_order arrays are not supported")
    dtype = _NPY_DESCR.get(descr)
    if dtype is None:
        raise UnsupportedFormat(f"NPY descr {descr!r} is not supported")
    payload = data[10 + hlen :]
    width = DTYPE_WIDTHS[dtype]
    expected = math.prod(shape) * width
    if len(payload) != expected:
        raise TruncatedData(f"NPY payload holds {len(payload)} bytes, expected {expected}")
    return WeightTensor(name, shape, dtype, bytes(payload), npy_header=bytes(data[: 10 + hlen]))


def _serialize_npy(t: WeightTensor) -> bytes:
    if t.npy_header is not None:
        return t.npy_header + t.data
    descr = _NPY_DESCR_FOR_TAG.get(t.dtype)
    if descr is None:
        raise UnsupportedFormat(f"cannot write dtype {t.dtype!r} as NPY")
    shape_repr = repr(tuple(t.shape))
    head = f"{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape_repr}, }}"
    # Pad with spaces so the data section starts 64-byte aligned, ending in \n.
    total = 10 + len(head) + 1
    pad = (64 - total % 64) % 64
    head = head + " " * pad + "\n"
    return _NPY_MAGIC + b"\x01\x00" + len(head).to_bytes(2, "little") + head.encode("latin-1") + t.data


# --------------------------------------------------------------------------- #
# RAW_F32 and the NPY_DIR manifest
# --------------------------------------------------------------------------- #

def _canonical_json(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def _check_sorted_names(names: list[str], where: str) -> None:
    if names != sorted(names):
        raise MalformedHeader(f"{where} must list tensors sorted by name")


def _parse_raw_f32(data: bytes, manifest: bytes | str) -> ModelContainer:
    if isinstance(manifest, bytes):
        manifest = manifest.decode("utf-8")
    try:
        doc = json.loads(manifest)
        specs = [(str(e["name"]), tuple(int(d) for d in e["shape"])) for e in doc["tensors"]]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise MalformedHeader(f"invalid raw-f32 sidecar: {exc}") from exc
    metadata = doc.get("metadata", {})
    if not all(isinstance(k, str) and isinstance(v, str) for k, v in metadata.items()):
        raise MalformedHeader("sidecar metadata must map strings to strings")
    _check_sorted_names([n for n, _ in specs], "raw-f32 sidecar")
    pos = 0
    tensors = []
    for name, shape in specs:
        nbytes = math.prod(shape) * 4
        if pos + nbytes > len(data):
            raise TruncatedData(f"tensor {name!r} needs bytes up to {pos + nbytes}, blob has {len(data)}")
        tensors.append(WeightTensor(name, shape, F32, bytes(data[pos : pos + nbytes])))
        pos += nbytes
    if pos != len(data):
        raise OverlappingOffsets(f"{len(data) - pos} trailing bytes not covered by the sidecar")
    return ModelContainer(ContainerFormat.RAW_F32, tuple(tensors), dict(metadata))


def raw_f32_sidecar(c: ModelContainer) -> bytes:
    """The JSON sidecar describing a RAW_F32 container's blob."""
    for t in c.tensors:
        if not t.is_f32:
            raise UnsupportedFormat(f"RAW_F32 cannot hold dtype {t.dtype!r} ({t.name!r})")
    doc = {
        "schema_version": 1,
        "format": "raw_f32",
        "tensors": [{"name": t.name, "shape": list(t.shape)} for t in c.tensors],
        "metadata": dict(c.metadata),
    }
    return _canonical_json(doc)


def _npy_dir_manifest(c: ModelContainer, files: list[str]) -> bytes:
    doc = {
        "schema_version": 1,
        "format": "npy_dir",
        "tensors": [{"name": t.name, "file": f} for t, f in zip(c.tensors, files)],
        "metadata": dict(c.metadata),
    }
    return _canonical_json(doc)


# --------------------------------------------------------------------------- #
# Public parse / serialize / load / save
# --------------------------------------------------------------------------- #

def sniff_format(data: bytes) -> ContainerFormat:
    """Guess the container format from leading bytes (RAW_F32 is the fallback)."""
    if len(data) > 8 and data[8:9] == b"{":
        return ContainerFormat.SAFETENSORS
    if data.startswith(_NPY_MAGIC):
        return ContainerFormat.NPY_DIR
    return ContainerFormat.RAW_F32


def parse_container(
    data: bytes,
    format_hint: ContainerFormat | None = None,
    manifest: bytes | str | None = None,
) -> ModelContainer:
    """Parse one byte buffer into a container.

    RAW_F32 needs its JSON sidecar passed as ``manifest``. A single NPY buffer
    parses as a one-tensor container named ``arr_0``; directory containers are
    handled by :func:`load_container`.
    """
    if not data:
        raise MalformedHeader("empty input")
    fmt = format_hint or sniff_format(data)
    if fmt is ContainerFormat.SAFETENSORS:
        return _parse_safetensors(data)
    if fmt is ContainerFormat.NPY_DIR:
        return ModelContainer(ContainerFormat.NPY_DIR, (_parse_npy(data),), {})
    if manifest is None:
        raise MalformedHeader(
            "input is not SAFETENSORS or NPY; raw f32 requires a JSON sidecar manifest"
        )
    return _parse_raw_f32(data, manifest)


def serialize_container(c: ModelContainer) -> bytes:
    """Serialize to one byte buffer (the RAW_F32 sidecar travels separately).

    NPY_DIR spans multiple files and has no single-buffer form; use
    :func:`save_container` for it.
    """
    if c.format is ContainerFormat.SAFETENSORS:
        return _serialize_safetensors(c)
    if c.format is ContainerFormat.RAW_F32:
        raw_f32_sidecar(c)  # validates dtypes
        return b"".join(t.data for t in c.tensors)
    raise UnsupportedFormat("NPY_DIR spans multiple files; use save_container")


def load_container(path: str | Path, format_hint: ContainerFormat | None = None) -> ModelContainer:
    """Load a container from a file (SAFETENSORS, NPY, RAW_F32 blob) or NPY_DIR directory."""
    path = Path(path)
    if path.is_dir():
        manifest_path = path / MANIFEST_NAME
        if not manifest_path.is_file():
            raise MalformedHeader(f"directory {path} has no {MANIFEST_NAME}")
        try:
            doc = json.loads(manifest_path.read_text("utf-8"))
            specs = [(str(e["name"]), str(e["file"])) for e in doc["tensors"]]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise MalformedHeader(f"invalid {MANIFEST_NAME}: {exc}") from exc
        metadata = doc.get("metadata", {})
        _check_sorted_names([n for n, _ in specs], MANIFEST_NAME)
        tensors = []
        for name, fname in specs:
            member = path / fname
            if not member.is_file():
                raise TruncatedData(f"manifest names missing member file {fname!r}")
            tensors.append(_parse_npy(member.read_bytes(), name=name))
        return ModelContainer(ContainerFormat.NPY_DIR, tuple(tensors), dict(metadata))

    data = path.read_bytes()
    fmt = format_hint or sniff_format(data)
    if fmt is ContainerFormat.RAW_F32:
        sidecar = path.with_name(path.name + ".json")
        if not sidecar.is_file():
            raise MalformedHeader(f"raw f32 blob {path} has no sidecar {sidecar.name}")
        return _parse_raw_f32(data, sidecar.read_text("utf-8"))
    return parse_container(data, fmt)


def save_container(c: ModelContainer, path: str | Path) -> None:
    """Write a container to disk in its own format (NPY_DIR creates a directory)."""
    path = Path(path)
    if c.format is ContainerFormat.NPY_DIR:
        path.mkdir(parents=True, exist_ok=True)
        files = [f"{i:04d}.npy" for i in range(len(c.tensors))]
        for t, fname in zip(c.tensors, files):
            (path / fname).write_bytes(_serialize_npy(t))
        (path / MANIFEST_NAME).write_bytes(_npy_dir_manifest(c, files))
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(serialize_container(c))
    if c.format is ContainerFormat.RAW_F32:
        path.with_name(path.name + ".json").write_bytes(raw_f32_sidecar(c))


# --------------------------------------------------------------------------- #
# Tensor selection
# --------------------------------------------------------------------------- #

ALL_F32 = "all_f32"
NAME_REGEX = "name_regex"
MIN_ELEMENTS = "min_elements"


@dataclass(frozen=True)
class TensorSelection:
    """A deterministic, ordered set of F32 tensor names within one container."""

    mode: str
    param: str | int | None
    resolved: tuple[str, ...]

    def to_json_dict(self) -> dict:
        return {"mode": self.mode, "param": self.param, "resolved": list(self.resolved)}


def select_tensors(
    c: ModelContainer, mode: str = ALL_F32, param: str | int | None = None
) -> TensorSelection:
    """Resolve a selection predicate against a container (F32 tensors only).

    ``name_regex`` uses full-pattern matching; ``min_elements`` keeps tensors
    with at least ``param`` elements. Order follows the container.
    """
    candidates = c.f32_tensors()
    if mode == ALL_F32:
        hits = candidates
    elif mode == NAME_REGEX:
        pattern = re.compile(str(param))
        hits = [t for t in candidates if pattern.fullmatch(t.name)]
    elif mode == MIN_ELEMENTS:
        threshold = int(param)  # type: ignore[arg-type]
        hits = [t for t in candidates if t.element_count >= threshold]
    else:
        raise ValueError(f"unknown selection mode {mode!r}")
    if not hits:
        raise EmptySelection(f"selection {mode}({param!r}) matched no F32 tensors")
    return TensorSelection(mode=mode, param=param, resolved=tuple(t.name for t in hits))
