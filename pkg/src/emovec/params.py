"""Named-tensor parameter sets and their bit-exact binary checkpoint container.

A :class:`ParameterSet` is an immutable map from tensor names to float32
arrays plus a free-form string metadata map. Checkpoints are written in a
small self-describing binary container (extension ``.evc``):

    bytes 0..3    magic ``EVC1``
    bytes 4..7    header length, unsigned 32-bit little-endian
    header        UTF-8 JSON (version, dtype, tensor descriptors, meta)
    payload       raw little-endian float32 data, contiguous, no padding

Descriptors are sorted lexicographically by name and offsets are relative
to the payload start, so serialization is a pure function of the set's
content: identical sets produce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

from .errors import (
    BadMagicError,
    DescriptorError,
    DuplicateNameError,
    HeaderError,
    PayloadError,
    ValidationError,
)

MAGIC = b"EVC1"
FORMAT_VERSION = 1
FILE_EXTENSION = ".evc"

# Reserved meta keys are free-form strings but validated against these
# value sets when present.
ROLE_VALUES = frozenset({"pretrained", "finetuned", "merged", "vector", "embedder"})
SCOPE_VALUES = frozenset({"single", "multi", "single-speaker", "speaker-agnostic"})
ALLOW_NONFINITE_KEY = "allow_nonfinite"


def _as_f32(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float32)
    if arr is values:
        # Caller's own array: copy instead of freezing their buffer.
        arr = arr.copy()
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class TensorEntry:
    """One named float32 tensor.

    ``values`` is stored C-contiguous and read-only; ``shape`` follows the
    array. Finiteness is checked at the :class:`ParameterSet` level because
    the opt-out flag lives in the set's meta.
    """

    name: str
    values: np.ndarray

    def __post_init__(self):
        if not self.name:
            raise ValidationError("tensor name must be a non-empty string")
        arr = _as_f32(self.values)
        if any(int(d) <= 0 for d in arr.shape):
            raise ValidationError(
                f"tensor {self.name!r}: shape {arr.shape} has a non-positive dimension"
            )
        object.__setattr__(self, "values", arr)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(d) for d in self.values.shape)

    @property
    def nbytes(self) -> int:
        return 4 * self.values.size

    def tobytes(self) -> bytes:
        """Row-major little-endian float32 encoding of the data."""
        return self.values.astype("<f4", copy=False).tobytes(order="C")

    def __eq__(self, other) -> bool:
        if not isinstance(other, TensorEntry):
            return NotImplemented
        return (
            self.name == other.name
            and self.shape == other.shape
            and self.tobytes() == other.tobytes()
        )

    def __hash__(self):
        return hash((self.name, self.shape))


def _validate_meta(meta: Mapping[str, str]) -> dict[str, str]:
    out = {}
    for key, value in meta.items():
        if not isinstance(key, str) or not isinstance(value, str):
            raise ValidationError(f"meta entries must be str -> str, got {key!r}: {value!r}")
        out[key] = value
    role = out.get("role")
    if role is not None and role not in ROLE_VALUES:
        raise ValidationError(f"meta role {role!r} not in {sorted(ROLE_VALUES)}")
    scope = out.get("scope")
    if scope is not None and scope not in SCOPE_VALUES:
        raise ValidationError(f"meta scope {scope!r} not in {sorted(SCOPE_VALUES)}")
    if "emotion" in out and not out["emotion"]:
        raise ValidationError("meta emotion must be non-empty when present")
    flag = out.get(ALLOW_NONFINITE_KEY)
    if flag is not None and flag not in ("true", "false"):
        raise ValidationError(f"meta {ALLOW_NONFINITE_KEY} must be 'true' or 'false', got {flag!r}")
    return out


@dataclass(frozen=True, eq=False)
class ParameterSet:
    """Immutable map name -> :class:`TensorEntry` plus string metadata.

    Iteration order over ``tensors`` is lexicographic by name. Non-finite
    values are rejected unless ``meta["allow_nonfinite"] == "true"``.
    """

    tensors: Mapping[str, TensorEntry]
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        ordered: dict[str, TensorEntry] = {}
        for name in sorted(self.tensors):
            entry = self.tensors[name]
            if not isinstance(entry, TensorEntry):
                entry = TensorEntry(name, entry)
            if entry.name != name:
                raise ValidationError(
                    f"tensor stored under key {name!r} is named {entry.name!r}"
                )
            ordered[name] = entry
        meta = _validate_meta(self.meta)
        object.__setattr__(self, "tensors", MappingProxyType(ordered))
        object.__setattr__(self, "meta", MappingProxyType(meta))
        if not self.allow_nonfinite:
            for entry in ordered.values():
                if not np.isfinite(entry.values).all():
                    raise ValidationError(
                        f"tensor {entry.name!r} contains non-finite values "
                        f"(set meta {ALLOW_NONFINITE_KEY}='true' to permit)"
                    )

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray], meta: Mapping[str, str] | None = None) -> "ParameterSet":
        tensors = {name: TensorEntry(name, arr) for name, arr in arrays.items()}
        return cls(tensors, dict(meta or {}))

    @property
    def allow_nonfinite(self) -> bool:
        return self.meta.get(ALLOW_NONFINITE_KEY) == "true"

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.tensors)

    def array(self, name: str) -> np.ndarray:
        return self.tensors[name].values

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {name: entry.shape for name, entry in self.tensors.items()}

    def num_values(self) -> int:
        return sum(entry.values.size for entry in self.tensors.values())

    def with_meta(self, **updates: str) -> "ParameterSet":
        """New set with the same tensors and updated meta entries."""
        meta = dict(self.meta)
        meta.update(updates)
        return ParameterSet(dict(self.tensors), meta)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ParameterSet):
            return NotImplemented
        return (
            self.names == other.names
            and all(self.tensors[n] == other.tensors[n] for n in self.names)
            and dict(self.meta) == dict(other.meta)
        )

    def __hash__(self):
        return hash(self.names)

    def __repr__(self):
        return f"ParameterSet({len(self.tensors)} tensors, meta={dict(self.meta)!r})"


@dataclass
class CompatReport:
    """Diagnostic listing of layout differences between two sets.

    Empty report means the sets are compatible: identical name sets and
    identical per-name shapes.
    """

    missing_in_a: list[str] = field(default_factory=list)
    missing_in_b: list[str] = field(default_factory=list)
    shape_mismatches: list[tuple[str, tuple[int, ...], tuple[int, ...]]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.missing_in_a or self.missing_in_b or self.shape_mismatches)

    def __bool__(self) -> bool:
        return self.ok

    def describe(self) -> str:
        if self.ok:
            return "compatible"
        parts = []
        if self.missing_in_a:
            parts.append(f"missing in a: {', '.join(self.missing_in_a)}")
        if self.missing_in_b:
            parts.append(f"missing in b: {', '.join(self.missing_in_b)}")
        for name, sa, sb in self.shape_mismatches:
            parts.append(f"shape mismatch {name}: {list(sa)} vs {list(sb)}")
        return "; ".join(parts)


def check_compatible(a, b) -> CompatReport:
    """Compare tensor layouts of two sets (ParameterSet or EmotionVector).

    Purely diagnostic; never raises. Symmetric up to swapping the
    missing_in_a / missing_in_b lists.
    """
    names_a, names_b = set(a.tensors), set(b.tensors)
    report = CompatReport(
        missing_in_a=sorted(names_b - names_a),
        missing_in_b=sorted(names_a - names_b),
    )
    for name in sorted(names_a & names_b):
        sa, sb = a.tensors[name].shape, b.tensors[name].shape
        if sa != sb:
            report.shape_mismatches.append((name, sa, sb))
    return report


def save_bytes(params: ParameterSet) -> bytes:
    """Canonical binary encoding; a pure function of the set's content."""
    if not params.allow_nonfinite:
        for entry in params.tensors.values():
            if not np.isfinite(entry.values).all():
                raise ValidationError(f"tensor {entry.name!r} contains non-finite values")
    descriptors = []
    offset = 0
    chunks = []
    for name, entry in params.tensors.items():
        raw = entry.tobytes()
        descriptors.append(
            {"name": name, "shape": list(entry.shape), "offset": offset, "nbytes": len(raw)}
        )
        chunks.append(raw)
        offset += len(raw)
    header = {
        "version": FORMAT_VERSION,
        "dtype": "f32",
        "tensors": descriptors,
        "meta": dict(params.meta),
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<I", len(header_bytes)) + header_bytes + b"".join(chunks)


def save(params: ParameterSet, path) -> None:
    """Write ``params`` to ``path`` in the checkpoint container format."""
    data = save_bytes(params)
    with open(path, "wb") as fh:
        fh.write(data)


def content_hash(params: ParameterSet) -> str:
    """SHA-256 hex digest of the canonical encoding."""
    return hashlib.sha256(save_bytes(params)).hexdigest()


def _parse_header(blob: bytes) -> tuple[dict, int]:
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise BadMagicError(f"expected magic {MAGIC!r}, got {blob[:4]!r}")
    if len(blob) < 8:
        raise HeaderError("file truncated before header length field")
    (header_len,) = struct.unpack("<I", blob[4:8])
    header_end = 8 + header_len
    if len(blob) < header_end:
        raise HeaderError(
            f"header length {header_len} exceeds file size {len(blob)}"
        )
    try:
        header = json.loads(blob[8:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderError(f"header is not valid UTF-8 JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise HeaderError("header JSON must be an object")
    if header.get("version") != FORMAT_VERSION:
        raise HeaderError(f"unsupported container version {header.get('version')!r}")
    if header.get("dtype") != "f32":
        raise HeaderError(f"unsupported dtype {header.get('dtype')!r}")
    if not isinstance(header.get("tensors"), list) or not isinstance(header.get("meta"), dict):
        raise HeaderError("header must carry 'tensors' list and 'meta' map")
    return header, header_end


def _validate_descriptors(descriptors: list) -> int:
    expected_offset = 0
    prev_name = None
    seen: set[str] = set()
    for desc in descriptors:
        if not isinstance(desc, dict) or not {"name", "shape", "offset", "nbytes"} <= set(desc):
            raise DescriptorError(f"descriptor missing required fields: {desc!r}")
        name = desc["name"]
        if not isinstance(name, str) or not name:
            raise DescriptorError(f"descriptor name must be a non-empty string: {name!r}")
        if name in seen:
            raise DuplicateNameError(f"duplicate tensor name {name!r}")
        seen.add(name)
        if prev_name is not None and name < prev_name:
            raise DescriptorError(
                f"descriptors not sorted: {name!r} after {prev_name!r}"
            )
        prev_name = name
        shape = desc["shape"]
        if not isinstance(shape, list) or any(not isinstance(d, int) or d <= 0 for d in shape):
            raise DescriptorError(f"descriptor {name!r}: bad shape {shape!r}")
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if desc["nbytes"] != 4 * count:
            raise DescriptorError(
                f"descriptor {name!r}: nbytes {desc['nbytes']} != 4 * prod{tuple(shape)}"
            )
        if desc["offset"] != expected_offset:
            raise DescriptorError(
                f"descriptor {name!r}: offset {desc['offset']} != expected {expected_offset}"
            )
        expected_offset += desc["nbytes"]
    return expected_offset


def load_bytes(blob: bytes) -> ParameterSet:
    """Decode a checkpoint container; inverse of :func:`save_bytes`."""
    header, header_end = _parse_header(blob)
    descriptors = header["tensors"]
    payload_len = _validate_descriptors(descriptors)
    payload = blob[header_end:]
    if len(payload) != payload_len:
        raise PayloadError(
            f"payload is {len(payload)} bytes, descriptors require {payload_len}"
        )
    arrays = {}
    for desc in descriptors:
        start, end = desc["offset"], desc["offset"] + desc["nbytes"]
        flat = np.frombuffer(payload[start:end], dtype="<f4")
        arrays[desc["name"]] = flat.reshape(tuple(desc["shape"])).astype(np.float32)
    meta = {str(k): str(v) for k, v in header["meta"].items()}
    return ParameterSet.from_arrays(arrays, meta)


def load(path) -> ParameterSet:
    """Read a checkpoint file; ``load(save(s))`` reproduces ``s`` bit-exactly."""
    with open(path, "rb") as fh:
        blob = fh.read()
    return load_bytes(blob)


def iter_entries(params: ParameterSet) -> Iterable[TensorEntry]:
    return params.tensors.values()
