"""
IDGC binary tensor container.

Layout (all integers little-endian):

    magic      4 bytes  b"IDGC"
    version    u32
    meta_len   u32, followed by meta_len bytes of UTF-8 "key=value\\n" lines
    count      u32
    count x tensor:
        name_len u32, name (UTF-8)
        type     u32  (0 = f32, 1 = f64, 2 = i64)
        rank     u32
        dims     rank x u64
        payload  raw little-endian values, C order

Metadata and tensors keep insertion order, so write -> read -> write is
byte-identical.
"""

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Union

import numpy as np

from ..core.exceptions import ContainerFormatError

MAGIC = b"IDGC"
FORMAT_VERSION = 1
TYPE_CODES: Dict[str, int] = {"<f4": 0, "<f8": 1, "<i8": 2}
CODE_DTYPES: Dict[int, np.dtype] = {code: np.dtype(name) for name, code in TYPE_CODES.items()}

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


@dataclass
class Container:
    """Ordered metadata plus ordered named tensors."""
    metadata: Dict[str, str] = field(default_factory=dict)
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)
    version: int = FORMAT_VERSION

    def require(self, key: str) -> str:
        if key not in self.metadata:
            raise ContainerFormatError(f"Container metadata lacks required key '{key}'",
                                       details={"key": key, "present": sorted(self.metadata)})
        return self.metadata[key]

    def tensor(self, name: str) -> np.ndarray:
        if name not in self.tensors:
            raise ContainerFormatError(f"Container lacks tensor '{name}'",
                                       details={"name": name, "present": list(self.tensors)[:20]})
        return self.tensors[name]


def _normalize_array(name: str, array: np.ndarray) -> np.ndarray:
    array = np.asarray(array)
    if array.dtype.kind == "f":
        target = np.dtype("<f4") if array.dtype.itemsize == 4 else np.dtype("<f8")
    elif array.dtype.kind in "iub":
        target = np.dtype("<i8")
    else:
        raise ContainerFormatError(f"Tensor '{name}' has unsupported dtype {array.dtype}",
                                   details={"name": name, "dtype": str(array.dtype)})
    return np.ascontiguousarray(array, dtype=target)


def _encode_metadata(metadata: Dict[str, str]) -> bytes:
    lines = []
    for key, value in metadata.items():
        key, value = str(key), str(value)
        if not key or "=" in key or "\n" in key or "\n" in value:
            raise ContainerFormatError(f"Metadata entry '{key}' cannot be stored as a key=value line",
                                       details={"key": key})
        lines.append(f"{key}={value}\n")
    return "".join(lines).encode("utf-8")


def encode_container(container: Container) -> bytes:
    parts = [MAGIC, _U32.pack(container.version)]
    meta = _encode_metadata(container.metadata)
    parts += [_U32.pack(len(meta)), meta, _U32.pack(len(container.tensors))]
    for name, array in container.tensors.items():
        array = _normalize_array(name, array)
        encoded = name.encode("utf-8")
        parts += [_U32.pack(len(encoded)), encoded, _U32.pack(TYPE_CODES[array.dtype.str]),
                  _U32.pack(array.ndim)]
        parts += [_U64.pack(d) for d in array.shape]
        parts.append(array.tobytes(order="C"))
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, size: int, what: str) -> bytes:
        if self.pos + size > len(self.data):
            raise ContainerFormatError(f"Container truncated while reading {what}",
                                       details={"offset": self.pos, "needed": size, "available": len(self.data) - self.pos})
        chunk = self.data[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return _U64.unpack(self.take(8, what))[0]


def decode_container(data: bytes) -> Container:
    """
    Raises:
        ContainerFormatError: Bad magic, unknown version, malformed metadata,
            unknown type code, size mismatch or trailing bytes
    """
    reader = _Reader(data)
    if reader.take(4, "magic") != MAGIC:
        raise ContainerFormatError("Not an IDGC container (bad magic bytes)", details={"magic": data[:4].hex()})
    version = reader.u32("version")
    if version != FORMAT_VERSION:
        raise ContainerFormatError(f"Unsupported container version {version}; this reader supports {FORMAT_VERSION}",
                                   details={"version": version, "supported": [FORMAT_VERSION]})
    meta_raw = reader.take(reader.u32("metadata length"), "metadata")
    try:
        meta_text = meta_raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ContainerFormatError("Container metadata is not valid UTF-8", details={"error": str(exc)})
    metadata: Dict[str, str] = {}
    if meta_text and not meta_text.endswith("\n"):
        raise ContainerFormatError("Container metadata must end with a newline")
    for line in meta_text.splitlines():
        key, sep, value = line.partition("=")
        if not sep or not key:
            raise ContainerFormatError(f"Malformed metadata line '{line}'", details={"line": line})
        metadata[key] = value

    tensors: Dict[str, np.ndarray] = {}
    for index in range(reader.u32("tensor count")):
        name = reader.take(reader.u32("name length"), "tensor name").decode("utf-8")
        code = reader.u32("type code")
        if code not in CODE_DTYPES:
            raise ContainerFormatError(f"Tensor '{name}' has unknown type code {code}",
                                       details={"name": name, "code": code, "index": index})
        rank = reader.u32("rank")
        shape = tuple(reader.u64("dimension") for _ in range(rank))
        dtype = CODE_DTYPES[code]
        size = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        payload = reader.take(size, f"payload of '{name}'")
        tensors[name] = np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
    if reader.pos != len(data):
        raise ContainerFormatError(f"{len(data) - reader.pos} trailing bytes after the tensor table",
                                   details={"trailing": len(data) - reader.pos})
    return Container(metadata=metadata, tensors=tensors, version=version)


def write_container(path: Union[str, Path], container: Container) -> str:
    """Write the container and return the sha256 hex digest of the bytes written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = encode_container(container)
    path.write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def read_container(path: Union[str, Path]) -> Container:
    path = Path(path)
    if not path.is_file():
        raise ContainerFormatError(f"Container file not found: {path}", details={"path": str(path)})
    return decode_container(path.read_bytes())


def file_digest(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
