"""Binary store for keyed unit-length float32 vectors (EMBF format, v1).

Layout, little-endian throughout, no padding or checksum:

    magic     4 bytes  "EMBF"
    version   u16      1
    flags     u8       bit 0: vectors are L2-normalized
    reserved  u8       0
    dimension u32      d >= 1
    count     u64      n
    records   n times: u16 key byte-length, UTF-8 key bytes, d * f32

Records are serialized in ascending key order (by UTF-8 bytes), which makes
writes byte-deterministic and re-serialization of a loaded store identical
to its source file.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    DimensionMismatchError,
    DuplicateKeyError,
    IoFailure,
    MalformedFileError,
    NotNormalizedError,
    TruncatedFileError,
)

MAGIC = b"EMBF"
VERSION = 1
FLAG_NORMALIZED = 0x01
NORM_TOLERANCE = 1e-4

_HEADER = struct.Struct("<4sHBBIQ")


class EmbeddingStore:
    """Immutable key -> float32 vector map with a single shared dimension."""

    def __init__(self, dimension: int, records: dict[str, np.ndarray], normalized: bool = True) -> None:
        if dimension < 1:
            raise DimensionMismatchError(f"dimension must be >= 1, got {dimension}")
        self.dimension = int(dimension)
        self.normalized = bool(normalized)
        self._records: dict[str, np.ndarray] = {}
        for key, vec in records.items():
            arr = np.asarray(vec, dtype=np.float32)
            if arr.shape != (self.dimension,):
                raise DimensionMismatchError(
                    f"record {key!r} has shape {arr.shape}, store dimension is {self.dimension}"
                )
            arr = arr.copy()
            arr.flags.writeable = False
            self._records[key] = arr
        if self.normalized:
            self._check_norms()

    def _check_norms(self) -> None:
        for key, vec in self._records.items():
            norm = float(np.linalg.norm(vec.astype(np.float64)))
            if abs(norm - 1.0) > NORM_TOLERANCE:
                raise NotNormalizedError(
                    f"record {key!r} has norm {norm:.6f}, expected 1 within {NORM_TOLERANCE}"
                )

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, key: str) -> bool:
        return key in self._records

    def keys(self):
        return self._records.keys()

    def get(self, key: str) -> np.ndarray | None:
        """The exact stored vector, or None when the key is absent."""
        return self._records.get(key)

    def items(self):
        return self._records.items()


def write_store(store: EmbeddingStore, path: str | Path) -> None:
    """Serialize *store*; byte-identical output for equal stores."""
    if store.normalized:
        store._check_norms()
    parts = [
        _HEADER.pack(
            MAGIC,
            VERSION,
            FLAG_NORMALIZED if store.normalized else 0,
            0,
            store.dimension,
            len(store),
        )
    ]
    for key in sorted(store.keys(), key=lambda k: k.encode("utf-8")):
        encoded = key.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise MalformedFileError(f"key too long to serialize ({len(encoded)} bytes)")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(store.get(key).tobytes())
    try:
        Path(path).write_bytes(b"".join(parts))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_store(path: str | Path) -> EmbeddingStore:
    """Parse an EMBF file, verifying magic, counts, key order and norms."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    if len(blob) < 4 or blob[:4] != MAGIC:
        raise BadMagicError(f"{path}: not an EMBF file")
    if len(blob) < _HEADER.size:
        raise TruncatedFileError(f"{path}: header cut short")
    _, version, flags, reserved, dimension, count = _HEADER.unpack_from(blob, 0)
    if version != VERSION:
        raise MalformedFileError(f"{path}: unsupported version {version}")
    if reserved != 0:
        raise MalformedFileError(f"{path}: reserved byte must be 0")
    if dimension < 1:
        raise MalformedFileError(f"{path}: dimension must be >= 1, got {dimension}")
    normalized = bool(flags & FLAG_NORMALIZED)

    offset = _HEADER.size
    vector_bytes = 4 * dimension
    records: dict[str, np.ndarray] = {}
    previous_key: bytes | None = None
    for _ in range(count):
        if offset + 2 > len(blob):
            raise TruncatedFileError(f"{path}: declared {count} records, found {len(records)}")
        (key_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        if offset + key_len + vector_bytes > len(blob):
            raise TruncatedFileError(f"{path}: declared {count} records, found {len(records)}")
        key_bytes = blob[offset : offset + key_len]
        offset += key_len
        try:
            key = key_bytes.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedFileError(f"{path}: key is not valid UTF-8") from exc
        if previous_key is not None:
            if key_bytes == previous_key:
                raise DuplicateKeyError(f"{path}: duplicate key {key!r}")
            if key_bytes < previous_key:
                raise MalformedFileError(f"{path}: keys out of order at {key!r}")
        previous_key = key_bytes
        vec = np.frombuffer(blob, dtype="<f4", count=dimension, offset=offset).copy()
        offset += vector_bytes
        records[key] = vec
    if offset != len(blob):
        raise MalformedFileError(f"{path}: {len(blob) - offset} trailing bytes after records")

    return EmbeddingStore(dimension, records, normalized=normalized)


def lookup(store: EmbeddingStore, key: str) -> np.ndarray | None:
    return store.get(key)
