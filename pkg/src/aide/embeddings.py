"""Binary embedding-table format.

Layout, all integers little-endian:

    magic   9 bytes  b"AIDE-EMB1"
    count   u32
    dim     u32
    records count times:
        id_len  u16
        id      id_len bytes UTF-8
        vector  dim float32

Vectors are stored and compared at 32-bit precision; lookups return
float64 copies for the math stack.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ArgumentError, EmbeddingFormatError, UnknownIdError

MAGIC = b"AIDE-EMB1"


class EmbeddingTable:
    """Immutable id -> vector map with one shared dimension."""

    def __init__(self, vectors: dict):
        if not vectors:
            raise ArgumentError("embedding table must contain at least one vector")
        self._vectors = {}
        self.dim = None
        for key, vec in vectors.items():
            arr = np.asarray(vec, dtype=np.float32)
            if arr.ndim != 1:
                raise ArgumentError(f"vector for id {key!r} must be 1-D, got shape {arr.shape}")
            if self.dim is None:
                self.dim = arr.shape[0]
            elif arr.shape[0] != self.dim:
                raise ArgumentError(
                    f"vector for id {key!r} has dim {arr.shape[0]}, table dim is {self.dim}"
                )
            arr.setflags(write=False)
            self._vectors[str(key)] = arr

    def __len__(self):
        return len(self._vectors)

    def __contains__(self, key) -> bool:
        return key in self._vectors

    def ids(self):
        return list(self._vectors)

    def lookup(self, key: str) -> np.ndarray:
        """float64 copy of the stored float32 vector; raises UnknownIdError."""
        try:
            return self._vectors[key].astype(np.float64)
        except KeyError:
            raise UnknownIdError(f"no embedding for id {key!r}") from None

    def raw(self, key: str) -> np.ndarray:
        try:
            return self._vectors[key]
        except KeyError:
            raise UnknownIdError(f"no embedding for id {key!r}") from None


def write_embedding_table(path, vectors: dict) -> Path:
    table = vectors if isinstance(vectors, EmbeddingTable) else EmbeddingTable(vectors)
    path = Path(path)
    chunks = [MAGIC, struct.pack("<II", len(table), table.dim)]
    for key in table.ids():
        encoded = key.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ArgumentError(f"id too long to serialize ({len(encoded)} bytes)")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(table.raw(key).astype("<f4").tobytes())
    path.write_bytes(b"".join(chunks))
    return path


def load_embedding_table(path) -> EmbeddingTable:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < len(MAGIC) + 8:
        raise EmbeddingFormatError(f"{path}: file too short for header")
    if data[: len(MAGIC)] != MAGIC:
        raise EmbeddingFormatError(f"{path}: bad magic {data[:9]!r}")
    count, dim = struct.unpack_from("<II", data, len(MAGIC))
    if count < 1 or dim < 1:
        raise EmbeddingFormatError(f"{path}: header declares count={count} dim={dim}")
    pos = len(MAGIC) + 8
    vec_bytes = 4 * dim
    vectors = {}
    for index in range(count):
        if pos + 2 > len(data):
            raise EmbeddingFormatError(f"{path}: record {index}: truncated id length")
        (id_len,) = struct.unpack_from("<H", data, pos)
        pos += 2
        if pos + id_len + vec_bytes > len(data):
            raise EmbeddingFormatError(f"{path}: record {index}: truncated record")
        try:
            key = data[pos : pos + id_len].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise EmbeddingFormatError(f"{path}: record {index}: bad id encoding") from exc
        pos += id_len
        if key in vectors:
            raise EmbeddingFormatError(f"{path}: record {index}: duplicate id {key!r}")
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=pos).copy()
        pos += vec_bytes
        vectors[key] = vec
    if pos != len(data):
        raise EmbeddingFormatError(
            f"{path}: {len(data) - pos} trailing bytes after {count} records"
        )
    return EmbeddingTable(vectors)
