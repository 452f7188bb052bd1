"""Exact cosine-similarity index over skeleton sentence embeddings.

Brute-force scan; the corpora involved are a few thousand entries, where
exactness is cheap and makes results reproducible and oracle-testable.
"""

from __future__ import annotations

import struct
import threading
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptIndex, DimensionMismatch, EmptyIndex, VersionMismatch

MAGIC = b"SKIX"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class IndexEntry:
    example_id: int
    vector: np.ndarray  # unit-norm, stored as float32
    skeleton_text: str


@dataclass(frozen=True)
class Neighbor:
    example_id: int
    similarity: float


class SkeletonIndex:
    """Append-only store of (example_id, unit vector, skeleton text).

    Thread safety: many concurrent readers or one writer. Searches never see
    a partially inserted entry because insertion happens under the same lock
    that snapshots the matrix.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._ids: list[int] = []
        self._texts: list[str] = []
        self._vectors: list[np.ndarray] = []
        self._matrix: np.ndarray | None = None
        self._dim: int | None = None

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def dim(self) -> int | None:
        return self._dim

    def add(self, entry: IndexEntry) -> None:
        vec = np.asarray(entry.vector, dtype=np.float32)
        if vec.ndim != 1:
            raise DimensionMismatch(f"expected 1-d vector, got shape {vec.shape}")
        norm = float(np.linalg.norm(vec.astype(np.float64)))
        if abs(norm - 1.0) > 1e-5:
            raise ValueError(f"index vectors must be unit norm, got {norm:.6f}")
        with self._lock:
            if self._dim is None:
                self._dim = vec.shape[0]
            elif vec.shape[0] != self._dim:
                raise DimensionMismatch(
                    f"vector dim {vec.shape[0]} does not match index dim {self._dim}"
                )
            self._ids.append(int(entry.example_id))
            self._texts.append(entry.skeleton_text)
            self._vectors.append(vec)
            self._matrix = None

    def entry(self, position: int) -> IndexEntry:
        return IndexEntry(self._ids[position], self._vectors[position], self._texts[position])

    def _snapshot(self) -> tuple[np.ndarray, list[int]]:
        with self._lock:
            if not self._ids:
                raise EmptyIndex("search on an empty index")
            if self._matrix is None:
                self._matrix = np.vstack(self._vectors).astype(np.float64)
            return self._matrix, list(self._ids)

    def search_knn(self, query: np.ndarray, k: int) -> list[Neighbor]:
        """Top ``min(k, size)`` entries by cosine similarity, ties to lower example_id."""
        if k < 1:
            raise ValueError("k must be >= 1")
        matrix, ids = self._snapshot()
        q = np.asarray(query, dtype=np.float64)
        if q.shape != (matrix.shape[1],):
            raise DimensionMismatch(
                f"query dim {q.shape} does not match index dim {matrix.shape[1]}"
            )
        q_norm = np.linalg.norm(q)
        if q_norm == 0:
            raise ValueError("cannot search with a zero vector")
        sims = matrix @ (q / q_norm)
        order = sorted(range(len(ids)), key=lambda i: (-sims[i], ids[i]))
        return [Neighbor(ids[i], float(sims[i])) for i in order[:k]]

    # --- persistence -------------------------------------------------------
    #
    # Layout: MAGIC, version u8, dim u32 LE, count u64 LE, then per entry
    # (id u64 LE, dim * float32 LE, text length u32 LE, UTF-8 text), and a
    # trailing CRC32 (u32 LE) over everything before it.

    def save(self, path: str | Path) -> None:
        with self._lock:
            dim = self._dim if self._dim is not None else 0
            chunks = [MAGIC, struct.pack("<B", FORMAT_VERSION),
                      struct.pack("<I", dim), struct.pack("<Q", len(self._ids))]
            for eid, vec, text in zip(self._ids, self._vectors, self._texts):
                encoded = text.encode("utf-8")
                chunks.append(struct.pack("<Q", eid))
                chunks.append(vec.astype("<f4").tobytes())
                chunks.append(struct.pack("<I", len(encoded)))
                chunks.append(encoded)
            payload = b"".join(chunks)
            payload += struct.pack("<I", zlib.crc32(payload))
        Path(path).write_bytes(payload)

    @classmethod
    def load(cls, path: str | Path) -> "SkeletonIndex":
        data = Path(path).read_bytes()
        if len(data) < len(MAGIC) + 1:
            raise CorruptIndex("file too short")
        if data[: len(MAGIC)] != MAGIC:
            raise CorruptIndex("bad magic bytes")
        version = data[len(MAGIC)]
        if version != FORMAT_VERSION:
            raise VersionMismatch(f"format version {version}, expected {FORMAT_VERSION}")
        if len(data) < len(MAGIC) + 1 + 4 + 8 + 4:
            raise CorruptIndex("file too short")
        body, stored_crc = data[:-4], struct.unpack("<I", data[-4:])[0]
        if zlib.crc32(body) != stored_crc:
            raise CorruptIndex("checksum mismatch")

        offset = len(MAGIC) + 1
        (dim,) = struct.unpack_from("<I", body, offset)
        offset += 4
        (count,) = struct.unpack_from("<Q", body, offset)
        offset += 8

        index = cls()
        if count:
            index._dim = dim
        try:
            for _ in range(count):
                (eid,) = struct.unpack_from("<Q", body, offset)
                offset += 8
                vec = np.frombuffer(body, dtype="<f4", count=dim, offset=offset).copy()
                if vec.shape[0] != dim:
                    raise CorruptIndex("truncated vector data")
                offset += 4 * dim
                (text_len,) = struct.unpack_from("<I", body, offset)
                offset += 4
                raw_text = body[offset : offset + text_len]
                if len(raw_text) != text_len:
                    raise CorruptIndex("truncated text data")
                offset += text_len
                index._ids.append(int(eid))
                index._vectors.append(vec)
                index._texts.append(raw_text.decode("utf-8"))
        except (struct.error, ValueError) as exc:
            raise CorruptIndex(f"truncated entry: {exc}") from exc
        if offset != len(body):
            raise CorruptIndex("trailing bytes after last entry")
        return index
