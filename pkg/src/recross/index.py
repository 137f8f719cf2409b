"""Flat dense index: build, exact inner-product search, binary persistence.

Rows and queries are L2-normalized, so inner-product ranking and cosine
ranking coincide.  Search is exact (full scan); ties break by ascending
row position.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .backend.base import Backend
from .corpus import ExampleCollection
from .errors import IndexBuildError, IndexFormatError, PreconditionError

_MAGIC = b"RXDINDEX"
_VERSION = 1
_HEADER = struct.Struct("<8sIIQQQ")  # magic, version, dim, rows, ids_len, tasks_len

#: Unit-norm tolerance for stored rows.
NORM_TOLERANCE = 1e-6

#: Encode requests per protocol call during a build.
_BUILD_BATCH = 1024


@dataclass(frozen=True)
class SearchHit:
    position: int
    example_id: str
    score: float


class DenseIndex:
    """Row-normalized embedding matrix with parallel id and task tables."""

    def __init__(self, rows: np.ndarray, ids: Sequence[str], tasks: Sequence[str]):
        rows = np.ascontiguousarray(rows, dtype=np.float32)
        if rows.ndim != 2 or rows.shape[0] == 0:
            raise PreconditionError("index rows must be a non-empty 2-D matrix")
        if not (len(ids) == len(tasks) == rows.shape[0]):
            raise PreconditionError("rows, ids, and tasks must be parallel")
        if len(set(ids)) != len(ids):
            raise PreconditionError("index ids must be unique")
        norms = np.linalg.norm(rows.astype(np.float64), axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > NORM_TOLERANCE)
        if bad.size:
            raise PreconditionError(
                f"row {bad[0]} ({ids[bad[0]]!r}) has norm {norms[bad[0]]:.8f}, expected 1"
            )
        self._rows = rows
        self._rows64: np.ndarray | None = None  # lazy float64 view for search
        self._ids = tuple(ids)
        self._tasks = tuple(tasks)

    @property
    def dim(self) -> int:
        return self._rows.shape[1]

    @property
    def rows(self) -> np.ndarray:
        return self._rows

    @property
    def ids(self) -> tuple[str, ...]:
        return self._ids

    @property
    def tasks(self) -> tuple[str, ...]:
        return self._tasks

    def __len__(self) -> int:
        return self._rows.shape[0]

    def search(self, query: np.ndarray, k: int) -> list[SearchHit]:
        """Top-k rows by cosine similarity; exact, ties by ascending position."""
        order, scores = self.search_positions(np.asarray(query, dtype=np.float64)[None, :], k)
        return [
            SearchHit(int(pos), self._ids[pos], float(scores[0, j]))
            for j, pos in enumerate(order[0])
        ]

    def search_positions(
        self, queries: np.ndarray, k: int, row_mask: np.ndarray | None = None
    ) -> tuple[np.ndarray, np.ndarray]:
        """Batched search; returns (positions, scores) arrays of shape (q, k').

        ``row_mask`` marks searchable rows; masked-out rows never appear.
        k' = min(k, number of searchable rows).
        """
        if k < 1:
            raise PreconditionError("k must be positive")
        queries = np.asarray(queries, dtype=np.float64)
        if queries.ndim != 2 or queries.shape[1] != self.dim:
            raise PreconditionError(
                f"query dimension {queries.shape} does not match index dim {self.dim}"
            )
        norms = np.linalg.norm(queries, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise PreconditionError("cannot search with a zero-norm query vector")
        unit = queries / norms

        # Score in float64 over the float32 rows: rankings then agree with
        # any independently accumulated float64 inner product.
        if self._rows64 is None:
            self._rows64 = self._rows.astype(np.float64)
        scores = unit @ self._rows64.T  # (q, n) float64
        n_rows = len(self)
        if row_mask is not None:
            if row_mask.shape != (n_rows,):
                raise PreconditionError("row_mask must have one entry per row")
            n_alive = int(row_mask.sum())
            scores = np.where(row_mask[None, :], scores, -np.inf)
        else:
            n_alive = n_rows
        kk = min(k, n_alive)
        # Stable mergesort on the negated scores: descending score, then
        # ascending position among exact ties.
        order = np.argsort(-scores, axis=1, kind="stable")[:, :kk]
        top = np.take_along_axis(scores, order, axis=1)
        return order, top


def build_index(corpus: ExampleCollection, backend: Backend) -> DenseIndex:
    """Encode every corpus input (in order), L2-normalize, and index it.

    Zero-norm embeddings are a hard error: silently skipping one would
    desynchronize the id table from the row matrix.
    """
    if len(corpus) == 0:
        raise PreconditionError("cannot build an index over an empty corpus")
    blocks: list[np.ndarray] = []
    dim: int | None = None
    examples = corpus.examples
    for start in range(0, len(examples), _BUILD_BATCH):
        batch = examples[start : start + _BUILD_BATCH]
        vectors = np.asarray(backend.encode([ex.input_text for ex in batch]), dtype=np.float64)
        if dim is None:
            dim = vectors.shape[1]
        elif vectors.shape[1] != dim:
            raise IndexBuildError(
                f"embedding dimension drifted from {dim} to {vectors.shape[1]} mid-build"
            )
        norms = np.linalg.norm(vectors, axis=1)
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise IndexBuildError(
                f"zero-norm embedding for example {batch[zero[0]].example_id!r}"
            )
        # Normalize in float64, then cast: the stored float32 rows stay
        # within ~1e-7 of unit norm, inside the index invariant.
        blocks.append((vectors / norms[:, None]).astype(np.float32))
    matrix = np.vstack(blocks)
    return DenseIndex(matrix, [ex.example_id for ex in examples], [ex.task_name for ex in examples])


def save_index(index: DenseIndex, path: str | Path) -> None:
    """Write the binary index file (header, id/task tables, f32 matrix)."""
    ids_blob = json.dumps(list(index.ids), ensure_ascii=False).encode("utf-8")
    tasks_blob = json.dumps(list(index.tasks), ensure_ascii=False).encode("utf-8")
    matrix = np.ascontiguousarray(index.rows, dtype="<f4")
    header = _HEADER.pack(_MAGIC, _VERSION, index.dim, len(index), len(ids_blob), len(tasks_blob))
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("wb") as fh:
        fh.write(header)
        fh.write(ids_blob)
        fh.write(tasks_blob)
        fh.write(matrix.tobytes(order="C"))
    tmp.replace(path)


def load_index(path: str | Path) -> DenseIndex:
    """Read an index file; truncation or format drift loads nothing."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise IndexFormatError("index file is truncated (no full header)")
    magic, version, dim, count, ids_len, tasks_len = _HEADER.unpack_from(data, 0)
    if magic != _MAGIC:
        raise IndexFormatError(f"not an index file (magic {magic!r})")
    if version != _VERSION:
        raise IndexFormatError(f"unsupported index version {version}")
    offset = _HEADER.size
    expected = offset + ids_len + tasks_len + count * dim * 4
    if len(data) != expected:
        raise IndexFormatError(
            f"index file has {len(data)} bytes, expected {expected} (truncated or corrupt)"
        )
    try:
        ids = json.loads(data[offset : offset + ids_len].decode("utf-8"))
        offset += ids_len
        tasks = json.loads(data[offset : offset + tasks_len].decode("utf-8"))
        offset += tasks_len
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IndexFormatError(f"corrupt id/task tables: {exc}") from exc
    if len(ids) != count or len(tasks) != count:
        raise IndexFormatError("id/task tables do not match the row count")
    matrix = np.frombuffer(data, dtype="<f4", count=count * dim, offset=offset)
    return DenseIndex(matrix.reshape(count, dim), ids, tasks)
