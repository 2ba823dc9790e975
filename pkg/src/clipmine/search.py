"""Corpus-wide similarity search over frame embeddings.

Exact brute force only: every query scans the whole corpus, shard by shard,
with float64 accumulation over the float32 rows, so results are identical
regardless of shard count, thread count, or scheduling. Ties are broken by
the total ordering key (video_id, timestamp), never by arrival order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .types import EmbeddingVector, FrameStream, InvariantViolation


class SearchError(ValueError):
    """Raised for dimension mismatches and unusable corpora."""


def unit_normalize_rows(matrix: np.ndarray) -> np.ndarray:
    """Scale each float32 row to unit L2 norm (norms taken in float64)."""
    norms = np.linalg.norm(matrix.astype(np.float64), axis=1)
    if np.any(norms == 0.0):
        raise SearchError("cannot unit-normalize a zero vector")
    return (matrix.astype(np.float64) / norms[:, None]).astype(np.float32)


@dataclass(frozen=True)
class Match:
    """One frame whose similarity to the query cleared the threshold."""

    video_id: str
    timestamp_s: float
    similarity: float

    def __post_init__(self):
        if not np.isfinite(self.similarity):
            raise InvariantViolation("similarity", "must be finite")


@dataclass(frozen=True)
class _Shard:
    video_ids: tuple[str, ...]
    timestamps: np.ndarray  # float64, read-only
    embeddings: np.ndarray  # float32 (n, dim), read-only; the stored truth
    embeddings64: np.ndarray  # float64 scan cache of the same rows


class FrameIndex:
    """Immutable sharded corpus of (video_id, timestamp, embedding) rows.

    Rows are laid out in (video_id, timestamp) order and split contiguously
    into shards; the layout is an implementation detail and never affects
    query results. Safe for unlimited concurrent queries after build.
    """

    def __init__(
        self,
        shards: Sequence[_Shard],
        dim: int,
        normalize: bool,
        durations: dict[str, float],
    ):
        self._shards = tuple(shards)
        self.dim = dim
        self.normalize = normalize
        self.durations = dict(durations)

    @property
    def n_frames(self) -> int:
        return sum(shard.embeddings.shape[0] for shard in self._shards)

    @property
    def shard_count(self) -> int:
        return len(self._shards)

    @property
    def video_ids(self) -> set[str]:
        return set(self.durations)


def build_index(
    streams: Sequence[FrameStream], normalize: bool = True, shard_count: int = 1
) -> FrameIndex:
    """Ingest frame streams into a searchable index.

    Vectors are unit-normalized at build time when normalize is on. Streams
    must share one dimension and carry distinct video ids.
    """
    if shard_count < 1:
        raise SearchError("shard_count must be >= 1")
    nonempty = [s for s in streams if s.n_frames > 0]
    if not nonempty:
        raise SearchError("empty corpus: no frames to index")
    dim = nonempty[0].dim
    seen: set[str] = set()
    for stream in streams:
        if stream.video_id in seen:
            raise SearchError(f"duplicate video_id {stream.video_id!r}")
        seen.add(stream.video_id)
        if stream.n_frames > 0 and stream.dim != dim:
            raise SearchError(
                f"dimension mismatch: {stream.video_id!r} has dim {stream.dim}, "
                f"expected {dim}"
            )

    ordered = sorted(nonempty, key=lambda s: s.video_id)
    matrix = np.concatenate([s.embeddings for s in ordered])
    if normalize:
        matrix = unit_normalize_rows(matrix)
    video_ids: list[str] = []
    for stream in ordered:
        video_ids.extend([stream.video_id] * stream.n_frames)
    timestamps = np.concatenate([s.timestamps_s for s in ordered])

    shards: list[_Shard] = []
    bounds = np.linspace(0, matrix.shape[0], num=shard_count + 1, dtype=int)
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if lo == hi:
            continue
        emb = np.ascontiguousarray(matrix[lo:hi])
        emb.setflags(write=False)
        emb64 = emb.astype(np.float64)
        emb64.setflags(write=False)
        ts = timestamps[lo:hi].copy()
        ts.setflags(write=False)
        shards.append(_Shard(tuple(video_ids[lo:hi]), ts, emb, emb64))

    durations = {s.video_id: s.duration_s for s in streams}
    return FrameIndex(shards, dim=dim, normalize=normalize, durations=durations)


def _prepare_query(index: FrameIndex, seed: EmbeddingVector) -> np.ndarray:
    if seed.dim != index.dim:
        raise SearchError(f"query dim {seed.dim} does not match index dim {index.dim}")
    values = seed.values
    if index.normalize:
        values = unit_normalize_rows(values[None, :])[0]
    return values.astype(np.float64)


def query(
    index: FrameIndex, seed: EmbeddingVector, tau: float, top_k: int | None
) -> list[Match]:
    """All frames with similarity >= tau, best first, capped at top_k.

    Ordering is (similarity desc, video_id asc, timestamp asc); the result
    equals an exhaustive scan no matter how the corpus is sharded.
    """
    q64 = _prepare_query(index, seed)
    candidates: list[tuple[float, str, float]] = []
    for shard in index._shards:
        # product + pairwise sum, not BLAS matvec: dgemv bits vary with the
        # row count, which would break shard-count invariance
        sims = np.sum(shard.embeddings64 * q64, axis=1)
        for i in np.nonzero(sims >= tau)[0]:
            candidates.append(
                (float(sims[i]), shard.video_ids[i], float(shard.timestamps[i]))
            )
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    if top_k is not None:
        candidates = candidates[:top_k]
    return [Match(video_id=v, timestamp_s=t, similarity=s) for s, v, t in candidates]


def query_batch(
    index: FrameIndex,
    seeds: Sequence[EmbeddingVector],
    tau: float,
    top_k: int | None,
    threads: int = 1,
) -> list[list[Match]]:
    """Per-seed query results in input order; seeds may run concurrently."""
    if threads <= 1 or len(seeds) <= 1:
        return [query(index, seed, tau, top_k) for seed in seeds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: query(index, s, tau, top_k), seeds))
