"""Text-to-video retrieval harness: K-clip averaged scoring and recall@K."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .search import unit_normalize_rows
from .types import EmbeddingVector, InvariantViolation

#: Number of equally spaced clips scored per video at test time.
DEFAULT_K_CLIPS = 4
RECALL_CUTOFFS = (1, 5, 10)


@dataclass(frozen=True)
class ScoredCandidate:
    """A candidate video and its mean clip similarity to one query."""

    video_id: str
    score: float

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise InvariantViolation("score", "must be finite")


@dataclass(frozen=True)
class RecallReport:
    r_at: dict[int, float]
    n_queries: int

    def __post_init__(self):
        for k, r in self.r_at.items():
            if not 0.0 <= r <= 1.0:
                raise InvariantViolation("r_at", f"recall@{k} = {r} outside [0, 1]")
        ks = sorted(self.r_at)
        for lo, hi in zip(ks, ks[1:]):
            if self.r_at[lo] > self.r_at[hi]:
                raise InvariantViolation(
                    "r_at", f"recall@{lo} > recall@{hi} breaks monotonicity"
                )
        if self.n_queries < 0:
            raise InvariantViolation("n_queries", "must be non-negative")


def equally_spaced_indices(n_available: int, n_samples: int) -> list[int]:
    """Indices of min(n_samples, n_available) clips spread across a video.

    Endpoints included: round(i * (n-1) / (m-1)) for i in 0..m-1, with
    half-up rounding and duplicates dropped in order. A single sample maps
    to index 0.
    """
    if n_available < 1:
        raise ValueError("no clips available")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    m = min(n_samples, n_available)
    if m == 1:
        return [0]
    indices: list[int] = []
    for i in range(m):
        j = int(math.floor(i * (n_available - 1) / (m - 1) + 0.5))
        if not indices or indices[-1] != j:
            indices.append(j)
    return indices


def score_video(
    query: EmbeddingVector,
    video_clips: Sequence[EmbeddingVector],
    k_clips: int = DEFAULT_K_CLIPS,
) -> float:
    """Mean normalized dot product between the query and sampled clips."""
    if not video_clips:
        raise ValueError("video has no clip embeddings")
    indices = equally_spaced_indices(len(video_clips), k_clips)
    q = unit_normalize_rows(query.values[None, :])[0].astype(np.float64)
    sims = []
    for i in indices:
        clip = video_clips[i]
        if clip.dim != query.dim:
            raise ValueError(
                f"clip dim {clip.dim} does not match query dim {query.dim}"
            )
        c = unit_normalize_rows(clip.values[None, :])[0].astype(np.float64)
        sims.append(float(np.sum(q * c)))
    return math.fsum(sims) / len(sims)


def rank_candidates(
    query: EmbeddingVector,
    candidates: Mapping[str, Sequence[EmbeddingVector]],
    k_clips: int = DEFAULT_K_CLIPS,
) -> list[ScoredCandidate]:
    """All candidates scored and sorted by (score desc, video_id asc)."""
    scored = [
        ScoredCandidate(video_id=vid, score=score_video(query, clips, k_clips))
        for vid, clips in candidates.items()
    ]
    scored.sort(key=lambda c: (-c.score, c.video_id))
    return scored


def recall_at_k(
    queries: Sequence[tuple[EmbeddingVector, str]],
    candidates: Mapping[str, Sequence[EmbeddingVector]],
    k_clips: int = DEFAULT_K_CLIPS,
    cutoffs: Sequence[int] = RECALL_CUTOFFS,
) -> RecallReport:
    """Fraction of queries whose true video ranks within each cutoff."""
    if not queries:
        raise ValueError("need at least one query")
    for _, true_id in queries:
        if true_id not in candidates:
            raise ValueError(f"true video {true_id!r} missing from candidates")
    hits = {k: 0 for k in cutoffs}
    for query_vec, true_id in queries:
        ranking = rank_candidates(query_vec, candidates, k_clips)
        rank = next(
            i for i, cand in enumerate(ranking, start=1) if cand.video_id == true_id
        )
        for k in cutoffs:
            if rank <= k:
                hits[k] += 1
    n = len(queries)
    return RecallReport(r_at={k: hits[k] / n for k in cutoffs}, n_queries=n)
