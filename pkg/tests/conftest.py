"""Shared synthetic-corpus builders and session fixtures."""

from __future__ import annotations

import numpy as np
import pytest

from clipmine.types import (
    EmbeddingVector,
    FrameStream,
    MinedPair,
    NormPolicy,
    SeedRecord,
    VideoMetadata,
)

GOOD_METADATA = dict(viewcount=5000, length_s=0.0, upload_age_days=365, content_ok=True)


def make_metadata(duration_s: float, domain_label: str | None = None, **overrides) -> VideoMetadata:
    fields = dict(GOOD_METADATA, length_s=duration_s, domain_label=domain_label)
    fields.update(overrides)
    return VideoMetadata(**fields)


def make_stream(
    video_id: str,
    embeddings: np.ndarray,
    timestamps: np.ndarray | None = None,
    duration_s: float | None = None,
    metadata: VideoMetadata | bool = True,
    norm_policy: NormPolicy = NormPolicy.RAW,
) -> FrameStream:
    """1 Hz stream by default: timestamps 0..n-1, duration n seconds."""
    n = embeddings.shape[0]
    if timestamps is None:
        timestamps = np.arange(n, dtype=np.float64)
    if duration_s is None:
        duration_s = float(n)
    if metadata is True:
        metadata = make_metadata(duration_s)
    elif metadata is False:
        metadata = None
    return FrameStream(
        video_id=video_id,
        duration_s=duration_s,
        timestamps_s=timestamps,
        embeddings=embeddings,
        metadata=metadata,
        norm_policy=norm_policy,
    )


def unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    rows = rng.standard_normal((n, dim))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return rows.astype(np.float32)


def random_corpus(
    rng: np.random.Generator, n_videos: int, frames_per_video: int, dim: int
) -> list[FrameStream]:
    return [
        make_stream(f"vid{v:05d}", unit_rows(rng, frames_per_video, dim))
        for v in range(n_videos)
    ]


def make_pair(
    caption="a caption",
    seed_id="s0",
    video_id="v0",
    clip_start_s=30.0,
    clip_end_s=40.0,
    matched_frame_s=35.0,
    similarity=0.7,
) -> MinedPair:
    return MinedPair(
        caption=caption,
        seed_id=seed_id,
        video_id=video_id,
        clip_start_s=clip_start_s,
        clip_end_s=clip_end_s,
        matched_frame_s=matched_frame_s,
        similarity=similarity,
    )


class PlantedCorpus:
    """A corpus with known ground truth: each seed copied (plus tiny noise)
    into 3 distinct videos at known timestamps.

    Background frames and seeds are resampled until every background frame
    has |cos| < 0.45 against every seed and seeds are pairwise |cos| < 0.4,
    so at tau >= 0.5 the planted pairs are exactly the recoverable truth.
    """

    def __init__(
        self,
        rng_seed: int = 7,
        n_videos: int = 1000,
        frames_per_video: int = 100,
        dim: int = 64,
        n_seeds: int = 50,
        plants_per_seed: int = 3,
        noise_norm: float = 0.009,
    ):
        rng = np.random.default_rng(rng_seed)
        seeds64 = rng.standard_normal((n_seeds, dim))
        seeds64 /= np.linalg.norm(seeds64, axis=1, keepdims=True)
        for _ in range(100):
            gram = np.abs(seeds64 @ seeds64.T)
            np.fill_diagonal(gram, 0.0)
            bad = np.unique(np.nonzero(gram >= 0.4)[0])
            if bad.size == 0:
                break
            fresh = rng.standard_normal((bad.size, dim))
            seeds64[bad] = fresh / np.linalg.norm(fresh, axis=1, keepdims=True)
        else:
            raise RuntimeError("could not separate seed vectors")

        frames = rng.standard_normal((n_videos * frames_per_video, dim))
        frames /= np.linalg.norm(frames, axis=1, keepdims=True)
        for _ in range(100):
            close = np.abs(frames @ seeds64.T).max(axis=1) >= 0.45
            if not close.any():
                break
            fresh = rng.standard_normal((int(close.sum()), dim))
            frames[close] = fresh / np.linalg.norm(fresh, axis=1, keepdims=True)
        else:
            raise RuntimeError("could not separate background frames from seeds")

        used: set[tuple[int, int]] = set()
        self.truth: set[tuple[str, str, float]] = set()
        for s in range(n_seeds):
            videos = rng.choice(n_videos, size=plants_per_seed, replace=False)
            for video in (int(v) for v in videos):
                while True:
                    frame = int(rng.integers(0, frames_per_video))
                    if (video, frame) not in used:
                        break
                used.add((video, frame))
                noise = rng.standard_normal(dim)
                noise *= noise_norm / np.linalg.norm(noise)
                frames[video * frames_per_video + frame] = seeds64[s] + noise
                self.truth.add((f"seed{s:03d}", f"vid{video:05d}", float(frame)))

        frames32 = frames.astype(np.float32)
        self.streams = [
            make_stream(
                f"vid{v:05d}",
                frames32[v * frames_per_video : (v + 1) * frames_per_video],
            )
            for v in range(n_videos)
        ]
        self.seeds = [
            SeedRecord(
                seed_id=f"seed{s:03d}",
                caption=f"caption for topic {s:03d}",
                embedding=EmbeddingVector(seeds64[s].astype(np.float32)),
            )
            for s in range(n_seeds)
        ]
        self.dim = dim

@pytest.fixture(scope="session")
def planted() -> PlantedCorpus:
    return PlantedCorpus()


@pytest.fixture(scope="session")
def mixed_corpus() -> tuple[list[FrameStream], list[SeedRecord]]:
    """100K frames, dim 64, with duplicated rows across videos so that exact
    similarity ties are guaranteed to occur."""
    rng = np.random.default_rng(21)
    streams = random_corpus(rng, 1000, 100, 64)
    dup = streams[0].embeddings[3]
    doctored = []
    for v, stream in enumerate(streams):
        if v % 97 == 0:
            emb = stream.embeddings.copy()
            emb[7] = dup
            stream = make_stream(stream.video_id, emb)
        doctored.append(stream)
    seeds = [
        SeedRecord(f"q{i:03d}", f"query {i}", EmbeddingVector(vec))
        for i, vec in enumerate(unit_rows(rng, 100, 64))
    ]
    # one seed exactly equal to a stored frame exercises self-similarity
    seeds[0] = SeedRecord("q000", "query 0", EmbeddingVector(dup.copy()))
    return doctored, seeds
