"""Batch embedding jobs: images to seed files, videos to frame streams."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .media import MediaError, load_image, sample_video_frames
from .providers import DEFAULT_MODEL, get_provider
from .writer import write_caption_sidecar, write_embedding_file, write_frame_sidecar

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ImageItem:
    path: Path
    seed_id: str
    caption: str


@dataclass(frozen=True)
class VideoItem:
    path: Path
    video_id: str
    metadata: Mapping[str, Any] | None = None


@dataclass(frozen=True)
class AdapterJob:
    """One batch: media in, an embedding file plus its sidecar out."""

    media: tuple
    out_embeddings: Path
    out_sidecar: Path
    model: str = DEFAULT_MODEL
    dim: int = 64

    def __post_init__(self):
        object.__setattr__(self, "media", tuple(self.media))


@dataclass(frozen=True)
class EmbedResult:
    """What a job produced; vectors stay available for bit-level checks."""

    count: int
    dim: int
    vectors: np.ndarray
    skipped: tuple[str, ...] = ()


def embed_images(job: AdapterJob) -> EmbedResult:
    """Embed seed images; one row per decodable image, in input order.

    Undecodable images are skipped with a logged diagnostic and omitted
    from the sidecar, so rows stay contiguous.
    """
    provider = get_provider(job.model, job.dim)
    images: list[np.ndarray] = []
    records: list[tuple[str, str]] = []
    skipped: list[str] = []
    for item in job.media:
        image = load_image(item.path)
        if image is None:
            logger.warning("embed_images: skipping undecodable %s", item.path)
            skipped.append(str(item.path))
            continue
        images.append(image)
        records.append((item.seed_id, item.caption))
    if not images:
        raise MediaError("no decodable images in job")
    vectors = provider.embed(images)
    write_embedding_file(vectors, job.out_embeddings)
    write_caption_sidecar(records, job.out_sidecar)
    return EmbedResult(count=len(records), dim=provider.dim, vectors=vectors,
                       skipped=tuple(skipped))


def embed_video_frames(job: AdapterJob, sample_rate_hz: float = 1.0) -> EmbedResult:
    """Embed one video's frames at the sampling rate (1 Hz by default)."""
    if len(job.media) != 1 or not isinstance(job.media[0], VideoItem):
        raise ValueError("embed_video_frames takes a job with exactly one VideoItem")
    item = job.media[0]
    provider = get_provider(job.model, job.dim)
    frames, timestamps, duration_s = sample_video_frames(item.path, sample_rate_hz)
    vectors = provider.embed(frames)
    metadata = None
    if item.metadata is not None:
        metadata = dict(item.metadata)
        metadata.setdefault("length_s", duration_s)
    write_embedding_file(vectors, job.out_embeddings)
    write_frame_sidecar(item.video_id, duration_s, timestamps, job.out_sidecar,
                        metadata=metadata)
    return EmbedResult(count=len(frames), dim=provider.dim, vectors=vectors)
