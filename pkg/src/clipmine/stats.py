"""Dataset statistics, parameter sweeps, and the human-quality review flow."""

from __future__ import annotations

import logging
import math
import random
from collections import Counter
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from .mining import mine
from .search import FrameIndex
from .types import (
    DatasetManifest,
    InvariantViolation,
    MinedPair,
    MiningConfig,
    SeedRecord,
)

logger = logging.getLogger(__name__)

#: Captions with at least this many clips share one overflow histogram bucket.
HISTOGRAM_OVERFLOW_AT = 150
HISTOGRAM_OVERFLOW_LABEL = f">={HISTOGRAM_OVERFLOW_AT}"
UNLABELLED_DOMAIN = "Other"

SWEEP_AXES = ("tau", "t_span")


@dataclass(frozen=True)
class StatsReport:
    """Counters plus distribution summaries for one manifest."""

    n_pairs: int
    n_unique_clips: int
    n_unique_captions: int
    total_clip_hours: float
    mean_clips_per_caption: float
    clips_per_caption_histogram: dict[str, int]
    domain_distribution: dict[str, int]

    def __post_init__(self):
        if sum(self.clips_per_caption_histogram.values()) != self.n_unique_captions:
            raise InvariantViolation(
                "clips_per_caption_histogram",
                "histogram mass must equal n_unique_captions",
            )


@dataclass(frozen=True)
class SweepPoint:
    value: float
    n_pairs: int
    n_unique_clips: int
    n_unique_captions: int


@dataclass(frozen=True)
class SweepResult:
    """Mining counters as one config axis varies, points sorted by value."""

    axis: str
    points: tuple[SweepPoint, ...]

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise InvariantViolation("axis", f"must be one of {SWEEP_AXES}")
        values = [p.value for p in self.points]
        if values != sorted(values):
            raise InvariantViolation("points", "must be sorted by value ascending")


@dataclass(frozen=True)
class ReviewItem:
    """One sampled pair awaiting (or carrying) human judgements."""

    pair: MinedPair
    has_aligned_frame: bool | None = None
    relevance_score: int | None = None

    def __post_init__(self):
        if self.relevance_score is not None and self.relevance_score not in (0, 1, 2):
            raise InvariantViolation(
                "relevance_score", f"must be 0, 1 or 2, got {self.relevance_score}"
            )

    @property
    def scored(self) -> bool:
        return self.has_aligned_frame is not None and self.relevance_score is not None


@dataclass(frozen=True)
class ReviewSample:
    sample_size: int
    items: tuple[ReviewItem, ...]

    def __post_init__(self):
        if self.sample_size != len(self.items):
            raise InvariantViolation(
                "sample_size", f"{self.sample_size} != {len(self.items)} items"
            )


@dataclass(frozen=True)
class ReviewSummary:
    aligned_fraction: float
    mean_score: float
    score_counts: dict[int, int]


def bucket_label(clip_count: int) -> str:
    if clip_count >= HISTOGRAM_OVERFLOW_AT:
        return HISTOGRAM_OVERFLOW_LABEL
    return str(clip_count)


def compute_stats(
    manifest: DatasetManifest,
    domain_labels: Mapping[str, str] | None = None,
) -> StatsReport:
    """Recount everything from the pairs; stored counters are not trusted.

    Manifest rows do not carry video metadata, so the domain distribution
    needs an external video_id -> label map; pairs of unlabelled videos fall
    into the "Other" bucket, as does everything when no map is given.
    """
    pairs = manifest.pairs
    unique_clips: dict[tuple[str, float, float], float] = {}
    per_caption: Counter[str] = Counter()
    domains: Counter[str] = Counter()
    for pair in pairs:
        unique_clips.setdefault(pair.clip_key, pair.clip_length_s)
        per_caption[pair.caption] += 1
        label = None if domain_labels is None else domain_labels.get(pair.video_id)
        domains[label if label is not None else UNLABELLED_DOMAIN] += 1

    total_hours = math.fsum(unique_clips.values()) / 3600.0
    n_pairs = len(pairs)
    n_captions = len(per_caption)
    if n_captions:
        mean = n_pairs / n_captions
    else:
        mean = 0.0
        logger.warning("compute_stats: empty manifest, mean_clips_per_caption set to 0")

    histogram: Counter[str] = Counter()
    for count in per_caption.values():
        histogram[bucket_label(count)] += 1

    return StatsReport(
        n_pairs=n_pairs,
        n_unique_clips=len(unique_clips),
        n_unique_captions=n_captions,
        total_clip_hours=total_hours,
        mean_clips_per_caption=mean,
        clips_per_caption_histogram=dict(histogram),
        domain_distribution=dict(domains),
    )


def sweep(
    seeds: Sequence[SeedRecord],
    index: FrameIndex,
    base_config: MiningConfig,
    axis: str,
    values: Sequence[float],
    threads: int = 1,
) -> SweepResult:
    """One mine() run per value, all other config fields held fixed.

    The de-dup window stays at the base config's resolved value during a
    t_span sweep, so match counts depend only on tau and the span sweep
    varies clip geometry alone.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    if not values:
        raise ValueError("values must be non-empty")

    points: list[SweepPoint] = []
    for value in sorted(values):
        if axis == "tau":
            cfg = replace(base_config, tau=value)
        else:
            cfg = replace(base_config, t_span_s=value)
        manifest = mine(seeds, index, cfg, threads=threads)
        counters = manifest.counters
        points.append(
            SweepPoint(
                value=value,
                n_pairs=counters.n_pairs,
                n_unique_clips=counters.n_unique_clips,
                n_unique_captions=counters.n_unique_captions,
            )
        )

    if axis == "tau":
        for prev, cur in zip(points, points[1:]):
            if cur.n_pairs > prev.n_pairs:
                raise RuntimeError(
                    f"tau sweep not monotone: n_pairs rose from {prev.n_pairs} "
                    f"at {prev.value} to {cur.n_pairs} at {cur.value}"
                )
    return SweepResult(axis=axis, points=tuple(points))


def draw_review_sample(
    manifest: DatasetManifest, sample_size: int, rng_seed: int
) -> ReviewSample:
    """Uniform sample of pairs without replacement, reproducible per rng_seed.

    Judgement fields start empty; humans fill them offline.
    """
    n = len(manifest.pairs)
    if not 0 <= sample_size <= n:
        raise ValueError(f"sample_size {sample_size} outside [0, {n}]")
    indices = sorted(random.Random(rng_seed).sample(range(n), sample_size))
    items = tuple(ReviewItem(pair=manifest.pairs[i]) for i in indices)
    return ReviewSample(sample_size=sample_size, items=items)


def score_review(sample: ReviewSample) -> ReviewSummary:
    """Aggregate a fully-scored review sample."""
    if sample.sample_size == 0:
        raise ValueError("cannot score an empty sample")
    for i, item in enumerate(sample.items):
        if not item.scored:
            raise ValueError(f"item {i} is not fully scored")
    n = sample.sample_size
    aligned = sum(1 for item in sample.items if item.has_aligned_frame)
    counts = {score: 0 for score in (0, 1, 2)}
    for item in sample.items:
        counts[item.relevance_score] += 1
    mean = sum(item.relevance_score for item in sample.items) / n
    return ReviewSummary(
        aligned_fraction=aligned / n, mean_score=mean, score_counts=counts
    )
