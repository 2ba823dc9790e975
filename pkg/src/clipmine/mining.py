"""The mining pipeline: seeds in, weakly-labelled clip-caption pairs out.

For each seed the pipeline queries the frame index, de-duplicates near-by
matches inside each video, keeps the best top_k, cuts a clip of the
configured span around every surviving frame, and transfers the seed's
caption verbatim.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .search import FrameIndex, Match, SearchError, query
from .types import (
    DatasetManifest,
    FrameStream,
    InvariantViolation,
    MinedPair,
    MiningConfig,
    SeedRecord,
)

logger = logging.getLogger(__name__)

#: Pre-NMS query depth, as a multiple of top_k. Ten gives plenty of survivor
#: headroom at bounded cost; tune via mine(query_depth_factor=...).
DEFAULT_QUERY_DEPTH_FACTOR = 10


@dataclass(frozen=True)
class CorpusFilter:
    """Metadata predicates a video must pass before its frames are indexed.

    Comparisons: viewcount strictly greater, length strictly less, age
    inclusive on both ends.
    """

    min_viewcount: int = 1000
    max_length_s: float = 1200.0
    min_age_days: int = 90
    max_age_days: int = 3650
    require_content_ok: bool = True

    def __post_init__(self):
        if self.min_age_days > self.max_age_days:
            raise InvariantViolation(
                "min_age_days", "must not exceed max_age_days"
            )

    def admits(self, stream: FrameStream) -> bool:
        meta = stream.metadata
        if meta is None:
            return False
        return (
            meta.viewcount > self.min_viewcount
            and meta.length_s < self.max_length_s
            and self.min_age_days <= meta.upload_age_days <= self.max_age_days
            and (meta.content_ok or not self.require_content_ok)
        )


def filter_corpus(
    streams: Sequence[FrameStream], corpus_filter: CorpusFilter
) -> list[FrameStream]:
    """Keep exactly the streams passing every predicate, in input order.

    A stream without metadata is rejected with a logged per-stream
    diagnostic instead of failing the whole pass.
    """
    kept: list[FrameStream] = []
    for stream in streams:
        if stream.metadata is None:
            logger.warning(
                "filter_corpus: rejecting %r: missing metadata", stream.video_id
            )
            continue
        if corpus_filter.admits(stream):
            kept.append(stream)
    return kept


def extract_clip(
    matched_frame_s: float, duration_s: float, t_span_s: float
) -> tuple[float, float]:
    """Clip window of length min(t_span_s, duration_s) around a matched frame.

    Centered on the frame when possible; shifted (never truncated) when the
    frame sits near a video boundary. A video shorter than the span yields
    the whole video.
    """
    if t_span_s <= 0:
        raise ValueError(f"t_span_s must be > 0, got {t_span_s}")
    if not 0 <= matched_frame_s <= duration_s:
        raise ValueError(
            f"matched_frame_s {matched_frame_s} outside [0, {duration_s}]"
        )
    length = min(t_span_s, duration_s)
    start = min(max(matched_frame_s - t_span_s / 2.0, 0.0), duration_s - length)
    return start, start + length


def temporal_nms(matches: Sequence[Match], window_s: float) -> list[Match]:
    """Greedy suppression of near-by matches within one video.

    A match survives iff its timestamp differs by at least window_s from
    every higher-scoring survivor. Input must come from a single video;
    output preserves similarity ordering.
    """
    if window_s < 0:
        raise ValueError(f"window_s must be >= 0, got {window_s}")
    videos = {m.video_id for m in matches}
    if len(videos) > 1:
        raise ValueError(f"matches span several videos: {sorted(videos)}")
    ranked = sorted(matches, key=lambda m: (-m.similarity, m.timestamp_s))
    kept: list[Match] = []
    for match in ranked:
        if all(abs(match.timestamp_s - k.timestamp_s) >= window_s for k in kept):
            kept.append(match)
    return kept


def _mine_one_seed(
    seed: SeedRecord,
    index: FrameIndex,
    config: MiningConfig,
    query_depth: int,
) -> list[MinedPair]:
    matches = query(index, seed.embedding, config.tau, query_depth)

    by_video: dict[str, list[Match]] = {}
    for match in matches:
        by_video.setdefault(match.video_id, []).append(match)
    survivors: set[tuple[str, float]] = set()
    for video_matches in by_video.values():
        for kept in temporal_nms(video_matches, config.nms_window_s):
            survivors.add((kept.video_id, kept.timestamp_s))

    pairs: list[MinedPair] = []
    for match in matches:  # already in global (sim desc, video, ts) order
        if (match.video_id, match.timestamp_s) not in survivors:
            continue
        start, end = extract_clip(
            match.timestamp_s, index.durations[match.video_id], config.t_span_s
        )
        pairs.append(
            MinedPair(
                caption=seed.caption,
                seed_id=seed.seed_id,
                video_id=match.video_id,
                clip_start_s=start,
                clip_end_s=end,
                matched_frame_s=match.timestamp_s,
                similarity=match.similarity,
            )
        )
        if len(pairs) == config.top_k:
            break
    return pairs


def mine(
    seeds: Sequence[SeedRecord],
    index: FrameIndex,
    config: MiningConfig,
    threads: int = 1,
    query_depth_factor: int = DEFAULT_QUERY_DEPTH_FACTOR,
) -> DatasetManifest:
    """Run the full pipeline and assemble the manifest.

    Pure function of its inputs: per-seed results are merged in seed input
    order, so output never depends on scheduling.
    """
    if not seeds:
        raise SearchError("empty seed set")
    for seed in seeds:
        if seed.embedding.dim != index.dim:
            raise SearchError(
                f"seed {seed.seed_id!r} dim {seed.embedding.dim} does not match "
                f"index dim {index.dim}"
            )
    if query_depth_factor < 1:
        raise ValueError("query_depth_factor must be >= 1")
    depth = config.top_k * query_depth_factor

    if threads <= 1 or len(seeds) <= 1:
        per_seed = [_mine_one_seed(s, index, config, depth) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_seed = list(
                pool.map(lambda s: _mine_one_seed(s, index, config, depth), seeds)
            )

    pairs = [pair for seed_pairs in per_seed for pair in seed_pairs]
    return DatasetManifest.from_pairs(pairs, config)
