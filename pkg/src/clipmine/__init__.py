"""Caption-transfer mining: weakly-labelled video-caption datasets from
image-caption seeds and per-frame video embeddings."""

from .mining import CorpusFilter, extract_clip, filter_corpus, mine, temporal_nms
from .retrieval import (
    RecallReport,
    ScoredCandidate,
    equally_spaced_indices,
    recall_at_k,
    score_video,
)
from .search import FrameIndex, Match, SearchError, build_index, query, query_batch
from .stats import (
    ReviewItem,
    ReviewSample,
    ReviewSummary,
    StatsReport,
    SweepPoint,
    SweepResult,
    compute_stats,
    draw_review_sample,
    score_review,
    sweep,
)
from .types import (
    DatasetManifest,
    EmbeddingVector,
    FrameStream,
    InvariantViolation,
    ManifestCounters,
    MinedPair,
    MiningConfig,
    NormPolicy,
    SeedRecord,
    VideoMetadata,
    compute_counters,
    validate_manifest,
)

__version__ = "0.1.0"
