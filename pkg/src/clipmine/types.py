"""Domain types shared across the mining engine.

Embedding payloads are float32; similarity arithmetic elsewhere accumulates
in float64. Every type checks its invariants at construction and is frozen
afterwards, so instances can be shared freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

UNIT_NORM_TOL = 1e-5
CLIP_SPAN_TOL = 1e-9
#: Allowed disagreement between metadata length and stream duration, seconds.
DURATION_MISMATCH_TOL = 2.0


class InvariantViolation(ValueError):
    """A domain type was constructed with a value that breaks an invariant.

    The message always starts with the offending field name.
    """

    def __init__(self, field_name: str, message: str):
        self.field_name = field_name
        super().__init__(f"{field_name}: {message}")


class NormPolicy(Enum):
    """Whether stored vectors are raw or unit-normalized."""

    RAW = "raw"
    UNIT = "unit"

    @property
    def wire_byte(self) -> int:
        return 0 if self is NormPolicy.RAW else 1

    @classmethod
    def from_wire_byte(cls, value: int) -> "NormPolicy":
        if value == 0:
            return cls.RAW
        if value == 1:
            return cls.UNIT
        raise InvariantViolation("norm_policy", f"unknown policy byte {value}")


def _as_float32_matrix(values: np.ndarray, field_name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 2:
        raise InvariantViolation(field_name, f"expected a 2-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvariantViolation(field_name, "all components must be finite")
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


def check_unit_norms(matrix: np.ndarray, field_name: str) -> None:
    """Reject rows whose L2 norm strays more than UNIT_NORM_TOL from 1."""
    norms = np.linalg.norm(matrix.astype(np.float64), axis=-1)
    bad = np.abs(norms - 1.0) > UNIT_NORM_TOL
    if np.any(bad):
        first = int(np.argmax(bad))
        raise InvariantViolation(
            field_name,
            f"unit-normalized vector at row {first} has norm {norms.flat[first]:.8f}",
        )


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    """A fixed-dimension float32 vector in the shared semantic space."""

    values: np.ndarray
    norm_policy: NormPolicy = NormPolicy.RAW

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float32)
        if arr.ndim != 1:
            raise InvariantViolation("values", f"expected a 1-d vector, got shape {arr.shape}")
        if arr.shape[0] == 0:
            raise InvariantViolation("values", "dimension must be > 0")
        if not np.all(np.isfinite(arr)):
            raise InvariantViolation("values", "all components must be finite")
        if self.norm_policy is NormPolicy.UNIT:
            check_unit_norms(arr[None, :], "values")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingVector):
            return NotImplemented
        return self.norm_policy is other.norm_policy and np.array_equal(
            self.values, other.values
        )

    def __repr__(self) -> str:
        return f"EmbeddingVector(dim={self.dim}, norm_policy={self.norm_policy.value})"


@dataclass(frozen=True)
class SeedRecord:
    """One image-caption pair from the seed set.

    Captions are kept verbatim; several seeds may share the same caption text
    as long as their ids differ.
    """

    seed_id: str
    caption: str
    embedding: EmbeddingVector

    def __post_init__(self):
        if not self.seed_id:
            raise InvariantViolation("seed_id", "must be non-empty")
        if not self.caption.strip():
            raise InvariantViolation("caption", "must be non-empty after whitespace trimming")


@dataclass(frozen=True)
class VideoMetadata:
    """Per-video attributes used by the corpus filter."""

    viewcount: int
    length_s: float
    upload_age_days: int
    content_ok: bool
    domain_label: str | None = None

    def __post_init__(self):
        if self.viewcount < 0:
            raise InvariantViolation("viewcount", "must be non-negative")
        if not math.isfinite(self.length_s) or self.length_s < 0:
            raise InvariantViolation("length_s", "must be finite and non-negative")
        if self.upload_age_days < 0:
            raise InvariantViolation("upload_age_days", "must be non-negative")


@dataclass(frozen=True, eq=False)
class FrameStream:
    """Timestamped frame embeddings for one video, sampled nominally at 1fps.

    Timestamps are seconds from the start of the video, strictly increasing,
    each within [0, duration_s]. Gaps wider than the nominal spacing are
    permitted.
    """

    video_id: str
    duration_s: float
    timestamps_s: np.ndarray
    embeddings: np.ndarray
    metadata: VideoMetadata | None = None
    norm_policy: NormPolicy = NormPolicy.RAW

    def __post_init__(self):
        if not self.video_id:
            raise InvariantViolation("video_id", "must be non-empty")
        if not math.isfinite(self.duration_s) or self.duration_s < 0:
            raise InvariantViolation("duration_s", "must be finite and non-negative")

        ts = np.asarray(self.timestamps_s, dtype=np.float64)
        if ts.ndim != 1:
            raise InvariantViolation("timestamps_s", f"expected 1-d, got shape {ts.shape}")
        emb = _as_float32_matrix(self.embeddings, "embeddings")
        if emb.shape[0] != ts.shape[0]:
            raise InvariantViolation(
                "embeddings",
                f"{emb.shape[0]} rows but {ts.shape[0]} timestamps",
            )
        if emb.shape[0] > 0 and emb.shape[1] == 0:
            raise InvariantViolation("embeddings", "dimension must be > 0")
        if ts.shape[0] > 0:
            if not np.all(np.isfinite(ts)):
                raise InvariantViolation("timestamps_s", "all timestamps must be finite")
            if ts[0] < 0 or ts[-1] > self.duration_s:
                raise InvariantViolation(
                    "timestamps_s", f"timestamps must lie in [0, {self.duration_s}]"
                )
            if np.any(np.diff(ts) <= 0):
                raise InvariantViolation("timestamps_s", "timestamps must be strictly increasing")
        if self.norm_policy is NormPolicy.UNIT and emb.shape[0] > 0:
            check_unit_norms(emb, "embeddings")
        if self.metadata is not None:
            if abs(self.metadata.length_s - self.duration_s) > DURATION_MISMATCH_TOL:
                raise InvariantViolation(
                    "duration_s",
                    f"disagrees with metadata.length_s by more than "
                    f"{DURATION_MISMATCH_TOL} s "
                    f"({self.duration_s} vs {self.metadata.length_s})",
                )
        ts.setflags(write=False)
        object.__setattr__(self, "timestamps_s", ts)
        object.__setattr__(self, "embeddings", emb)

    @property
    def n_frames(self) -> int:
        return int(self.timestamps_s.shape[0])

    @property
    def dim(self) -> int:
        return int(self.embeddings.shape[1]) if self.embeddings.ndim == 2 else 0

    def __len__(self) -> int:
        return self.n_frames

    def __iter__(self) -> Iterator[tuple[float, np.ndarray]]:
        for i in range(self.n_frames):
            yield float(self.timestamps_s[i]), self.embeddings[i]


@dataclass(frozen=True)
class MiningConfig:
    """Knobs of the mining pipeline with their published defaults.

    nms_window_s defaults to the clip span: one seed should not burn its
    match budget on consecutive frames of a single video.
    """

    tau: float = 0.6
    t_span_s: float = 10.0
    top_k: int = 10
    frame_rate_hz: float = 1.0
    normalize: bool = True
    nms_window_s: float | None = None

    def __post_init__(self):
        if not math.isfinite(self.tau):
            raise InvariantViolation("tau", "must be finite")
        if self.normalize and not -1.0 <= self.tau <= 1.0:
            raise InvariantViolation(
                "tau", f"must lie in [-1, 1] when normalize is on, got {self.tau}"
            )
        if not math.isfinite(self.t_span_s) or self.t_span_s <= 0:
            raise InvariantViolation("t_span_s", "must be finite and > 0")
        if self.top_k < 1:
            raise InvariantViolation("top_k", "must be >= 1")
        if not math.isfinite(self.frame_rate_hz) or self.frame_rate_hz <= 0:
            raise InvariantViolation("frame_rate_hz", "must be finite and > 0")
        if self.nms_window_s is None:
            object.__setattr__(self, "nms_window_s", self.t_span_s)
        elif not math.isfinite(self.nms_window_s) or self.nms_window_s < 0:
            raise InvariantViolation("nms_window_s", "must be finite and >= 0")


@dataclass(frozen=True)
class MinedPair:
    """One output row: a caption transferred to a clip of one video."""

    caption: str
    seed_id: str
    video_id: str
    clip_start_s: float
    clip_end_s: float
    matched_frame_s: float
    similarity: float

    def __post_init__(self):
        for name in ("clip_start_s", "clip_end_s", "matched_frame_s", "similarity"):
            if not math.isfinite(getattr(self, name)):
                raise InvariantViolation(name, "must be finite")
        if not self.caption.strip():
            raise InvariantViolation("caption", "must be non-empty after whitespace trimming")
        if not self.seed_id:
            raise InvariantViolation("seed_id", "must be non-empty")
        if not self.video_id:
            raise InvariantViolation("video_id", "must be non-empty")
        if self.clip_start_s < 0:
            raise InvariantViolation("clip_start_s", "must be >= 0")
        if not self.clip_start_s <= self.matched_frame_s <= self.clip_end_s:
            raise InvariantViolation(
                "matched_frame_s",
                f"must satisfy clip_start_s <= matched_frame_s <= clip_end_s, got "
                f"[{self.clip_start_s}, {self.matched_frame_s}, {self.clip_end_s}]",
            )

    @property
    def clip_key(self) -> tuple[str, float, float]:
        return (self.video_id, self.clip_start_s, self.clip_end_s)

    @property
    def clip_length_s(self) -> float:
        return self.clip_end_s - self.clip_start_s


@dataclass(frozen=True)
class ManifestCounters:
    """Dataset-size counters stored alongside the mined pairs."""

    n_pairs: int
    n_unique_clips: int
    n_unique_captions: int
    total_clip_hours: float

    def __post_init__(self):
        for name in ("n_pairs", "n_unique_clips", "n_unique_captions"):
            if getattr(self, name) < 0:
                raise InvariantViolation(name, "must be non-negative")
        if not math.isfinite(self.total_clip_hours) or self.total_clip_hours < 0:
            raise InvariantViolation("total_clip_hours", "must be finite and non-negative")


def compute_counters(pairs: Sequence[MinedPair]) -> ManifestCounters:
    """Recount the manifest counters from scratch.

    Clip hours are summed over distinct clips, not pairs: a clip selected by
    several seeds contributes its length once. math.fsum keeps the total
    independent of iteration order.
    """
    unique_clips: dict[tuple[str, float, float], float] = {}
    captions: set[str] = set()
    for pair in pairs:
        unique_clips.setdefault(pair.clip_key, pair.clip_length_s)
        captions.add(pair.caption)
    total_hours = math.fsum(unique_clips.values()) / 3600.0
    return ManifestCounters(
        n_pairs=len(pairs),
        n_unique_clips=len(unique_clips),
        n_unique_captions=len(captions),
        total_clip_hours=total_hours,
    )


@dataclass(frozen=True)
class DatasetManifest:
    """The mined dataset: pairs plus the config and counters that produced it.

    Construction checks only per-field sanity. Cross-record invariants
    (similarity >= tau, clip geometry, counter consistency) are the domain of
    validate_manifest, which reports breaches as data rather than failures so
    that manifests parsed from storage can be audited.
    """

    pairs: tuple[MinedPair, ...]
    config: MiningConfig
    counters: ManifestCounters

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))

    @classmethod
    def from_pairs(
        cls, pairs: Iterable[MinedPair], config: MiningConfig
    ) -> "DatasetManifest":
        pairs = tuple(pairs)
        return cls(pairs=pairs, config=config, counters=compute_counters(pairs))


def validate_manifest(
    manifest: DatasetManifest,
    video_durations: Mapping[str, float] | None = None,
) -> list[str]:
    """Check every pair and counter invariant; return violations as strings.

    An empty list means the manifest is internally consistent. Checks that
    need the source video duration (clip fits inside the video, clip length
    equals min(span, duration)) run only for videos present in
    video_durations.
    """
    violations: list[str] = []
    cfg = manifest.config
    for i, pair in enumerate(manifest.pairs):
        where = f"pair {i} ({pair.video_id} @ {pair.matched_frame_s})"
        if pair.similarity < cfg.tau:
            violations.append(
                f"{where}: similarity below threshold ({pair.similarity} < {cfg.tau})"
            )
        length = pair.clip_length_s
        if length > cfg.t_span_s + CLIP_SPAN_TOL:
            violations.append(
                f"{where}: clip length {length} exceeds span {cfg.t_span_s}"
            )
        if video_durations is not None:
            duration = video_durations.get(pair.video_id)
            if duration is None:
                violations.append(f"{where}: video_id not present in corpus")
            else:
                if pair.clip_end_s > duration + CLIP_SPAN_TOL:
                    violations.append(
                        f"{where}: clip_end_s {pair.clip_end_s} exceeds video duration {duration}"
                    )
                expected = min(cfg.t_span_s, duration)
                if abs(length - expected) > 1e-6:
                    violations.append(
                        f"{where}: clip length {length} != min(span, duration) = {expected}"
                    )
    recounted = compute_counters(manifest.pairs)
    stored = manifest.counters
    for name in ("n_pairs", "n_unique_clips", "n_unique_captions", "total_clip_hours"):
        got, want = getattr(stored, name), getattr(recounted, name)
        if got != want:
            violations.append(f"counter {name}: stored {got} != recomputed {want}")
    return violations
