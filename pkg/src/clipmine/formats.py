"""Bit-exact readers and writers for every on-disk artifact.

Embeddings travel in a small binary container (24-byte header + row-major
float32 payload, all little-endian); everything else is line-delimited JSON
with a fixed field order, so identical inputs always produce byte-identical
files. Floats in text records use Python's shortest round-trip repr.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .retrieval import RecallReport
from .stats import ReviewItem, ReviewSample, StatsReport, SweepPoint, SweepResult
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
    check_unit_norms,
)

MAGIC = b"EMBD"
FORMAT_VERSION = 1
#: magic(4) + version(u32) + dim(u32) + count(u64) + policy(u8) + 3 zero bytes
_HEADER = struct.Struct("<4sIIQB3x")
HEADER_LEN = _HEADER.size
assert HEADER_LEN == 24


class FormatError(ValueError):
    """A file does not conform to one of the on-disk formats."""


@dataclass(frozen=True)
class EmbeddingFileHeader:
    dim: int
    count: int
    norm_policy: NormPolicy

    def pack(self) -> bytes:
        return _HEADER.pack(
            MAGIC, FORMAT_VERSION, self.dim, self.count, self.norm_policy.wire_byte
        )

    @classmethod
    def unpack(cls, raw: bytes, source: str = "<bytes>") -> "EmbeddingFileHeader":
        if len(raw) < HEADER_LEN:
            raise FormatError(f"{source}: truncated header ({len(raw)} < {HEADER_LEN} bytes)")
        magic, version, dim, count, policy_byte = _HEADER.unpack(raw[:HEADER_LEN])
        if magic != MAGIC:
            raise FormatError(f"{source}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise FormatError(f"{source}: unsupported version {version}")
        if dim == 0:
            raise FormatError(f"{source}: dim must be > 0")
        try:
            policy = NormPolicy.from_wire_byte(policy_byte)
        except InvariantViolation as exc:
            raise FormatError(f"{source}: {exc}") from exc
        return cls(dim=dim, count=count, norm_policy=policy)


# ---------------------------------------------------------------------------
# binary embedding files
# ---------------------------------------------------------------------------


def write_embedding_array(
    array: np.ndarray, norm_policy: NormPolicy, destination: Path | str
) -> int:
    """Write a (count, dim) float32 array; returns the number of bytes written."""
    arr = np.ascontiguousarray(np.asarray(array, dtype=np.float32))
    if arr.ndim != 2:
        raise FormatError(f"expected a 2-d array, got shape {arr.shape}")
    count, dim = arr.shape
    if dim == 0:
        raise FormatError("dim must be > 0")
    header = EmbeddingFileHeader(dim=dim, count=count, norm_policy=norm_policy)
    payload = arr.astype("<f4", copy=False).tobytes(order="C")
    path = Path(destination)
    try:
        with path.open("wb") as fh:
            fh.write(header.pack())
            fh.write(payload)
    except OSError as exc:
        raise OSError(f"writing embeddings to {path}: {exc}") from exc
    return HEADER_LEN + len(payload)


def write_embeddings(vectors: Sequence[EmbeddingVector], destination: Path | str) -> int:
    """Write a homogeneous list of vectors; returns the byte count."""
    if not vectors:
        raise FormatError("cannot write an empty vector list (dim would be 0)")
    dim = vectors[0].dim
    policy = vectors[0].norm_policy
    for i, vec in enumerate(vectors):
        if vec.dim != dim:
            raise FormatError(f"vector {i} has dim {vec.dim}, expected {dim}")
        if vec.norm_policy is not policy:
            raise FormatError(f"vector {i} has norm_policy {vec.norm_policy.value}, "
                              f"expected {policy.value}")
    matrix = np.stack([vec.values for vec in vectors])
    return write_embedding_array(matrix, policy, destination)


def read_embedding_array(source: Path | str) -> tuple[np.ndarray, NormPolicy]:
    """Read a (count, dim) float32 array plus its norm policy."""
    path = Path(source)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise OSError(f"reading embeddings from {path}: {exc}") from exc
    header = EmbeddingFileHeader.unpack(raw, source=str(path))
    expected = HEADER_LEN + header.count * header.dim * 4
    if len(raw) != expected:
        raise FormatError(
            f"{path}: payload length {len(raw) - HEADER_LEN} does not match "
            f"count {header.count} x dim {header.dim} x 4 bytes"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=HEADER_LEN)
    matrix = data.reshape(header.count, header.dim).astype(np.float32, copy=True)
    matrix.setflags(write=False)
    return matrix, header.norm_policy


def read_embeddings(source: Path | str) -> list[EmbeddingVector]:
    matrix, policy = read_embedding_array(source)
    return [EmbeddingVector(row, policy) for row in matrix]


def check_embedding_file(source: Path | str) -> list[str]:
    """Validate one embedding file; violations come back as strings."""
    path = Path(source)
    try:
        matrix, policy = read_embedding_array(path)
    except (FormatError, OSError) as exc:
        return [str(exc)]
    violations: list[str] = []
    if not np.all(np.isfinite(matrix)):
        violations.append(f"{path}: payload contains non-finite components")
    elif policy is NormPolicy.UNIT and matrix.shape[0] > 0:
        try:
            check_unit_norms(matrix, "payload")
        except InvariantViolation as exc:
            violations.append(f"{path}: {exc}")
    return violations


# ---------------------------------------------------------------------------
# line-delimited JSON plumbing
# ---------------------------------------------------------------------------


def _dump_line(record: Mapping[str, Any]) -> str:
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


def _write_lines(lines: Iterable[str], destination: Path | str) -> None:
    path = Path(destination)
    try:
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            for line in lines:
                fh.write(line)
                fh.write("\n")
    except OSError as exc:
        raise OSError(f"writing {path}: {exc}") from exc


def _parse_lines(source: Path | str) -> list[tuple[int, dict]]:
    """Parse a .jsonl file into (1-based line number, object) pairs."""
    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"reading {path}: {exc}") from exc
    records: list[tuple[int, dict]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: line {lineno}: malformed JSON ({exc.msg})") from exc
        if not isinstance(obj, dict):
            raise FormatError(f"{path}: line {lineno}: expected an object")
        records.append((lineno, obj))
    return records


def _require(obj: dict, key: str, source: str, lineno: int) -> Any:
    if key not in obj:
        raise FormatError(f"{source}: line {lineno}: missing field {key!r}")
    return obj[key]


# ---------------------------------------------------------------------------
# seed sets
# ---------------------------------------------------------------------------


def write_seed_set(
    seeds: Sequence[SeedRecord], embedding_file: Path | str, caption_sidecar: Path | str
) -> None:
    """Write seeds as an embedding file plus a caption sidecar referencing it."""
    write_embeddings([seed.embedding for seed in seeds], embedding_file)
    lines = [
        _dump_line({"seed_id": seed.seed_id, "caption": seed.caption, "row": row})
        for row, seed in enumerate(seeds)
    ]
    _write_lines(lines, caption_sidecar)


def read_seed_set(
    embedding_file: Path | str,
    caption_sidecar: Path | str,
    expected_dim: int | None = None,
) -> list[SeedRecord]:
    """Read seeds back; every sidecar line must point at a valid embedding row."""
    matrix, policy = read_embedding_array(embedding_file)
    if expected_dim is not None and matrix.shape[1] != expected_dim:
        raise FormatError(
            f"{embedding_file}: dim {matrix.shape[1]} does not match corpus dim {expected_dim}"
        )
    source = str(Path(caption_sidecar))
    seeds: list[SeedRecord] = []
    seen_ids: set[str] = set()
    for lineno, obj in _parse_lines(caption_sidecar):
        seed_id = str(_require(obj, "seed_id", source, lineno))
        caption = str(_require(obj, "caption", source, lineno))
        row = _require(obj, "row", source, lineno)
        if not isinstance(row, int) or not 0 <= row < matrix.shape[0]:
            raise FormatError(
                f"{source}: line {lineno}: row {row!r} outside [0, {matrix.shape[0]})"
            )
        if seed_id in seen_ids:
            raise FormatError(f"{source}: line {lineno}: duplicate seed_id {seed_id!r}")
        seen_ids.add(seed_id)
        try:
            seeds.append(
                SeedRecord(seed_id, caption, EmbeddingVector(matrix[row], policy))
            )
        except InvariantViolation as exc:
            raise FormatError(f"{source}: line {lineno}: {exc}") from exc
    return seeds


def write_query_set(
    queries: Sequence[tuple[str, str, EmbeddingVector]],
    embedding_file: Path | str,
    meta_sidecar: Path | str,
) -> None:
    """Write retrieval queries: (query_id, true_video_id, embedding) triples."""
    write_embeddings([q[2] for q in queries], embedding_file)
    lines = [
        _dump_line({"query_id": qid, "true_video_id": vid, "row": row})
        for row, (qid, vid, _) in enumerate(queries)
    ]
    _write_lines(lines, meta_sidecar)


def read_query_set(
    embedding_file: Path | str, meta_sidecar: Path | str
) -> list[tuple[str, str, EmbeddingVector]]:
    matrix, policy = read_embedding_array(embedding_file)
    source = str(Path(meta_sidecar))
    queries: list[tuple[str, str, EmbeddingVector]] = []
    for lineno, obj in _parse_lines(meta_sidecar):
        qid = str(_require(obj, "query_id", source, lineno))
        true_id = str(_require(obj, "true_video_id", source, lineno))
        row = _require(obj, "row", source, lineno)
        if not isinstance(row, int) or not 0 <= row < matrix.shape[0]:
            raise FormatError(
                f"{source}: line {lineno}: row {row!r} outside [0, {matrix.shape[0]})"
            )
        queries.append((qid, true_id, EmbeddingVector(matrix[row], policy)))
    if not queries:
        raise FormatError(f"{source}: no queries")
    return queries


# ---------------------------------------------------------------------------
# frame streams
# ---------------------------------------------------------------------------


def _metadata_record(meta: VideoMetadata) -> dict[str, Any]:
    record: dict[str, Any] = {
        "viewcount": meta.viewcount,
        "length_s": meta.length_s,
        "upload_age_days": meta.upload_age_days,
        "content_ok": meta.content_ok,
    }
    if meta.domain_label is not None:
        record["domain_label"] = meta.domain_label
    return record


def write_frame_stream(
    stream: FrameStream, embedding_file: Path | str, frame_sidecar: Path | str
) -> None:
    """Write one video's frames: embeddings binary plus a per-row sidecar."""
    write_embedding_array(stream.embeddings, stream.norm_policy, embedding_file)
    header: dict[str, Any] = {
        "video_id": stream.video_id,
        "duration_s": stream.duration_s,
    }
    if stream.metadata is not None:
        header["metadata"] = _metadata_record(stream.metadata)
    lines = [_dump_line(header)]
    for row in range(stream.n_frames):
        lines.append(
            _dump_line({"row": row, "timestamp_s": float(stream.timestamps_s[row])})
        )
    _write_lines(lines, frame_sidecar)


def _parse_metadata(obj: Mapping[str, Any], source: str, lineno: int) -> VideoMetadata:
    try:
        return VideoMetadata(
            viewcount=int(obj["viewcount"]),
            length_s=float(obj["length_s"]),
            upload_age_days=int(obj["upload_age_days"]),
            content_ok=bool(obj["content_ok"]),
            domain_label=obj.get("domain_label"),
        )
    except KeyError as exc:
        raise FormatError(f"{source}: line {lineno}: metadata missing field {exc}") from exc
    except InvariantViolation as exc:
        raise FormatError(f"{source}: line {lineno}: {exc}") from exc


def read_frame_stream(
    embedding_file: Path | str, frame_sidecar: Path | str
) -> FrameStream:
    """Read one video's frame stream; timestamps must be strictly increasing."""
    matrix, policy = read_embedding_array(embedding_file)
    source = str(Path(frame_sidecar))
    records = _parse_lines(frame_sidecar)
    if not records:
        raise FormatError(f"{source}: missing header line")
    head_no, head = records[0]
    video_id = str(_require(head, "video_id", source, head_no))
    duration_s = float(_require(head, "duration_s", source, head_no))
    metadata = None
    if "metadata" in head:
        metadata = _parse_metadata(head["metadata"], source, head_no)

    timestamps = np.empty(matrix.shape[0], dtype=np.float64)
    if len(records) - 1 != matrix.shape[0]:
        raise FormatError(
            f"{source}: {len(records) - 1} frame lines for {matrix.shape[0]} embedding rows"
        )
    for expected_row, (lineno, obj) in enumerate(records[1:]):
        row = _require(obj, "row", source, lineno)
        if row != expected_row:
            raise FormatError(f"{source}: line {lineno}: row {row!r}, expected {expected_row}")
        timestamps[expected_row] = float(_require(obj, "timestamp_s", source, lineno))
    try:
        return FrameStream(
            video_id=video_id,
            duration_s=duration_s,
            timestamps_s=timestamps,
            embeddings=matrix,
            metadata=metadata,
            norm_policy=policy,
        )
    except InvariantViolation as exc:
        raise FormatError(f"{source}: {exc}") from exc


def discover_frame_streams(directory: Path | str) -> list[tuple[Path, Path]]:
    """Pair up <stem>.embd / <stem>.jsonl files under a directory, sorted by name."""
    root = Path(directory)
    if not root.is_dir():
        raise FormatError(f"{root}: not a directory")
    pairs: list[tuple[Path, Path]] = []
    for embd in sorted(root.glob("*.embd")):
        sidecar = embd.with_suffix(".jsonl")
        if not sidecar.exists():
            raise FormatError(f"{embd}: missing frame sidecar {sidecar.name}")
        pairs.append((embd, sidecar))
    if not pairs:
        raise FormatError(f"{root}: no *.embd files found")
    return pairs


def read_frame_streams(directory: Path | str) -> list[FrameStream]:
    return [read_frame_stream(e, s) for e, s in discover_frame_streams(directory)]


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------


def _config_record(cfg: MiningConfig) -> dict[str, Any]:
    return {
        "tau": cfg.tau,
        "t_span_s": cfg.t_span_s,
        "top_k": cfg.top_k,
        "frame_rate_hz": cfg.frame_rate_hz,
        "normalize": cfg.normalize,
        "nms_window_s": cfg.nms_window_s,
    }


def _counters_record(counters: ManifestCounters) -> dict[str, Any]:
    return {
        "n_pairs": counters.n_pairs,
        "n_unique_clips": counters.n_unique_clips,
        "n_unique_captions": counters.n_unique_captions,
        "total_clip_hours": counters.total_clip_hours,
    }


def _pair_record(pair: MinedPair) -> dict[str, Any]:
    return {
        "caption": pair.caption,
        "seed_id": pair.seed_id,
        "video_id": pair.video_id,
        "clip_start_s": pair.clip_start_s,
        "clip_end_s": pair.clip_end_s,
        "matched_frame_s": pair.matched_frame_s,
        "similarity": pair.similarity,
    }


def write_manifest(manifest: DatasetManifest, destination: Path | str) -> None:
    lines = [
        _dump_line(
            {
                "config": _config_record(manifest.config),
                "counters": _counters_record(manifest.counters),
            }
        )
    ]
    lines.extend(_dump_line(_pair_record(pair)) for pair in manifest.pairs)
    _write_lines(lines, destination)


def _parse_pair(obj: dict, source: str, lineno: int) -> MinedPair:
    try:
        return MinedPair(
            caption=str(_require(obj, "caption", source, lineno)),
            seed_id=str(_require(obj, "seed_id", source, lineno)),
            video_id=str(_require(obj, "video_id", source, lineno)),
            clip_start_s=float(_require(obj, "clip_start_s", source, lineno)),
            clip_end_s=float(_require(obj, "clip_end_s", source, lineno)),
            matched_frame_s=float(_require(obj, "matched_frame_s", source, lineno)),
            similarity=float(_require(obj, "similarity", source, lineno)),
        )
    except InvariantViolation as exc:
        raise FormatError(f"{source}: line {lineno}: {exc}") from exc


def read_manifest(source: Path | str) -> DatasetManifest:
    path = str(Path(source))
    records = _parse_lines(source)
    if not records:
        raise FormatError(f"{path}: missing header line")
    head_no, head = records[0]
    cfg_obj = _require(head, "config", path, head_no)
    cnt_obj = _require(head, "counters", path, head_no)
    try:
        config = MiningConfig(
            tau=float(cfg_obj["tau"]),
            t_span_s=float(cfg_obj["t_span_s"]),
            top_k=int(cfg_obj["top_k"]),
            frame_rate_hz=float(cfg_obj["frame_rate_hz"]),
            normalize=bool(cfg_obj["normalize"]),
            nms_window_s=float(cfg_obj["nms_window_s"]),
        )
        counters = ManifestCounters(
            n_pairs=int(cnt_obj["n_pairs"]),
            n_unique_clips=int(cnt_obj["n_unique_clips"]),
            n_unique_captions=int(cnt_obj["n_unique_captions"]),
            total_clip_hours=float(cnt_obj["total_clip_hours"]),
        )
    except KeyError as exc:
        raise FormatError(f"{path}: line {head_no}: header missing field {exc}") from exc
    except InvariantViolation as exc:
        raise FormatError(f"{path}: line {head_no}: {exc}") from exc
    pairs = [_parse_pair(obj, path, lineno) for lineno, obj in records[1:]]
    return DatasetManifest(pairs=tuple(pairs), config=config, counters=counters)


# ---------------------------------------------------------------------------
# reports: stats, sweeps, review samples, recall
# ---------------------------------------------------------------------------


def _histogram_sort_key(bucket: str) -> tuple[int, int]:
    if bucket.startswith(">="):
        return (1, int(bucket[2:]))
    return (0, int(bucket))


def write_stats_report(report: StatsReport, destination: Path | str) -> None:
    scalars = {
        "n_pairs": report.n_pairs,
        "n_unique_clips": report.n_unique_clips,
        "n_unique_captions": report.n_unique_captions,
        "total_clip_hours": report.total_clip_hours,
        "mean_clips_per_caption": report.mean_clips_per_caption,
    }
    histogram = {
        k: report.clips_per_caption_histogram[k]
        for k in sorted(report.clips_per_caption_histogram, key=_histogram_sort_key)
    }
    domains = {
        k: report.domain_distribution[k] for k in sorted(report.domain_distribution)
    }
    _write_lines(
        [
            _dump_line(scalars),
            _dump_line({"clips_per_caption_histogram": histogram}),
            _dump_line({"domain_distribution": domains}),
        ],
        destination,
    )


def read_stats_report(source: Path | str) -> StatsReport:
    path = str(Path(source))
    records = _parse_lines(source)
    if len(records) != 3:
        raise FormatError(f"{path}: expected 3 lines, got {len(records)}")
    (no1, scalars), (no2, hist), (no3, dom) = records
    return StatsReport(
        n_pairs=int(_require(scalars, "n_pairs", path, no1)),
        n_unique_clips=int(_require(scalars, "n_unique_clips", path, no1)),
        n_unique_captions=int(_require(scalars, "n_unique_captions", path, no1)),
        total_clip_hours=float(_require(scalars, "total_clip_hours", path, no1)),
        mean_clips_per_caption=float(
            _require(scalars, "mean_clips_per_caption", path, no1)
        ),
        clips_per_caption_histogram=dict(
            _require(hist, "clips_per_caption_histogram", path, no2)
        ),
        domain_distribution=dict(_require(dom, "domain_distribution", path, no3)),
    )


def write_sweep_result(result: SweepResult, destination: Path | str) -> None:
    lines = [_dump_line({"axis": result.axis})]
    for point in result.points:
        lines.append(
            _dump_line(
                {
                    "value": point.value,
                    "n_pairs": point.n_pairs,
                    "n_unique_clips": point.n_unique_clips,
                    "n_unique_captions": point.n_unique_captions,
                }
            )
        )
    _write_lines(lines, destination)


def read_sweep_result(source: Path | str) -> SweepResult:
    path = str(Path(source))
    records = _parse_lines(source)
    if not records:
        raise FormatError(f"{path}: missing header line")
    head_no, head = records[0]
    axis = str(_require(head, "axis", path, head_no))
    points = []
    for lineno, obj in records[1:]:
        points.append(
            SweepPoint(
                value=float(_require(obj, "value", path, lineno)),
                n_pairs=int(_require(obj, "n_pairs", path, lineno)),
                n_unique_clips=int(_require(obj, "n_unique_clips", path, lineno)),
                n_unique_captions=int(_require(obj, "n_unique_captions", path, lineno)),
            )
        )
    return SweepResult(axis=axis, points=tuple(points))


def write_review_sample(sample: ReviewSample, destination: Path | str) -> None:
    """Write a review sample humans can fill in offline.

    has_aligned_frame and relevance_score start as nulls; reviewers replace
    them with true/false and 0/1/2 in place.
    """
    lines = [_dump_line({"sample_size": sample.sample_size})]
    for item in sample.items:
        record = _pair_record(item.pair)
        record["has_aligned_frame"] = item.has_aligned_frame
        record["relevance_score"] = item.relevance_score
        lines.append(_dump_line(record))
    _write_lines(lines, destination)


def read_review_sample(source: Path | str) -> ReviewSample:
    path = str(Path(source))
    records = _parse_lines(source)
    if not records:
        raise FormatError(f"{path}: missing header line")
    head_no, head = records[0]
    sample_size = int(_require(head, "sample_size", path, head_no))
    items = []
    for lineno, obj in records[1:]:
        pair = _parse_pair(obj, path, lineno)
        aligned = obj.get("has_aligned_frame")
        score = obj.get("relevance_score")
        try:
            items.append(
                ReviewItem(
                    pair=pair,
                    has_aligned_frame=None if aligned is None else bool(aligned),
                    relevance_score=None if score is None else int(score),
                )
            )
        except InvariantViolation as exc:
            raise FormatError(f"{path}: line {lineno}: {exc}") from exc
    try:
        return ReviewSample(sample_size=sample_size, items=tuple(items))
    except InvariantViolation as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_recall_report(report: RecallReport, destination: Path | str) -> None:
    record = {
        "n_queries": report.n_queries,
        "r_at": {str(k): report.r_at[k] for k in sorted(report.r_at)},
    }
    _write_lines([_dump_line(record)], destination)


def read_recall_report(source: Path | str) -> RecallReport:
    path = str(Path(source))
    records = _parse_lines(source)
    if len(records) != 1:
        raise FormatError(f"{path}: expected 1 line, got {len(records)}")
    lineno, obj = records[0]
    r_at = {int(k): float(v) for k, v in _require(obj, "r_at", path, lineno).items()}
    return RecallReport(
        r_at=r_at, n_queries=int(_require(obj, "n_queries", path, lineno))
    )
