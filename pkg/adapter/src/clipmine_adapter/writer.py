"""Writers for the pipeline's on-disk formats, implemented from the format
contract rather than shared code: the mining engine's reader is the
compatibility check, not a dependency.

Embedding container: 24-byte little-endian header (magic "EMBD", u32
version=1, u32 dim, u64 count, u8 norm policy, 3 zero bytes) followed by
count x dim float32 values, row-major. Sidecars are JSON lines with a fixed
field order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

_MAGIC = b"EMBD"
_VERSION = 1
_HEADER = struct.Struct("<4sIIQB3x")
UNIT_POLICY_BYTE = 1


def write_embedding_file(matrix: np.ndarray, path: Path | str) -> int:
    """Write unit-normalized float32 rows; returns bytes written."""
    arr = np.ascontiguousarray(matrix, dtype=np.float32)
    if arr.ndim != 2 or arr.shape[1] == 0:
        raise ValueError(f"expected a (count, dim>0) matrix, got shape {arr.shape}")
    count, dim = arr.shape
    payload = arr.astype("<f4", copy=False).tobytes(order="C")
    header = _HEADER.pack(_MAGIC, _VERSION, dim, count, UNIT_POLICY_BYTE)
    Path(path).write_bytes(header + payload)
    return len(header) + len(payload)


def _dump(record: Mapping[str, Any]) -> str:
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


def _write_lines(lines: Iterable[str], path: Path | str) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")


def write_caption_sidecar(
    records: list[tuple[str, str]], path: Path | str
) -> None:
    """(seed_id, caption) per embedding row, in row order."""
    _write_lines(
        (
            _dump({"seed_id": seed_id, "caption": caption, "row": row})
            for row, (seed_id, caption) in enumerate(records)
        ),
        path,
    )


def write_frame_sidecar(
    video_id: str,
    duration_s: float,
    timestamps: list[float],
    path: Path | str,
    metadata: Mapping[str, Any] | None = None,
) -> None:
    header: dict[str, Any] = {"video_id": video_id, "duration_s": duration_s}
    if metadata is not None:
        header["metadata"] = dict(metadata)
    lines = [_dump(header)]
    lines.extend(
        _dump({"row": row, "timestamp_s": ts}) for row, ts in enumerate(timestamps)
    )
    _write_lines(lines, path)
