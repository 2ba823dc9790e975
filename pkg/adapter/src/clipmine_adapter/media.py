"""Image decoding and 1 Hz video frame sampling via OpenCV."""

from __future__ import annotations

import math
from pathlib import Path

import cv2
import numpy as np


class MediaError(ValueError):
    """A media file could not be opened or decoded."""


def load_image(path: Path | str) -> np.ndarray | None:
    """Decode an image as BGR uint8; None when undecodable."""
    image = cv2.imread(str(path), cv2.IMREAD_COLOR)
    return image


def sample_video_frames(
    path: Path | str, sample_rate_hz: float = 1.0
) -> tuple[list[np.ndarray], list[float], float]:
    """Decode a video and keep one frame per 1/sample_rate_hz seconds.

    Frames are read sequentially (no seeking, which codecs make
    non-deterministic); for each target time t = 0, 1/rate, 2/rate, ... the
    first frame at or past t is kept, stamped with its own time (which is t
    exactly whenever the source rate is a multiple of the sample rate).
    Duration derives from the frames actually decoded, so every timestamp
    lies within [0, duration].
    """
    if sample_rate_hz <= 0:
        raise MediaError(f"sample rate must be > 0, got {sample_rate_hz}")
    capture = cv2.VideoCapture(str(path))
    if not capture.isOpened():
        raise MediaError(f"{path}: cannot open video")
    try:
        fps = capture.get(cv2.CAP_PROP_FPS)
        if not fps or fps <= 0 or not math.isfinite(fps):
            raise MediaError(f"{path}: no usable frame rate")
        frames: list[np.ndarray] = []
        timestamps: list[float] = []
        step = fps / sample_rate_hz
        next_target = 0.0
        index = 0
        while True:
            ok, frame = capture.read()
            if not ok:
                break
            if index >= next_target:
                frames.append(frame)
                timestamps.append(index / fps)
                next_target = (len(frames)) * step
                if next_target <= index:
                    next_target = index + 1
            index += 1
    finally:
        capture.release()
    if not frames:
        raise MediaError(f"{path}: no frames decoded")
    duration_s = index / fps
    return frames, timestamps, duration_s
