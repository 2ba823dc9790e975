"""Synthetic media fixtures: structured images and short mp4 videos."""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np
import pytest


def paint_scene(kind: int, size: tuple[int, int] = (120, 160)) -> np.ndarray:
    """Deterministic structured test image (compresses cleanly, unlike noise)."""
    h, w = size
    rng = np.random.default_rng(1000 + kind)
    image = np.zeros((h, w, 3), dtype=np.uint8)
    gx = np.linspace(0, 255, w, dtype=np.uint8)
    image[:, :, kind % 3] = gx[None, :]
    image[:, :, (kind + 1) % 3] = np.linspace(0, 255, h, dtype=np.uint8)[:, None]
    for _ in range(4):
        center = (int(rng.integers(10, w - 10)), int(rng.integers(10, h - 10)))
        radius = int(rng.integers(8, 25))
        color = tuple(int(c) for c in rng.integers(0, 255, size=3))
        cv2.circle(image, center, radius, color, thickness=-1)
    return image


def write_image(path: Path, kind: int) -> Path:
    assert cv2.imwrite(str(path), paint_scene(kind))
    return path


def write_video(
    path: Path, kinds: list[int], fps: float = 5.0, seconds_per_scene: float = 1.0
) -> Path:
    """mp4 whose content shows each scene for seconds_per_scene."""
    h, w = 120, 160
    writer = cv2.VideoWriter(
        str(path), cv2.VideoWriter_fourcc(*"mp4v"), fps, (w, h)
    )
    assert writer.isOpened()
    per_scene = int(round(fps * seconds_per_scene))
    for kind in kinds:
        frame = paint_scene(kind)
        for _ in range(per_scene):
            writer.write(frame)
    writer.release()
    return path


@pytest.fixture()
def image_set(tmp_path):
    paths = [write_image(tmp_path / f"img{k}.png", kind=k) for k in range(3)]
    items_file = tmp_path / "images.jsonl"
    import json

    items_file.write_text("".join(
        json.dumps({"path": str(p), "seed_id": f"s{k}", "caption": f"scene {k}"}) + "\n"
        for k, p in enumerate(paths)
    ))
    return {"paths": paths, "list": items_file, "tmp": tmp_path}


@pytest.fixture()
def small_video(tmp_path):
    return write_video(tmp_path / "clip.mp4", kinds=[0, 1, 2, 3], fps=5.0)
