"""Conformance against the mining engine: its validate subcommand and its
readers are the referee for everything this adapter writes.

Run with -s to see the acceptance lines.
"""

from __future__ import annotations

import functools
import json
import subprocess
import sys

from clipmine import formats
from clipmine.mining import mine
from clipmine.search import build_index
from clipmine.types import MiningConfig

from clipmine_adapter.jobs import AdapterJob, ImageItem, VideoItem, embed_images, embed_video_frames
from clipmine_adapter.cli import run as adapter_run

from conftest import write_image, write_video


def criterion(name):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"[ACCEPTANCE] FAIL {name}", file=sys.stderr)
                raise
            print(f"[ACCEPTANCE] PASS {name}", file=sys.stderr)
        return wrapper
    return deco


def validate(*args: str) -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, "-m", "clipmine.cli", "validate", *args],
        capture_output=True, text=True,
    )


@criterion("adapter conformance: validate-clean, 0-ulp read-back, bit-deterministic")
def test_adapter_conformance(tmp_path, small_video):
    # --- seed images ------------------------------------------------------
    items = [
        ImageItem(write_image(tmp_path / f"i{k}.png", k), f"s{k}", f"scene {k}")
        for k in range(3)
    ]
    seed_job = AdapterJob(
        media=tuple(items),
        out_embeddings=tmp_path / "seeds.embd",
        out_sidecar=tmp_path / "seeds.jsonl",
    )
    seed_result = embed_images(seed_job)

    proc = validate("--seeds", str(seed_job.out_embeddings),
                    "--seed-captions", str(seed_job.out_sidecar),
                    "--embeddings", str(seed_job.out_embeddings))
    assert proc.returncode == 0, proc.stderr
    assert "no violations" in proc.stderr

    # 0 ulp: the primary reader returns exactly the bits the adapter computed
    matrix, policy = formats.read_embedding_array(seed_job.out_embeddings)
    assert policy is formats.NormPolicy.UNIT
    assert matrix.tobytes() == seed_result.vectors.tobytes()

    # and the primary writer produces a byte-identical file for the same rows
    twin = tmp_path / "twin.embd"
    formats.write_embedding_array(seed_result.vectors, formats.NormPolicy.UNIT, twin)
    assert twin.read_bytes() == seed_job.out_embeddings.read_bytes()

    # --- video frames -----------------------------------------------------
    frames_dir = tmp_path / "frames"
    frames_dir.mkdir()
    video_job = AdapterJob(
        media=(VideoItem(small_video, "vid-a",
                         metadata={"viewcount": 5000, "upload_age_days": 200,
                                   "content_ok": True}),),
        out_embeddings=frames_dir / "vid-a.embd",
        out_sidecar=frames_dir / "vid-a.jsonl",
    )
    video_result = embed_video_frames(video_job)

    proc = validate("--frames", str(frames_dir))
    assert proc.returncode == 0, proc.stderr
    assert "no violations" in proc.stderr

    stream = formats.read_frame_stream(video_job.out_embeddings,
                                       video_job.out_sidecar)
    assert stream.embeddings.tobytes() == video_result.vectors.tobytes()
    assert stream.norm_policy is formats.NormPolicy.UNIT

    # --- bit determinism across repeated runs -----------------------------
    rerun = AdapterJob(
        media=seed_job.media,
        out_embeddings=tmp_path / "seeds2.embd",
        out_sidecar=tmp_path / "seeds2.jsonl",
    )
    embed_images(rerun)
    assert rerun.out_embeddings.read_bytes() == seed_job.out_embeddings.read_bytes()
    assert rerun.out_sidecar.read_bytes() == seed_job.out_sidecar.read_bytes()

    video_rerun = AdapterJob(
        media=video_job.media,
        out_embeddings=tmp_path / "v2.embd",
        out_sidecar=tmp_path / "v2.jsonl",
    )
    embed_video_frames(video_rerun)
    assert video_rerun.out_embeddings.read_bytes() == video_job.out_embeddings.read_bytes()


@criterion("end-to-end: adapter media mined by the engine finds the planted scene")
def test_end_to_end_mining_round_trip(tmp_path):
    # seed image of scene 7; one video contains scene 7 for a second
    seed_path = write_image(tmp_path / "seed.png", 7)
    job = AdapterJob(
        media=(ImageItem(seed_path, "seed7", "a synthetic scene"),),
        out_embeddings=tmp_path / "seeds.embd",
        out_sidecar=tmp_path / "seeds.jsonl",
    )
    embed_images(job)

    frames_dir = tmp_path / "frames"
    frames_dir.mkdir()
    videos = {
        "with-scene": [0, 7, 1],   # scene 7 shown during second 1
        "without-scene": [2, 3, 4],
    }
    for video_id, kinds in videos.items():
        video_path = write_video(tmp_path / f"{video_id}.mp4", kinds, fps=5.0)
        vjob = AdapterJob(
            media=(VideoItem(video_path, video_id),),
            out_embeddings=frames_dir / f"{video_id}.embd",
            out_sidecar=frames_dir / f"{video_id}.jsonl",
        )
        embed_video_frames(vjob)

    seeds = formats.read_seed_set(job.out_embeddings, job.out_sidecar)
    streams = formats.read_frame_streams(frames_dir)
    index = build_index(streams, normalize=True)
    manifest = mine(seeds, index, MiningConfig(tau=0.8, t_span_s=2.0))

    assert manifest.pairs, "the planted scene was not recovered"
    best = manifest.pairs[0]
    assert best.video_id == "with-scene"
    assert best.matched_frame_s == 1.0
    assert best.caption == "a synthetic scene"
    assert all(p.video_id == "with-scene" for p in manifest.pairs)


class TestAdapterCli:
    def test_embed_images_subcommand(self, image_set, tmp_path):
        out_embd = tmp_path / "s.embd"
        out_caps = tmp_path / "s.jsonl"
        code = adapter_run([
            "embed-images", "--list", str(image_set["list"]),
            "--out-embeddings", str(out_embd), "--out-captions", str(out_caps),
        ])
        assert code == 0
        seeds = formats.read_seed_set(out_embd, out_caps)
        assert [s.seed_id for s in seeds] == ["s0", "s1", "s2"]

    def test_embed_video_subcommand(self, small_video, tmp_path):
        out_embd = tmp_path / "v.embd"
        out_side = tmp_path / "v.jsonl"
        code = adapter_run([
            "embed-video", "--video", str(small_video), "--video-id", "v0",
            "--out-embeddings", str(out_embd), "--out-sidecar", str(out_side),
            "--viewcount", "2000", "--age-days", "120", "--content-ok",
        ])
        assert code == 0
        stream = formats.read_frame_stream(out_embd, out_side)
        assert stream.metadata is not None
        assert stream.metadata.viewcount == 2000

    def test_embed_videos_skips_broken_entries(self, small_video, tmp_path, capsys):
        bad = tmp_path / "bad.mp4"
        bad.write_bytes(b"junk")
        listing = tmp_path / "videos.jsonl"
        listing.write_text(
            json.dumps({"path": str(small_video), "video_id": "ok"}) + "\n"
            + json.dumps({"path": str(bad), "video_id": "broken"}) + "\n"
        )
        out_dir = tmp_path / "frames"
        code = adapter_run([
            "embed-videos", "--list", str(listing), "--out-dir", str(out_dir),
        ])
        assert code == 0
        err = capsys.readouterr().err
        assert "skipping broken" in err
        assert (out_dir / "ok.embd").exists()
        assert not (out_dir / "broken.embd").exists()

    def test_unknown_model_is_usage_error(self, image_set, tmp_path):
        code = adapter_run([
            "embed-images", "--list", str(image_set["list"]),
            "--out-embeddings", str(tmp_path / "s.embd"),
            "--out-captions", str(tmp_path / "s.jsonl"),
            "--model", "some-unavailable-model",
        ])
        assert code == 1

    def test_unknown_flag_is_usage_error(self, capsys):
        assert adapter_run(["embed-images", "--bogus"]) == 1
        assert "usage" in capsys.readouterr().err
