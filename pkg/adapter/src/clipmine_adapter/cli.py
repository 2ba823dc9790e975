"""Command-line surface mirroring the job fields.

Exit codes follow the pipeline convention: 0 success, 1 usage error,
2 data error. Diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .jobs import AdapterJob, ImageItem, VideoItem, embed_images, embed_video_frames
from .media import MediaError
from .providers import DEFAULT_MODEL, ProviderError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _build_parser() -> _Parser:
    parser = _Parser(prog="clipmine-adapter", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand")

    def common(p):
        p.add_argument("--model", default=DEFAULT_MODEL)
        p.add_argument("--dim", type=int, default=64)

    p = sub.add_parser("embed-images", help="seed images -> embeddings + captions")
    p.add_argument("--list", type=Path, required=True, dest="items",
                   help="JSON lines: {path, seed_id, caption}")
    p.add_argument("--out-embeddings", type=Path, required=True)
    p.add_argument("--out-captions", type=Path, required=True)
    common(p)

    p = sub.add_parser("embed-video", help="one video -> 1fps frame stream")
    p.add_argument("--video", type=Path, required=True)
    p.add_argument("--video-id", required=True)
    p.add_argument("--out-embeddings", type=Path, required=True)
    p.add_argument("--out-sidecar", type=Path, required=True)
    p.add_argument("--fps", type=float, default=1.0, help="sampling rate in Hz")
    p.add_argument("--viewcount", type=int, default=None)
    p.add_argument("--age-days", type=int, default=None)
    p.add_argument("--content-ok", action="store_true", default=None)
    p.add_argument("--domain", default=None)
    common(p)

    p = sub.add_parser("embed-videos", help="many videos -> a frames directory")
    p.add_argument("--list", type=Path, required=True, dest="items",
                   help="JSON lines: {path, video_id, metadata?}")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--fps", type=float, default=1.0)
    common(p)

    return parser


def _read_items(path: Path) -> list[dict]:
    if not path.exists():
        raise UsageError(f"input list {path} does not exist")
    items = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MediaError(f"{path}: line {lineno}: malformed JSON ({exc.msg})")
        items.append(obj)
    if not items:
        raise MediaError(f"{path}: empty item list")
    return items


def _cmd_embed_images(args) -> int:
    records = _read_items(args.items)
    media = [
        ImageItem(path=Path(r["path"]), seed_id=str(r["seed_id"]),
                  caption=str(r["caption"]))
        for r in records
    ]
    job = AdapterJob(media=tuple(media), out_embeddings=args.out_embeddings,
                     out_sidecar=args.out_captions, model=args.model, dim=args.dim)
    result = embed_images(job)
    _log(f"embedded {result.count} images (dim {result.dim}); "
         f"skipped {len(result.skipped)}")
    return EXIT_OK


def _metadata_from_flags(args) -> dict | None:
    if args.viewcount is None and args.age_days is None and args.domain is None \
            and args.content_ok is None:
        return None
    meta = {
        "viewcount": args.viewcount if args.viewcount is not None else 0,
        "upload_age_days": args.age_days if args.age_days is not None else 0,
        "content_ok": bool(args.content_ok),
    }
    if args.domain is not None:
        meta["domain_label"] = args.domain
    return meta


def _cmd_embed_video(args) -> int:
    if not args.video.exists():
        raise UsageError(f"input path {args.video} does not exist")
    item = VideoItem(path=args.video, video_id=args.video_id,
                     metadata=_metadata_from_flags(args))
    job = AdapterJob(media=(item,), out_embeddings=args.out_embeddings,
                     out_sidecar=args.out_sidecar, model=args.model, dim=args.dim)
    result = embed_video_frames(job, sample_rate_hz=args.fps)
    _log(f"embedded {result.count} frames of {args.video_id} (dim {result.dim})")
    return EXIT_OK


def _cmd_embed_videos(args) -> int:
    records = _read_items(args.items)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    done = failed = 0
    for r in records:
        video_id = str(r["video_id"])
        item = VideoItem(path=Path(r["path"]), video_id=video_id,
                         metadata=r.get("metadata"))
        stem = args.out_dir / video_id
        job = AdapterJob(media=(item,), out_embeddings=stem.with_suffix(".embd"),
                         out_sidecar=stem.with_suffix(".jsonl"),
                         model=args.model, dim=args.dim)
        try:
            result = embed_video_frames(job, sample_rate_hz=args.fps)
        except MediaError as exc:
            _log(f"skipping {video_id}: {exc}")
            failed += 1
            continue
        done += 1
        _log(f"embedded {result.count} frames of {video_id}")
    if done == 0:
        raise MediaError("every video in the list failed to decode")
    _log(f"{done} videos embedded, {failed} skipped")
    return EXIT_OK


_COMMANDS = {
    "embed-images": _cmd_embed_images,
    "embed-video": _cmd_embed_video,
    "embed-videos": _cmd_embed_videos,
}


def run(argv: Sequence[str]) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING,
                        format="%(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.subcommand is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        return _COMMANDS[args.subcommand](args)
    except UsageError as exc:
        _log(f"error: {exc}")
        return EXIT_USAGE
    except ProviderError as exc:
        _log(f"error: {exc}")
        return EXIT_USAGE
    except (MediaError, OSError, KeyError) as exc:
        _log(f"error: {exc}")
        return EXIT_DATA


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
