"""Command-line surface: ingest, filter, mine, stats, sweep, eval, review.

Every subcommand is a pure function of its input files plus flags (and
rng seed where one applies): rerunning with identical inputs rewrites
byte-identical outputs. Diagnostics go to stderr; data goes to files only.

Exit codes: 0 success, 1 usage/config error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from . import formats
from .mining import CorpusFilter, filter_corpus, mine
from .retrieval import DEFAULT_K_CLIPS, recall_at_k
from .search import SearchError, build_index
from .stats import compute_stats, draw_review_sample, score_review, sweep
from .types import (
    EmbeddingVector,
    InvariantViolation,
    MiningConfig,
    validate_manifest,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

THREADS_ENV_VAR = "CLIPMINE_THREADS"

#: Compiled-in defaults, printed by --show-defaults. The mining and
#: evaluation constants mirror the published pipeline; nms_window_s tracks
#: the clip span unless overridden.
DEFAULTS: dict[str, Any] = {
    "tau": MiningConfig().tau,
    "t_span_s": MiningConfig().t_span_s,
    "top_k": MiningConfig().top_k,
    "frame_rate_hz": MiningConfig().frame_rate_hz,
    "normalize": MiningConfig().normalize,
    "nms_window_s": "t_span_s",
    "k_clips": DEFAULT_K_CLIPS,
    "min_viewcount": CorpusFilter().min_viewcount,
    "max_length_s": CorpusFilter().max_length_s,
    "min_age_days": CorpusFilter().min_age_days,
    "max_age_days": CorpusFilter().max_age_days,
    "require_content_ok": CorpusFilter().require_content_ok,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad flags; the contract here wants 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _build_parser() -> _Parser:
    parser = _Parser(prog="clipmine", description=__doc__)
    parser.add_argument(
        "--show-defaults",
        action="store_true",
        help="print the compiled-in pipeline defaults and exit",
    )
    sub = parser.add_subparsers(dest="subcommand")

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--dry-run", action="store_true",
                       help="validate inputs and print planned work, write nothing")
        p.add_argument("--config", type=Path, default=None,
                       help="JSON file with defaults for any flag (flags win)")
        p.add_argument("--threads", type=int, default=None,
                       help=f"thread budget (env {THREADS_ENV_VAR} overrides the default of 1)")

    def mining_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--tau", type=float, default=None, help="match threshold")
        p.add_argument("--span", type=float, default=None, dest="t_span_s",
                       help="clip span in seconds")
        p.add_argument("--topk", type=int, default=None, dest="top_k",
                       help="max matches kept per seed")
        p.add_argument("--frame-rate", type=float, default=None, dest="frame_rate_hz")
        p.add_argument("--no-normalize", action="store_true",
                       help="score raw dot products instead of cosine")
        p.add_argument("--nms-window", type=float, default=None, dest="nms_window_s",
                       help="temporal de-dup window in seconds (default: the span)")
        p.add_argument("--shards", type=int, default=1, help="index shard count")

    def filter_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--min-viewcount", type=int, default=None)
        p.add_argument("--max-length", type=float, default=None, dest="max_length_s")
        p.add_argument("--min-age", type=int, default=None, dest="min_age_days")
        p.add_argument("--max-age", type=int, default=None, dest="max_age_days")
        p.add_argument("--allow-flagged-content", action="store_true",
                       help="drop the content_ok requirement")

    p = sub.add_parser("ingest-seeds", help="validate a seed set and write canonical copies")
    p.add_argument("--embeddings", type=Path, required=True)
    p.add_argument("--captions", type=Path, required=True)
    p.add_argument("--out-embeddings", type=Path, required=True)
    p.add_argument("--out-captions", type=Path, required=True)
    common(p)

    p = sub.add_parser("ingest-frames", help="validate frame streams and write canonical copies")
    p.add_argument("--frames", type=Path, required=True, help="directory of *.embd + *.jsonl")
    p.add_argument("--out-dir", type=Path, required=True)
    common(p)

    p = sub.add_parser("filter", help="apply the corpus filter, write the surviving video ids")
    p.add_argument("--frames", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    filter_flags(p)
    common(p)

    p = sub.add_parser("mine", help="run the full mining pipeline to a manifest")
    p.add_argument("--seeds", type=Path, required=True, help="seed embedding file")
    p.add_argument("--seed-captions", type=Path, required=True)
    p.add_argument("--frames", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--no-filter", action="store_true",
                   help="index every stream, skipping the corpus filter")
    mining_flags(p)
    filter_flags(p)
    common(p)

    p = sub.add_parser("stats", help="dataset statistics for a manifest")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--frames", type=Path, default=None,
                   help="optional frames dir supplying domain labels")
    p.add_argument("--out", type=Path, required=True)
    common(p)

    p = sub.add_parser("sweep", help="mine once per value of one config axis")
    p.add_argument("--seeds", type=Path, required=True)
    p.add_argument("--seed-captions", type=Path, required=True)
    p.add_argument("--frames", type=Path, required=True)
    p.add_argument("--axis", choices=("tau", "t_span"), required=True)
    p.add_argument("--values", required=True, help="comma-separated axis values")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--no-filter", action="store_true")
    mining_flags(p)
    filter_flags(p)
    common(p)

    p = sub.add_parser("eval", help="recall@K over candidate videos")
    p.add_argument("--queries", type=Path, required=True, help="query embedding file")
    p.add_argument("--query-meta", type=Path, required=True,
                   help="sidecar: {query_id, true_video_id, row} per line")
    p.add_argument("--candidates", type=Path, required=True,
                   help="directory of per-video clip embeddings")
    p.add_argument("--k-clips", type=int, default=None, dest="k_clips")
    p.add_argument("--out", type=Path, required=True)
    common(p)

    p = sub.add_parser("sample-review", help="draw a reproducible review sample")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    common(p)

    p = sub.add_parser("score-review", help="aggregate a filled-in review sample")
    p.add_argument("--sample", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    common(p)

    p = sub.add_parser("validate", help="check files against their format invariants")
    p.add_argument("--manifest", type=Path, default=None)
    p.add_argument("--seeds", type=Path, default=None)
    p.add_argument("--seed-captions", type=Path, default=None)
    p.add_argument("--frames", type=Path, default=None)
    p.add_argument("--embeddings", type=Path, default=None)
    common(p)

    return parser


# ---------------------------------------------------------------------------
# config resolution: flags > config file > compiled-in defaults
# ---------------------------------------------------------------------------


def _load_config_file(path: Path | None) -> dict[str, Any]:
    if path is None:
        return {}
    if not path.exists():
        raise UsageError(f"config file {path} does not exist")
    try:
        loaded = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path}: {exc.msg}")
    if not isinstance(loaded, dict):
        raise UsageError(f"config file {path}: expected a JSON object")
    unknown = set(loaded) - set(DEFAULTS)
    if unknown:
        raise UsageError(f"config file {path}: unknown keys {sorted(unknown)}")
    return loaded


def _resolve(args: argparse.Namespace, file_cfg: dict[str, Any], key: str) -> Any:
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in file_cfg:
        return file_cfg[key]
    return DEFAULTS[key]


def _mining_config(args: argparse.Namespace, file_cfg: dict[str, Any]) -> MiningConfig:
    normalize = DEFAULTS["normalize"]
    if "normalize" in file_cfg:
        normalize = bool(file_cfg["normalize"])
    if getattr(args, "no_normalize", False):
        normalize = False
    nms = getattr(args, "nms_window_s", None)
    if nms is None:
        nms = file_cfg.get("nms_window_s")
        if nms == "t_span_s":
            nms = None
    return MiningConfig(
        tau=_resolve(args, file_cfg, "tau"),
        t_span_s=_resolve(args, file_cfg, "t_span_s"),
        top_k=_resolve(args, file_cfg, "top_k"),
        frame_rate_hz=_resolve(args, file_cfg, "frame_rate_hz"),
        normalize=normalize,
        nms_window_s=nms,
    )


def _corpus_filter(args: argparse.Namespace, file_cfg: dict[str, Any]) -> CorpusFilter:
    require_ok = DEFAULTS["require_content_ok"]
    if "require_content_ok" in file_cfg:
        require_ok = bool(file_cfg["require_content_ok"])
    if getattr(args, "allow_flagged_content", False):
        require_ok = False
    return CorpusFilter(
        min_viewcount=_resolve(args, file_cfg, "min_viewcount"),
        max_length_s=_resolve(args, file_cfg, "max_length_s"),
        min_age_days=_resolve(args, file_cfg, "min_age_days"),
        max_age_days=_resolve(args, file_cfg, "max_age_days"),
        require_content_ok=require_ok,
    )


def _thread_budget(args: argparse.Namespace) -> int:
    if getattr(args, "threads", None) is not None:
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        return args.threads
    env = os.environ.get(THREADS_ENV_VAR)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise UsageError(f"{THREADS_ENV_VAR}={env!r} is not an integer")
        if value < 1:
            raise UsageError(f"{THREADS_ENV_VAR} must be >= 1")
        return value
    return 1


def _require_paths(*paths: Path | None) -> None:
    for path in paths:
        if path is not None and not path.exists():
            raise UsageError(f"input path {path} does not exist")


def _show_defaults() -> None:
    for key, value in DEFAULTS.items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        print(f"{key}={value}")


# ---------------------------------------------------------------------------
# subcommand bodies
# ---------------------------------------------------------------------------


def _cmd_ingest_seeds(args, file_cfg) -> int:
    _require_paths(args.embeddings, args.captions)
    seeds = formats.read_seed_set(args.embeddings, args.captions)
    if args.dry_run:
        _log(f"dry-run: would write {len(seeds)} seeds to "
             f"{args.out_embeddings} + {args.out_captions}")
        return EXIT_OK
    formats.write_seed_set(seeds, args.out_embeddings, args.out_captions)
    _log(f"ingested {len(seeds)} seeds")
    return EXIT_OK


def _cmd_ingest_frames(args, file_cfg) -> int:
    _require_paths(args.frames)
    streams = formats.read_frame_streams(args.frames)
    if args.dry_run:
        _log(f"dry-run: would write {len(streams)} streams to {args.out_dir}")
        return EXIT_OK
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for stream in streams:
        stem = args.out_dir / stream.video_id
        formats.write_frame_stream(
            stream, stem.with_suffix(".embd"), stem.with_suffix(".jsonl")
        )
    _log(f"ingested {len(streams)} frame streams")
    return EXIT_OK


def _cmd_filter(args, file_cfg) -> int:
    _require_paths(args.frames)
    corpus_filter = _corpus_filter(args, file_cfg)
    streams = formats.read_frame_streams(args.frames)
    kept = filter_corpus(streams, corpus_filter)
    if args.dry_run:
        _log(f"dry-run: {len(kept)} of {len(streams)} streams pass; "
             f"would write {args.out}")
        return EXIT_OK
    lines = [
        json.dumps({"video_id": s.video_id, "duration_s": s.duration_s},
                   ensure_ascii=False, separators=(",", ":"))
        for s in kept
    ]
    args.out.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    _log(f"kept {len(kept)} of {len(streams)} streams")
    return EXIT_OK


def _load_corpus(args, file_cfg):
    streams = formats.read_frame_streams(args.frames)
    if not getattr(args, "no_filter", False):
        streams = filter_corpus(streams, _corpus_filter(args, file_cfg))
    return streams


def _cmd_mine(args, file_cfg) -> int:
    _require_paths(args.seeds, args.seed_captions, args.frames)
    config = _mining_config(args, file_cfg)
    threads = _thread_budget(args)
    seeds = formats.read_seed_set(args.seeds, args.seed_captions)
    streams = _load_corpus(args, file_cfg)
    if args.dry_run:
        _log(f"dry-run: would mine {len(seeds)} seeds against {len(streams)} "
             f"streams (tau={config.tau}, span={config.t_span_s}, "
             f"top_k={config.top_k}) into {args.out}")
        return EXIT_OK
    index = build_index(streams, normalize=config.normalize, shard_count=args.shards)
    manifest = mine(seeds, index, config, threads=threads)
    formats.write_manifest(manifest, args.out)
    c = manifest.counters
    _log(f"mined {c.n_pairs} pairs / {c.n_unique_clips} clips / "
         f"{c.n_unique_captions} captions ({c.total_clip_hours:.3f} h)")
    return EXIT_OK


def _cmd_stats(args, file_cfg) -> int:
    _require_paths(args.manifest, args.frames)
    manifest = formats.read_manifest(args.manifest)
    domain_labels = None
    if args.frames is not None:
        domain_labels = {}
        for stream in formats.read_frame_streams(args.frames):
            if stream.metadata is not None and stream.metadata.domain_label:
                domain_labels[stream.video_id] = stream.metadata.domain_label
    report = compute_stats(manifest, domain_labels)
    if args.dry_run:
        _log(f"dry-run: stats over {report.n_pairs} pairs; would write {args.out}")
        return EXIT_OK
    formats.write_stats_report(report, args.out)
    _log(f"stats: {report.n_pairs} pairs, mean {report.mean_clips_per_caption:.3f} "
         f"clips/caption")
    return EXIT_OK


def _cmd_sweep(args, file_cfg) -> int:
    _require_paths(args.seeds, args.seed_captions, args.frames)
    config = _mining_config(args, file_cfg)
    threads = _thread_budget(args)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--values {args.values!r} is not a comma-separated float list")
    if not values:
        raise UsageError("--values is empty")
    seeds = formats.read_seed_set(args.seeds, args.seed_captions)
    streams = _load_corpus(args, file_cfg)
    if args.dry_run:
        _log(f"dry-run: would sweep {args.axis} over {values} "
             f"({len(seeds)} seeds, {len(streams)} streams) into {args.out}")
        return EXIT_OK
    index = build_index(streams, normalize=config.normalize, shard_count=args.shards)
    result = sweep(seeds, index, config, args.axis, values, threads=threads)
    formats.write_sweep_result(result, args.out)
    _log(f"sweep over {args.axis}: " +
         ", ".join(f"{p.value}->{p.n_pairs}" for p in result.points))
    return EXIT_OK


def _cmd_eval(args, file_cfg) -> int:
    _require_paths(args.queries, args.query_meta, args.candidates)
    k_clips = _resolve(args, file_cfg, "k_clips")
    queries = [
        (vec, true_id)
        for _, true_id, vec in formats.read_query_set(args.queries, args.query_meta)
    ]
    candidates = {
        stream.video_id: [
            EmbeddingVector(stream.embeddings[i], stream.norm_policy)
            for i in range(stream.n_frames)
        ]
        for stream in formats.read_frame_streams(args.candidates)
    }
    if args.dry_run:
        _log(f"dry-run: would rank {len(candidates)} candidates for "
             f"{len(queries)} queries (k_clips={k_clips}) into {args.out}")
        return EXIT_OK
    report = recall_at_k(queries, candidates, k_clips)
    formats.write_recall_report(report, args.out)
    _log("recall: " + ", ".join(f"R@{k}={v:.4f}" for k, v in sorted(report.r_at.items())))
    return EXIT_OK


def _cmd_sample_review(args, file_cfg) -> int:
    _require_paths(args.manifest)
    manifest = formats.read_manifest(args.manifest)
    if args.size > len(manifest.pairs):
        raise formats.FormatError(
            f"sample size {args.size} exceeds {len(manifest.pairs)} pairs"
        )
    sample = draw_review_sample(manifest, args.size, args.rng_seed)
    if args.dry_run:
        _log(f"dry-run: would sample {args.size} pairs into {args.out}")
        return EXIT_OK
    formats.write_review_sample(sample, args.out)
    _log(f"sampled {args.size} pairs (rng_seed={args.rng_seed})")
    return EXIT_OK


def _cmd_score_review(args, file_cfg) -> int:
    _require_paths(args.sample)
    sample = formats.read_review_sample(args.sample)
    try:
        summary = score_review(sample)
    except ValueError as exc:
        raise formats.FormatError(str(exc))
    if args.dry_run:
        _log(f"dry-run: would score {sample.sample_size} items into {args.out}")
        return EXIT_OK
    record = {
        "aligned_fraction": summary.aligned_fraction,
        "mean_score": summary.mean_score,
        "score_counts": {str(k): summary.score_counts[k] for k in sorted(summary.score_counts)},
    }
    args.out.write_text(
        json.dumps(record, ensure_ascii=False, separators=(",", ":")) + "\n",
        encoding="utf-8",
    )
    _log(f"aligned {summary.aligned_fraction:.2f}, mean score {summary.mean_score:.2f}")
    return EXIT_OK


def _cmd_validate(args, file_cfg) -> int:
    chosen = [
        p for p in (args.manifest, args.seeds, args.frames, args.embeddings)
        if p is not None
    ]
    if not chosen and args.seed_captions is None:
        raise UsageError("validate needs at least one of --manifest/--seeds/"
                         "--frames/--embeddings")
    if (args.seeds is None) != (args.seed_captions is None):
        raise UsageError("--seeds and --seed-captions go together")
    violations: list[str] = []

    if args.embeddings is not None:
        _require_paths(args.embeddings)
        violations.extend(formats.check_embedding_file(args.embeddings))
    if args.seeds is not None:
        _require_paths(args.seeds, args.seed_captions)
        try:
            seeds = formats.read_seed_set(args.seeds, args.seed_captions)
            _log(f"seed set: {len(seeds)} records OK")
        except (formats.FormatError, InvariantViolation) as exc:
            violations.append(str(exc))
    durations = None
    if args.frames is not None:
        _require_paths(args.frames)
        try:
            streams = formats.read_frame_streams(args.frames)
            durations = {s.video_id: s.duration_s for s in streams}
            _log(f"frames: {len(streams)} streams OK")
        except (formats.FormatError, InvariantViolation) as exc:
            violations.append(str(exc))
    if args.manifest is not None:
        _require_paths(args.manifest)
        try:
            manifest = formats.read_manifest(args.manifest)
            violations.extend(validate_manifest(manifest, durations))
        except (formats.FormatError, InvariantViolation) as exc:
            violations.append(str(exc))

    for violation in violations:
        _log(f"violation: {violation}")
    if violations:
        return EXIT_DATA
    _log("no violations")
    return EXIT_OK


_COMMANDS = {
    "ingest-seeds": _cmd_ingest_seeds,
    "ingest-frames": _cmd_ingest_frames,
    "filter": _cmd_filter,
    "mine": _cmd_mine,
    "stats": _cmd_stats,
    "sweep": _cmd_sweep,
    "eval": _cmd_eval,
    "sample-review": _cmd_sample_review,
    "score-review": _cmd_score_review,
    "validate": _cmd_validate,
}


def run(argv: Sequence[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.show_defaults:
            _show_defaults()
            return EXIT_OK
        if args.subcommand is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        file_cfg = _load_config_file(getattr(args, "config", None))
        return _COMMANDS[args.subcommand](args, file_cfg)
    except UsageError as exc:
        _log(f"error: {exc}")
        return EXIT_USAGE
    except InvariantViolation as exc:
        # bad flag/config values surface as construction failures
        _log(f"error: {exc}")
        return EXIT_USAGE
    except (formats.FormatError, SearchError) as exc:
        _log(f"error: {exc}")
        return EXIT_DATA
    except OSError as exc:
        _log(f"error: {exc}")
        return EXIT_DATA


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
