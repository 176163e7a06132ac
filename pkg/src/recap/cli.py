"""Command-line interface.

Subcommands: index, caption, evaluate, ablate, prefix-baseline.
Exit codes: 0 success, 1 usage/config error, 2 partial failure (> 10% of
videos), 3 data error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from recap.ablation import run_ablation
from recap.backends import make_backend_suite
from recap.config import RunConfig, load_config
from recap.errors import ConfigurationError, DataError, InputError, RecapError
from recap.pipeline import (
    load_manifest,
    run_caption,
    run_evaluate,
    run_prefix_baseline,
)
from recap.retrieval import build_index, load_corpus, save_index

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARTIAL = 2
EXIT_DATA = 3

logger = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="recap", description=__doc__)
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", type=Path, help="JSON file of RunConfig fields")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--workers", type=int, help="parallel videos")
        p.add_argument("--out", type=Path, required=True, help="output path")

    p_index = sub.add_parser("index", help="embed a corpus file into an index directory")
    p_index.add_argument("--config", type=Path)
    p_index.add_argument("--corpus", type=Path, required=True)
    p_index.add_argument("--out", type=Path, required=True)

    p_caption = sub.add_parser("caption", help="caption every video in a manifest")
    add_common(p_caption)
    p_caption.add_argument("--manifest", type=Path, required=True)

    p_eval = sub.add_parser("evaluate", help="score a results file against references")
    p_eval.add_argument("--results", type=Path, required=True)
    p_eval.add_argument("--manifest", type=Path, required=True)
    p_eval.add_argument("--out", type=Path, required=True, help="output prefix (.json/.txt)")

    p_ablate = sub.add_parser("ablate", help="sweep one config axis")
    add_common(p_ablate)
    p_ablate.add_argument("--manifest", type=Path, required=True)
    p_ablate.add_argument("--axis", required=True)
    p_ablate.add_argument("--values", required=True, help="comma-separated axis values")

    p_prefix = sub.add_parser("prefix-baseline", help="retrieved sentences as a text prefix")
    add_common(p_prefix)
    p_prefix.add_argument("--manifest", type=Path, required=True)
    return parser


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    if getattr(args, "workers", None) is not None:
        cfg = cfg.replace(workers=args.workers)
    cfg.validate()
    return cfg


def _finish_run(summary: dict) -> int:
    print(
        f"captioned {summary['completed']}/{summary['total']} videos "
        f"({summary['failed']} failed) -> {summary['out_path']}"
    )
    return EXIT_PARTIAL if summary["failure_rate"] > 0.10 else EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "index":
            cfg = load_config(args.config) if args.config else RunConfig()
            suite = make_backend_suite(cfg.backend, cfg.backend_options)
            index = build_index(load_corpus(args.corpus), suite.text_encoder,
                                corpus_id=args.corpus.stem)
            save_index(index, args.out)
            print(f"indexed {len(index)} sentences -> {args.out}")
            return EXIT_OK

        if args.command == "caption":
            cfg = _load_run_config(args)
            manifest = load_manifest(args.manifest)
            return _finish_run(run_caption(cfg, manifest, args.out))

        if args.command == "prefix-baseline":
            cfg = _load_run_config(args)
            manifest = load_manifest(args.manifest)
            return _finish_run(run_prefix_baseline(cfg, manifest, args.out))

        if args.command == "evaluate":
            manifest = load_manifest(args.manifest)
            metrics = run_evaluate(args.results, manifest, args.out)
            print(
                f"B4={metrics['B4']:.4f} M=- R={metrics['R']:.4f} C={metrics['C']:.4f} "
                f"({metrics['items']} items)"
            )
            return EXIT_OK

        if args.command == "ablate":
            cfg = _load_run_config(args)
            manifest = load_manifest(args.manifest)
            values = [v.strip() for v in args.values.split(",") if v.strip()]
            if args.axis in ("K", "L", "P"):
                values = [int(v) for v in values]
            elif args.axis == "clip_threshold":
                values = [float(v) for v in values]
            rows = run_ablation(cfg, manifest, args.axis, values, args.out)
            print(f"swept {args.axis} over {len(rows)} values -> {args.out}")
            return EXIT_OK
    except (ConfigurationError, InputError) as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except DataError as exc:
        logger.error("%s", exc)
        return EXIT_DATA
    except RecapError as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
