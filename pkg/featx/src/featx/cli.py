"""Command-line interface: extract, export-weights, and batch subcommands."""

from __future__ import annotations

import argparse
import sys

from .config import ExtractorConfig
from .errors import BackboneError, DecodeError, FeatxError
from .extractor import batch_extract, export_weights, extract


def _load_config(args: argparse.Namespace) -> ExtractorConfig:
    if args.config is not None:
        config = ExtractorConfig.from_file(args.config)
    else:
        config = ExtractorConfig()
    overrides = {}
    if getattr(args, "weights", None) is not None:
        overrides["linear_weight_path"] = args.weights
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if overrides:
        import dataclasses

        config = dataclasses.replace(config, **overrides)
    return config


def cmd_extract(args: argparse.Namespace) -> int:
    config = _load_config(args)
    extract(args.image, config, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_export_weights(args: argparse.Namespace) -> int:
    config = _load_config(args)
    export_weights(config, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_batch(args: argparse.Namespace) -> int:
    config = _load_config(args)
    summary = batch_extract(args.images, config, args.out)
    print(f"extracted {len(summary.succeeded)} files, {summary.failure_count} failures")
    for rel, reason in summary.failed:
        print(f"failed {rel}: {reason}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="featx", description="Perceptual feature extractor")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract features from one image into a PFEAT file")
    p.add_argument("--image", required=True, help="input image path")
    p.add_argument("--out", required=True, help="output PFEAT path")
    p.add_argument("--config", help="extractor config JSON")
    p.add_argument("--seed", type=int, help="seed for the fallback backbone init")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("export-weights", help="write learned per-channel weights as a PFW file")
    p.add_argument("--out", required=True, help="output PFW path")
    p.add_argument("--config", help="extractor config JSON")
    p.add_argument("--weights", help="learned weight source (.npz or torch state dict)")
    p.add_argument("--seed", type=int, help="seed for the fallback weights")
    p.set_defaults(func=cmd_export_weights)

    p = sub.add_parser("batch", help="extract features for every image under a directory")
    p.add_argument("--images", required=True, help="input image directory")
    p.add_argument("--out", required=True, help="output directory (tree is mirrored)")
    p.add_argument("--config", help="extractor config JSON")
    p.add_argument("--seed", type=int, help="seed for the fallback backbone init")
    p.set_defaults(func=cmd_batch)

    return parser


IO_ERRORS = (DecodeError, BackboneError)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except IO_ERRORS as exc:
        print(f"ERROR {exc.category}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"ERROR io: {exc}", file=sys.stderr)
        return 2
    except FeatxError as exc:
        print(f"ERROR {exc.category}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
