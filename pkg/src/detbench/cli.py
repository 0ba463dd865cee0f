"""Command-line entry point.

Subcommands: eval (run a benchmark manifest), perceptual (compare two image
trees), compose (build a mixture manifest), attack-toy (PGD on the seeded toy
detector), render (re-render a stored report.json).

Exit codes: 0 success, 1 validation/metric errors, 2 I/O and resolution
errors. Errors print to stderr as "ERROR <category>: <message>".
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys

import numpy as np

from . import bench_runner, mix_composer, pixel_metrics
from .attack_core import (
    AttackConfig,
    TargetAssignment,
    ToyDetectorModel,
    pgd_attack,
    to_image_buffer,
)
from .bench_runner import load_manifest, render_report, report_from_dict
from .data_model import load_image, save_image
from .errors import (
    DecodeError,
    DetbenchError,
    ParseError,
    ResolutionError,
)

IO_ERRORS = (ResolutionError, DecodeError)


def _add_eval(sub) -> None:
    p = sub.add_parser("eval", help="run a benchmark manifest end-to-end")
    p.add_argument("--manifest", required=True, help="manifest JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--iou-thr", type=float, default=None,
                   help="override the manifest IoU threshold")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                   help="parallel condition workers")


def _add_perceptual(sub) -> None:
    p = sub.add_parser("perceptual", help="perceptual metrics between two image trees")
    p.add_argument("--clean", required=True, help="clean image directory")
    p.add_argument("--adv", required=True, help="adversarial image directory")
    p.add_argument("--features", default=None,
                   help="directory pair root with clean/ and adv/ PFEAT trees")
    p.add_argument("--weights", default=None, help="PFW weight file for LPIPS")
    p.add_argument("--out", default=None, help="write per-image CSV here")


def _add_compose(sub) -> None:
    p = sub.add_parser("compose", help="build a mixed-attack dataset manifest")
    p.add_argument("--spec", required=True, help="mixture spec JSON file")
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.add_argument("--out", required=True, help="output manifest CSV path")
    p.add_argument("--materialize", default=None,
                   help="also hard-link/copy variants into this directory")


def _add_attack_toy(sub) -> None:
    p = sub.add_parser("attack-toy", help="PGD attack on the seeded toy detector")
    p.add_argument("--seed", type=int, default=0, help="model/input/target seed")
    p.add_argument("--eps", type=float, default=8 / 255, help="L_inf budget in [0,1] units")
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--alpha", type=float, default=2 / 255, help="step size")
    p.add_argument("--targeted", action="store_true",
                   help="use the targeted objective against a seeded target assignment")
    p.add_argument("--out", required=True, help="output directory")


def _add_render(sub) -> None:
    p = sub.add_parser("render", help="re-render a stored report.json")
    p.add_argument("report", help="path to report.json")
    p.add_argument("--format", choices=["csv", "markdown", "json"], default="markdown")
    p.add_argument("--out", default=None, help="output file (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="detbench",
        description="Unified benchmark engine for adversarial attacks on object detectors",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_eval(sub)
    _add_perceptual(sub)
    _add_compose(sub)
    _add_attack_toy(sub)
    _add_render(sub)
    return parser


def _cmd_eval(args) -> int:
    manifest = load_manifest(args.manifest)
    if args.iou_thr is not None:
        manifest = bench_runner.RunManifest(
            dataset_path=manifest.dataset_path,
            dataset_format=manifest.dataset_format,
            benign_image_root=manifest.benign_image_root,
            iou_threshold=args.iou_thr,
            conditions=manifest.conditions,
            options=manifest.options,
        )
    bench_runner.run(manifest, args.out, workers=args.workers)
    print(f"wrote report.csv, report.md, report.json, plotdata.csv to {args.out}")
    return 0


def _image_tree(root: str) -> dict[str, str]:
    found = {}
    for dirpath, _, files in os.walk(root):
        for name in sorted(files):
            if os.path.splitext(name)[1].lower() in (".png", ".jpg", ".jpeg"):
                full = os.path.join(dirpath, name)
                found[os.path.relpath(full, root)] = full
    return found


def _cmd_perceptual(args) -> int:
    clean_tree = _image_tree(args.clean)
    adv_tree = _image_tree(args.adv)
    only_clean = sorted(set(clean_tree) - set(adv_tree))
    only_adv = sorted(set(adv_tree) - set(clean_tree))
    if only_clean or only_adv:
        for rel in only_clean:
            print(f"unmatched (clean only): {rel}", file=sys.stderr)
        for rel in only_adv:
            print(f"unmatched (adv only): {rel}", file=sys.stderr)
        raise ParseError("image trees do not match")
    if not clean_tree:
        raise ParseError("no images found")

    weights = (
        pixel_metrics.LayerWeights.from_file(args.weights) if args.weights else None
    )
    rows = []
    per_metric: dict[str, list[float]] = {}
    for rel in sorted(clean_tree):
        a = load_image(clean_tree[rel])
        b = load_image(adv_tree[rel])
        if (b.width, b.height) != (a.width, a.height):
            from .data_model import resize_bilinear

            b = resize_bilinear(b, a.width, a.height)
        norms = pixel_metrics.lp_norms(a, b)
        row = {
            "image": rel,
            "l0": float(norms.l0),
            "l1": norms.l1,
            "l2": norms.l2,
            "linf": norms.linf,
            "psnr": pixel_metrics.psnr(a, b),
            "ssim": pixel_metrics.ssim(a, b),
        }
        if weights is not None and args.features:
            stem = os.path.splitext(rel)[0] + ".pfeat"
            fc = os.path.join(args.features, "clean", stem)
            fa = os.path.join(args.features, "adv", stem)
            if os.path.exists(fc) and os.path.exists(fa):
                row["lpips"] = pixel_metrics.lpips_distance(
                    pixel_metrics.PerceptualFeatureSet.from_file(fc),
                    pixel_metrics.PerceptualFeatureSet.from_file(fa),
                    weights,
                )
        rows.append(row)
        for k, v in row.items():
            if k != "image":
                per_metric.setdefault(k, []).append(v)

    for metric in ("l0", "l1", "l2", "linf", "psnr", "ssim", "lpips"):
        if metric in per_metric:
            stats = pixel_metrics.aggregate(per_metric[metric])
            print(f"{metric:>5}: {stats} (n={stats.n})")

    if args.out:
        fields = ["image", "l0", "l1", "l2", "linf", "psnr", "ssim"]
        if any("lpips" in r for r in rows):
            fields.append("lpips")
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow(r)
        with open(args.out, "w", encoding="utf-8", newline="") as f:
            f.write(buf.getvalue())
    return 0


def _cmd_compose(args) -> int:
    spec = mix_composer.MixtureSpec.from_file(args.spec)
    manifest = mix_composer.compose(spec, seed=args.seed)
    violations = mix_composer.verify(manifest, spec)
    if violations:
        for v in violations:
            print(f"violation {v.kind}: {v.detail}", file=sys.stderr)
        raise ParseError(f"{len(violations)} mixture violations")
    mix_composer.write_manifest(manifest, spec, args.out)
    if args.materialize:
        n = mix_composer.materialize(manifest, args.materialize)
        print(f"materialized {n} files to {args.materialize}")
    print(f"wrote {args.out}: " + ", ".join(
        f"{tag}={n}" for tag, n in manifest.counts.items()
    ))
    return 0


def _cmd_attack_toy(args) -> int:
    rng = np.random.default_rng(args.seed)
    width = height = 8
    model = ToyDetectorModel.random(width, height, anchors=2, classes=3, seed=args.seed)
    x = rng.random((height, width, 3))
    targets = TargetAssignment.random(model.anchors, model.classes, args.seed + 1)
    y_target = (
        TargetAssignment.random(model.anchors, model.classes, args.seed + 2)
        if args.targeted
        else None
    )
    config = AttackConfig(
        epsilon=args.eps, steps=args.steps, step_size=args.alpha, y_target=y_target
    )
    result = pgd_attack(model, x, targets, config)

    os.makedirs(args.out, exist_ok=True)
    save_image(to_image_buffer(x), os.path.join(args.out, "clean.png"))
    save_image(to_image_buffer(result.x_star), os.path.join(args.out, "adversarial.png"))
    with open(os.path.join(args.out, "loss_trace.csv"), "w", encoding="utf-8") as f:
        f.write("iteration,J,L_cls,L_loc,L_obj\n")
        for i, entry in enumerate(result.loss_trace):
            f.write(
                f"{i},{entry['J']!r},{entry['L_cls']!r},"
                f"{entry['L_loc']!r},{entry['L_obj']!r}\n"
            )
    print(
        f"final objective {result.loss_trace[-1]['J']:.6f} "
        f"(from {result.loss_trace[0]['J']:.6f}), "
        f"achieved L_inf {result.achieved_linf:.6f}"
    )
    return 0


def _cmd_render(args) -> int:
    import json

    with open(args.report, "r", encoding="utf-8") as f:
        report = report_from_dict(json.load(f))
    blob = render_report(report, args.format)
    if args.out:
        with open(args.out, "wb") as f:
            f.write(blob)
    else:
        sys.stdout.write(blob.decode())
    return 0


COMMANDS = {
    "eval": _cmd_eval,
    "perceptual": _cmd_perceptual,
    "compose": _cmd_compose,
    "attack-toy": _cmd_attack_toy,
    "render": _cmd_render,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except IO_ERRORS as e:
        print(f"ERROR {e.category}: {e}", file=sys.stderr)
        return 2
    except (OSError, FileNotFoundError) as e:
        print(f"ERROR io: {e}", file=sys.stderr)
        return 2
    except DetbenchError as e:
        print(f"ERROR {e.category}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
