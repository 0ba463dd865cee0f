"""Benchmark orchestration: manifest loading, per-condition evaluation,
report assembly, and rendering.

A manifest names a ground-truth dataset, a benign image root, and one
condition per (attack, target model) pair. Detection metrics are computed at
the manifest IoU threshold; perceptual metrics follow the resize policy:
L_inf at the attack's native output resolution, everything else after
resizing the adversarial image back to the clean dimensions.
"""

from __future__ import annotations

import concurrent.futures
import json
import math
import os
from dataclasses import dataclass, field

from . import pixel_metrics
from .data_model import Dataset, load_image, parse_detections, parse_ground_truth, resize_bilinear
from .det_metrics import MetricBundle, evaluate_bundle, relative_drop
from .errors import DetbenchError, ResolutionError, ValidationError
from .pixel_metrics import DistanceStats, LayerWeights, PerceptualFeatureSet, aggregate

__all__ = [
    "RunManifest",
    "Condition",
    "ManifestOptions",
    "ConditionRow",
    "BenchReport",
    "load_manifest",
    "evaluate_condition",
    "build_report",
    "render_report",
    "emit_plot_data",
    "run",
]

PERCEPTUAL_METRICS = ("l0", "l1", "l2", "linf", "psnr", "ssim", "lpips")


@dataclass(frozen=True)
class ManifestOptions:
    ignore_difficult: bool = True
    resize_policy: str = "native_linf"  # L_inf native, the rest at clean size
    interpolation: str = "all_points"


@dataclass(frozen=True)
class Condition:
    attack_tag: str
    target_model_tag: str
    detections: str
    benign_detections: str
    adversarial_image_root: str | None = None
    feature_root_clean: str | None = None
    feature_root_adv: str | None = None
    lpips_weights: str | None = None

    def __post_init__(self):
        if not self.attack_tag or not self.target_model_tag:
            raise ValidationError("condition tags must be non-empty")


@dataclass(frozen=True)
class RunManifest:
    dataset_path: str
    dataset_format: str
    benign_image_root: str
    iou_threshold: float
    conditions: tuple[Condition, ...]
    options: ManifestOptions = field(default_factory=ManifestOptions)

    def __post_init__(self):
        if not (0.0 < self.iou_threshold < 1.0):
            raise ValidationError(
                f"iou_threshold {self.iou_threshold} outside (0, 1)"
            )
        if not self.conditions:
            raise ValidationError("manifest has no conditions")


@dataclass(frozen=True)
class ConditionRow:
    attack_tag: str
    model_tag: str
    bundle: MetricBundle
    drops: dict[str, float]  # map / ap_loc / csr relative drops vs. benign
    stats: dict[str, DistanceStats]  # perceptual metric -> mean/std/n


@dataclass(frozen=True)
class BenchReport:
    iou_threshold: float
    benign: dict[str, MetricBundle]  # model tag -> benign metrics
    rows: tuple[ConditionRow, ...]  # sorted by (model, attack)


def load_manifest(path: str) -> RunManifest:
    """Parse and validate a manifest; every referenced file must resolve."""
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p: str | None) -> str | None:
        if p is None:
            return None
        return p if os.path.isabs(p) else os.path.join(base, p)

    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    try:
        opts = doc.get("options", {})
        manifest = RunManifest(
            dataset_path=resolve(doc["dataset"]["path"]),
            dataset_format=doc["dataset"]["format"],
            benign_image_root=resolve(doc.get("benign_image_root", ".")),
            iou_threshold=float(doc.get("iou_threshold", 0.5)),
            options=ManifestOptions(
                ignore_difficult=bool(opts.get("ignore_difficult", True)),
                resize_policy=opts.get("resize_policy", "native_linf"),
                interpolation=opts.get("interpolation", "all_points"),
            ),
            conditions=tuple(
                Condition(
                    attack_tag=c["attack_tag"],
                    target_model_tag=c["target_model_tag"],
                    detections=resolve(c["detections"]),
                    benign_detections=resolve(c["benign_detections"]),
                    adversarial_image_root=resolve(c.get("adversarial_image_root")),
                    feature_root_clean=resolve(c.get("feature_root_clean")),
                    feature_root_adv=resolve(c.get("feature_root_adv")),
                    lpips_weights=resolve(c.get("lpips_weights")),
                )
                for c in doc["conditions"]
            ),
        )
    except KeyError as e:
        raise ValidationError(f"{path}: missing manifest key {e}") from e

    missing = []
    for p in [manifest.dataset_path]:
        if not os.path.exists(p):
            missing.append(p)
    for c in manifest.conditions:
        for p in (
            c.detections,
            c.benign_detections,
            c.adversarial_image_root,
            c.feature_root_clean,
            c.feature_root_adv,
            c.lpips_weights,
        ):
            if p is not None and not os.path.exists(p):
                missing.append(p)
    if missing:
        raise ResolutionError("missing files:\n  " + "\n  ".join(missing))
    return manifest


def _perceptual_stats(
    manifest: RunManifest, dataset: Dataset, cond: Condition
) -> dict[str, DistanceStats]:
    """Per-image perceptual metrics over all available (clean, adv) pairs."""
    per_metric: dict[str, list[float]] = {m: [] for m in PERCEPTUAL_METRICS}
    weights = LayerWeights.from_file(cond.lpips_weights) if cond.lpips_weights else None

    for rec in dataset.images:
        adv_path = os.path.join(cond.adversarial_image_root, rec.clean_path)
        if not os.path.exists(adv_path):
            continue
        clean = load_image(os.path.join(manifest.benign_image_root, rec.clean_path))
        adv = load_image(adv_path)

        # L_inf at the attack's native resolution, where its budget applies.
        if (adv.width, adv.height) != (clean.width, clean.height):
            native_clean = resize_bilinear(clean, adv.width, adv.height)
            per_metric["linf"].append(pixel_metrics.lp_norms(native_clean, adv).linf)
            adv_at_clean = resize_bilinear(adv, clean.width, clean.height)
        else:
            adv_at_clean = adv
            per_metric["linf"].append(pixel_metrics.lp_norms(clean, adv).linf)

        norms = pixel_metrics.lp_norms(clean, adv_at_clean)
        per_metric["l0"].append(float(norms.l0))
        per_metric["l1"].append(norms.l1)
        per_metric["l2"].append(norms.l2)
        per_metric["psnr"].append(pixel_metrics.psnr(clean, adv_at_clean))
        per_metric["ssim"].append(pixel_metrics.ssim(clean, adv_at_clean))

        if weights is not None and cond.feature_root_clean and cond.feature_root_adv:
            stem = os.path.splitext(rec.clean_path)[0] + ".pfeat"
            fc = os.path.join(cond.feature_root_clean, stem)
            fadv = os.path.join(cond.feature_root_adv, stem)
            if os.path.exists(fc) and os.path.exists(fadv):
                per_metric["lpips"].append(
                    pixel_metrics.lpips_distance(
                        PerceptualFeatureSet.from_file(fc),
                        PerceptualFeatureSet.from_file(fadv),
                        weights,
                    )
                )

    return {m: aggregate(v) for m, v in per_metric.items() if v}


def evaluate_condition(
    manifest: RunManifest, dataset: Dataset, cond: Condition
) -> tuple[ConditionRow, MetricBundle]:
    """Detection metrics, drops vs. benign, and perceptual stats for one cell."""
    try:
        benign_dets = parse_detections(
            cond.benign_detections, dataset,
            source_model=cond.target_model_tag, attack_tag="benign",
        )
        attack_dets = parse_detections(
            cond.detections, dataset,
            source_model=cond.target_model_tag, attack_tag=cond.attack_tag,
        )
        kwargs = dict(
            thr=manifest.iou_threshold,
            ignore_difficult=manifest.options.ignore_difficult,
            interpolation=manifest.options.interpolation,
        )
        benign = evaluate_bundle(dataset, benign_dets, **kwargs)
        attacked = evaluate_bundle(dataset, attack_dets, **kwargs)
        drops = {
            "map": relative_drop(benign.map, attacked.map),
            "ap_loc": relative_drop(benign.ap_loc, attacked.ap_loc),
            "csr": relative_drop(benign.csr, attacked.csr),
        }
        stats = (
            _perceptual_stats(manifest, dataset, cond)
            if cond.adversarial_image_root
            else {}
        )
    except DetbenchError as e:
        raise type(e)(
            f"condition ({cond.attack_tag}, {cond.target_model_tag}): {e}"
        ) from e
    row = ConditionRow(
        attack_tag=cond.attack_tag,
        model_tag=cond.target_model_tag,
        bundle=attacked,
        drops=drops,
        stats=stats,
    )
    return row, benign


def build_report(
    results: list[tuple[ConditionRow, MetricBundle]], iou_threshold: float
) -> BenchReport:
    """Merge per-condition results into a deterministically ordered report."""
    if not results:
        raise ValidationError("cannot build a report from zero conditions")
    seen = set()
    benign: dict[str, MetricBundle] = {}
    rows = []
    for row, benign_bundle in results:
        key = (row.model_tag, row.attack_tag)
        if key in seen:
            raise ValidationError(f"duplicate (model, attack) pair {key}")
        seen.add(key)
        benign[row.model_tag] = benign_bundle
        rows.append(row)
    rows.sort(key=lambda r: (r.model_tag, r.attack_tag))
    report = BenchReport(
        iou_threshold=iou_threshold,
        benign=dict(sorted(benign.items())),
        rows=tuple(rows),
    )
    _check_consistency(report)
    return report


def _check_consistency(report: BenchReport) -> None:
    for row in report.rows:
        b = report.benign[row.model_tag]
        for name, benign_v, attacked_v in (
            ("map", b.map, row.bundle.map),
            ("ap_loc", b.ap_loc, row.bundle.ap_loc),
            ("csr", b.csr, row.bundle.csr),
        ):
            if abs(relative_drop(benign_v, attacked_v) - row.drops[name]) > 1e-9:
                raise ValidationError(
                    f"inconsistent stored drop for {name} in "
                    f"({row.attack_tag}, {row.model_tag})"
                )


def report_to_dict(report: BenchReport) -> dict:
    def bundle(b: MetricBundle) -> dict:
        return {
            "map": b.map,
            "ap_loc": b.ap_loc,
            "csr": b.csr,
            "per_class_ap": {str(k): v for k, v in sorted(b.per_class_ap.items())},
        }

    return {
        "iou_threshold": report.iou_threshold,
        "benign": {m: bundle(b) for m, b in report.benign.items()},
        "rows": [
            {
                "attack": r.attack_tag,
                "model": r.model_tag,
                "metrics": bundle(r.bundle),
                "drops": dict(sorted(r.drops.items())),
                "perceptual": {
                    m: {"mean": s.mean, "std": s.std, "n": s.n}
                    for m, s in sorted(r.stats.items())
                },
            }
            for r in report.rows
        ],
    }


def report_from_dict(doc: dict) -> BenchReport:
    def bundle(d: dict) -> MetricBundle:
        return MetricBundle(
            map=d["map"],
            ap_loc=d["ap_loc"],
            csr=d["csr"],
            per_class_ap={int(k): v for k, v in d.get("per_class_ap", {}).items()},
        )

    return BenchReport(
        iou_threshold=doc["iou_threshold"],
        benign={m: bundle(b) for m, b in doc["benign"].items()},
        rows=tuple(
            ConditionRow(
                attack_tag=r["attack"],
                model_tag=r["model"],
                bundle=bundle(r["metrics"]),
                drops=r["drops"],
                stats={
                    m: DistanceStats(mean=s["mean"], std=s["std"], n=s["n"])
                    for m, s in r.get("perceptual", {}).items()
                },
            )
            for r in doc["rows"]
        ),
    )


def _fmt1(v: float) -> str:
    return "inf" if math.isinf(v) else f"{v:.1f}"


def _fmt_stats(s: DistanceStats) -> str:
    if math.isinf(s.mean):
        return "inf"
    return f"{s.mean:.2f} ± {s.std:.2f}"


def render_report(report: BenchReport, format: str) -> bytes:
    """Serialize a report: csv/markdown round to one decimal, json keeps full
    precision."""
    if format == "json":
        return (
            json.dumps(report_to_dict(report), indent=1, sort_keys=True) + "\n"
        ).encode()

    header = ["model", "attack", "mAP", "AP_loc", "CSR",
              "mAP drop", "AP_loc drop", "CSR drop"]
    perceptual_cols = [
        m
        for m in PERCEPTUAL_METRICS
        if any(m in r.stats for r in report.rows)
    ]
    header += perceptual_cols

    lines = []
    for model in report.benign:
        b = report.benign[model]
        lines.append(
            [model, "benign", _fmt1(b.map), _fmt1(b.ap_loc), _fmt1(b.csr),
             "0.0", "0.0", "0.0"] + [""] * len(perceptual_cols)
        )
        for r in report.rows:
            if r.model_tag != model:
                continue
            cells = [
                model, r.attack_tag,
                _fmt1(r.bundle.map), _fmt1(r.bundle.ap_loc), _fmt1(r.bundle.csr),
                _fmt1(r.drops["map"]), _fmt1(r.drops["ap_loc"]), _fmt1(r.drops["csr"]),
            ]
            cells += [
                _fmt_stats(r.stats[m]) if m in r.stats else "" for m in perceptual_cols
            ]
            lines.append(cells)

    if format == "csv":
        out = [",".join(header)]
        out += [",".join(cells) for cells in lines]
        return ("\n".join(out) + "\n").encode()
    if format == "markdown":
        out = ["| " + " | ".join(header) + " |",
               "|" + "---|" * len(header)]
        out += ["| " + " | ".join(cells) + " |" for cells in lines]
        return ("\n".join(out) + "\n").encode()
    raise ValidationError(f"unknown report format {format!r}")


def emit_plot_data(report: BenchReport) -> bytes:
    """One CSV record per (attack, model, perceptual metric): mean and std."""
    out = ["attack,model,metric,mean,std,n"]
    for r in report.rows:
        for m in PERCEPTUAL_METRICS:
            if m in r.stats:
                s = r.stats[m]
                out.append(
                    f"{r.attack_tag},{r.model_tag},{m},{s.mean!r},{s.std!r},{s.n}"
                )
    return ("\n".join(out) + "\n").encode()


def run(manifest: RunManifest, out_dir: str, workers: int = 1) -> BenchReport:
    """Evaluate every condition (optionally in parallel) and write the four
    output files: report.csv, report.md, report.json, plotdata.csv."""
    dataset = parse_ground_truth(manifest.dataset_path, manifest.dataset_format)
    results: list[tuple[ConditionRow, MetricBundle] | None]
    if workers <= 1:
        results = [
            evaluate_condition(manifest, dataset, c) for c in manifest.conditions
        ]
    else:
        results = [None] * len(manifest.conditions)
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(evaluate_condition, manifest, dataset, c): i
                for i, c in enumerate(manifest.conditions)
            }
            for fut in concurrent.futures.as_completed(futures):
                results[futures[fut]] = fut.result()

    report = build_report([r for r in results if r is not None], manifest.iou_threshold)
    os.makedirs(out_dir, exist_ok=True)
    for name, blob in (
        ("report.csv", render_report(report, "csv")),
        ("report.md", render_report(report, "markdown")),
        ("report.json", render_report(report, "json")),
        ("plotdata.csv", emit_plot_data(report)),
    ):
        with open(os.path.join(out_dir, name), "wb") as f:
            f.write(blob)
    return report
