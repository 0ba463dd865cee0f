"""Detection matching and the three impact metrics: mAP, AP_loc, CSR.

All three share one greedy matcher: detections in descending confidence, each
assigned to the unmatched ground truth of maximal IoU above the threshold.
AP_loc is mAP with every label fused into a single class; CSR is the
micro-averaged recall of class-agnostic matches with agreeing labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .data_model import BoundingBox, Dataset, Detection, DetectionSet, GroundTruthObject
from .errors import UndefinedMetricError, ValidationError

__all__ = [
    "MatchResult",
    "PRCurve",
    "MetricBundle",
    "iou",
    "greedy_match",
    "average_precision",
    "evaluate_map",
    "evaluate_ap_loc",
    "evaluate_csr",
    "relative_drop",
]


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two corner-form boxes; 0 when disjoint."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class MatchResult:
    assignments: tuple[tuple[int, int, float], ...]  # (det index, gt index, IoU)
    unmatched_detections: tuple[int, ...]
    unmatched_gts: tuple[int, ...]
    ignored_detections: tuple[int, ...] = ()  # best overlap was a difficult GT


@dataclass(frozen=True)
class PRCurve:
    points: tuple[tuple[float, float], ...]  # (recall, precision), descending score
    n_gt: int


@dataclass(frozen=True)
class MetricBundle:
    map: float
    ap_loc: float
    csr: float
    per_class_ap: dict[int, float] = field(default_factory=dict)


def greedy_match(
    gts: list[GroundTruthObject],
    dets: list[Detection],
    thr: float,
    class_aware: bool,
    ignore_difficult: bool = True,
) -> MatchResult:
    """One-to-one greedy matching in descending confidence order.

    Ties in score break by ascending detection index; ties in IoU by
    ascending ground-truth index. Detections whose only sufficient overlap
    is a difficult ground truth are ignored rather than counted as false
    positives (VOC convention; disable via ``ignore_difficult``).
    """
    if not (0.0 < thr < 1.0):
        raise ValidationError(f"IoU threshold {thr} outside (0, 1)")

    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    gt_taken = [False] * len(gts)
    assignments = []
    unmatched = []
    ignored = []
    for di in order:
        det = dets[di]
        best_iou, best_gi = 0.0, -1
        best_diff_iou = 0.0
        for gi, gt in enumerate(gts):
            if class_aware and gt.class_id != det.class_id:
                continue
            ov = iou(det.box, gt.box)
            if gt.difficult and ignore_difficult:
                best_diff_iou = max(best_diff_iou, ov)
                continue
            if gt_taken[gi]:
                continue
            if ov > best_iou:
                best_iou, best_gi = ov, gi
        if best_iou >= thr and best_gi >= 0:
            gt_taken[best_gi] = True
            assignments.append((di, best_gi, best_iou))
        elif best_diff_iou >= thr:
            ignored.append(di)
        else:
            unmatched.append(di)

    unmatched_gts = tuple(
        gi
        for gi, gt in enumerate(gts)
        if not gt_taken[gi] and not (gt.difficult and ignore_difficult)
    )
    return MatchResult(
        assignments=tuple(assignments),
        unmatched_detections=tuple(sorted(unmatched)),
        unmatched_gts=unmatched_gts,
        ignored_detections=tuple(sorted(ignored)),
    )


def average_precision(curve: PRCurve, interpolation: str = "all_points") -> float:
    """Area under the monotone precision envelope of a PR curve.

    ``interpolation`` is ``all_points`` (exact envelope area) or
    ``eleven_point`` (VOC-2007 comparability mode).
    """
    if curve.n_gt == 0:
        raise UndefinedMetricError("AP undefined: no ground-truth positives")
    if not curve.points:
        return 0.0

    recalls = [r for r, _ in curve.points]
    precisions = [p for _, p in curve.points]
    # Monotone envelope: p*(r) = max precision at any recall >= r.
    envelope = precisions[:]
    for i in range(len(envelope) - 2, -1, -1):
        envelope[i] = max(envelope[i], envelope[i + 1])

    if interpolation == "eleven_point":
        total = 0.0
        for k in range(11):
            r = k / 10.0
            pmax = 0.0
            for ri, pi in zip(recalls, envelope):
                if ri >= r:
                    pmax = pi
                    break
            total += pmax
        return total / 11.0
    if interpolation != "all_points":
        raise ValidationError(f"unknown interpolation mode {interpolation!r}")

    ap = 0.0
    prev_r = 0.0
    for r, p in zip(recalls, envelope):
        if r > prev_r:
            ap += (r - prev_r) * p
            prev_r = r
    return ap


def _class_pr_curve(
    dataset: Dataset,
    dets: DetectionSet,
    class_id: int,
    thr: float,
    class_aware: bool,
    ignore_difficult: bool,
) -> PRCurve:
    """PR curve for one class across all images (class 0 with fused labels)."""
    n_gt = 0
    flagged: list[tuple[float, int, int, bool]] = []  # (score, img order, det idx, tp)
    for img_order, rec in enumerate(dataset.images):
        if class_aware:
            gts = [g for g in rec.objects if g.class_id == class_id]
        else:
            gts = list(rec.objects)
        img_dets = [
            (i, d)
            for i, d in enumerate(dets.detections(rec.image_id))
            if (not class_aware) or d.class_id == class_id
        ]
        n_gt += sum(1 for g in gts if not (g.difficult and ignore_difficult))
        match = greedy_match(
            gts, [d for _, d in img_dets], thr, class_aware, ignore_difficult
        )
        matched = {di for di, _, _ in match.assignments}
        ignored = set(match.ignored_detections)
        for local_i, (orig_i, d) in enumerate(img_dets):
            if local_i in ignored:
                continue
            flagged.append((d.score, img_order, orig_i, local_i in matched))

    flagged.sort(key=lambda t: (-t[0], t[1], t[2]))
    points = []
    tp = fp = 0
    for _, _, _, is_tp in flagged:
        if is_tp:
            tp += 1
        else:
            fp += 1
        recall = tp / n_gt if n_gt else 0.0
        points.append((recall, tp / (tp + fp)))
    return PRCurve(points=tuple(points), n_gt=n_gt)


def evaluate_map(
    dataset: Dataset,
    dets: DetectionSet,
    thr: float = 0.5,
    ignore_difficult: bool = True,
    interpolation: str = "all_points",
) -> float:
    """mAP in percent: mean per-class AP over classes with >= 1 ground truth."""
    aps = _per_class_ap(dataset, dets, thr, ignore_difficult, interpolation)
    if not aps:
        raise UndefinedMetricError("mAP undefined: dataset has no countable objects")
    return 100.0 * sum(aps.values()) / len(aps)


def _per_class_ap(
    dataset: Dataset,
    dets: DetectionSet,
    thr: float,
    ignore_difficult: bool,
    interpolation: str = "all_points",
) -> dict[int, float]:
    aps = {}
    for class_id in sorted(dataset.label_map):
        curve = _class_pr_curve(dataset, dets, class_id, thr, True, ignore_difficult)
        if curve.n_gt == 0:
            continue
        aps[class_id] = average_precision(curve, interpolation)
    return aps


def evaluate_ap_loc(
    dataset: Dataset,
    dets: DetectionSet,
    thr: float = 0.5,
    ignore_difficult: bool = True,
    interpolation: str = "all_points",
) -> float:
    """Class-fused AP in percent: every label rewritten to one class."""
    curve = _class_pr_curve(dataset, dets, 0, thr, False, ignore_difficult)
    if curve.n_gt == 0:
        raise UndefinedMetricError("AP_loc undefined: dataset has no countable objects")
    return 100.0 * average_precision(curve, interpolation)


def evaluate_csr(
    dataset: Dataset,
    dets: DetectionSet,
    thr: float = 0.5,
    ignore_difficult: bool = True,
) -> float:
    """Ratio of ground truths covered by a correctly classified detection.

    Matching is class-agnostic and one-to-one; a matched detection counts
    only when its label agrees with the ground truth's.
    """
    n_gt = 0
    correct = 0
    for rec in dataset.images:
        gts = list(rec.objects)
        n_gt += sum(1 for g in gts if not (g.difficult and ignore_difficult))
        match = greedy_match(
            gts, list(dets.detections(rec.image_id)), thr, False, ignore_difficult
        )
        img_dets = dets.detections(rec.image_id)
        for di, gi, _ in match.assignments:
            if img_dets[di].class_id == gts[gi].class_id:
                correct += 1
    if n_gt == 0:
        raise UndefinedMetricError("CSR undefined: dataset has no countable objects")
    return 100.0 * correct / n_gt


def relative_drop(benign: float, attacked: float) -> float:
    """(benign - attacked) / benign * 100; negative when the attack helps."""
    if benign == 0:
        raise UndefinedMetricError("relative drop undefined for benign = 0")
    return (benign - attacked) / benign * 100.0


def evaluate_bundle(
    dataset: Dataset,
    dets: DetectionSet,
    thr: float = 0.5,
    ignore_difficult: bool = True,
    interpolation: str = "all_points",
) -> MetricBundle:
    """All three metrics plus per-class AP for one detection set."""
    per_class = _per_class_ap(dataset, dets, thr, ignore_difficult, interpolation)
    if not per_class:
        raise UndefinedMetricError("metrics undefined: dataset has no countable objects")
    return MetricBundle(
        map=100.0 * sum(per_class.values()) / len(per_class),
        ap_loc=evaluate_ap_loc(dataset, dets, thr, ignore_difficult, interpolation),
        csr=evaluate_csr(dataset, dets, thr, ignore_difficult),
        per_class_ap={c: 100.0 * v for c, v in per_class.items()},
    )
