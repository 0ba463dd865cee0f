"""Canonical in-memory types for images, annotations, and detections.

Boxes are stored in float corner form (x1, y1, x2, y2); width/height based
formats are converted at ingest. Images are 8-bit RGB throughout; metric
arithmetic promotes to float64 downstream.
"""

from __future__ import annotations

import json
import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    DecodeError,
    ParseError,
    ReferentialIntegrityError,
    ValidationError,
)

__all__ = [
    "BoundingBox",
    "GroundTruthObject",
    "Detection",
    "ImageRecord",
    "Dataset",
    "DetectionSet",
    "ImageBuffer",
    "parse_ground_truth",
    "parse_detections",
    "dump_ground_truth",
    "load_image",
    "resize_bilinear",
]


@dataclass(frozen=True)
class BoundingBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(np.isfinite(c) for c in coords):
            raise ValidationError(f"non-finite box coordinates {coords}")
        if min(coords) < 0:
            raise ValidationError(f"negative box coordinate in {coords}")
        if not (self.x2 > self.x1 and self.y2 > self.y1):
            raise ValidationError(f"degenerate box {coords}: need x2 > x1 and y2 > y1")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    @classmethod
    def from_xywh(cls, x: float, y: float, w: float, h: float) -> "BoundingBox":
        return cls(x, y, x + w, y + h)


@dataclass(frozen=True)
class GroundTruthObject:
    box: BoundingBox
    class_id: int
    difficult: bool = False


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    class_id: int
    score: float

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValidationError(f"detection score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    width: int
    height: int
    objects: tuple[GroundTruthObject, ...]
    clean_path: str = ""
    adversarial_paths: tuple[str, ...] = ()

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(
                f"image {self.image_id!r}: non-positive dimensions "
                f"{self.width}x{self.height}"
            )


@dataclass(frozen=True)
class Dataset:
    label_map: dict[int, str]
    images: tuple[ImageRecord, ...]
    # Original source category id -> contiguous class_id (COCO categories are
    # not contiguous); identity for formats that are already contiguous.
    source_category_ids: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        ids = sorted(self.label_map)
        if ids != list(range(len(ids))):
            raise ValidationError(f"label_map class ids not contiguous from 0: {ids}")
        seen = set()
        for rec in self.images:
            if rec.image_id in seen:
                raise ValidationError(f"duplicate image_id {rec.image_id!r}")
            seen.add(rec.image_id)

    @property
    def num_classes(self) -> int:
        return len(self.label_map)

    def image(self, image_id: str) -> ImageRecord:
        for rec in self.images:
            if rec.image_id == image_id:
                return rec
        raise KeyError(image_id)


@dataclass(frozen=True)
class DetectionSet:
    by_image: dict[str, tuple[Detection, ...]]
    source_model: str = ""
    attack_tag: str = "benign"

    def detections(self, image_id: str) -> tuple[Detection, ...]:
        return self.by_image.get(image_id, ())


@dataclass(frozen=True)
class ImageBuffer:
    """8-bit RGB raster, shape (height, width, 3), channel-interleaved."""

    pixels: np.ndarray

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValidationError(f"expected (h, w, 3) pixel array, got {px.shape}")
        if px.dtype != np.uint8:
            raise ValidationError(f"expected uint8 pixels, got {px.dtype}")
        px.setflags(write=False)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def as_float(self) -> np.ndarray:
        """Pixels as float64 in [0, 255]."""
        return self.pixels.astype(np.float64)


def _coco_parse(path: str) -> Dataset:
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON: {e}") from e
    for key in ("images", "annotations", "categories"):
        if key not in doc:
            raise ParseError(f"{path}: missing top-level key {key!r}")

    cats = sorted(doc["categories"], key=lambda c: c["id"])
    label_map = {i: c["name"] for i, c in enumerate(cats)}
    cat_remap = {c["id"]: i for i, c in enumerate(cats)}

    per_image: dict = {}
    order = []
    for img in doc["images"]:
        iid = str(img["id"])
        per_image[iid] = (img, [])
        order.append(iid)
    for k, ann in enumerate(doc["annotations"]):
        iid = str(ann["image_id"])
        if iid not in per_image:
            raise ReferentialIntegrityError(
                f"{path}: annotation {k} references unknown image_id {iid}"
            )
        if ann["category_id"] not in cat_remap:
            raise ReferentialIntegrityError(
                f"{path}: annotation {k} references unknown category_id "
                f"{ann['category_id']}"
            )
        try:
            x, y, w, h = ann["bbox"]
            box = BoundingBox.from_xywh(float(x), float(y), float(w), float(h))
        except (ValueError, TypeError, ValidationError) as e:
            raise ParseError(f"{path}: annotation {k}: bad bbox {ann.get('bbox')}: {e}") from e
        per_image[iid][1].append(
            GroundTruthObject(
                box=box,
                class_id=cat_remap[ann["category_id"]],
                difficult=bool(ann.get("iscrowd", 0)),
            )
        )

    records = []
    for iid in order:
        img, objs = per_image[iid]
        records.append(
            ImageRecord(
                image_id=iid,
                width=int(img["width"]),
                height=int(img["height"]),
                objects=tuple(objs),
                clean_path=str(img.get("file_name", "")),
            )
        )
    return Dataset(
        label_map=label_map,
        images=tuple(records),
        source_category_ids=cat_remap,
    )


def _voc_parse_one(path: str, class_of: dict[str, list]) -> tuple[str, dict]:
    """First pass over one VOC XML: collect raw fields and class names."""
    try:
        root = ET.parse(path).getroot()
    except ET.ParseError as e:
        raise ParseError(f"{path}: invalid XML: {e}") from e
    size = root.find("size")
    if size is None:
        raise ParseError(f"{path}: missing <size>")
    filename_el = root.find("filename")
    filename = filename_el.text if filename_el is not None and filename_el.text else ""
    image_id = os.path.splitext(os.path.basename(path))[0]
    objects = []
    for k, obj in enumerate(root.iter("object")):
        name_el = obj.find("name")
        box_el = obj.find("bndbox")
        if name_el is None or name_el.text is None or box_el is None:
            raise ParseError(f"{path}: object {k}: missing <name> or <bndbox>")
        try:
            coords = tuple(
                float(box_el.find(tag).text)  # type: ignore[union-attr,arg-type]
                for tag in ("xmin", "ymin", "xmax", "ymax")
            )
        except (AttributeError, TypeError, ValueError) as e:
            raise ParseError(f"{path}: object {k}: bad <bndbox>: {e}") from e
        diff_el = obj.find("difficult")
        difficult = diff_el is not None and diff_el.text is not None and int(diff_el.text) != 0
        class_of.setdefault(name_el.text, [])
        objects.append((name_el.text, coords, difficult, k))
    return image_id, {
        "width": int(size.findtext("width", "0")),
        "height": int(size.findtext("height", "0")),
        "filename": filename,
        "objects": objects,
        "path": path,
    }


def _voc_parse(path: str) -> Dataset:
    if os.path.isdir(path):
        files = sorted(
            os.path.join(path, f) for f in os.listdir(path) if f.endswith(".xml")
        )
        if not files:
            raise ParseError(f"{path}: no .xml files in directory")
    else:
        files = [path]

    class_names: dict[str, list] = {}
    raw = [_voc_parse_one(f, class_names) for f in files]
    name_to_id = {name: i for i, name in enumerate(sorted(class_names))}
    label_map = {i: name for name, i in name_to_id.items()}

    records = []
    for image_id, info in raw:
        objs = []
        for name, (xmin, ymin, xmax, ymax), difficult, k in info["objects"]:
            try:
                box = BoundingBox(xmin, ymin, xmax, ymax)
            except ValidationError as e:
                raise ParseError(f"{info['path']}: object {k}: {e}") from e
            objs.append(
                GroundTruthObject(box=box, class_id=name_to_id[name], difficult=difficult)
            )
        records.append(
            ImageRecord(
                image_id=image_id,
                width=info["width"],
                height=info["height"],
                objects=tuple(objs),
                clean_path=info["filename"],
            )
        )
    return Dataset(label_map=label_map, images=tuple(records))


def parse_ground_truth(path: str, format: str) -> Dataset:
    """Parse ground truth in COCO instances JSON or VOC XML form.

    ``path`` is a JSON file for ``coco``; a single XML file or a directory of
    XML files for ``voc_xml``. VOC ``difficult`` and COCO ``iscrowd`` both map
    onto the ignore flag.
    """
    if format == "coco":
        return _coco_parse(path)
    if format == "voc_xml":
        return _voc_parse(path)
    raise ValidationError(f"unknown ground-truth format {format!r}")


def dump_ground_truth(dataset: Dataset, path: str) -> None:
    """Write a Dataset back out as COCO instances JSON (round-trips exactly)."""
    id_to_source = {v: k for k, v in dataset.source_category_ids.items()}
    doc = {
        "images": [
            {"id": r.image_id, "file_name": r.clean_path, "width": r.width, "height": r.height}
            for r in dataset.images
        ],
        "annotations": [
            {
                "image_id": r.image_id,
                "category_id": id_to_source.get(o.class_id, o.class_id),
                "bbox": [o.box.x1, o.box.y1, o.box.x2 - o.box.x1, o.box.y2 - o.box.y1],
                "iscrowd": int(o.difficult),
            }
            for r in dataset.images
            for o in r.objects
        ],
        "categories": [
            {"id": id_to_source.get(cid, cid), "name": name}
            for cid, name in sorted(dataset.label_map.items())
        ],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1, sort_keys=True)


def parse_detections(
    path: str,
    dataset: Dataset,
    source_model: str = "",
    attack_tag: str = "benign",
) -> DetectionSet:
    """Parse a COCO-results JSON array against ``dataset``.

    Out-of-range scores and unknown image ids are errors, never clamped or
    skipped. An empty array is valid: attacked models may predict nothing.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            entries = json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(entries, list):
        raise ParseError(f"{path}: expected a JSON array of results")

    known = {rec.image_id for rec in dataset.images}
    cat_remap = dataset.source_category_ids
    by_image: dict[str, list[Detection]] = {}
    for k, e in enumerate(entries):
        iid = str(e["image_id"])
        if iid not in known:
            raise ReferentialIntegrityError(
                f"{path}: entry {k} references unknown image_id {iid}"
            )
        score = float(e["score"])
        if not (0.0 <= score <= 1.0):
            raise ValidationError(f"{path}: entry {k}: score {score} outside [0, 1]")
        src_cat = int(e["category_id"])
        if cat_remap:
            if src_cat not in cat_remap:
                raise ReferentialIntegrityError(
                    f"{path}: entry {k} references unknown category_id {src_cat}"
                )
            class_id = cat_remap[src_cat]
        else:
            class_id = src_cat
        if not (0 <= class_id < dataset.num_classes):
            raise ReferentialIntegrityError(
                f"{path}: entry {k}: class id {class_id} outside [0, {dataset.num_classes})"
            )
        try:
            x, y, w, h = e["bbox"]
            box = BoundingBox.from_xywh(float(x), float(y), float(w), float(h))
        except (ValueError, TypeError, ValidationError) as err:
            raise ParseError(f"{path}: entry {k}: bad bbox {e.get('bbox')}: {err}") from err
        by_image.setdefault(iid, []).append(Detection(box=box, class_id=class_id, score=score))

    return DetectionSet(
        by_image={iid: tuple(dets) for iid, dets in by_image.items()},
        source_model=source_model,
        attack_tag=attack_tag,
    )


def load_image(path: str) -> ImageBuffer:
    """Decode a PNG or JPEG into an 8-bit RGB buffer (grayscale expanded)."""
    try:
        with Image.open(path) as im:
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        raise DecodeError(f"{path}: cannot decode image: {e}") from e
    return ImageBuffer(pixels=arr.copy())


def save_image(buf: ImageBuffer, path: str) -> None:
    Image.fromarray(buf.pixels, mode="RGB").save(path)


def resize_bilinear(img: ImageBuffer, w: int, h: int) -> ImageBuffer:
    """Bilinear resize with half-pixel-center alignment, rounded back to uint8."""
    if w <= 0 or h <= 0:
        raise ValidationError(f"target dimensions must be positive, got {w}x{h}")
    if w == img.width and h == img.height:
        return ImageBuffer(pixels=img.pixels.copy())

    src = img.as_float()
    sh, sw = img.height, img.width

    def axis_coords(dst_n: int, src_n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pos = (np.arange(dst_n, dtype=np.float64) + 0.5) * (src_n / dst_n) - 0.5
        lo = np.clip(np.floor(pos).astype(np.int64), 0, src_n - 1)
        hi = np.clip(lo + 1, 0, src_n - 1)
        frac = np.clip(pos - np.floor(pos), 0.0, 1.0)
        # Edge positions outside the source grid replicate the border pixel.
        frac[pos < 0] = 0.0
        frac[pos > src_n - 1] = 0.0
        return lo, hi, frac

    x_lo, x_hi, x_f = axis_coords(w, sw)
    y_lo, y_hi, y_f = axis_coords(h, sh)

    top = src[y_lo][:, x_lo] * (1 - x_f)[None, :, None] + src[y_lo][:, x_hi] * x_f[None, :, None]
    bot = src[y_hi][:, x_lo] * (1 - x_f)[None, :, None] + src[y_hi][:, x_hi] * x_f[None, :, None]
    out = top * (1 - y_f)[:, None, None] + bot * y_f[:, None, None]
    return ImageBuffer(pixels=np.clip(np.rint(out), 0, 255).astype(np.uint8))
