import json

import numpy as np
import pytest
from PIL import Image

from detbench.data_model import (
    BoundingBox,
    Dataset,
    ImageBuffer,
    dump_ground_truth,
    load_image,
    parse_detections,
    parse_ground_truth,
    resize_bilinear,
)
from detbench.errors import (
    DecodeError,
    ParseError,
    ReferentialIntegrityError,
    ValidationError,
)


def write_coco(path, **overrides):
    doc = {
        "images": [
            {"id": 1, "file_name": "a.png", "width": 64, "height": 48},
            {"id": 2, "file_name": "b.png", "width": 32, "height": 32},
        ],
        "annotations": [
            {"id": 1, "image_id": 1, "category_id": 1, "bbox": [10, 20, 30, 40], "iscrowd": 0},
            {"id": 2, "image_id": 1, "category_id": 2, "bbox": [0, 0, 5, 5], "iscrowd": 1},
            {"id": 3, "image_id": 2, "category_id": 1, "bbox": [1, 1, 8, 8], "iscrowd": 0},
        ],
        "categories": [{"id": 1, "name": "cat"}, {"id": 2, "name": "dog"}],
    }
    doc.update(overrides)
    path.write_text(json.dumps(doc))
    return path


class TestBoundingBox:
    def test_corner_conversion(self):
        box = BoundingBox.from_xywh(10, 20, 30, 40)
        assert (box.x1, box.y1, box.x2, box.y2) == (10, 20, 40, 60)

    def test_degenerate_rejected(self):
        with pytest.raises(ValidationError):
            BoundingBox(5, 5, 5, 10)

    def test_negative_rejected(self):
        with pytest.raises(ValidationError):
            BoundingBox(-1, 0, 5, 5)

    def test_xywh_width_height_exact(self):
        # Corner form must preserve the source width/height exactly.
        for x, y, w, h in [(10.0, 20.0, 30.0, 40.0), (0.5, 0.25, 7.75, 3.125)]:
            box = BoundingBox.from_xywh(x, y, w, h)
            assert box.x2 - box.x1 == w
            assert box.y2 - box.y1 == h


class TestParseGroundTruth:
    def test_coco_basic(self, tmp_path):
        ds = parse_ground_truth(str(write_coco(tmp_path / "gt.json")), "coco")
        assert len(ds.images) == 2
        assert sum(len(r.objects) for r in ds.images) == 3
        assert ds.label_map == {0: "cat", 1: "dog"}

    def test_coco_corner_conversion(self, tmp_path):
        ds = parse_ground_truth(str(write_coco(tmp_path / "gt.json")), "coco")
        box = ds.images[0].objects[0].box
        assert (box.x1, box.y1, box.x2, box.y2) == (10, 20, 40, 60)

    def test_coco_iscrowd_maps_to_difficult(self, tmp_path):
        ds = parse_ground_truth(str(write_coco(tmp_path / "gt.json")), "coco")
        flags = [o.difficult for o in ds.images[0].objects]
        assert flags == [False, True]

    def test_coco_unknown_category(self, tmp_path):
        path = write_coco(
            tmp_path / "gt.json",
            annotations=[
                {"id": 1, "image_id": 1, "category_id": 99, "bbox": [0, 0, 5, 5]}
            ],
        )
        with pytest.raises(ReferentialIntegrityError):
            parse_ground_truth(str(path), "coco")

    def test_malformed_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ParseError):
            parse_ground_truth(str(p), "coco")

    def test_voc_difficult_flag(self, tmp_path):
        xml = """<annotation>
          <filename>img1.jpg</filename>
          <size><width>100</width><height>80</height><depth>3</depth></size>
          <object><name>dog</name><difficult>1</difficult>
            <bndbox><xmin>10</xmin><ymin>10</ymin><xmax>40</xmax><ymax>40</ymax></bndbox>
          </object>
          <object><name>cat</name><difficult>0</difficult>
            <bndbox><xmin>1</xmin><ymin>2</ymin><xmax>20</xmax><ymax>22</ymax></bndbox>
          </object>
        </annotation>"""
        p = tmp_path / "img1.xml"
        p.write_text(xml)
        ds = parse_ground_truth(str(p), "voc_xml")
        assert ds.label_map == {0: "cat", 1: "dog"}
        by_class = {o.class_id: o for o in ds.images[0].objects}
        assert by_class[1].difficult is True
        assert by_class[0].difficult is False

    def test_round_trip_through_dump(self, tmp_path):
        ds = parse_ground_truth(str(write_coco(tmp_path / "gt.json")), "coco")
        dump_ground_truth(ds, str(tmp_path / "dump.json"))
        again = parse_ground_truth(str(tmp_path / "dump.json"), "coco")
        assert again == ds


class TestParseDetections:
    @pytest.fixture
    def dataset(self, tmp_path):
        return parse_ground_truth(str(write_coco(tmp_path / "gt.json")), "coco")

    def test_basic(self, tmp_path, dataset):
        p = tmp_path / "det.json"
        p.write_text(json.dumps(
            [{"image_id": 1, "category_id": 1, "bbox": [0, 0, 10, 10], "score": 0.9}]
        ))
        ds = parse_detections(str(p), dataset)
        (det,) = ds.detections("1")
        assert (det.box.x1, det.box.y1, det.box.x2, det.box.y2) == (0, 0, 10, 10)
        assert det.score == 0.9

    def test_out_of_range_score_rejected(self, tmp_path, dataset):
        p = tmp_path / "det.json"
        p.write_text(json.dumps(
            [{"image_id": 1, "category_id": 1, "bbox": [0, 0, 10, 10], "score": 1.5}]
        ))
        with pytest.raises(ValidationError):
            parse_detections(str(p), dataset)

    def test_unknown_image_rejected(self, tmp_path, dataset):
        p = tmp_path / "det.json"
        p.write_text(json.dumps(
            [{"image_id": 42, "category_id": 1, "bbox": [0, 0, 10, 10], "score": 0.5}]
        ))
        with pytest.raises(ReferentialIntegrityError):
            parse_detections(str(p), dataset)

    def test_empty_list_is_valid(self, tmp_path, dataset):
        p = tmp_path / "det.json"
        p.write_text("[]")
        ds = parse_detections(str(p), dataset)
        assert ds.detections("1") == ()


class TestLoadImage:
    def test_rgb_png(self, tmp_path):
        p = tmp_path / "red.png"
        Image.fromarray(np.full((2, 2, 3), [255, 0, 0], dtype=np.uint8), "RGB").save(p)
        buf = load_image(str(p))
        assert buf.pixels.shape == (2, 2, 3)
        assert (buf.pixels == [255, 0, 0]).all()

    def test_grayscale_expanded(self, tmp_path):
        p = tmp_path / "gray.png"
        Image.fromarray(np.array([[7]], dtype=np.uint8), "L").save(p)
        buf = load_image(str(p))
        assert buf.pixels.tolist() == [[[7, 7, 7]]]

    def test_truncated_file(self, tmp_path):
        p = tmp_path / "trunc.png"
        p.write_bytes(b"\x89PNG\r\n\x1a\n123")
        with pytest.raises(DecodeError):
            load_image(str(p))


def scalar_bilinear(src, w, h):
    """Independent per-pixel evaluation of the half-pixel bilinear formula."""
    sh, sw, _ = src.shape
    out = np.zeros((h, w, 3))
    for i in range(h):
        for j in range(w):
            sy = (i + 0.5) * sh / h - 0.5
            sx = (j + 0.5) * sw / w - 0.5
            y0 = int(np.floor(sy))
            x0 = int(np.floor(sx))
            fy = sy - y0
            fx = sx - x0
            y0c, y1c = np.clip([y0, y0 + 1], 0, sh - 1)
            x0c, x1c = np.clip([x0, x0 + 1], 0, sw - 1)
            if sy < 0 or sy > sh - 1:
                fy = 0.0
                y1c = y0c = int(np.clip(round(sy), 0, sh - 1))
            if sx < 0 or sx > sw - 1:
                fx = 0.0
                x1c = x0c = int(np.clip(round(sx), 0, sw - 1))
            a = src[y0c, x0c] * (1 - fx) + src[y0c, x1c] * fx
            b = src[y1c, x0c] * (1 - fx) + src[y1c, x1c] * fx
            out[i, j] = a * (1 - fy) + b * fy
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


class TestResizeBilinear:
    def test_identity(self):
        rng = np.random.default_rng(0)
        buf = ImageBuffer(pixels=rng.integers(0, 256, size=(6, 5, 3), dtype=np.uint8))
        out = resize_bilinear(buf, 5, 6)
        assert (out.pixels == buf.pixels).all()

    def test_constant_field(self):
        buf = ImageBuffer(pixels=np.full((1, 1, 3), 77, dtype=np.uint8))
        out = resize_bilinear(buf, 7, 4)
        assert (out.pixels == 77).all()

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(1)
        src = rng.integers(0, 256, size=(5, 7, 3), dtype=np.uint8)
        buf = ImageBuffer(pixels=src)
        for w, h in [(14, 10), (3, 2), (7, 5), (4, 1)]:
            out = resize_bilinear(buf, w, h)
            expected = scalar_bilinear(src.astype(np.float64), w, h)
            assert (out.pixels == expected).all(), (w, h)

    def test_two_pixel_upscale(self):
        src = np.zeros((1, 2, 3), dtype=np.uint8)
        src[0, 1] = 100
        out = resize_bilinear(ImageBuffer(pixels=src), 4, 1)
        expected = scalar_bilinear(src.astype(np.float64), 4, 1)
        assert (out.pixels == expected).all()

    def test_zero_dimension_rejected(self):
        buf = ImageBuffer(pixels=np.zeros((2, 2, 3), dtype=np.uint8))
        with pytest.raises(ValidationError):
            resize_bilinear(buf, 0, 2)

    def test_idempotent_at_fixed_size(self):
        rng = np.random.default_rng(2)
        buf = ImageBuffer(pixels=rng.integers(0, 256, size=(9, 9, 3), dtype=np.uint8))
        once = resize_bilinear(buf, 5, 5)
        twice = resize_bilinear(once, 5, 5)
        assert (once.pixels == twice.pixels).all()


def test_duplicate_image_id_rejected():
    from detbench.data_model import ImageRecord

    rec = ImageRecord(image_id="a", width=2, height=2, objects=())
    with pytest.raises(ValidationError):
        Dataset(label_map={0: "x"}, images=(rec, rec))
