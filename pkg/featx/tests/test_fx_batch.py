from detbench.pixel_metrics import PerceptualFeatureSet

from featx import batch_extract
from fx_helpers import write_image


def make_tree(root, corrupt=False):
    (root / "sub").mkdir(parents=True)
    write_image(root / "a.png", size=(48, 48), seed=1)
    write_image(root / "b.jpg", size=(48, 48), seed=2)
    write_image(root / "sub" / "c.png", size=(48, 48), seed=3)
    (root / "notes.txt").write_text("ignored")
    if corrupt:
        (root / "b.jpg").write_bytes(b"garbage")


class TestBatch:
    def test_three_valid(self, tmp_path, config):
        src = tmp_path / "in"
        make_tree(src)
        summary = batch_extract(str(src), config, str(tmp_path / "out"))
        assert sorted(summary.succeeded) == ["a.png", "b.jpg", "sub/c.png"]
        assert summary.failure_count == 0
        for rel in ("a.pfeat", "b.pfeat", "sub/c.pfeat"):
            fs = PerceptualFeatureSet.from_file(str(tmp_path / "out" / rel))
            fs.validate_unit_norm()

    def test_partial_failure_continues(self, tmp_path, config):
        src = tmp_path / "in"
        make_tree(src, corrupt=True)
        summary = batch_extract(str(src), config, str(tmp_path / "out"))
        assert sorted(summary.succeeded) == ["a.png", "sub/c.png"]
        assert summary.failure_count == 1
        assert summary.failed[0][0] == "b.jpg"
        assert not (tmp_path / "out" / "b.pfeat").exists()

    def test_idempotent_rerun(self, tmp_path, config):
        src = tmp_path / "in"
        make_tree(src)
        out = tmp_path / "out"
        batch_extract(str(src), config, str(out))
        first = {p: p.read_bytes() for p in out.rglob("*.pfeat")}
        batch_extract(str(src), config, str(out))
        second = {p: p.read_bytes() for p in out.rglob("*.pfeat")}
        assert first == second
