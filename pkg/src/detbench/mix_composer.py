"""Mixed-attack training-set composition with disjointness guarantees.

Each source image is assigned exactly one variant (one attack, or benign),
so the composed set never contains two adversarial versions of the same
image. Assignment is a seeded uniform shuffle followed by a contiguous
partition with largest-remainder apportionment.
"""

from __future__ import annotations

import csv
import io
import json
import os
import shutil
from dataclasses import dataclass, field

import numpy as np

from .errors import ResolutionError, ValidationError

__all__ = [
    "MixComponent",
    "MixtureSpec",
    "MixtureManifest",
    "compose",
    "verify",
    "write_manifest",
    "read_manifest",
    "materialize",
]

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")


@dataclass(frozen=True)
class MixComponent:
    tag: str  # attack tag, or "benign"
    proportion: float
    root: str | None = None  # directory of per-image variants; None: manifest-only

    def __post_init__(self):
        if not self.tag:
            raise ValidationError("component tag must be non-empty")
        if not (0.0 <= self.proportion <= 1.0):
            raise ValidationError(
                f"component {self.tag!r}: proportion {self.proportion} outside [0, 1]"
            )


@dataclass(frozen=True)
class MixtureSpec:
    image_ids: tuple[str, ...]
    components: tuple[MixComponent, ...]
    seed: int = 0

    def __post_init__(self):
        if not self.image_ids:
            raise ValidationError("spec has no source images")
        tags = [c.tag for c in self.components]
        if len(set(tags)) != len(tags):
            raise ValidationError(f"duplicate component tags in {tags}")
        total = sum(c.proportion for c in self.components)
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"component proportions sum to {total}, expected 1")

    @classmethod
    def from_file(cls, path: str) -> "MixtureSpec":
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
        return cls(
            image_ids=tuple(str(i) for i in doc["image_ids"]),
            components=tuple(
                MixComponent(
                    tag=c["tag"],
                    proportion=float(c["proportion"]),
                    root=c.get("root"),
                )
                for c in doc["components"]
            ),
            seed=int(doc.get("seed", 0)),
        )


@dataclass(frozen=True)
class MixtureManifest:
    assignment: dict[str, tuple[str, str]]  # image_id -> (component tag, path)
    seed: int
    counts: dict[str, int] = field(default_factory=dict)


def _resolve_variant(root: str, image_id: str) -> str:
    for ext in IMAGE_EXTENSIONS:
        candidate = os.path.join(root, image_id + ext)
        if os.path.exists(candidate):
            return candidate
    # Exact name (id already carries an extension).
    candidate = os.path.join(root, image_id)
    if os.path.exists(candidate):
        return candidate
    return ""


def largest_remainder_counts(n: int, proportions: list[float]) -> list[int]:
    """Integer apportionment of n items: floors first, remainders by size."""
    exact = [p * n for p in proportions]
    counts = [int(np.floor(e)) for e in exact]
    remainder = n - sum(counts)
    order = sorted(
        range(len(proportions)), key=lambda k: (-(exact[k] - counts[k]), k)
    )
    for k in order[:remainder]:
        counts[k] += 1
    return counts


def compose(spec: MixtureSpec, seed: int | None = None) -> MixtureManifest:
    """Deterministic shuffle-and-partition assignment for a mixture spec."""
    seed = spec.seed if seed is None else seed
    missing = []
    for comp in spec.components:
        if comp.root is None:
            continue
        for iid in spec.image_ids:
            if not _resolve_variant(comp.root, iid):
                missing.append(f"{comp.tag}: {os.path.join(comp.root, iid)}")
    if missing:
        raise ResolutionError(
            "missing variant files:\n  " + "\n  ".join(missing)
        )

    rng = np.random.default_rng(seed)
    ids = list(spec.image_ids)
    perm = rng.permutation(len(ids))
    shuffled = [ids[i] for i in perm]

    counts = largest_remainder_counts(len(ids), [c.proportion for c in spec.components])
    assignment: dict[str, tuple[str, str]] = {}
    pos = 0
    for comp, count in zip(spec.components, counts):
        for iid in shuffled[pos : pos + count]:
            path = _resolve_variant(comp.root, iid) if comp.root else ""
            assignment[iid] = (comp.tag, path)
        pos += count

    # Re-key in source order so serialization is independent of the shuffle.
    ordered = {iid: assignment[iid] for iid in spec.image_ids}
    return MixtureManifest(
        assignment=ordered,
        seed=seed,
        counts={c.tag: n for c, n in zip(spec.components, counts)},
    )


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str


def verify(manifest: MixtureManifest, spec: MixtureSpec) -> list[Violation]:
    """Check exactly-once assignment, count tolerance <= 1, and file existence."""
    violations = []
    assigned = set(manifest.assignment)
    universe = set(spec.image_ids)
    for iid in sorted(universe - assigned):
        violations.append(Violation("missing-assignment", iid))
    for iid in sorted(assigned - universe):
        violations.append(Violation("unknown-image", iid))

    observed: dict[str, int] = {}
    for iid, (tag, path) in manifest.assignment.items():
        observed[tag] = observed.get(tag, 0) + 1
        if path and not os.path.exists(path):
            violations.append(Violation("missing-file", f"{iid}: {path}"))

    n = len(spec.image_ids)
    for comp in spec.components:
        count = observed.get(comp.tag, 0)
        target = comp.proportion * n
        if abs(count - round(target)) > 1:
            violations.append(
                Violation(
                    "count-tolerance",
                    f"{comp.tag}: {count} assigned, target {target:.2f}",
                )
            )
    return violations


def write_manifest(manifest: MixtureManifest, spec: MixtureSpec, path: str) -> None:
    """CSV rows (image_id, component, path) under a JSON header comment line."""
    header = {
        "seed": manifest.seed,
        "counts": manifest.counts,
        "components": [
            {"tag": c.tag, "proportion": c.proportion, "root": c.root}
            for c in spec.components
        ],
        "n_images": len(spec.image_ids),
    }
    buf = io.StringIO()
    buf.write("#" + json.dumps(header, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["image_id", "component", "path"])
    for iid, (tag, p) in manifest.assignment.items():
        writer.writerow([iid, tag, p])
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(buf.getvalue())


def read_manifest(path: str) -> MixtureManifest:
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline()
        if not first.startswith("#"):
            raise ValidationError(f"{path}: missing JSON header line")
        header = json.loads(first[1:])
        reader = csv.reader(f)
        rows = list(reader)
    if not rows or rows[0] != ["image_id", "component", "path"]:
        raise ValidationError(f"{path}: missing or bad CSV header row")
    assignment = {iid: (tag, p) for iid, tag, p in rows[1:]}
    return MixtureManifest(
        assignment=assignment,
        seed=int(header["seed"]),
        counts={k: int(v) for k, v in header["counts"].items()},
    )


def materialize(manifest: MixtureManifest, out_dir: str, hard_link: bool = True) -> int:
    """Copy or hard-link each assigned variant into out_dir; returns file count."""
    os.makedirs(out_dir, exist_ok=True)
    done = 0
    for iid, (tag, path) in manifest.assignment.items():
        if not path:
            raise ResolutionError(f"{iid}: manifest has no file for component {tag!r}")
        dest = os.path.join(out_dir, os.path.basename(path))
        if os.path.exists(dest):
            os.remove(dest)
        if hard_link:
            try:
                os.link(path, dest)
            except OSError:
                shutil.copy2(path, dest)
        else:
            shutil.copy2(path, dest)
        done += 1
    return done
