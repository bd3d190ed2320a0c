"""Dataset synthesis, manifest bookkeeping, and stratified splitting.

A manifest is a UTF-8 CSV with header ``id,path_1bit,path_16bit,label,
split,path_hog`` plus a ``classes.txt`` companion (one class name per
line). Image paths are stored relative to the manifest location; images
are float32 rank-2 tensor files.
"""

from __future__ import annotations

import csv
import multiprocessing
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from ..ndgrad import save_tensor
from ..sarsim import RadarParams, generate_pair
from . import targets

MANIFEST_HEADER = ["id", "path_1bit", "path_16bit", "label", "split", "path_hog"]

# class-count ratios of the reference imbalanced 6-class profile
TABLE1_RATIOS = (50, 50, 54, 785, 148, 56)


@dataclass
class SamplePair:
    id: str
    path_1bit: str
    path_16bit: str
    label: int
    split: str
    path_hog: str = ""


class Manifest:
    def __init__(self, rows: list[SamplePair], class_names: list[str], path: Path | None = None):
        self.rows = rows
        self.class_names = class_names
        self.path = Path(path) if path else None

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def rows_for(self, split: str) -> list[SamplePair]:
        return [r for r in self.rows if r.split == split]

    def resolve(self, relpath: str) -> Path:
        if self.path is None:
            return Path(relpath)
        return (self.path.parent / relpath).resolve()

    def save(self, path: str | Path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(MANIFEST_HEADER)
            for r in self.rows:
                writer.writerow([r.id, r.path_1bit, r.path_16bit, r.label, r.split, r.path_hog])
        (path.parent / "classes.txt").write_text(
            "".join(f"{n}\n" for n in self.class_names), encoding="utf-8"
        )
        self.path = path

    @classmethod
    def load(cls, path: str | Path) -> "Manifest":
        path = Path(path)
        rows = []
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != MANIFEST_HEADER:
                raise ValueError(f"{path}: bad manifest header {header}")
            for rec in reader:
                if not rec:
                    continue
                rows.append(SamplePair(rec[0], rec[1], rec[2], int(rec[3]), rec[4], rec[5]))
        classes_file = path.parent / "classes.txt"
        if classes_file.exists():
            class_names = [l for l in classes_file.read_text(encoding="utf-8").splitlines() if l]
        else:
            class_names = [f"class{i}" for i in range(max(r.label for r in rows) + 1)]
        return cls(rows, class_names, path)

    def labels(self, split: str | None = None) -> np.ndarray:
        rows = self.rows if split is None else self.rows_for(split)
        return np.array([r.label for r in rows], dtype=np.int64)


# -- split arithmetic -----------------------------------------------------------


def _half_up(frac: Fraction, n: int) -> int:
    num = frac.numerator * n
    den = frac.denominator
    return (2 * num + den) // (2 * den)


def stratified_split(counts: list[int], train_frac: float, val_frac: float = 0.0) -> list[tuple[int, int, int]]:
    """Per-class (train, val, test) counts.

    Train and val sizes use exact decimal half-up rounding of
    ``frac * count``; test takes the remainder. Fractions are interpreted
    from their decimal representation so e.g. 0.7 of 785 is exactly 550.
    """
    ft = Fraction(str(train_frac))
    fv = Fraction(str(val_frac))
    if ft < 0 or fv < 0 or ft + fv > 1:
        raise ValueError(f"bad split fractions train={train_frac}, val={val_frac}")
    out = []
    for n in counts:
        tr = _half_up(ft, n)
        va = min(_half_up(fv, n), n - tr)
        out.append((tr, va, n - tr - va))
    return out


def class_counts(num_classes: int, per_class: int, imbalance: str = "balanced") -> list[int]:
    """Per-class sample counts for a synthesis run.

    ``balanced`` gives ``per_class`` everywhere. ``table1`` reproduces the
    reference imbalanced ratio 50:50:54:785:148:56 with ``per_class`` as
    the majority-class count (785 reproduces the ratios verbatim).
    """
    if imbalance == "balanced":
        return [per_class] * num_classes
    if imbalance == "table1":
        if num_classes != len(TABLE1_RATIOS):
            raise ValueError(f"table1 profile defines {len(TABLE1_RATIOS)} classes, not {num_classes}")
        top = max(TABLE1_RATIOS)
        return [max(1, _half_up(Fraction(r * per_class, top), 1)) for r in TABLE1_RATIOS]
    raise ValueError(f"unknown imbalance profile '{imbalance}'")


# -- synthesis -------------------------------------------------------------------


def _synth_one(job) -> SamplePair:
    out_dir, sample_id, label, idx, seed, size, params, gt_source = job
    rng = np.random.default_rng([seed, label, idx])
    target = targets.make_target(label, size, rng)
    img16, img1 = generate_pair(target, params, gt_source=gt_source)
    img_dir = Path(out_dir) / "images"
    save_tensor(img_dir / f"{sample_id}_t.cft", target)
    save_tensor(img_dir / f"{sample_id}_16.cft", img16.astype(np.float32))
    save_tensor(img_dir / f"{sample_id}_1b.cft", img1.astype(np.float32))
    return SamplePair(
        id=sample_id,
        path_1bit=f"images/{sample_id}_1b.cft",
        path_16bit=f"images/{sample_id}_16.cft",
        label=label,
        split="",
    )


def synth_dataset(
    out_dir: str | Path,
    num_classes: int,
    per_class: int,
    size: int,
    seed: int,
    params: RadarParams,
    imbalance: str = "balanced",
    train_frac: float = 0.70,
    val_frac: float = 0.15,
    gt_source: str = "rda",
    workers: int = 1,
) -> Manifest:
    """Generate paired images for a procedural class family and write a manifest."""
    if not 2 <= num_classes <= targets.MAX_CLASSES:
        raise ValueError(f"num_classes must be in 2..{targets.MAX_CLASSES}, got {num_classes}")
    if size > min(params.n_range, params.n_azimuth):
        raise ValueError(f"target size {size} exceeds imaging grid")
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    counts = class_counts(num_classes, per_class, imbalance)
    splits = stratified_split(counts, train_frac, val_frac)

    jobs = []
    for label in range(num_classes):
        name = targets.FAMILY_NAMES[label]
        for idx in range(counts[label]):
            jobs.append((str(out_dir), f"{name}{idx:04d}", label, idx, seed, size, params, gt_source))

    if workers > 1:
        with multiprocessing.Pool(workers) as pool:
            rows = pool.map(_synth_one, jobs)
    else:
        rows = [_synth_one(j) for j in jobs]

    # assign splits per class in generation order
    by_label: dict[int, list[SamplePair]] = {}
    for r in rows:
        by_label.setdefault(r.label, []).append(r)
    final_rows: list[SamplePair] = []
    for label in range(num_classes):
        tr, va, te = splits[label]
        cls_rows = by_label[label]
        for i, r in enumerate(cls_rows):
            split = "train" if i < tr else ("val" if i < tr + va else "test")
            final_rows.append(replace(r, split=split))

    manifest = Manifest(final_rows, [targets.FAMILY_NAMES[i] for i in range(num_classes)])
    manifest.save(out_dir / "manifest.csv")
    return manifest
