"""Dataset loading and stratified splitting for two-class ultrasound corpora.

A dataset is an ordered collection of labeled images, loaded either from a
directory laid out as ``root/<class>/<file>.png`` or from a CSV manifest with
columns ``id,path,label`` (label strings ``normal`` / ``vm``).  Splitting is
stratified per class with largest-remainder rounding, so partition sizes are
reproducible integers rather than artifacts of float rounding.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from PIL import Image

from .errors import DataError

LABEL_OF_NAME = {"normal": 0, "vm": 1}
NAME_OF_LABEL = {v: k for k, v in LABEL_OF_NAME.items()}

_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}


@dataclass(frozen=True)
class LabeledImage:
    """One image of the corpus: unique id, file location, class label (0/1)."""

    id: str
    path: Path
    label: int


@dataclass(frozen=True)
class Dataset:
    """Ordered, immutable collection of :class:`LabeledImage`.

    Items are kept sorted lexicographically by id so that downstream seeded
    shuffles are independent of filesystem enumeration order.
    """

    items: tuple[LabeledImage, ...]

    def __post_init__(self) -> None:
        ids = [it.id for it in self.items]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise DataError(f"duplicate image ids: {dupes}")

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[LabeledImage]:
        return iter(self.items)

    @property
    def class_counts(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for it in self.items:
            counts[it.label] = counts.get(it.label, 0) + 1
        return counts

    def by_label(self, label: int) -> list[LabeledImage]:
        return [it for it in self.items if it.label == label]

    def subset(self, ids: Sequence[str]) -> "Dataset":
        wanted = set(ids)
        missing = wanted - {it.id for it in self.items}
        if missing:
            raise DataError(f"unknown ids requested: {sorted(missing)[:5]}")
        return Dataset(tuple(it for it in self.items if it.id in wanted))


@dataclass(frozen=True)
class SplitSpec:
    """Hold-out fractions (train/val/test) plus the shuffle seed."""

    train_frac: float
    val_frac: float
    test_frac: float
    seed: int

    def __post_init__(self) -> None:
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f <= 0 for f in fracs):
            raise DataError(f"split fractions must be positive, got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise DataError(f"split fractions must sum to 1, got {sum(fracs)!r}")


@dataclass(frozen=True)
class FoldAssignment:
    """Assignment of every train+val image id to one of ``k`` folds."""

    k: int
    fold_of: dict[str, int]

    def ids_in_fold(self, fold: int) -> list[str]:
        return sorted(i for i, f in self.fold_of.items() if f == fold)

    def ids_outside_fold(self, fold: int) -> list[str]:
        return sorted(i for i, f in self.fold_of.items() if f != fold)


def _make_item(image_id: str, path: Path, label_name: str) -> LabeledImage:
    name = label_name.strip().lower()
    if name not in LABEL_OF_NAME:
        raise DataError(
            f"unknown label {label_name!r} for {image_id!r}; "
            f"expected one of {sorted(LABEL_OF_NAME)}"
        )
    if not path.is_file():
        raise DataError(f"image file does not exist: {path}")
    return LabeledImage(id=image_id, path=path, label=LABEL_OF_NAME[name])


def load_manifest(root: str | Path) -> Dataset:
    """Load a dataset from a class-folder directory or a CSV manifest.

    Directory mode expects ``root/<class>/<file>`` with class folders named
    ``normal`` / ``vm``; ids are ``<class>/<stem>``.  CSV mode expects columns
    ``id,path,label`` with paths absolute or relative to the CSV location.
    """
    root = Path(root)
    if root.is_dir():
        items = []
        for class_dir in sorted(p for p in root.iterdir() if p.is_dir()):
            files = sorted(
                p for p in class_dir.iterdir()
                if p.is_file() and p.suffix.lower() in _IMAGE_SUFFIXES
            )
            for f in files:
                items.append(_make_item(f"{class_dir.name}/{f.stem}", f, class_dir.name))
    elif root.is_file():
        items = []
        with open(root, newline="") as fh:
            reader = csv.DictReader(fh)
            required = {"id", "path", "label"}
            if reader.fieldnames is None or not required.issubset(reader.fieldnames):
                raise DataError(
                    f"manifest {root} must have columns id,path,label, "
                    f"got {reader.fieldnames}"
                )
            for row in reader:
                path = Path(row["path"])
                if not path.is_absolute():
                    path = root.parent / path
                items.append(_make_item(row["id"], path, row["label"]))
    else:
        raise DataError(f"no such dataset directory or manifest: {root}")

    if not items:
        raise DataError(f"no images found under {root}")
    return Dataset(tuple(sorted(items, key=lambda it: it.id)))


def read_image(path: str | Path) -> np.ndarray:
    """Decode an image to an H x W x 3 uint8 array, replicating grayscale."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("L") if im.mode in ("L", "I;16", "1") else im)
    except FileNotFoundError:
        raise DataError(f"image file does not exist: {path}") from None
    except Exception as exc:
        raise DataError(f"cannot decode image {path}: {exc}") from exc
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    elif arr.ndim == 3 and arr.shape[2] == 4:
        arr = arr[:, :, :3]
    elif arr.ndim != 3 or arr.shape[2] != 3:
        raise DataError(f"unsupported image shape {arr.shape} in {path}")
    return np.ascontiguousarray(arr.astype(np.uint8))


def largest_remainder_counts(n: int, fractions: Sequence[float]) -> list[int]:
    """Apportion ``n`` items to partitions with quotas ``fractions * n``.

    Floors every quota, then hands the leftover units to the largest
    fractional remainders; ties go to the earlier partition.  The result
    always sums to ``n`` exactly.
    """
    quotas = [f * n for f in fractions]
    counts = [int(math.floor(q)) for q in quotas]
    leftover = n - sum(counts)
    by_remainder = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in by_remainder[:leftover]:
        counts[i] += 1
    return counts


def _shuffled_ids_per_class(d: Dataset, rng: np.random.Generator) -> dict[int, list[str]]:
    out: dict[int, list[str]] = {}
    for label in sorted(d.class_counts):
        ids = sorted(it.id for it in d.by_label(label))
        out[label] = [ids[j] for j in rng.permutation(len(ids))]
    return out


def stratified_holdout_split(d: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Split into (train+val, test) preserving per-class proportions.

    Per class, ``test`` receives its largest-remainder share of
    ``spec.test_frac``; membership is a pure function of ``spec.seed``.
    """
    rng = np.random.default_rng(spec.seed)
    shuffled = _shuffled_ids_per_class(d, rng)
    test_ids: list[str] = []
    for label, ids in shuffled.items():
        n_trainval, n_test = largest_remainder_counts(
            len(ids), [spec.train_frac + spec.val_frac, spec.test_frac]
        )
        if n_test == 0 or n_trainval == 0:
            raise DataError(
                f"class {NAME_OF_LABEL.get(label, label)} has only {len(ids)} "
                f"images; cannot appear in every partition"
            )
        test_ids.extend(ids[:n_test])
    test = d.subset(test_ids)
    trainval = d.subset([it.id for it in d.items if it.id not in set(test_ids)])
    return trainval, test


def make_stratified_folds(trainval: Dataset, k: int, seed: int) -> FoldAssignment:
    """Deal each class round-robin into ``k`` folds after a seeded shuffle.

    Per-class fold sizes differ by at most one, with the extra items landing
    in the lowest-numbered folds.
    """
    if k < 2:
        raise DataError(f"k must be >= 2, got {k}")
    for label, count in trainval.class_counts.items():
        if count < k:
            raise DataError(
                f"class {NAME_OF_LABEL.get(label, label)} has {count} images, "
                f"fewer than k={k}"
            )
    rng = np.random.default_rng(seed)
    shuffled = _shuffled_ids_per_class(trainval, rng)
    fold_of: dict[str, int] = {}
    for _, ids in shuffled.items():
        for pos, image_id in enumerate(ids):
            fold_of[image_id] = pos % k
    return FoldAssignment(k=k, fold_of=fold_of)


def fold_train_val(trainval: Dataset, folds: FoldAssignment, fold: int) -> tuple[Dataset, Dataset]:
    """Training portion = the other k-1 folds; validation = fold ``fold``."""
    if not 0 <= fold < folds.k:
        raise DataError(f"fold index {fold} out of range for k={folds.k}")
    val = trainval.subset(folds.ids_in_fold(fold))
    train = trainval.subset(folds.ids_outside_fold(fold))
    return train, val


def save_split_csv(
    path: str | Path,
    trainval: Dataset,
    test: Dataset,
    folds: FoldAssignment | None = None,
) -> None:
    """Persist split membership as ``id,subset,fold`` rows (fold blank for test)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "subset", "fold"])
        for it in trainval.items:
            fold = "" if folds is None else str(folds.fold_of[it.id])
            writer.writerow([it.id, "trainval", fold])
        for it in test.items:
            writer.writerow([it.id, "test", ""])


def load_split_csv(path: str | Path, d: Dataset) -> tuple[Dataset, Dataset, FoldAssignment | None]:
    """Inverse of :func:`save_split_csv`, resolved against dataset ``d``."""
    trainval_ids, test_ids, fold_of = [], [], {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["subset"] == "test":
                test_ids.append(row["id"])
            elif row["subset"] == "trainval":
                trainval_ids.append(row["id"])
                if row["fold"] != "":
                    fold_of[row["id"]] = int(row["fold"])
            else:
                raise DataError(f"unknown subset {row['subset']!r} in {path}")
    folds = None
    if fold_of:
        if set(fold_of) != set(trainval_ids):
            raise DataError(f"split file {path} assigns folds to only part of trainval")
        folds = FoldAssignment(k=max(fold_of.values()) + 1, fold_of=fold_of)
    return d.subset(trainval_ids), d.subset(test_ids), folds
