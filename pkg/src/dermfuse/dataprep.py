"""Dataset manifest handling: balancing, merging, and stratified folds.

A manifest names images without touching pixel data: one record per image
with its id, path, diagnosis label, and source collection. Records whose
diagnosis is unknown can be dropped, class balance is restored by seeded
downsampling of the majority class, and cross-validation folds are dealt
stratified by class.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError, ValidationError
from .metrics import BENIGN, MALIGNANT
from .predstore import atomic_write_text

UNKNOWN = "unknown"
MANIFEST_LABELS = (BENIGN, MALIGNANT, UNKNOWN)


def _check_seed(seed: int) -> None:
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ValidationError(f"seed must be a non-negative integer, got {seed!r}")

_MANIFEST_HEADER = ["image_id", "path", "label", "source"]
_FOLDS_HEADER = ["image_id", "fold"]


@dataclass(frozen=True)
class ManifestRecord:
    image_id: str
    path: str
    label: str
    source: str

    def __post_init__(self):
        if not self.image_id:
            raise ValidationError("manifest record has an empty image_id")
        if self.label not in MANIFEST_LABELS:
            raise ValidationError(
                f"image {self.image_id!r} has label {self.label!r}; expected one of {MANIFEST_LABELS}"
            )


@dataclass(frozen=True)
class DatasetManifest:
    """An ordered collection of manifest records with unique image ids."""

    records: tuple[ManifestRecord, ...]

    def __post_init__(self):
        seen = set()
        for record in self.records:
            if record.image_id in seen:
                raise ValidationError(f"duplicate image_id {record.image_id!r} in manifest")
            seen.add(record.image_id)

    def __len__(self) -> int:
        return len(self.records)

    def label_counts(self) -> Counter:
        return Counter(record.label for record in self.records)

    def source_label_counts(self) -> Counter:
        return Counter((record.source, record.label) for record in self.records)


@dataclass(frozen=True)
class FoldAssignment:
    """image_id to fold-index mapping for k-fold cross-validation."""

    k: int
    assignments: tuple[tuple[str, int], ...]

    def __post_init__(self):
        if self.k < 2:
            raise ValidationError(f"k must be at least 2, got {self.k}")
        seen = set()
        for image_id, fold in self.assignments:
            if not (0 <= fold < self.k):
                raise ValidationError(f"fold index {fold} for {image_id!r} outside [0, {self.k})")
            if image_id in seen:
                raise ValidationError(f"duplicate image_id {image_id!r} in fold assignment")
            seen.add(image_id)

    def fold_of(self, image_id: str) -> int:
        for iid, fold in self.assignments:
            if iid == image_id:
                return fold
        raise ValidationError(f"image_id {image_id!r} not in fold assignment")

    def fold_sizes(self) -> list[int]:
        sizes = [0] * self.k
        for _, fold in self.assignments:
            sizes[fold] += 1
        return sizes


def drop_unknown(manifest: DatasetManifest) -> DatasetManifest:
    """Remove records whose diagnosis label is unknown, keeping order."""
    return DatasetManifest(
        records=tuple(r for r in manifest.records if r.label != UNKNOWN)
    )


def downsample_balance(manifest: DatasetManifest, seed: int) -> DatasetManifest:
    """Downsample the majority class to the minority class count.

    The kept majority records are chosen by a seeded shuffle of the
    majority-class ids (sorted first, so the draw depends only on the id set
    and the seed, not on record order); output preserves the input record
    order. The minority class is untouched. Equal counts return the input
    unchanged.
    """
    _check_seed(seed)
    counts = manifest.label_counts()
    if counts.get(UNKNOWN, 0) > 0:
        raise ValidationError(
            "manifest still contains unknown-diagnosis records; drop them before balancing"
        )
    n_benign = counts.get(BENIGN, 0)
    n_malignant = counts.get(MALIGNANT, 0)
    if n_benign == 0 or n_malignant == 0:
        raise ValidationError("balancing requires at least one record of each class")
    if n_benign == n_malignant:
        return manifest

    majority = BENIGN if n_benign > n_malignant else MALIGNANT
    n_keep = min(n_benign, n_malignant)
    majority_ids = sorted(r.image_id for r in manifest.records if r.label == majority)
    rng = np.random.default_rng(seed)
    shuffled = list(majority_ids)
    rng.shuffle(shuffled)
    kept = set(shuffled[:n_keep])
    return DatasetManifest(
        records=tuple(
            r for r in manifest.records if r.label != majority or r.image_id in kept
        )
    )


def balance_sources(manifest: DatasetManifest, seed: int) -> DatasetManifest:
    """Full balancing flow: drop unknowns, balance each source, merge.

    Class balance is restored within each source collection separately (the
    same seed drives every per-source draw; draws differ because the id sets
    do), and the balanced groups are re-merged. Output preserves the input
    record order.
    """
    _check_seed(seed)
    known = drop_unknown(manifest)
    sources = sorted({r.source for r in known.records})
    balanced = []
    for source in sources:
        group = DatasetManifest(
            records=tuple(r for r in known.records if r.source == source)
        )
        balanced.append(downsample_balance(group, seed))
    kept_ids = {r.image_id for m in balanced for r in m.records}
    return DatasetManifest(
        records=tuple(r for r in known.records if r.image_id in kept_ids)
    )


def merge_manifests(manifests: Sequence[DatasetManifest]) -> DatasetManifest:
    """Concatenate manifests; any image_id appearing twice is an error."""
    if len(manifests) == 0:
        raise ValidationError("nothing to merge: no manifests given")
    records = []
    for manifest in manifests:
        records.extend(manifest.records)
    seen = set()
    collisions = []
    for record in records:
        if record.image_id in seen:
            collisions.append(record.image_id)
        seen.add(record.image_id)
    if collisions:
        shown = ", ".join(sorted(set(collisions))[:10])
        raise ValidationError(f"image ids collide across manifests: {shown}")
    return DatasetManifest(records=tuple(records))


def stratified_kfold(manifest: DatasetManifest, k: int, seed: int) -> FoldAssignment:
    """Deal records into k folds, stratified by class label.

    Records are grouped by label, each group is shuffled with the seeded
    generator (groups in sorted label order, ids sorted before shuffling),
    and cards are dealt round-robin. The dealing position carries over from
    one class to the next, so fold totals stay within one of each other even
    when every class count leaves the same remainder mod k.
    """
    _check_seed(seed)
    if k < 2:
        raise ValidationError(f"k must be at least 2, got {k}")
    counts = manifest.label_counts()
    for label, count in sorted(counts.items()):
        if count < k:
            raise ValidationError(
                f"class {label!r} has only {count} records; need at least k={k} per class"
            )
    by_label: dict[str, list[str]] = {}
    for record in manifest.records:
        by_label.setdefault(record.label, []).append(record.image_id)

    rng = np.random.default_rng(seed)
    fold_by_id: dict[str, int] = {}
    start = 0
    for label in sorted(by_label):
        ids = sorted(by_label[label])
        rng.shuffle(ids)
        for j, image_id in enumerate(ids):
            fold_by_id[image_id] = (start + j) % k
        start = (start + len(ids)) % k

    return FoldAssignment(
        k=k,
        assignments=tuple((r.image_id, fold_by_id[r.image_id]) for r in manifest.records),
    )


def _read_rows(path: str | Path, expected_header: list[str]) -> Iterable[tuple[int, list[str]]]:
    path = Path(path)
    try:
        handle = open(path, "r", newline="", encoding="utf-8")
    except OSError as exc:
        raise ParseError(path, 0, f"cannot open file: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "file is empty; expected a header row") from None
        if header != expected_header:
            raise ParseError(path, 1, f"expected header {expected_header}, got {header}")
        for line_number, row in enumerate(reader, start=2):
            if len(row) != len(expected_header):
                raise ParseError(
                    path, line_number,
                    f"expected {len(expected_header)} fields, got {len(row)}",
                )
            yield line_number, row


def load_manifest(path: str | Path) -> DatasetManifest:
    """Read a manifest CSV with header image_id,path,label,source."""
    records = []
    for line_number, row in _read_rows(path, _MANIFEST_HEADER):
        image_id, image_path, label, source = row
        if label not in MANIFEST_LABELS:
            raise ParseError(path, line_number, f"unknown label {label!r}")
        records.append(ManifestRecord(image_id, image_path, label, source))
    return DatasetManifest(records=tuple(records))


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    lines = [",".join(_MANIFEST_HEADER)]
    lines.extend(
        f"{r.image_id},{r.path},{r.label},{r.source}" for r in manifest.records
    )
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_folds(path: str | Path) -> FoldAssignment:
    """Read a fold-assignment CSV with header image_id,fold."""
    assignments = []
    max_fold = -1
    for line_number, row in _read_rows(path, _FOLDS_HEADER):
        image_id, fold_text = row
        try:
            fold = int(fold_text)
        except ValueError:
            raise ParseError(path, line_number, f"fold index {fold_text!r} is not an integer") from None
        assignments.append((image_id, fold))
        max_fold = max(max_fold, fold)
    if not assignments:
        raise ParseError(path, 1, "fold file has no assignments")
    return FoldAssignment(k=max(max_fold + 1, 2), assignments=tuple(assignments))


def write_folds(folds: FoldAssignment, path: str | Path) -> None:
    lines = [",".join(_FOLDS_HEADER)]
    lines.extend(f"{image_id},{fold}" for image_id, fold in folds.assignments)
    atomic_write_text(path, "\n".join(lines) + "\n")
