"""Loading, validation, alignment, and persistence of prediction data.

Prediction files carry one probability pair per image for one model; label
files carry the ground truth. Aligning them produces the matrix consumed by
fusion and evaluation. Evaluation results are bundled into a RunReport that
serializes deterministically: identical inputs give byte-identical files.
"""

from __future__ import annotations

import json
import math
import os
import re
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, MismatchError, ParseError, StorageError, ValidationError
from .fusion import FUSION_METHODS, FusedPrediction, WeightVector, argmax_label, fuse_dataset, tanh_weights
from .metrics import (
    CLASS_LABELS,
    METRIC_NAMES,
    ConfusionCounts,
    MetricSet,
    RocCurve,
    confusion_counts,
    metric_set,
    roc_auc,
    roc_curve,
)

_PREDICTIONS_HEADER = ["image_id", "p_benign", "p_malignant"]
_LABELS_HEADER = ["image_id", "label"]
_REPORT_SCHEMA = "fusion-report-v1"
_WEIGHTS_SCHEMA = "fusion-weights-v1"


def atomic_write_text(path: str | Path, text: str) -> Path:
    """Write text to path via a temp file and rename, so readers never see
    a partial file. Content is UTF-8 with LF line endings as given."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
                handle.write(text)
            os.replace(tmp_name, path)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc
    return path


@dataclass(frozen=True)
class PredictionSet:
    """One model's probability rows, keyed by unique image id.

    Pairs must sum to 1 within 1e-6 and are renormalized to exact sum 1 at
    construction, so fusion arithmetic downstream is not polluted by text
    round-off.
    """

    model_id: str
    rows: tuple[tuple[str, float, float], ...]

    def __post_init__(self):
        if not self.model_id:
            raise ValidationError("prediction set needs a non-empty model_id")
        seen = set()
        renormalized = []
        for image_id, p_benign, p_malignant in self.rows:
            if image_id in seen:
                raise ValidationError(f"duplicate image_id {image_id!r} in predictions for {self.model_id!r}")
            seen.add(image_id)
            for value in (p_benign, p_malignant):
                if not (0.0 <= value <= 1.0):
                    raise ValidationError(
                        f"probability {value!r} for image {image_id!r} outside [0, 1]"
                    )
            total = p_benign + p_malignant
            if abs(total - 1.0) > 1e-6:
                raise ValidationError(
                    f"probabilities for image {image_id!r} sum to {total!r}, not 1"
                )
            renormalized.append((image_id, p_benign / total, p_malignant / total))
        object.__setattr__(self, "rows", tuple(renormalized))

    def __len__(self) -> int:
        return len(self.rows)

    def image_ids(self) -> set[str]:
        return {row[0] for row in self.rows}


@dataclass(frozen=True)
class LabelSet:
    """Ground-truth benign/malignant labels keyed by unique image id."""

    rows: tuple[tuple[str, str], ...]

    def __post_init__(self):
        seen = set()
        for image_id, label in self.rows:
            if image_id in seen:
                raise ValidationError(f"duplicate image_id {image_id!r} in labels")
            seen.add(image_id)
            if label not in CLASS_LABELS:
                raise ValidationError(
                    f"label {label!r} for image {image_id!r} not in {CLASS_LABELS}"
                )

    def __len__(self) -> int:
        return len(self.rows)

    def image_ids(self) -> set[str]:
        return {row[0] for row in self.rows}


@dataclass
class AlignedDataset:
    """Predictions of every model, optionally plus labels, over one id set.

    Rows are ordered lexicographically by image_id so the matrix layout does
    not depend on input file order. probs has shape (n_images, n_models, 2)
    with benign at channel 0 and malignant at channel 1. labels is None when
    the dataset was aligned without ground truth (fusion needs none).
    """

    image_ids: tuple[str, ...]
    model_ids: tuple[str, ...]
    probs: np.ndarray
    labels: tuple[str, ...] | None

    def __eq__(self, other):
        if not isinstance(other, AlignedDataset):
            return NotImplemented
        return (
            self.image_ids == other.image_ids
            and self.model_ids == other.model_ids
            and self.labels == other.labels
            and np.array_equal(self.probs, other.probs)
        )

    @property
    def n_images(self) -> int:
        return len(self.image_ids)

    @property
    def n_models(self) -> int:
        return len(self.model_ids)


@dataclass(frozen=True)
class EvaluationEntry:
    """Confusion counts, metrics, and the ROC curve for one scorer."""

    confusion: ConfusionCounts
    metrics: MetricSet
    roc: RocCurve


@dataclass
class RunReport:
    """Everything one evaluation run produced, in serializable form."""

    seed: int | None
    config: dict
    models: dict[str, EvaluationEntry]
    fusion: dict[str, EvaluationEntry]
    weights: WeightVector | None = None

    def __post_init__(self):
        for name, entry in list(self.models.items()) + list(self.fusion.items()):
            if not isinstance(entry, EvaluationEntry):
                raise ValidationError(f"report entry {name!r} is not an EvaluationEntry")


def _read_csv_rows(path: str | Path, expected_header: list[str]):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(path, 0, f"cannot open file: {exc}") from exc
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError(path, 1, "file is empty; expected a header row")
    header = lines[0].split(",")
    if header != expected_header:
        raise ParseError(path, 1, f"expected header {expected_header}, got {header}")
    for line_number, line in enumerate(lines[1:], start=2):
        row = line.split(",")
        if len(row) != len(expected_header):
            raise ParseError(path, line_number, f"expected {len(expected_header)} fields, got {len(row)}")
        yield line_number, row


def load_predictions(path: str | Path, model_id: str | None = None) -> PredictionSet:
    """Read a prediction CSV (header image_id,p_benign,p_malignant).

    The model id defaults to the file's stem when not supplied.
    """
    path = Path(path)
    rows = []
    for line_number, row in _read_csv_rows(path, _PREDICTIONS_HEADER):
        image_id, benign_text, malignant_text = row
        try:
            p_benign = float(benign_text)
            p_malignant = float(malignant_text)
        except ValueError:
            raise ParseError(path, line_number, f"probabilities {benign_text!r},{malignant_text!r} are not numbers") from None
        rows.append((image_id, p_benign, p_malignant))
    return PredictionSet(model_id=model_id or path.stem, rows=tuple(rows))


def write_predictions(predset: PredictionSet, path: str | Path) -> Path:
    lines = [",".join(_PREDICTIONS_HEADER)]
    lines.extend(f"{iid},{b!r},{m!r}" for iid, b, m in predset.rows)
    return atomic_write_text(path, "\n".join(lines) + "\n")


def load_labels(path: str | Path) -> LabelSet:
    """Read a label CSV (header image_id,label; lowercase labels)."""
    rows = []
    for line_number, row in _read_csv_rows(path, _LABELS_HEADER):
        image_id, label = row
        if label not in CLASS_LABELS:
            raise ParseError(path, line_number, f"unknown label {label!r}; expected one of {CLASS_LABELS}")
        rows.append((image_id, label))
    return LabelSet(rows=tuple(rows))


def write_labels(labels: LabelSet, path: str | Path) -> Path:
    lines = [",".join(_LABELS_HEADER)]
    lines.extend(f"{iid},{label}" for iid, label in labels.rows)
    return atomic_write_text(path, "\n".join(lines) + "\n")


def align_dataset(predsets: Sequence[PredictionSet], labels: LabelSet | None) -> AlignedDataset:
    """Join prediction sets (and labels, when given) over one image-id set.

    The join is strict: any id present in one source and missing in another
    is an error (silent intersection would hide exporter bugs). Output rows
    are sorted by image_id, so shuffled input files align identically.
    """
    if len(predsets) == 0:
        raise ValidationError("need at least one prediction set to align")
    model_ids = [ps.model_id for ps in predsets]
    if len(set(model_ids)) != len(model_ids):
        raise ValidationError(f"duplicate model ids across prediction sets: {sorted(model_ids)}")

    id_sets = {ps.model_id: ps.image_ids() for ps in predsets}
    if labels is not None:
        id_sets["labels"] = labels.image_ids()
    universe = set().union(*id_sets.values())
    missing_anywhere = sorted(
        iid for iid in universe if any(iid not in ids for ids in id_sets.values())
    )
    if missing_anywhere:
        shown = ", ".join(missing_anywhere[:10])
        raise MismatchError(
            f"{len(missing_anywhere)} image ids are not covered by every source: {shown}"
        )
    if not universe:
        raise ValidationError("cannot align empty prediction and label sets")

    image_ids = tuple(sorted(universe))
    index = {iid: i for i, iid in enumerate(image_ids)}
    probs = np.zeros((len(image_ids), len(predsets), 2), dtype=np.float64)
    for j, predset in enumerate(predsets):
        for image_id, p_benign, p_malignant in predset.rows:
            probs[index[image_id], j, 0] = p_benign
            probs[index[image_id], j, 1] = p_malignant
    aligned_labels = None
    if labels is not None:
        label_by_id = dict(labels.rows)
        aligned_labels = tuple(label_by_id[iid] for iid in image_ids)
    return AlignedDataset(
        image_ids=image_ids,
        model_ids=tuple(model_ids),
        probs=probs,
        labels=aligned_labels,
    )


def evaluate_dataset(
    ds: AlignedDataset,
    methods: Sequence[str] = ("hard", "soft", "max"),
    weights: WeightVector | None = None,
    seed: int | None = None,
    config: dict | None = None,
) -> RunReport:
    """Score every member model and every requested fusion method.

    Per-model labels come from the argmax of each model's pair; ROC scores
    are the malignant probabilities (vote shares for the hard rule). Needs
    both classes present in the labels, since ROC is undefined otherwise.
    """
    for method in methods:
        if method not in FUSION_METHODS:
            raise ConfigError(f"unknown fusion method {method!r}; expected one of {FUSION_METHODS}")
    if "weighted" in methods and weights is None:
        raise ConfigError("the weighted method requires a weight vector")
    if ds.labels is None:
        raise ValidationError("evaluation needs a dataset aligned with labels")

    actual = list(ds.labels)
    models = {}
    for j, model_id in enumerate(ds.model_ids):
        scores = [float(x) for x in ds.probs[:, j, 1]]
        predicted = [argmax_label(float(b), float(m)) for b, m in ds.probs[:, j, :]]
        models[model_id] = _evaluation_entry(predicted, scores, actual)

    fusion_entries = {}
    for method in methods:
        fused = fuse_dataset(ds, method, weights if method == "weighted" else None)
        predicted = [fp.label for fp in fused]
        scores = [fp.m_pred for fp in fused]
        fusion_entries[method] = _evaluation_entry(predicted, scores, actual)

    return RunReport(
        seed=seed,
        config=dict(config or {}),
        models=models,
        fusion=fusion_entries,
        weights=weights,
    )


def _evaluation_entry(predicted: list[str], scores: list[float], actual: list[str]) -> EvaluationEntry:
    cm = confusion_counts(predicted, actual)
    auc = roc_auc(scores, actual)
    return EvaluationEntry(
        confusion=cm,
        metrics=metric_set(cm, auc),
        roc=roc_curve(scores, actual),
    )


def weights_from_dataset(
    ds: AlignedDataset, selection: Sequence[str] | None = None
) -> WeightVector:
    """Derive tanh fusion weights from each member's metrics on a dataset."""
    if ds.labels is None:
        raise ValidationError("weight derivation needs a dataset aligned with labels")
    kwargs = {} if selection is None else {"selection": tuple(selection)}
    actual = list(ds.labels)
    metric_sets = []
    for j in range(ds.n_models):
        scores = [float(x) for x in ds.probs[:, j, 1]]
        predicted = [argmax_label(float(b), float(m)) for b, m in ds.probs[:, j, :]]
        cm = confusion_counts(predicted, actual)
        metric_sets.append(metric_set(cm, roc_auc(scores, actual)))
    return tanh_weights(metric_sets, model_ids=ds.model_ids, **kwargs)


# ---------------------------------------------------------------------------
# Serialization


def _float_for_json(value: float):
    if math.isinf(value):
        return None
    return value


def _float_from_json(value) -> float:
    if value is None:
        return math.inf
    return float(value)


def _entry_to_dict(entry: EvaluationEntry) -> dict:
    cm = entry.confusion
    ms = entry.metrics
    return {
        "confusion": {"tp": cm.tp, "fp": cm.fp, "tn": cm.tn, "fn": cm.fn},
        "metrics": {name: ms.value(name) for name in METRIC_NAMES},
        "metrics_percent": {
            name: f"{100.0 * ms.value(name):.2f}" for name in ("acc", "pre", "rec", "f1")
        },
        "roc": [[_float_for_json(t), fpr, tpr] for t, fpr, tpr in entry.roc.points],
    }


def _entry_from_dict(tree: dict) -> EvaluationEntry:
    cm = ConfusionCounts(**{k: int(v) for k, v in tree["confusion"].items()})
    metrics = MetricSet(**{name: float(tree["metrics"][name]) for name in METRIC_NAMES})
    points = tuple(
        (_float_from_json(t), float(fpr), float(tpr)) for t, fpr, tpr in tree["roc"]
    )
    return EvaluationEntry(confusion=cm, metrics=metrics, roc=RocCurve(points=points))


def _weights_to_dict(weights: WeightVector) -> dict:
    if weights.model_ids is None:
        raise ConfigError("serializing a weight vector requires model ids")
    return {
        "metric_selection": list(weights.metric_selection),
        "weights": {mid: w for mid, w in sorted(zip(weights.model_ids, weights.weights))},
    }


def _weights_from_dict(tree: dict) -> WeightVector:
    pairs = sorted(tree["weights"].items())
    return WeightVector(
        weights=tuple(float(w) for _, w in pairs),
        metric_selection=tuple(tree["metric_selection"]),
        model_ids=tuple(mid for mid, _ in pairs),
    )


def report_to_dict(report: RunReport) -> dict:
    return {
        "schema": _REPORT_SCHEMA,
        "seed": report.seed,
        "config": report.config,
        "weights": None if report.weights is None else _weights_to_dict(report.weights),
        "models": {mid: _entry_to_dict(e) for mid, e in sorted(report.models.items())},
        "fusion": {m: _entry_to_dict(e) for m, e in sorted(report.fusion.items())},
    }


def report_from_dict(tree: dict) -> RunReport:
    if tree.get("schema") != _REPORT_SCHEMA:
        raise ValidationError(f"not a run report: schema {tree.get('schema')!r}")
    return RunReport(
        seed=tree["seed"],
        config=dict(tree["config"]),
        models={mid: _entry_from_dict(e) for mid, e in tree["models"].items()},
        fusion={m: _entry_from_dict(e) for m, e in tree["fusion"].items()},
        weights=None if tree["weights"] is None else _weights_from_dict(tree["weights"]),
    )


def _dump_json(tree: dict) -> str:
    return json.dumps(tree, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", name)


def _roc_csv(curve: RocCurve) -> str:
    lines = ["threshold,fpr,tpr"]
    for threshold, fpr, tpr in curve.points:
        t = "inf" if math.isinf(threshold) else repr(threshold)
        lines.append(f"{t},{fpr!r},{tpr!r}")
    return "\n".join(lines) + "\n"


def write_run_report(report: RunReport, out_dir: str | Path) -> list[Path]:
    """Write report.json plus one ROC CSV per model and per fusion method.

    Output is deterministic: the same report always produces byte-identical
    files. Returns the written paths.
    """
    out_dir = Path(out_dir)
    written = [atomic_write_text(out_dir / "report.json", _dump_json(report_to_dict(report)))]
    for model_id, entry in sorted(report.models.items()):
        written.append(
            atomic_write_text(out_dir / f"roc_model_{_safe_name(model_id)}.csv", _roc_csv(entry.roc))
        )
    for method, entry in sorted(report.fusion.items()):
        written.append(
            atomic_write_text(out_dir / f"roc_fusion_{_safe_name(method)}.csv", _roc_csv(entry.roc))
        )
    return written


def load_run_report(path: str | Path) -> RunReport:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(path, 0, f"cannot open file: {exc}") from exc
    try:
        tree = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, f"invalid JSON: {exc.msg}") from exc
    return report_from_dict(tree)


def save_weights(weights: WeightVector, path: str | Path) -> Path:
    tree = {"schema": _WEIGHTS_SCHEMA}
    tree.update(_weights_to_dict(weights))
    return atomic_write_text(path, _dump_json(tree))


def load_weights(path: str | Path) -> WeightVector:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(path, 0, f"cannot open file: {exc}") from exc
    try:
        tree = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, f"invalid JSON: {exc.msg}") from exc
    if tree.get("schema") != _WEIGHTS_SCHEMA:
        raise ValidationError(f"not a weight file: schema {tree.get('schema')!r}")
    return _weights_from_dict(tree)


def write_fused_predictions(fused: Sequence[FusedPrediction], path: str | Path) -> Path:
    """Write fused scores and labels (header image_id,b_pred,m_pred,label)."""
    lines = ["image_id,b_pred,m_pred,label"]
    lines.extend(f"{fp.image_id},{fp.b_pred!r},{fp.m_pred!r},{fp.label}" for fp in fused)
    return atomic_write_text(path, "\n".join(lines) + "\n")
