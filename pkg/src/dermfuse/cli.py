"""Command-line entry point wiring the library into a file-based workflow.

One subcommand per pipeline phase: balance and split manifests, preprocess
and augment images, derive fusion weights, fuse and evaluate predictions,
explain predictions, render reports, and emit a training-config document for
external trainers. Every subcommand is deterministic given its inputs and
--seed, and writes files atomically.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import dataprep, explain, fusion, imgproc, predstore
from .errors import ConfigError, DermfuseError
from .metrics import BENIGN, MALIGNANT, METRIC_NAMES

_TRAIN_CONFIG_DEFAULTS = {
    "batch_size": 64,
    "optimizer": "Adam",
    "loss": "Categorical Cross Entropy",
    "learning_rate": 0.0001,
    "max_epochs": 1000,
    "early_stop_patience": 100,
    "output_activation": "Softmax",
}


def main() -> None:
    sys.exit(run_command())


def run_command(argv: Sequence[str] | None = None) -> int:
    """Parse argv, dispatch to one subcommand, and map failures to exit
    codes: 0 success, 1 typed failure with a single-line diagnostic on
    stderr, 2 usage errors (argparse's convention)."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except DermfuseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _nonnegative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def _prediction_spec(text: str) -> tuple[str, str]:
    model_id, sep, path = text.partition("=")
    if not sep or not model_id or not path:
        raise argparse.ArgumentTypeError(f"expected <model_id>=<path>, got {text!r}")
    return model_id, path


def _require_inputs(*paths: str | Path) -> None:
    for path in paths:
        if not Path(path).exists():
            raise ConfigError(f"input path does not exist: {path}")


def _parse_grid(text: str) -> explain.SuperpixelGrid:
    match = re.fullmatch(r"(\d+)x(\d+)", text)
    if not match:
        raise ConfigError(f"grid must look like ROWSxCOLS (e.g. 4x4), got {text!r}")
    return explain.SuperpixelGrid(rows=int(match.group(1)), cols=int(match.group(2)))


def _parse_metric_list(text: str) -> tuple[str, ...]:
    names = tuple(part.strip() for part in text.split(",") if part.strip())
    if not names:
        raise ConfigError("metric list is empty")
    for name in names:
        if name not in METRIC_NAMES:
            raise ConfigError(f"unknown metric {name!r}; expected a comma list of {METRIC_NAMES}")
    return names


def _parse_size(text: str) -> tuple[int, int]:
    match = re.fullmatch(r"(\d+)x(\d+)", text)
    if not match:
        raise ConfigError(f"size must look like WIDTHxHEIGHT (e.g. 224x224), got {text!r}")
    width, height = int(match.group(1)), int(match.group(2))
    if width < 1 or height < 1:
        raise ConfigError(f"size dimensions must be positive, got {text!r}")
    return width, height


def _load_predsets(specs: Sequence[tuple[str, str]]) -> list[predstore.PredictionSet]:
    _require_inputs(*(path for _, path in specs))
    return [predstore.load_predictions(path, model_id=model_id) for model_id, path in specs]


def _resolve_image_path(manifest_path: Path, record_path: str) -> Path:
    path = Path(record_path)
    if path.is_absolute():
        return path
    return manifest_path.parent / path


# ---------------------------------------------------------------------------
# Subcommand handlers


def cmd_balance(args) -> int:
    _require_inputs(args.manifest)
    manifest = dataprep.load_manifest(args.manifest)
    balanced = dataprep.balance_sources(manifest, args.seed)
    dataprep.write_manifest(balanced, args.out)
    print(f"balanced {len(manifest)} records to {len(balanced)}: {args.out}")
    return 0


def cmd_kfold(args) -> int:
    _require_inputs(args.manifest)
    manifest = dataprep.load_manifest(args.manifest)
    folds = dataprep.stratified_kfold(manifest, args.k, args.seed)
    dataprep.write_folds(folds, args.out)
    print(f"assigned {len(manifest)} records to {args.k} folds: {args.out}")
    return 0


def cmd_prep(args) -> int:
    _require_inputs(args.manifest)
    manifest_path = Path(args.manifest)
    manifest = dataprep.load_manifest(manifest_path)
    cfg = imgproc.PreprocessConfig(
        color_factor=args.color_factor,
        sharpness_factor=args.sharpness_factor,
        brightness_delta=args.brightness_delta,
        contrast_factor=args.contrast_factor,
        crop_fraction=args.crop_fraction,
        target_size=_parse_size(args.target_size),
    )
    out_dir = Path(args.out_dir)
    records = []
    for record in manifest.records:
        image = imgproc.load_image(_resolve_image_path(manifest_path, record.path))
        processed = imgproc.preprocess(image, cfg)
        rel_path = f"images/{record.image_id}.png"
        imgproc.save_image(imgproc.denormalize_image(processed), out_dir / rel_path)
        records.append(
            dataprep.ManifestRecord(record.image_id, rel_path, record.label, record.source)
        )
    dataprep.write_manifest(dataprep.DatasetManifest(records=tuple(records)), out_dir / "manifest.csv")
    print(f"preprocessed {len(records)} images into {out_dir}")
    return 0


def cmd_augment(args) -> int:
    _require_inputs(args.manifest)
    manifest_path = Path(args.manifest)
    manifest = dataprep.load_manifest(manifest_path)
    cfg = imgproc.AugmentConfig(
        horizontal_flip=args.horizontal_flip,
        vertical_flip=args.vertical_flip,
        rotation_degrees=args.rotation,
        zoom=args.zoom,
        shear=args.shear,
        width_shift=args.width_shift,
        height_shift=args.height_shift,
    )
    out_dir = Path(args.out_dir)
    records = []
    for index, record in enumerate(manifest.records):
        image = imgproc.load_image(_resolve_image_path(manifest_path, record.path))
        augmented = imgproc.random_augment(image, cfg, imgproc.derive_image_seed(args.seed, index))
        rel_path = f"images/{record.image_id}.png"
        imgproc.save_image(augmented, out_dir / rel_path)
        records.append(
            dataprep.ManifestRecord(record.image_id, rel_path, record.label, record.source)
        )
    dataprep.write_manifest(dataprep.DatasetManifest(records=tuple(records)), out_dir / "manifest.csv")
    print(f"augmented {len(records)} images into {out_dir}")
    return 0


def cmd_weights(args) -> int:
    predsets = _load_predsets(args.predictions)
    _require_inputs(args.labels)
    labels = predstore.load_labels(args.labels)
    ds = predstore.align_dataset(predsets, labels)
    weights = predstore.weights_from_dataset(ds, _parse_metric_list(args.weight_metrics))
    predstore.save_weights(weights, args.out)
    print(f"saved weights for {len(weights)} models: {args.out}")
    return 0


def _resolve_weights(args, ds: predstore.AlignedDataset) -> fusion.WeightVector | None:
    """Weight sourcing shared by fuse and eval: a weight file, or derivation
    from the evaluation data itself (biased; prints a warning)."""
    if args.weights and args.weights_from_eval:
        raise ConfigError("--weights and --weights-from-eval are mutually exclusive")
    if args.weights:
        _require_inputs(args.weights)
        return predstore.load_weights(args.weights)
    if args.weights_from_eval:
        print(
            "warning: deriving fusion weights from the evaluation data itself; "
            "weighted-fusion metrics will be optimistically biased",
            file=sys.stderr,
        )
        return predstore.weights_from_dataset(ds, _parse_metric_list(args.weight_metrics))
    return None


def cmd_fuse(args) -> int:
    predsets = _load_predsets(args.predictions)
    labels = None
    if args.labels:
        _require_inputs(args.labels)
        labels = predstore.load_labels(args.labels)
    ds = predstore.align_dataset(predsets, labels)
    weights = _resolve_weights(args, ds)
    if args.method == "weighted" and weights is None:
        raise ConfigError("--method weighted needs --weights or --weights-from-eval")
    fused = fusion.fuse_dataset(ds, args.method, weights if args.method == "weighted" else None)
    predstore.write_fused_predictions(fused, args.out)
    print(f"fused {len(fused)} predictions with method {args.method}: {args.out}")
    return 0


def cmd_eval(args) -> int:
    predsets = _load_predsets(args.predictions)
    _require_inputs(args.labels)
    labels = predstore.load_labels(args.labels)
    ds = predstore.align_dataset(predsets, labels)
    weights = _resolve_weights(args, ds)
    methods = args.method or (["hard", "soft", "max"] + (["weighted"] if weights is not None else []))
    config = {
        "labels": str(args.labels),
        "methods": sorted(set(methods)),
        "predictions": {model_id: str(path) for model_id, path in args.predictions},
        "subcommand": "eval",
        "weight_metrics": args.weight_metrics,
        "weights_source": str(args.weights) if args.weights else ("eval-split" if args.weights_from_eval else None),
    }
    report = predstore.evaluate_dataset(
        ds, methods=sorted(set(methods)), weights=weights, seed=args.seed, config=config
    )
    written = predstore.write_run_report(report, args.out)
    print(f"wrote {len(written)} report files to {args.out}")
    return 0


def _write_attribution_json(tree: dict, out_dir: Path) -> Path:
    return predstore.atomic_write_text(
        out_dir / "attribution.json", json.dumps(tree, indent=2, sort_keys=True) + "\n"
    )


def cmd_explain(args) -> int:
    if bool(args.image) == bool(args.image_id):
        raise ConfigError("pass exactly one of --image (superpixel mode) or --image-id (member mode)")
    out_dir = Path(args.out_dir)
    if args.image:
        if not args.provider_cmd:
            raise ConfigError("superpixel mode needs --provider-cmd")
        _require_inputs(args.image)
        image = imgproc.load_image(args.image)
        grid = _parse_grid(args.grid)
        provider = explain.ExternalPredictionProvider(args.provider_cmd, timeout=args.timeout)
        result = explain.superpixel_attribution(
            image, grid, provider,
            target_class=args.target,
            n_perms=args.permutations,
            seed=args.seed,
        )
        att = result.attribution
        map_path = out_dir / "map.npy"
        out_dir.mkdir(parents=True, exist_ok=True)
        np.save(map_path, result.pixel_map)
        tree = {
            "schema": "fusion-attribution-v1",
            "kind": "superpixel",
            "image": str(args.image),
            "grid": {"rows": grid.rows, "cols": grid.cols},
            "cell_bounds": [list(grid.cell_bounds(i, image.width, image.height)) for i in range(grid.n_cells)],
            "target_class": args.target,
            "method": att.method,
            "n_permutations": att.n_permutations,
            "seed": att.seed,
            "phi": list(att.phi),
            "v_empty": att.v_empty,
            "v_full": att.v_full,
            "efficiency_residual": att.efficiency_residual,
            "map_file": "map.npy",
            "render_hint": "positive=red,negative=blue",
        }
        _write_attribution_json(tree, out_dir)
        print(f"wrote superpixel attribution ({att.method}) to {out_dir}")
        return 0

    if not args.predictions:
        raise ConfigError("member mode needs --predictions")
    if not args.weights:
        raise ConfigError("member mode needs --weights")
    predsets = _load_predsets(args.predictions)
    _require_inputs(args.weights)
    ds = predstore.align_dataset(predsets, None)
    weights = fusion.align_weights(ds, predstore.load_weights(args.weights))
    if args.image_id not in ds.image_ids:
        raise ConfigError(f"image id {args.image_id!r} not present in the predictions")
    row_index = ds.image_ids.index(args.image_id)
    row = fusion.ProbabilityVector(
        benign=tuple(float(x) for x in ds.probs[row_index, :, 0]),
        malignant=tuple(float(x) for x in ds.probs[row_index, :, 1]),
    )
    att = explain.member_attribution(row, weights, target_class=args.target)
    tree = {
        "schema": "fusion-attribution-v1",
        "kind": "members",
        "image_id": args.image_id,
        "model_ids": list(ds.model_ids),
        "target_class": args.target,
        "method": att.method,
        "phi": list(att.phi),
        "v_empty": att.v_empty,
        "v_full": att.v_full,
        "efficiency_residual": att.efficiency_residual,
        "render_hint": "positive=red,negative=blue",
    }
    _write_attribution_json(tree, out_dir)
    print(f"wrote member attribution to {out_dir}")
    return 0


def _render_report(report: predstore.RunReport) -> str:
    lines = []
    lines.append(f"seed: {report.seed}")
    if report.weights is not None:
        selection = ",".join(report.weights.metric_selection)
        ids = report.weights.model_ids or tuple(f"model{i}" for i in range(len(report.weights)))
        pairs = ", ".join(f"{mid}={w:.6f}" for mid, w in sorted(zip(ids, report.weights.weights)))
        lines.append(f"weights ({selection}): {pairs}")
    lines.append("")
    header = f"{'scorer':<28} {'ACC%':>8} {'PRE%':>8} {'REC%':>8} {'F1%':>8} {'AUC':>8}"
    lines.append(header)
    lines.append("-" * len(header))

    def row(name: str, entry: predstore.EvaluationEntry) -> str:
        m = entry.metrics
        return (
            f"{name:<28} {100 * m.acc:>8.2f} {100 * m.pre:>8.2f} "
            f"{100 * m.rec:>8.2f} {100 * m.f1:>8.2f} {m.auc:>8.4f}"
        )

    for model_id, entry in sorted(report.models.items()):
        lines.append(row(model_id, entry))
    for method, entry in sorted(report.fusion.items()):
        lines.append(row(f"fusion:{method}", entry))
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    _require_inputs(args.report)
    report = predstore.load_run_report(args.report)
    rendered = _render_report(report)
    if args.out:
        predstore.atomic_write_text(args.out, rendered)
        print(f"rendered report: {args.out}")
    else:
        print(rendered, end="")
    return 0


def cmd_emit_train_config(args) -> int:
    values = dict(_TRAIN_CONFIG_DEFAULTS)
    overrides = []
    for field in _TRAIN_CONFIG_DEFAULTS:
        value = getattr(args, field)
        if value is not None:
            values[field] = value
            overrides.append(field)
    tree = dict(values)
    tree["modified_from_defaults"] = sorted(overrides)
    predstore.atomic_write_text(args.out, json.dumps(tree, indent=2, sort_keys=True) + "\n")
    print(f"wrote training config: {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Parser


def _add_predictions_flag(parser, required: bool) -> None:
    parser.add_argument(
        "--predictions", metavar="MODEL_ID=PATH", type=_prediction_spec,
        action="append", required=required, default=None,
        help="prediction CSV for one model, repeatable; model order follows flag order",
    )


def _add_weight_source_flags(parser) -> None:
    parser.add_argument("--weights", default=None, help="weight vector JSON produced by the weights subcommand")
    parser.add_argument(
        "--weights-from-eval", action="store_true",
        help="derive weights from the data being fused/evaluated itself "
             "(leaks evaluation labels into the weights; prints a warning)",
    )
    parser.add_argument(
        "--weight-metrics", default="pre,rec,f1,auc",
        help="comma list of metrics feeding the tanh weights (default pre,rec,f1,auc)",
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dermfuse",
        description="Fusion, evaluation, and explanation tools for binary lesion-classifier ensembles.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")

    p = sub.add_parser("balance", help="drop unknown labels and balance classes per source by downsampling")
    p.add_argument("--manifest", required=True, help="input manifest CSV (image_id,path,label,source)")
    p.add_argument("--seed", type=_nonnegative_int, default=0, help="seed for the majority-class draw (default 0)")
    p.add_argument("--out", required=True, help="output manifest CSV")
    p.set_defaults(handler=cmd_balance)

    p = sub.add_parser("kfold", help="assign stratified cross-validation folds")
    p.add_argument("--manifest", required=True, help="input manifest CSV")
    p.add_argument("--k", type=_positive_int, default=4, help="number of folds (default 4)")
    p.add_argument("--seed", type=_nonnegative_int, default=0, help="seed for the per-class shuffle (default 0)")
    p.add_argument("--out", required=True, help="output fold CSV (image_id,fold)")
    p.set_defaults(handler=cmd_kfold)

    p = sub.add_parser("prep", help="run the enhancement pipeline over a manifest's images")
    p.add_argument("--manifest", required=True, help="input manifest CSV; relative image paths resolve against it")
    p.add_argument("--out-dir", required=True, help="output directory for images/ and manifest.csv")
    p.add_argument("--color-factor", type=float, default=1.2, help="color interpolation factor (default 1.2)")
    p.add_argument("--sharpness-factor", type=float, default=25.0, help="sharpness interpolation factor (default 25.0)")
    p.add_argument("--brightness-delta", type=float, default=-20.0, help="additive brightness shift (default -20)")
    p.add_argument("--contrast-factor", type=float, default=1.5, help="contrast interpolation factor (default 1.5)")
    p.add_argument("--crop-fraction", type=float, default=0.75, help="centered crop fraction (default 0.75)")
    p.add_argument("--target-size", default="224x224", help="output size as WIDTHxHEIGHT (default 224x224)")
    p.set_defaults(handler=cmd_prep)

    p = sub.add_parser("augment", help="write one randomly augmented copy of each manifest image")
    p.add_argument("--manifest", required=True, help="input manifest CSV; relative image paths resolve against it")
    p.add_argument("--out-dir", required=True, help="output directory for images/ and manifest.csv")
    p.add_argument("--seed", type=_nonnegative_int, default=0, help="master seed; per-image seeds derive from it (default 0)")
    p.add_argument("--rotation", type=float, default=90.0, help="max absolute rotation in degrees (default 90)")
    p.add_argument("--zoom", type=float, default=0.3, help="zoom range half-width around 1 (default 0.3)")
    p.add_argument("--shear", type=float, default=0.1, help="max absolute shear factor (default 0.1)")
    p.add_argument("--width-shift", type=float, default=0.1, help="max horizontal shift as a width fraction (default 0.1)")
    p.add_argument("--height-shift", type=float, default=0.1, help="max vertical shift as a height fraction (default 0.1)")
    p.add_argument("--no-horizontal-flip", dest="horizontal_flip", action="store_false", help="disable horizontal flips")
    p.add_argument("--no-vertical-flip", dest="vertical_flip", action="store_false", help="disable vertical flips")
    p.set_defaults(handler=cmd_augment)

    p = sub.add_parser("weights", help="derive tanh fusion weights from per-model metrics")
    _add_predictions_flag(p, required=True)
    p.add_argument("--labels", required=True, help="label CSV (image_id,label)")
    p.add_argument(
        "--weight-metrics", default="pre,rec,f1,auc",
        help="comma list of metrics feeding the tanh weights (default pre,rec,f1,auc)",
    )
    p.add_argument("--out", required=True, help="output weight JSON")
    p.set_defaults(handler=cmd_weights)

    p = sub.add_parser("fuse", help="fuse per-model predictions into one prediction per image")
    _add_predictions_flag(p, required=True)
    p.add_argument("--labels", default=None, help="label CSV; only needed with --weights-from-eval")
    p.add_argument("--method", choices=fusion.FUSION_METHODS, default="soft", help="fusion rule (default soft)")
    _add_weight_source_flags(p)
    p.add_argument("--out", required=True, help="output fused CSV (image_id,b_pred,m_pred,label)")
    p.set_defaults(handler=cmd_fuse)

    p = sub.add_parser("eval", help="evaluate member models and fusion methods against labels")
    _add_predictions_flag(p, required=True)
    p.add_argument("--labels", required=True, help="label CSV (image_id,label)")
    p.add_argument(
        "--method", choices=fusion.FUSION_METHODS, action="append", default=None,
        help="fusion method to evaluate, repeatable (default: hard, soft, max, plus weighted when weights are given)",
    )
    _add_weight_source_flags(p)
    p.add_argument("--seed", type=_nonnegative_int, default=0, help="seed echoed into the report (default 0)")
    p.add_argument("--out", required=True, help="output directory for report.json and ROC CSVs")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("explain", help="Shapley attribution over image regions or ensemble members")
    p.add_argument("--image", default=None, help="image file for superpixel mode")
    p.add_argument("--grid", default="4x4", help="superpixel grid as ROWSxCOLS (default 4x4)")
    p.add_argument("--provider-cmd", default=None, help="external prediction provider command (superpixel mode)")
    p.add_argument("--timeout", type=float, default=120.0, help="provider timeout per batch in seconds (default 120)")
    p.add_argument("--permutations", type=_positive_int, default=2000,
                   help="permutation count when sampling is needed (default 2000)")
    _add_predictions_flag(p, required=False)
    p.add_argument("--weights", default=None, help="weight vector JSON (member mode)")
    p.add_argument("--image-id", default=None, help="image id to explain in member mode")
    p.add_argument("--target", choices=(BENIGN, MALIGNANT), default=MALIGNANT,
                   help="class whose probability is attributed (default malignant)")
    p.add_argument("--seed", type=_nonnegative_int, default=0, help="seed for permutation sampling (default 0)")
    p.add_argument("--out-dir", required=True, help="output directory for attribution.json (and map.npy)")
    p.set_defaults(handler=cmd_explain)

    p = sub.add_parser("report", help="render a report.json as a readable table")
    p.add_argument("--report", required=True, help="report.json produced by eval")
    p.add_argument("--out", default=None, help="output text file (default: print to stdout)")
    p.set_defaults(handler=cmd_report)

    p = sub.add_parser("emit-train-config", help="write the training hyperparameter document for external trainers")
    p.add_argument("--batch-size", dest="batch_size", type=_positive_int, default=None, help="override batch size")
    p.add_argument("--optimizer", default=None, help="override optimizer name")
    p.add_argument("--loss", default=None, help="override loss name")
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None, help="override learning rate")
    p.add_argument("--max-epochs", dest="max_epochs", type=_positive_int, default=None, help="override epoch limit")
    p.add_argument("--early-stop-patience", dest="early_stop_patience", type=_positive_int, default=None,
                   help="override early-stopping patience")
    p.add_argument("--output-activation", dest="output_activation", default=None, help="override output activation")
    p.add_argument("--out", required=True, help="output JSON path")
    p.set_defaults(handler=cmd_emit_train_config)

    return parser


if __name__ == "__main__":
    main()
