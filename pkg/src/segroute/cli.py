"""Batch experiment CLI: phantom generation, training, the three workflow
runs, statistical comparison, occlusion export, and summary reports.

All subcommands are deterministic given their flags and seed; the
SEGROUTE_SEED environment variable supplies a default seed, overridden by
--seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import models, phantom, pipeline, stats
from .errors import SegrouteError, ValidationError
from .occlusion import OcclusionSpec, anchor_rows_to_csv, occlusion_scan
from .preprocess import AugmentSpec, WindowSpec, augment, preprocess_for_classification
from .volume import PayloadKind, read_svol, write_svol


def _default_seed() -> int:
    return int(os.environ.get("SEGROUTE_SEED", "0"))


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _parse_triple(text: str) -> tuple[int, int, int]:
    parts = [int(p) for p in text.split(",")]
    if len(parts) == 1:
        parts = parts * 3
    if len(parts) != 3:
        raise ValidationError(f"expected 1 or 3 comma-separated integers, got {text!r}")
    return tuple(parts)


# -- config ------------------------------------------------------------------


def _build_segmenter(cfg: dict, opened: list):
    kind = cfg.get("kind")
    if kind == "threshold":
        return models.ThresholdSegmenter(
            include_band=tuple(cfg["include_band"]),
            closing_radius=int(cfg.get("closing_radius", 0)),
            keep_largest_component=bool(cfg.get("keep_largest_component", False)),
        )
    if kind == "reference":
        return models.reference_segmenter(cfg["name"])
    if kind == "external":
        client = models.ExternalModelClient(
            models.ExternalModelSpec(
                command=tuple(cfg["command"]), working_dir=cfg.get("working_dir")
            ),
            timeout=float(cfg.get("timeout", 120.0)),
        )
        opened.append(client)
        return models.ExternalSegmenter(client)
    raise ValidationError(f"unknown segmenter kind {cfg.get('kind')!r}")


def _build_classifier(cfg: dict, base: Path, opened: list):
    kind = cfg.get("kind")
    if kind == "linear":
        return models.LinearClassifier.load(base / cfg["path"])
    if kind == "oracle":
        return pipeline.OracleClassifier(cfg.get("labels", [models.PLD, models.MCC]))
    if kind == "external":
        client = models.ExternalModelClient(
            models.ExternalModelSpec(
                command=tuple(cfg["command"]),
                labels=tuple(cfg["labels"]),
                working_dir=cfg.get("working_dir"),
            ),
            timeout=float(cfg.get("timeout", 120.0)),
        )
        opened.append(client)
        return models.ExternalClassifier(client)
    raise ValidationError(f"unknown classifier kind {cfg.get('kind')!r}")


class RunConfig:
    """Parsed `run` configuration.  Referenced paths are resolved against the
    config file's directory and must exist at load time."""

    def __init__(self, path):
        path = Path(path)
        doc = json.loads(path.read_text(encoding="utf-8"))
        base = path.parent
        manifests = doc["manifest"]
        if isinstance(manifests, str):
            manifests = [manifests]
        self.manifests = [base / m for m in manifests]
        for m in self.manifests:
            if not m.exists():
                raise ValidationError(f"manifest not found: {m}")
        self.alpha = float(doc.get("alpha", 0.05))
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError(f"alpha must be in (0, 1), got {self.alpha}")
        w = doc.get("window", {})
        self.window = WindowSpec(level=float(w.get("level", 180.0)), width=float(w.get("width", 440.0)))
        a = doc.get("augment")
        self.augment = (
            AugmentSpec(
                rotation_angles=frozenset(a.get("rotation_angles", [])),
                flip_axes=frozenset(a.get("flip_axes", [])),
                seed=int(a.get("seed", doc.get("seed", _default_seed()))),
            )
            if a
            else None
        )
        self.seed = int(doc.get("seed", _default_seed()))
        self._doc = doc
        self._base = base
        self._opened: list = []

    def classifier(self):
        if "classifier" not in self._doc:
            raise ValidationError("config has no classifier entry (required for adaptive mode)")
        return _build_classifier(self._doc["classifier"], self._base, self._opened)

    def registry(self) -> pipeline.SegmenterRegistry:
        seg_cfg = self._doc.get("segmenters", {})
        by_label = {label: _build_segmenter(cfg, self._opened) for label, cfg in seg_cfg.items()}
        generic = None
        if "generic_segmenter" in self._doc:
            generic = _build_segmenter(self._doc["generic_segmenter"], self._opened)
        return pipeline.SegmenterRegistry(by_label=by_label, generic=generic)

    def records(self):
        return phantom.load_manifest(self.manifests)

    def close(self):
        for client in self._opened:
            client.close()


# -- subcommands ---------------------------------------------------------------


def _cmd_phantom_gen(args) -> int:
    overrides = {}
    if args.dims:
        overrides["dims"] = _parse_triple(args.dims)
    phantom.generate_cohort(args.kind, args.count, args.seed, args.out, **overrides)
    print(f"wrote {args.count} {args.kind} phantoms to {args.out}")
    return 0


def _parse_class_weights(entries) -> models.ClassWeights:
    if not entries:
        return models.ClassWeights()
    weights = {}
    for entry in entries:
        label, _, value = entry.partition("=")
        if not value:
            raise ValidationError(f"--class-weight expects LABEL=VALUE, got {entry!r}")
        weights[label] = float(value)
    return models.ClassWeights(weights)


def _cmd_train(args) -> int:
    records = phantom.load_manifest(args.manifest)
    aug = None
    if args.augment_rotations or args.augment_flips:
        aug = AugmentSpec(
            rotation_angles=frozenset(
                int(a) for a in args.augment_rotations.split(",") if a
            )
            if args.augment_rotations
            else frozenset(),
            flip_axes=frozenset(int(a) for a in args.augment_flips.split(",") if a)
            if args.augment_flips
            else frozenset(),
            seed=args.seed,
        )
    data = []
    for rec in records:
        prepped = preprocess_for_classification(rec.volume)
        if aug is not None:
            prepped = augment(prepped, aug, salt=rec.id)
        data.append((models.extract_features(prepped), rec.true_label))
    classifier = models.train_linear_classifier(
        data,
        class_weights=_parse_class_weights(args.class_weight),
        epochs=args.epochs,
        learning_rate=args.lr,
        seed=args.seed,
    )
    classifier.save(args.out)
    print(f"trained on {len(data)} scans -> {args.out}")
    return 0


def _cmd_run(args) -> int:
    config = RunConfig(args.config)
    try:
        records = config.records()
        registry = config.registry()
        mask_dir = Path(args.save_masks) if args.save_masks else None
        if mask_dir:
            mask_dir.mkdir(parents=True, exist_ok=True)
        if args.mode == "adaptive":
            results = pipeline.run_adaptive(
                config.classifier(), registry, records,
                window_spec=config.window, jobs=args.jobs, mask_dir=mask_dir,
            )
        elif args.mode == "generic":
            if registry.generic is None:
                raise ValidationError("config has no generic_segmenter entry")
            results = pipeline.run_generic(
                registry.generic, records,
                window_spec=config.window, jobs=args.jobs, mask_dir=mask_dir,
            )
        else:
            results = pipeline.run_optimal(
                registry, records, window_spec=config.window, jobs=args.jobs, mask_dir=mask_dir
            )
    finally:
        config.close()

    _write_text(args.out, pipeline.results_to_csv(results))
    _write_text(Path(args.out).with_suffix(".jsonl"), pipeline.results_to_jsonl(results))
    failures = [r for r in results if r.error is not None]
    for r in failures:
        print(f"{r.id}: {r.error}", file=sys.stderr)
    print(f"{args.mode} run: {len(results)} scans, {len(failures)} failures -> {args.out}")
    return 1 if failures else 0


def _read_results_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return rows


def _cmd_compare(args) -> int:
    rows_a = _read_results_csv(args.a)
    rows_b = _read_results_csv(args.b)
    bad = [r["id"] for r in rows_a + rows_b if not r["dice"]]
    if bad:
        raise ValidationError(f"cannot compare failed scans: {sorted(set(bad))[:5]}")
    a = {r["id"]: float(r["dice"]) for r in rows_a}
    b = {r["id"]: float(r["dice"]) for r in rows_b}
    grouping = {r["id"]: r["category"] for r in rows_a}
    report = stats.compare_methods(a, b, grouping=grouping, alpha=args.alpha)
    _write_text(args.out, stats.comparison_to_csv(report))
    print(f"compared {len(a)} scans over {len(report.rows)} groups -> {args.out}")
    return 0


def _cmd_occlusion(args) -> int:
    classifier = models.LinearClassifier.load(args.model)
    volume = read_svol(args.volume)
    if volume.kind is PayloadKind.HU:
        volume = preprocess_for_classification(volume)
    spec = OcclusionSpec(
        patch_size=_parse_triple(args.patch),
        stride=_parse_triple(args.stride),
        fill_value=args.fill,
        target_class=args.target,
    )
    sensitivity, rows = occlusion_scan(classifier, volume, spec)
    write_svol(sensitivity, args.out)
    if args.csv:
        _write_text(args.csv, anchor_rows_to_csv(rows))
    print(f"occlusion map over {len(rows)} patches -> {args.out}")
    return 0


def _boxplot_stats(values: list[float]) -> dict:
    arr = np.asarray(sorted(values), dtype=np.float64)
    q1, median, q3 = (float(q) for q in np.percentile(arr, [25, 50, 75]))
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = arr[(arr >= lo_fence) & (arr <= hi_fence)]
    outliers = arr[(arr < lo_fence) | (arr > hi_fence)]
    return {
        "n": int(arr.size),
        "mean": float(arr.mean()),
        "min": float(arr.min()),
        "q1": q1,
        "median": median,
        "q3": q3,
        "max": float(arr.max()),
        "whisker_lo": float(inside.min()),
        "whisker_hi": float(inside.max()),
        "outliers": [float(v) for v in outliers],
    }


def _cmd_report(args) -> int:
    rows = [r for r in _read_results_csv(args.results) if r["dice"]]
    if not rows:
        raise ValidationError(f"no successful scans in {args.results}")
    by_category: dict[str, list[float]] = {}
    for r in rows:
        by_category.setdefault(r["category"], []).append(float(r["dice"]))
    summary = {
        "overall": _boxplot_stats([float(r["dice"]) for r in rows]),
        "groups": {cat: _boxplot_stats(vals) for cat, vals in sorted(by_category.items())},
    }
    _write_text(args.out, json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"summary over {len(rows)} scans -> {args.out}")
    return 0


# -- dispatch -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="segroute", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom-gen", help="generate a synthetic phantom cohort")
    p.add_argument("--kind", required=True, choices=[models.PLD, models.MCC])
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--out", required=True)
    p.add_argument("--dims", default="", help="voxel dims, e.g. 96 or 96,96,64")
    p.set_defaults(func=_cmd_phantom_gen)

    p = sub.add_parser("train", help="train the reference linear classifier")
    p.add_argument("--manifest", action="append", required=True)
    p.add_argument("--class-weight", action="append", metavar="LABEL=W")
    p.add_argument("--epochs", type=int, default=400)
    p.add_argument("--lr", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--augment-rotations", default="", help="e.g. 90,180,270")
    p.add_argument("--augment-flips", default="", help="e.g. 0,1")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("run", help="run one of the three workflows")
    p.add_argument("--mode", required=True, choices=["adaptive", "generic", "optimal"])
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--save-masks", default="", help="directory for predicted masks")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("compare", help="paired Wilcoxon comparison of two result files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("occlusion", help="export an occlusion sensitivity map")
    p.add_argument("--model", required=True)
    p.add_argument("--volume", required=True)
    p.add_argument("--patch", default="16")
    p.add_argument("--stride", default="8")
    p.add_argument("--target", default=models.PLD)
    p.add_argument("--fill", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", default="", help="optional per-anchor delta table")
    p.set_defaults(func=_cmd_occlusion)

    p = sub.add_parser("report", help="per-category means and boxplot data")
    p.add_argument("--results", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def cli_dispatch(argv) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SegrouteError, OSError, json.JSONDecodeError, ValueError, KeyError) as exc:
        print(f"segroute: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
