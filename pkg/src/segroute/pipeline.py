"""The three experiment workflows over a scan dataset.

adaptive: preprocess -> classify -> route to the predicted label's segmenter.
generic:  one segmenter for every scan.
optimal:  route by ground-truth label (the upper-bound comparator).

Segmenters always receive the windowed full-resolution volume in its original
geometry; only the classifier sees the 128^3 resampled input.  Per-scan
failures are recorded as explicit error rows and do not abort the run.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .errors import RoutingError, SegrouteError, ValidationError
from .metrics import dice
from .models import Classifier, ClassScores, Segmenter
from .preprocess import DEFAULT_WINDOW, WindowSpec, preprocess_for_classification, window
from .volume import PayloadKind, Volume, write_svol

GENERIC_MODEL_NAME = "generic"
ERROR_MODEL_NAME = "error"


@dataclass(frozen=True)
class ScanRecord:
    """One dataset entry: image, ground-truth liver mask, pathology label."""

    id: str
    volume: Volume
    truth_mask: Volume
    true_label: str

    def __post_init__(self):
        if self.volume.kind is not PayloadKind.HU:
            raise ValidationError(f"scan {self.id}: volume must be an HU payload")
        if self.truth_mask.kind is not PayloadKind.MASK:
            raise ValidationError(f"scan {self.id}: truth mask must be a MASK payload")
        if self.truth_mask.dims != self.volume.dims:
            raise ValidationError(
                f"scan {self.id}: mask dims {self.truth_mask.dims} != volume dims {self.volume.dims}"
            )


class OracleClassifier:
    """Test comparator that reads the scan's ground-truth label.

    Only usable inside pipeline runs, which pass the record being classified.
    """

    def __init__(self, labels: Sequence[str]):
        self.labels = tuple(labels)

    def classify(self, v: Volume, record: ScanRecord | None = None) -> ClassScores:
        if record is None:
            raise ValidationError("OracleClassifier needs the scan record to read its label")
        return ClassScores({lab: 1.0 if lab == record.true_label else 0.0 for lab in self.labels})


@dataclass(frozen=True)
class SegmenterRegistry:
    """Label -> segmenter routing table, plus the optional generic model."""

    by_label: Mapping[str, Segmenter]
    generic: Segmenter | None = None

    def __post_init__(self):
        object.__setattr__(self, "by_label", dict(self.by_label))

    def for_label(self, label: str) -> Segmenter:
        try:
            return self.by_label[label]
        except KeyError:
            raise RoutingError(f"no segmentation model registered for label {label!r}") from None

    def close(self) -> None:
        """Close any external-model members (duck-typed)."""
        models = list(self.by_label.values()) + ([self.generic] if self.generic else [])
        for m in models:
            close = getattr(m, "close", None)
            if callable(close):
                close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass(frozen=True)
class RoutingResult:
    """Per-scan outcome row.  Failure rows carry an error message and no dice."""

    id: str
    true_label: str
    predicted_label: str
    scores: ClassScores | None
    category: str
    dice: float | None
    error: str | None = None

    def csv_row(self) -> str:
        d = "" if self.dice is None else f"{self.dice:.6f}"
        return f"{self.id},{self.true_label},{self.predicted_label},{self.category},{d}"

    def json_row(self) -> str:
        return json.dumps(
            {
                "id": self.id,
                "true_label": self.true_label,
                "predicted_label": self.predicted_label,
                "scores": None if self.scores is None else dict(self.scores.scores),
                "category": self.category,
                "dice": self.dice,
                "error": self.error,
            }
        )


RESULTS_CSV_HEADER = "id,true_label,predicted_label,category,dice"


def results_to_csv(results: Sequence[RoutingResult]) -> str:
    return "\n".join([RESULTS_CSV_HEADER] + [r.csv_row() for r in results]) + "\n"


def results_to_jsonl(results: Sequence[RoutingResult]) -> str:
    return "\n".join(r.json_row() for r in results) + "\n"


def _failure(rec: ScanRecord, exc: SegrouteError) -> RoutingResult:
    return RoutingResult(
        id=rec.id,
        true_label=rec.true_label,
        predicted_label="",
        scores=None,
        category=f"{rec.true_label}->{ERROR_MODEL_NAME}",
        dice=None,
        error=f"{type(exc).__name__}: {exc}",
    )


def _segment_and_score(
    rec: ScanRecord,
    segmenter: Segmenter,
    windowed: Volume,
    mask_dir: Path | None,
) -> float:
    mask = segmenter.segment(windowed)
    if mask_dir is not None:
        write_svol(mask, Path(mask_dir) / f"{rec.id}.pred.svol")
    return dice(mask, rec.truth_mask)


def _run(
    data: Sequence[ScanRecord],
    per_scan: Callable[[ScanRecord], RoutingResult],
    jobs: int,
) -> list[RoutingResult]:
    ordered = sorted(data, key=lambda r: r.id)
    ids = [r.id for r in ordered]
    if len(set(ids)) != len(ids):
        raise ValidationError("scan ids must be unique within a run")

    def safe(rec: ScanRecord) -> RoutingResult:
        try:
            return per_scan(rec)
        except SegrouteError as exc:
            return _failure(rec, exc)

    if jobs <= 1:
        return [safe(rec) for rec in ordered]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(safe, ordered))


def run_adaptive(
    classifier: Classifier,
    registry: SegmenterRegistry,
    data: Sequence[ScanRecord],
    window_spec: WindowSpec = DEFAULT_WINDOW,
    jobs: int = 1,
    mask_dir: Path | None = None,
) -> list[RoutingResult]:
    """Classify each scan and segment it with the predicted label's model.

    The predicted label is the argmax score (lexicographic tie-break); the
    category records "<true>-><predicted>".
    """

    def per_scan(rec: ScanRecord) -> RoutingResult:
        prepped = preprocess_for_classification(rec.volume, window_spec)
        scores = classifier.classify(prepped, record=rec)
        predicted = scores.argmax()
        segmenter = registry.for_label(predicted)
        d = _segment_and_score(rec, segmenter, window(rec.volume, window_spec), mask_dir)
        return RoutingResult(
            id=rec.id,
            true_label=rec.true_label,
            predicted_label=predicted,
            scores=scores,
            category=f"{rec.true_label}->{predicted}",
            dice=d,
        )

    return _run(data, per_scan, jobs)


def run_generic(
    generic_segmenter: Segmenter,
    data: Sequence[ScanRecord],
    window_spec: WindowSpec = DEFAULT_WINDOW,
    jobs: int = 1,
    mask_dir: Path | None = None,
) -> list[RoutingResult]:
    """Segment every scan with the single generic model."""

    def per_scan(rec: ScanRecord) -> RoutingResult:
        d = _segment_and_score(rec, generic_segmenter, window(rec.volume, window_spec), mask_dir)
        return RoutingResult(
            id=rec.id,
            true_label=rec.true_label,
            predicted_label="",
            scores=None,
            category=f"{rec.true_label}->{GENERIC_MODEL_NAME}",
            dice=d,
        )

    return _run(data, per_scan, jobs)


def run_optimal(
    registry: SegmenterRegistry,
    data: Sequence[ScanRecord],
    window_spec: WindowSpec = DEFAULT_WINDOW,
    jobs: int = 1,
    mask_dir: Path | None = None,
) -> list[RoutingResult]:
    """Route by ground-truth label: the best the adaptive pipeline could do."""

    def per_scan(rec: ScanRecord) -> RoutingResult:
        segmenter = registry.for_label(rec.true_label)
        d = _segment_and_score(rec, segmenter, window(rec.volume, window_spec), mask_dir)
        return RoutingResult(
            id=rec.id,
            true_label=rec.true_label,
            predicted_label=rec.true_label,
            scores=None,
            category=f"{rec.true_label}->{rec.true_label}",
            dice=d,
        )

    return _run(data, per_scan, jobs)


def categorize(results: Sequence[RoutingResult]) -> dict[str, list[RoutingResult]]:
    """Partition results by category; counts sum to the result count."""
    out: dict[str, list[RoutingResult]] = {}
    for r in results:
        out.setdefault(r.category, []).append(r)
    return out
