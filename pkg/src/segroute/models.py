"""Pluggable classifier/segmenter models.

Built-in reference models keep the routing experiment self-contained at desk
scale: a linear classifier over intensity-histogram features stands in for a
deep classifier (class-weighted training is preserved as a first-class
parameter), and interval-threshold segmenters with binary morphology stand in
for the pathology-specific segmentation networks.  Real models plug in as
child processes speaking the newline-delimited JSON wire protocol.
"""

from __future__ import annotations

import json
import math
import queue
import subprocess
import tempfile
import threading
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np
from scipy import ndimage

from .errors import (
    EmptyMaskError,
    ModelProtocolError,
    ModelResponseError,
    ModelSpawnError,
    ModelTimeoutError,
    PayloadTypeError,
    ValidationError,
)
from .volume import PayloadKind, Volume, read_svol, write_svol

PLD = "PLD"
MCC = "MCC"

HISTOGRAM_BINS = 32
FEATURE_LENGTH = HISTOGRAM_BINS + 3
FEATURE_VERSION = 1

MODEL_FORMAT = "segroute-linear-classifier"


@dataclass(frozen=True)
class ClassScores:
    """Per-class probabilities; non-negative and summing to 1 within 1e-9."""

    scores: Mapping[str, float]

    def __post_init__(self):
        scores = {str(k): float(v) for k, v in self.scores.items()}
        if not scores:
            raise ValidationError("class scores must not be empty")
        if any(v < 0 or not math.isfinite(v) for v in scores.values()):
            raise ValidationError(f"class scores must be non-negative and finite: {scores}")
        if abs(sum(scores.values()) - 1.0) > 1e-9:
            raise ValidationError(f"class scores must sum to 1: {scores}")
        object.__setattr__(self, "scores", scores)

    def __getitem__(self, label: str) -> float:
        return self.scores[label]

    def labels(self) -> tuple[str, ...]:
        return tuple(self.scores)

    def argmax(self) -> str:
        """Highest-scoring label; ties broken by lexicographic label order."""
        return min(self.scores, key=lambda k: (-self.scores[k], k))


class Classifier(Protocol):
    def classify(self, v: Volume, record=None) -> ClassScores: ...


class Segmenter(Protocol):
    def segment(self, v: Volume) -> Volume: ...


# -- features ----------------------------------------------------------------


def extract_features(v: Volume) -> np.ndarray:
    """Feature vector of a preprocessed volume: 32-bin normalized intensity
    histogram over [0, 1] (right-closed last bin), mean, standard deviation,
    and foreground fraction (voxels > 0).  Length 35.
    """
    if v.kind is not PayloadKind.REAL:
        raise PayloadTypeError(f"extract_features requires a REAL payload, got {v.kind.name}")
    x = v.data.ravel()
    hist, _ = np.histogram(x, bins=HISTOGRAM_BINS, range=(0.0, 1.0))
    features = np.empty(FEATURE_LENGTH, dtype=np.float64)
    features[:HISTOGRAM_BINS] = hist / x.size
    features[HISTOGRAM_BINS] = x.mean()
    features[HISTOGRAM_BINS + 1] = x.std()
    features[HISTOGRAM_BINS + 2] = np.count_nonzero(x > 0.0) / x.size
    return features


# -- linear classifier ---------------------------------------------------------


@dataclass(frozen=True)
class ClassWeights:
    """Per-label positive loss weights.  Default weights the PLD class 4x."""

    weights: Mapping[str, float] = field(default_factory=lambda: {PLD: 4.0, MCC: 1.0})

    def __post_init__(self):
        weights = {str(k): float(v) for k, v in self.weights.items()}
        if any(w <= 0 or not math.isfinite(w) for w in weights.values()):
            raise ValidationError(f"class weights must be positive reals: {weights}")
        object.__setattr__(self, "weights", weights)

    def __getitem__(self, label: str) -> float:
        return self.weights.get(label, 1.0)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def weighted_bce_loss_and_gradient(
    weights: np.ndarray,
    bias: float,
    features: np.ndarray,
    targets: np.ndarray,
    sample_weights: np.ndarray,
) -> tuple[float, np.ndarray, float]:
    """Class-weighted binary cross-entropy (a sum over samples) and its
    analytic gradient in (weights, bias).

    Per sample with logit z and target y in {0,1}:
        loss = w * (softplus(z) - y*z)
    which equals w times the cross-entropy of sigmoid(z), written in the
    numerically stable form whose exact derivative is w*(sigmoid(z)-y)*f.
    """
    z = features @ weights + bias
    loss = float(np.sum(sample_weights * (np.logaddexp(0.0, z) - targets * z)))
    residual = sample_weights * (_sigmoid(z) - targets)
    return loss, features.T @ residual, float(residual.sum())


@dataclass(frozen=True)
class LinearClassifier:
    """Logistic model over extract_features vectors.

    label_order is (negative_label, positive_label); the positive-class
    probability is sigmoid(weights . f + bias).
    """

    weights: np.ndarray
    bias: float
    label_order: tuple[str, str]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or not np.isfinite(w).all() or not math.isfinite(self.bias):
            raise ValidationError("classifier parameters must be a finite 1D weight vector and bias")
        object.__setattr__(self, "weights", w)
        if len(self.label_order) != 2 or self.label_order[0] == self.label_order[1]:
            raise ValidationError(f"label_order must be two distinct labels, got {self.label_order}")
        object.__setattr__(self, "label_order", (str(self.label_order[0]), str(self.label_order[1])))

    def score_features(self, features: np.ndarray) -> ClassScores:
        negative, positive = self.label_order
        p = float(_sigmoid(np.asarray([features @ self.weights + self.bias]))[0])
        return ClassScores({negative: 1.0 - p, positive: p})

    def classify(self, v: Volume, record=None) -> ClassScores:
        return self.score_features(extract_features(v))

    def to_json(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": 1,
            "feature_version": FEATURE_VERSION,
            "label_order": list(self.label_order),
            "weights": [float(w) for w in self.weights],
            "bias": float(self.bias),
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "LinearClassifier":
        if doc.get("format") != MODEL_FORMAT or doc.get("version") != 1:
            raise ValidationError(f"unrecognized classifier document: {doc.get('format')!r}")
        if doc.get("feature_version") != FEATURE_VERSION:
            raise ValidationError(f"unsupported feature version {doc.get('feature_version')!r}")
        return cls(
            weights=np.asarray(doc["weights"], dtype=np.float64),
            bias=float(doc["bias"]),
            label_order=tuple(doc["label_order"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "LinearClassifier":
        return cls.from_json(json.loads(Path(path).read_text()))


def train_linear_classifier(
    data: Sequence[tuple[np.ndarray, str]],
    class_weights: ClassWeights | None = None,
    epochs: int = 300,
    learning_rate: float = 0.1,
    seed: int = 0,
    label_order: tuple[str, str] = (MCC, PLD),
    on_epoch=None,
) -> LinearClassifier:
    """Full-batch gradient descent on the class-weighted BCE objective.

    Histogram features span several decades of scale, so descent runs in
    z-scored feature coordinates (per-feature mean/std from the training
    batch) and the affine transform is folded back into raw-space weights and
    bias afterwards; the objective and the returned model surface are
    unchanged.  Steps use the weight-normalized gradient, which makes the
    learning-rate scale independent of dataset size.  Parameters start at
    zero, so training is deterministic; seed is accepted to salt any future
    stochastic variant.  on_epoch, if given, is called with (epoch, loss)
    where loss is the raw class-weighted BCE sum.
    """
    del seed
    if not data:
        raise ValidationError("training data is empty")
    negative, positive = label_order
    labels = {label for _, label in data}
    if labels != {negative, positive}:
        raise ValidationError(
            f"training data labels {sorted(labels)} must be exactly {sorted(label_order)}"
        )
    class_weights = class_weights or ClassWeights()

    features = np.stack([np.asarray(f, dtype=np.float64) for f, _ in data])
    targets = np.asarray([1.0 if label == positive else 0.0 for _, label in data])
    sample_w = np.asarray([class_weights[label] for _, label in data])
    total_w = float(sample_w.sum())

    mu = features.mean(axis=0)
    sd = features.std(axis=0)
    sd[sd == 0.0] = 1.0  # constant features carry no signal; leave unscaled
    z = (features - mu) / sd

    zw = np.zeros(features.shape[1], dtype=np.float64)
    zb = 0.0
    for epoch in range(int(epochs)):
        loss, grad_w, grad_b = weighted_bce_loss_and_gradient(zw, zb, z, targets, sample_w)
        if on_epoch is not None:
            on_epoch(epoch, loss)
        zw = zw - learning_rate * grad_w / total_w
        zb = zb - learning_rate * grad_b / total_w

    weights = zw / sd
    bias = zb - float((zw * mu / sd).sum())
    return LinearClassifier(weights=weights, bias=bias, label_order=label_order)


# -- threshold segmenter -------------------------------------------------------

_CROSS = ndimage.generate_binary_structure(3, 1)  # 6-connectivity


def _close_6(mask: np.ndarray, radius: int) -> np.ndarray:
    """Morphological closing by the L1 ball of the given radius, computed on
    an infinite background: the array is padded so boundary voxels behave as
    if surrounded by background, then dilated and eroded radius steps with
    the 6-connected cross.
    """
    if radius <= 0:
        return mask
    padded = np.pad(mask, 2 * radius, mode="constant", constant_values=False)
    padded = ndimage.binary_dilation(padded, structure=_CROSS, iterations=radius)
    padded = ndimage.binary_erosion(padded, structure=_CROSS, iterations=radius)
    crop = tuple(slice(2 * radius, 2 * radius + n) for n in mask.shape)
    return padded[crop]


def largest_component_6(mask: np.ndarray) -> np.ndarray:
    """Keep only the largest 6-connected component.

    Ties are broken by the component containing the smallest voxel in C scan
    order, so the result is deterministic and reproducible across
    implementations.
    """
    labels, n = ndimage.label(mask, structure=_CROSS)
    if n == 0:
        raise EmptyMaskError("mask has no foreground components")
    if n == 1:
        return mask
    sizes = np.bincount(labels.ravel())[1:]
    best = np.flatnonzero(sizes == sizes.max()) + 1
    if len(best) > 1:
        flat = labels.ravel()
        best = [min(best, key=lambda lab: int(np.flatnonzero(flat == lab)[0]))]
    return labels == best[0]


@dataclass(frozen=True)
class ThresholdSegmenter:
    """Interval threshold in normalized intensity, then 6-connected closing,
    then optionally keep only the largest component.
    """

    include_band: tuple[float, float]
    closing_radius: int = 0
    keep_largest_component: bool = False

    def __post_init__(self):
        lo, hi = (float(b) for b in self.include_band)
        if not (0.0 <= lo < hi <= 1.0):
            raise ValidationError(f"include band must satisfy 0 <= lo < hi <= 1, got {(lo, hi)}")
        object.__setattr__(self, "include_band", (lo, hi))
        if int(self.closing_radius) < 0:
            raise ValidationError(f"closing radius must be >= 0, got {self.closing_radius}")

    def segment(self, v: Volume) -> Volume:
        if v.kind is not PayloadKind.REAL:
            raise PayloadTypeError(f"threshold segmenter requires a REAL payload, got {v.kind.name}")
        lo, hi = self.include_band
        mask = (v.data >= lo) & (v.data <= hi)
        mask = _close_6(mask, int(self.closing_radius))
        if self.keep_largest_component:
            mask = largest_component_6(mask)
        return v.with_data(mask.astype(np.uint8), PayloadKind.MASK)


# Reference bands for the phantom experiment, in windowed units where the
# phantom tissues sit at cyst ~0.102, lesion ~0.170, parenchyma ~0.227 with
# noise sigma ~0.018.  The PLD band reaches down to the fluid range (catching
# cysts and, as engineered collateral, perihepatic fluid); the MCC band starts
# above it; the generic band splits the cyst range as a compromise.
REFERENCE_BANDS: dict[str, tuple[float, float]] = {
    PLD: (0.055, 0.32),
    MCC: (0.135, 0.32),
    "generic": (0.118, 0.32),
}


def reference_segmenter(name: str) -> ThresholdSegmenter:
    """Built-in segmenter for 'PLD', 'MCC', or 'generic'."""
    if name not in REFERENCE_BANDS:
        raise ValidationError(f"unknown reference segmenter {name!r}")
    return ThresholdSegmenter(
        include_band=REFERENCE_BANDS[name], closing_radius=1, keep_largest_component=True
    )


# -- external model protocol client ---------------------------------------------


@dataclass(frozen=True)
class ExternalModelSpec:
    """How to launch an external model and what it promises to emit."""

    command: tuple[str, ...]
    labels: tuple[str, ...] = ()
    working_dir: str | None = None


class ExternalModelClient:
    """Client side of the newline-delimited JSON model protocol.

    One child process, reused across calls; calls are serialized by a lock.
    Requests and responses are single JSON lines over stdin/stdout; volumes
    travel as SVOL files at absolute paths.
    """

    def __init__(self, spec: ExternalModelSpec, timeout: float = 120.0):
        self.spec = spec
        self.timeout = timeout
        self._lock = threading.Lock()
        self._closed = False
        self._stderr_tail: deque[str] = deque(maxlen=50)
        try:
            self._proc = subprocess.Popen(
                list(spec.command),
                cwd=spec.working_dir,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                encoding="utf-8",
            )
        except OSError as exc:
            raise ModelSpawnError(f"failed to launch {spec.command}: {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        threading.Thread(target=self._pump_stdout, daemon=True).start()
        threading.Thread(target=self._pump_stderr, daemon=True).start()

    def _pump_stdout(self):
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _pump_stderr(self):
        for line in self._proc.stderr:
            self._stderr_tail.append(line.rstrip("\n"))

    def _diagnostics(self) -> str:
        tail = "; ".join(list(self._stderr_tail)[-5:])
        return f" (stderr: {tail})" if tail else ""

    def request(self, payload: dict) -> dict:
        """Send one request line and wait for its response line."""
        with self._lock:
            if self._closed or self._proc.poll() is not None:
                raise ModelResponseError(
                    f"model process {self.spec.command} is not running{self._diagnostics()}"
                )
            try:
                self._proc.stdin.write(json.dumps(payload) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise ModelResponseError(
                    f"model process closed its stdin: {exc}{self._diagnostics()}"
                ) from exc
            try:
                line = self._lines.get(timeout=self.timeout)
            except queue.Empty:
                # The protocol is strictly sequential: a late reply would be
                # mispaired with the next request, so a deadline miss kills
                # the process.
                self._proc.kill()
                self._proc.wait()
                self._closed = True
                raise ModelTimeoutError(
                    f"no response from {self.spec.command} within {self.timeout}s"
                ) from None
            if line is None:
                raise ModelResponseError(
                    f"model process exited mid-call{self._diagnostics()}"
                )
            try:
                response = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ModelProtocolError(f"unparseable response line: {line!r}") from exc
            if not isinstance(response, dict) or "ok" not in response:
                raise ModelProtocolError(f"response is not an ok-object: {line!r}")
            if not response["ok"]:
                raise ModelResponseError(str(response.get("error", "model reported failure")))
            return response

    def close(self) -> None:
        """Send shutdown and reap the child; idempotent."""
        if self._closed:
            return
        self._closed = True
        if self._proc.poll() is None:
            try:
                self._proc.stdin.write(json.dumps({"op": "shutdown"}) + "\n")
                self._proc.stdin.flush()
                self._proc.stdin.close()
            except (BrokenPipeError, OSError):
                pass
            try:
                self._proc.wait(timeout=5.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class ExternalClassifier:
    """Classifier backed by an external model process."""

    def __init__(self, client: ExternalModelClient):
        if not client.spec.labels:
            raise ValidationError("external classifiers must declare their label set")
        self.client = client

    def classify(self, v: Volume, record=None) -> ClassScores:
        with tempfile.TemporaryDirectory(prefix="segroute-cls-") as tmp:
            vol_path = str(Path(tmp, "input.svol").absolute())
            write_svol(v, vol_path)
            response = self.client.request({"op": "classify", "volume": vol_path})
        scores = response.get("scores")
        if not isinstance(scores, dict):
            raise ModelProtocolError(f"classify response lacks a scores object: {response}")
        if set(scores) != set(self.client.spec.labels):
            raise ModelResponseError(
                f"score labels {sorted(scores)} do not match declared {sorted(self.client.spec.labels)}"
            )
        try:
            return ClassScores(scores)
        except ValidationError as exc:
            raise ModelResponseError(f"invalid scores from model: {exc}") from exc

    def close(self):
        self.client.close()


class ExternalSegmenter:
    """Segmenter backed by an external model process."""

    def __init__(self, client: ExternalModelClient):
        self.client = client

    def segment(self, v: Volume) -> Volume:
        with tempfile.TemporaryDirectory(prefix="segroute-seg-") as tmp:
            vol_path = str(Path(tmp, "input.svol").absolute())
            out_path = str(Path(tmp, "output.svol").absolute())
            write_svol(v, vol_path)
            self.client.request({"op": "segment", "volume": vol_path, "output": out_path})
            if not Path(out_path).exists():
                raise ModelResponseError(f"model did not write the requested mask at {out_path}")
            mask = read_svol(out_path)
        if mask.kind is not PayloadKind.MASK:
            raise ModelResponseError(f"model wrote a {mask.kind.name} payload, expected MASK")
        if mask.dims != v.dims:
            raise ModelResponseError(f"model mask dims {mask.dims} do not match input {v.dims}")
        return mask

    def close(self):
        self.client.close()
