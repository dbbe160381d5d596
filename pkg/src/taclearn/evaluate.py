"""Evaluation harness: cross-validation, robustness sweeps and scoring.

Sweeps perturb only the test images (center crops, temporal resampling,
seeded jitter) and re-measure accuracy; at the neutral point of every sweep
(full length, factor 1, level 0) the perturbation is the identity, so the
measured value equals the plain test accuracy exactly. No smoothing is
applied to curves.

Reports serialize to a fixed four-column CSV (section,a,b,c) with
shortest-repr floats, so a report round-trips losslessly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fabric
from .augment import crop_temporal, jitter, resize_temporal
from .continual import batch_ridge_head
from .errors import ValidationError
from .model import Classifier, ConvNetBackend, composition_forward, embed_images
from .prng import Prng


@dataclass
class EvalReport:
    task_id: str
    fold_accuracies: list = field(default_factory=list)
    curves: dict = field(default_factory=dict)
    constituent_counts: dict = field(default_factory=dict)  # name -> (fp, fn)
    composition_mean: float | None = None

    def __post_init__(self):
        for acc in self.fold_accuracies:
            if not 0.0 <= acc <= 1.0:
                raise ValidationError(f"accuracy {acc} outside [0, 1]")

    @property
    def mean(self) -> float | None:
        if not self.fold_accuracies:
            return None
        return float(np.mean(self.fold_accuracies))

    @property
    def std(self) -> float | None:
        if not self.fold_accuracies:
            return None
        return float(np.std(self.fold_accuracies))

    def to_csv(self) -> str:
        rows = [("task", "id", self.task_id, "")]
        for i, acc in enumerate(self.fold_accuracies):
            rows.append(("fold", str(i), repr(float(acc)), ""))
        for name in sorted(self.curves):
            for x, y in self.curves[name]:
                rows.append(("curve", name, repr(float(x)), repr(float(y))))
        for name in sorted(self.constituent_counts):
            fp, fn = self.constituent_counts[name]
            rows.append(("constituent", name, str(int(fp)), str(int(fn))))
        if self.composition_mean is not None:
            rows.append(("composition", "mean", repr(float(self.composition_mean)), ""))
        return "\n".join(",".join(r) for r in rows) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "EvalReport":
        task_id = ""
        folds: list = []
        curves: dict = {}
        counts: dict = {}
        comp_mean = None
        for line in text.splitlines():
            if not line.strip():
                continue
            section, a, b, c = line.split(",", 3)
            if section == "task":
                task_id = b
            elif section == "fold":
                folds.append(float(b))
            elif section == "curve":
                curves.setdefault(a, []).append((float(b), float(c)))
            elif section == "constituent":
                counts[a] = (int(b), int(c))
            elif section == "composition":
                comp_mean = float(b)
            else:
                raise ValidationError(f"unknown report section {section!r}")
        return cls(task_id=task_id, fold_accuracies=folds, curves=curves,
                   constituent_counts=counts, composition_mean=comp_mean)

    def summary_text(self) -> str:
        lines = [f"task: {self.task_id}"]
        if self.fold_accuracies:
            lines.append(
                f"accuracy: {100 * self.mean:.2f}% +/- {100 * self.std:.2f}% "
                f"over {len(self.fold_accuracies)} fold(s)"
            )
        for name in sorted(self.curves):
            pts = "  ".join(f"{x:g}:{100 * y:.2f}%" for x, y in self.curves[name])
            lines.append(f"{name} sweep: {pts}")
        if self.constituent_counts:
            lines.append("constituent  FP  FN")
            for name in fabric.CONSTITUENTS:
                if name in self.constituent_counts:
                    fp, fn = self.constituent_counts[name]
                    lines.append(f"{name:<11} {fp:>3} {fn:>3}")
        if self.composition_mean is not None:
            lines.append(f"composition score: {100 * self.composition_mean:.2f}%")
        return "\n".join(lines) + "\n"


def stratified_folds(labels, k: int, seed: int = 0) -> list[int]:
    """Deterministic stratified fold assignment; returns a fold id per sample."""
    if k < 2:
        raise ValidationError(f"k must be >= 2, got {k}")
    labels = list(labels)
    assignment = [-1] * len(labels)
    root = Prng(seed)
    for rank, cls in enumerate(sorted(set(labels))):
        members = [i for i, l in enumerate(labels) if l == cls]
        if len(members) < k:
            raise ValidationError(
                f"class {cls!r} has {len(members)} samples, fewer than k={k}"
            )
        root.spawn(rank).shuffle(members)
        for pos, i in enumerate(members):
            assignment[i] = pos % k
    return assignment


def kfold_eval(images, labels, k: int, trainer, seed: int = 0,
               task_id: str = "kfold") -> EvalReport:
    """Stratified k-fold cross-validation of a trainer callable.

    `trainer(train_images, train_labels)` must return a predictor callable
    mapping a list of images to predicted labels.
    """
    images = list(images)
    labels = list(labels)
    assignment = stratified_folds(labels, k, seed)
    fold_accs = []
    for fold in range(k):
        train_idx = [i for i, f in enumerate(assignment) if f != fold]
        test_idx = [i for i, f in enumerate(assignment) if f == fold]
        predict = trainer([images[i] for i in train_idx], [labels[i] for i in train_idx])
        predicted = predict([images[i] for i in test_idx])
        truth = [labels[i] for i in test_idx]
        fold_accs.append(float(np.mean([p == t for p, t in zip(predicted, truth)])))
    return EvalReport(task_id=task_id, fold_accuracies=fold_accs)


def length_sweep(classifier: Classifier, images, labels, lengths) -> list[tuple[float, float]]:
    """Accuracy after center-cropping test images to each temporal length."""
    curve = []
    for length in lengths:
        cropped = []
        for img in images:
            if not 1 <= length <= img.width:
                raise ValidationError(f"length {length} invalid for width {img.width}")
            start = (img.width - length) // 2
            cropped.append(crop_temporal(img, start, length))
        curve.append((float(length), classifier.accuracy(cropped, labels)))
    return curve


def speed_sweep(classifier: Classifier, images, labels, factors) -> list[tuple[float, float]]:
    """Accuracy under simulated motion-speed changes.

    Speed factor f sub-samples the temporal axis by 1/f (faster motion means
    fewer readings over the same surface).
    """
    curve = []
    for factor in factors:
        if factor <= 0:
            raise ValidationError(f"speed factor must be positive, got {factor}")
        resized = [resize_temporal(img, 1.0 / factor) for img in images]
        curve.append((float(factor), classifier.accuracy(resized, labels)))
    return curve


def noise_sweep(classifier: Classifier, images, labels, levels,
                seed: int = 0) -> list[tuple[float, float]]:
    """Accuracy under additive uniform sensor noise at each level."""
    curve = []
    for li, level in enumerate(levels):
        rng = Prng(seed).spawn(li)
        noisy = [jitter(img, level, rng) for img in images]
        curve.append((float(level), classifier.accuracy(noisy, labels)))
    return curve


def ridge_classifier(backend: ConvNetBackend, images, labels, ridge_lambda: float = 1.0,
                     input_width: int | None = None) -> Classifier:
    """Frozen-embedding ridge classifier fitted in one shot."""
    head, classes = batch_ridge_head(
        embed_images(backend, images, input_width), labels, ridge_lambda
    )
    return Classifier(backend, head, classes, input_width)


def least_squares_baseline(backend: ConvNetBackend, train_images, train_labels,
                           test_images, test_labels, ridge_lambda: float = 1.0,
                           input_width: int | None = None) -> float:
    """Accuracy of a least-squares classifier over the frozen representation."""
    clf = ridge_classifier(backend, train_images, train_labels, ridge_lambda, input_width)
    return clf.accuracy(test_images, test_labels)


def composition_score(predicted, truth) -> float:
    """1 minus one sixth per false-positive or false-negative constituent."""
    predicted = fabric.validate_constituents(predicted)
    truth = fabric.validate_constituents(truth)
    fp = len(predicted - truth)
    fn = len(truth - predicted)
    return 1.0 - (fp + fn) / len(fabric.CONSTITUENTS)


def composition_eval(backend: ConvNetBackend, heads, items, threshold: float = 0.5,
                     task_id: str = "composition") -> EvalReport:
    """Score constituent predictions over (image, truth set) pairs."""
    items = list(items)
    if not items:
        raise ValidationError("composition evaluation needs at least one item")
    counts = {name: [0, 0] for name in fabric.CONSTITUENTS}
    scores = []
    for image, truth in items:
        probs = composition_forward(backend, heads, image)
        predicted = fabric.from_indicator(probs, threshold)
        truth = fabric.validate_constituents(truth)
        scores.append(composition_score(predicted, truth))
        for name in fabric.CONSTITUENTS:
            if name in predicted and name not in truth:
                counts[name][0] += 1
            elif name in truth and name not in predicted:
                counts[name][1] += 1
    return EvalReport(
        task_id=task_id,
        constituent_counts={k: (v[0], v[1]) for k, v in counts.items()},
        composition_mean=float(np.mean(scores)),
    )


def curve_to_csv(curve) -> str:
    lines = ["x,y"]
    for x, y in curve:
        lines.append(f"{float(x)!r},{float(y)!r}")
    return "\n".join(lines) + "\n"
