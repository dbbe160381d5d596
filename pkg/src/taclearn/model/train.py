"""Supervised training of the embedding backend and classification heads.

SGD with momentum and decoupled weight decay: each step first scales every
parameter by (1 - lr * weight_decay), then applies the momentum-averaged
gradient. Three learning-rate schedules: constant, cosine annealing, and
plateau (halve when validation accuracy stalls; a 10% stratified validation
split is carved from the training data only for this schedule).

Training is deterministic for a fixed config: weight init, shuffling and
augmentation all draw from the portable generator seeded by the configs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import fabric
from ..augment import AugmentConfig, random_augment, resize_to_width
from ..errors import RuntimeFailure, ValidationError
from ..prng import Prng
from ..tactile_image import TactileImage, prepare_for_model
from . import layers
from .backend import ConvNetBackend, LinearHead

SCHEDULES = ("plateau", "cosine", "constant")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 16
    lr_schedule: str = "plateau"
    seed: int = 0
    val_fraction: float = 0.1
    plateau_patience: int = 10
    plateau_factor: float = 0.5
    freeze_backend: bool = False

    def __post_init__(self):
        if self.epochs < 0:
            raise ValidationError(f"epochs must be >= 0, got {self.epochs}")
        if self.lr < 0:
            raise ValidationError(f"lr must be >= 0, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValidationError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValidationError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr_schedule not in SCHEDULES:
            raise ValidationError(f"lr_schedule must be one of {SCHEDULES}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValidationError(f"val_fraction must be in [0, 1), got {self.val_fraction}")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss: float
    val_acc: float | None
    lr: float


def history_to_csv(history) -> str:
    lines = ["epoch,loss,val_acc,lr"]
    for row in history:
        val = "" if row.val_acc is None else repr(float(row.val_acc))
        lines.append(f"{row.epoch},{float(row.loss)!r},{val},{float(row.lr)!r}")
    return "\n".join(lines) + "\n"


def sgd_step(params, grads, velocities, lr, momentum, weight_decay):
    """One decoupled-weight-decay SGD step, in place."""
    for p, g, v in zip(params, grads, velocities):
        v *= momentum
        v += g
        if weight_decay:
            p *= 1.0 - lr * weight_decay
        p -= lr * v


def _cosine_lr(base, epoch, total):
    return base * 0.5 * (1.0 + math.cos(math.pi * epoch / max(1, total)))


def prepare_batch(images, input_width: int | None = None) -> np.ndarray:
    """Resize (optionally), channel-prepare and stack images into (N, 3, H, W)."""
    arrays = []
    for img in images:
        if input_width is not None and img.width != input_width:
            img = resize_to_width(img, input_width)
        if img.channels == 1:
            img = prepare_for_model(img)
        arrays.append(img.data)
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise ValidationError(f"batch mixes image shapes: {sorted(shapes)}")
    return np.stack(arrays)


def embed_images(backend: ConvNetBackend, images, input_width: int | None = None,
                 batch_size: int = 64) -> np.ndarray:
    """Embeddings for a list of images, batched for speed."""
    images = list(images)
    out = np.empty((len(images), backend.embed_dim))
    for start in range(0, len(images), batch_size):
        chunk = images[start : start + batch_size]
        out[start : start + len(chunk)] = backend.embed_batch(prepare_batch(chunk, input_width))
    return out


@dataclass
class Classifier:
    """Backend + head + class order; the evaluation-facing predictor."""

    backend: ConvNetBackend
    head: LinearHead
    classes: tuple
    input_width: int | None = None

    def logits(self, images) -> np.ndarray:
        emb = embed_images(self.backend, images, self.input_width)
        return self.head.logits(emb)

    def predict(self, images) -> list:
        idx = np.argmax(self.logits(images), axis=1)
        return [self.classes[i] for i in idx]

    def accuracy(self, images, labels) -> float:
        predicted = self.predict(images)
        return float(np.mean([p == t for p, t in zip(predicted, labels)]))

    def clone(self) -> "Classifier":
        return Classifier(self.backend.clone(), self.head.clone(), self.classes, self.input_width)


def _class_indices(labels, classes):
    index = {c: i for i, c in enumerate(classes)}
    return np.array([index[l] for l in labels], dtype=np.int64)


def _stratified_val_split(labels_idx, n_classes, val_fraction, rng):
    val = []
    for c in range(n_classes):
        members = np.flatnonzero(labels_idx == c).tolist()
        rng.shuffle(members)
        n_val = int(round(val_fraction * len(members)))
        n_val = min(n_val, len(members) - 1)  # keep at least one training sample
        val.extend(members[:n_val])
    val_set = set(val)
    train = [i for i in range(len(labels_idx)) if i not in val_set]
    return train, sorted(val)


class _EpochLoop:
    """Shared batching / scheduling / SGD loop for both loss heads."""

    def __init__(self, backend, cfg: TrainConfig, head_params):
        self.backend = backend
        self.cfg = cfg
        self.head_params = head_params
        if cfg.freeze_backend:
            self.params = list(head_params)
        else:
            self.params = backend.params() + list(head_params)
        self.velocities = [np.zeros_like(p) for p in self.params]
        self.lr = cfg.lr
        self._best_val = -np.inf
        self._stale = 0

    def epoch_lr(self, epoch):
        if self.cfg.lr_schedule == "cosine":
            return _cosine_lr(self.cfg.lr, epoch, self.cfg.epochs)
        return self.lr

    def note_val(self, val_acc):
        if self.cfg.lr_schedule != "plateau" or val_acc is None:
            return
        if val_acc > self._best_val:
            self._best_val = val_acc
            self._stale = 0
        else:
            self._stale += 1
            if self._stale >= self.cfg.plateau_patience:
                self.lr *= self.cfg.plateau_factor
                self._stale = 0

    def run_batch(self, x, loss_fn, epoch, batch_idx, lr):
        cfg = self.cfg
        if cfg.freeze_backend:
            emb = self.backend.embed_batch(x)
            cache = None
        else:
            emb, cache = self.backend.forward(x)
        loss, demb, head_grads = loss_fn(emb)
        if not np.isfinite(loss):
            raise RuntimeFailure(f"non-finite loss at epoch {epoch} batch {batch_idx}")
        if cfg.freeze_backend:
            grads = head_grads
        else:
            grads = self.backend.backward(demb, cache) + head_grads
        sgd_step(self.params, grads, self.velocities, lr, cfg.momentum, cfg.weight_decay)
        return loss


def _train_loop(images, targets, cfg, aug_cfg, backend, head_params, loss_fn, val_eval):
    loop = _EpochLoop(backend, cfg, head_params)
    history: list[EpochStats] = []
    n = len(images)
    shuffle_root = Prng(cfg.seed).spawn(1)
    for epoch in range(cfg.epochs):
        lr = loop.epoch_lr(epoch)
        order = shuffle_root.spawn(epoch).permutation(n)
        aug_rng = Prng(aug_cfg.seed).spawn(epoch) if aug_cfg is not None else None
        total_loss = 0.0
        for bi, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            batch_images = [images[i] for i in idx]
            if aug_cfg is not None:
                batch_images = [random_augment(im, aug_cfg, aug_rng) for im in batch_images]
            x = prepare_batch(batch_images)
            loss = loop.run_batch(x, lambda emb: loss_fn(emb, targets[idx]), epoch, bi, lr)
            total_loss += loss * len(idx)
        val_acc = val_eval() if val_eval is not None else None
        loop.note_val(val_acc)
        history.append(EpochStats(epoch, total_loss / n, val_acc, lr))
    return history


def train_supervised(dataset, cfg: TrainConfig, aug_cfg: AugmentConfig | None = None,
                     backend: ConvNetBackend | None = None,
                     head: LinearHead | None = None, classes=None):
    """Train a classifier on labeled tactile images.

    Returns (backend, head, history); column c of the head corresponds to
    classes[c] with classes sorted. Pass a backend (and optionally a matching
    head and class order) to fine-tune an existing model in place; otherwise
    fresh parameters are initialized from cfg.seed.
    """
    dataset = list(dataset)
    if not dataset:
        raise ValidationError("training dataset is empty")
    images = [img for img, _ in dataset]
    labels = [label for _, label in dataset]
    if classes is None:
        classes = tuple(sorted(set(labels)))
    else:
        classes = tuple(classes)
        stray = set(labels) - set(classes)
        if stray:
            raise ValidationError(f"labels {sorted(stray)!r} missing from class order")
    if len(classes) < 2:
        raise ValidationError(f"need at least 2 classes, got {classes}")
    y_all = _class_indices(labels, classes)

    if backend is None:
        backend = ConvNetBackend(seed=cfg.seed)
    if head is None:
        head = LinearHead.zeros(backend.embed_dim, len(classes))
    elif head.in_dim != backend.embed_dim or head.out_dim != len(classes):
        raise ValidationError(
            f"head is {head.in_dim}x{head.out_dim}, expected "
            f"{backend.embed_dim}x{len(classes)}"
        )

    if cfg.lr_schedule == "plateau" and cfg.val_fraction > 0:
        split_rng = Prng(cfg.seed).spawn(2)
        train_idx, val_idx = _stratified_val_split(y_all, len(classes), cfg.val_fraction, split_rng)
        val_images = [images[i] for i in val_idx]
        val_y = y_all[val_idx]

        def val_eval():
            emb = embed_images(backend, val_images)
            pred = np.argmax(head.logits(emb), axis=1)
            return float(np.mean(pred == val_y))

    else:
        train_idx = list(range(len(images)))
        val_eval = None

    train_images = [images[i] for i in train_idx]
    y_train = y_all[train_idx]
    for c in range(len(classes)):
        if not np.any(y_train == c):
            raise ValidationError(f"class {classes[c]!r} has no training samples")

    def loss_fn(emb, y):
        logits = layers.linear_forward(emb, head.weights, head.bias)
        loss, dlogits = layers.softmax_cross_entropy(logits, y)
        demb, dw, db = layers.linear_backward(dlogits, emb, head.weights)
        return loss, demb, [dw, db]

    history = _train_loop(train_images, y_train, cfg, aug_cfg, backend,
                          [head.weights, head.bias], loss_fn, val_eval)
    return backend, head, history


def train_composition(dataset, cfg: TrainConfig, aug_cfg: AugmentConfig | None = None,
                      backend: ConvNetBackend | None = None):
    """Train the six independent binary constituent heads.

    Dataset items are (image, constituent set). Returns (backend, heads, history)
    with one single-logit head per constituent, in fabric.CONSTITUENTS order.
    """
    dataset = list(dataset)
    if not dataset:
        raise ValidationError("training dataset is empty")
    images = [img for img, _ in dataset]
    targets = np.stack([fabric.indicator(cons) for _, cons in dataset])

    if backend is None:
        backend = ConvNetBackend(seed=cfg.seed)
    n_out = len(fabric.CONSTITUENTS)
    weights = np.zeros((backend.embed_dim, n_out))
    bias = np.zeros(n_out)

    def loss_fn(emb, y):
        logits = layers.linear_forward(emb, weights, bias)
        loss, dlogits = layers.binary_cross_entropy_logits(logits, y)
        demb, dw, db = layers.linear_backward(dlogits, emb, weights)
        return loss, demb, [dw, db]

    history = _train_loop(images, targets, cfg, aug_cfg, backend,
                          [weights, bias], loss_fn, None)
    heads = [LinearHead(weights[:, i : i + 1].copy(), bias[i : i + 1].copy())
             for i in range(n_out)]
    return backend, heads, history


def composition_forward(backend: ConvNetBackend, heads, image: TactileImage) -> np.ndarray:
    """Six independent constituent probabilities for one image."""
    heads = list(heads)
    if len(heads) != len(fabric.CONSTITUENTS):
        raise ValidationError(f"expected {len(fabric.CONSTITUENTS)} heads, got {len(heads)}")
    for h in heads:
        if h.out_dim != 1:
            raise ValidationError("composition heads must be single-logit")
    emb = embed_images(backend, [image])[0]
    logits = np.array([float(h.logits(emb)[0, 0]) for h in heads])
    return layers.sigmoid(logits)


def predict_constituents(backend, heads, image, threshold: float = 0.5) -> frozenset[str]:
    probs = composition_forward(backend, heads, image)
    return fabric.from_indicator(probs, threshold)
