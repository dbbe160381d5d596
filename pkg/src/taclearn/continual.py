"""Class-incremental continual learning with streaming ridge statistics.

Each new material batch updates two sufficient statistics computed with a
frozen embedding backend: the Gram accumulator A (sum of outer products of
all embeddings seen) and one cross-moment vector per class (sum of that
class's embeddings, which is exactly the one-hot-target cross moment). The
ridge head solved from (A + lambda*I) is therefore identical, up to float
rounding, for any presentation order or batching of the same data: the
statistics are plain sums. That head is the robust floor.

On top of it, a bounded exemplar buffer is maintained by herding (greedily
keeping the samples whose embedding mean best matches the class mean), and a
copy of the model is fine-tuned on the buffer after every step. Fine-tuning
never touches the statistics, the frozen backend used for them, or the
stored ridge head, so the floor survives even if adaptation diverges.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .augment import AugmentConfig
from .errors import RuntimeFailure, ValidationError
from .model import Classifier, ConvNetBackend, LinearHead, TrainConfig, embed_images
from .model.train import train_supervised
from .tactile_image import TactileImage


@dataclass
class RlsState:
    """Streaming sufficient statistics for the recursive ridge classifier."""

    dim: int
    ridge_lambda: float = 1.0
    A: np.ndarray = None
    c: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise ValidationError(f"embedding dim must be >= 1, got {self.dim}")
        if not self.ridge_lambda > 0:
            raise ValidationError(f"ridge_lambda must be positive, got {self.ridge_lambda}")
        if self.A is None:
            self.A = np.zeros((self.dim, self.dim))
        if self.A.shape != (self.dim, self.dim):
            raise ValidationError(f"A must be {self.dim}x{self.dim}, got {self.A.shape}")

    @property
    def classes(self) -> tuple:
        return tuple(sorted(self.c))

    @property
    def total_count(self) -> int:
        return sum(self.counts.values())

    def copy(self) -> "RlsState":
        return RlsState(
            dim=self.dim,
            ridge_lambda=self.ridge_lambda,
            A=self.A.copy(),
            c={k: v.copy() for k, v in self.c.items()},
            counts=dict(self.counts),
        )


def rls_update(state: RlsState, embeddings: np.ndarray, labels) -> RlsState:
    """Fold a batch of (embedding, label) pairs into fresh statistics."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = list(labels)
    if embeddings.ndim == 1:
        embeddings = embeddings[None]
    if len(labels) == 0 and embeddings.size == 0:
        return state.copy()
    if embeddings.shape != (len(labels), state.dim):
        raise ValidationError(
            f"expected embeddings ({len(labels)}, {state.dim}), got {embeddings.shape}"
        )
    if not np.isfinite(embeddings).all():
        raise ValidationError("non-finite embedding in batch")
    new = state.copy()
    # Accumulate one sample at a time so that any batching of the same
    # sample sequence produces bit-identical statistics.
    for emb, label in zip(embeddings, labels):
        new.A += np.outer(emb, emb)
        if label not in new.c:
            new.c[label] = np.zeros(state.dim)
            new.counts[label] = 0
        new.c[label] += emb
        new.counts[label] += 1
    return new


def ridge_solve(state: RlsState) -> LinearHead:
    """Solve (A + lambda*I) W = C for the one-hot ridge head.

    Column order is sorted class id; bias is zero (the statistics carry no
    intercept term).
    """
    if not state.c:
        raise ValidationError("ridge_solve needs at least one observed class")
    classes = state.classes
    m = state.A + state.ridge_lambda * np.eye(state.dim)
    targets = np.stack([state.c[y] for y in classes], axis=1)
    try:
        factor = scipy.linalg.cho_factor(m, lower=True)
    except scipy.linalg.LinAlgError:
        cond = float(np.linalg.cond(m))
        raise RuntimeFailure(
            f"A + lambda*I numerically singular (condition estimate {cond:.3e}); "
            f"increase ridge_lambda"
        ) from None
    weights = scipy.linalg.cho_solve(factor, targets)
    if not np.isfinite(weights).all():
        raise RuntimeFailure("ridge solution is non-finite")
    return LinearHead(weights, np.zeros(len(classes)))


def batch_ridge_head(embeddings, labels, ridge_lambda: float = 1.0) -> tuple[LinearHead, tuple]:
    """One-shot ridge fit; convenience wrapper over the streaming path."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    state = RlsState(dim=embeddings.shape[1], ridge_lambda=ridge_lambda)
    state = rls_update(state, embeddings, labels)
    return ridge_solve(state), state.classes


@dataclass
class MemoryBuffer:
    """Bounded per-class exemplar store; lists keep herding priority order."""

    capacity: int
    per_class: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.capacity < 1:
            raise ValidationError(f"buffer capacity must be >= 1, got {self.capacity}")

    @property
    def total(self) -> int:
        return sum(len(v) for v in self.per_class.values())

    @property
    def classes(self) -> tuple:
        return tuple(sorted(self.per_class))

    def sizes(self) -> dict:
        return {k: len(v) for k, v in self.per_class.items()}

    def items(self) -> list[tuple[TactileImage, object]]:
        out = []
        for label in self.classes:
            out.extend((img, label) for img in self.per_class[label])
        return out


def herding_order(embeddings: np.ndarray) -> list[int]:
    """Greedy herding: at each step add the sample whose inclusion brings the
    running mean closest to the class mean. Ties break to the lowest index."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    n = embeddings.shape[0]
    mu = embeddings.mean(axis=0)
    order: list[int] = []
    total = np.zeros(embeddings.shape[1])
    remaining = np.arange(n)
    for m in range(1, n + 1):
        candidate_means = (total[None, :] + embeddings[remaining]) / m
        dist = np.linalg.norm(mu[None, :] - candidate_means, axis=1)
        pick = int(np.argmin(dist))
        chosen = int(remaining[pick])
        order.append(chosen)
        total += embeddings[chosen]
        remaining = np.delete(remaining, pick)
    return order


def select_exemplars(buffer: MemoryBuffer, images, labels, backend: ConvNetBackend,
                     embeddings: np.ndarray | None = None,
                     input_width: int | None = None) -> MemoryBuffer:
    """Herd a new class's samples into the buffer and rebalance budgets.

    Existing classes are truncated to the new equal per-class budget, keeping
    their earliest-selected exemplars (the herding priority prefix).
    """
    images = list(images)
    labels = list(labels)
    if len(images) != len(labels):
        raise ValidationError("images and labels length mismatch")
    if not images:
        raise ValidationError("cannot select exemplars from an empty batch")
    if embeddings is None:
        embeddings = embed_images(backend, images, input_width)

    per_class = {k: list(v) for k, v in buffer.per_class.items()}
    for label in sorted(set(labels)):
        if label in per_class:
            raise ValidationError(f"class {label!r} already has stored exemplars")
        idx = [i for i, l in enumerate(labels) if l == label]
        order = herding_order(embeddings[idx])
        per_class[label] = [images[idx[i]] for i in order]

    budget = buffer.capacity // len(per_class)
    if budget < 1:
        raise ValidationError(
            f"capacity {buffer.capacity} leaves no budget for {len(per_class)} classes"
        )
    per_class = {k: v[:budget] for k, v in per_class.items()}
    return MemoryBuffer(capacity=buffer.capacity, per_class=per_class)


@dataclass
class ClSnapshot:
    """State after one continual step: the ridge floor and the adapted model."""

    task_index: int
    ridge: Classifier
    fine_tuned: Classifier
    buffer_sizes: dict


def fine_tune(ridge_clf: Classifier, buffer: MemoryBuffer, cfg: TrainConfig,
              aug_cfg: AugmentConfig | None = None) -> Classifier:
    """Adapt a copy of the ridge model on the buffer; the input is untouched.

    Requires the cosine schedule. Zero epochs returns an identical copy.
    """
    if buffer.total == 0:
        raise ValidationError("fine_tune needs a non-empty buffer")
    if cfg.lr_schedule != "cosine":
        raise ValidationError(f"fine_tune requires the cosine schedule, got {cfg.lr_schedule}")
    clone = ridge_clf.clone()
    if cfg.epochs == 0:
        return clone
    items = buffer.items()
    train_supervised(
        items, cfg, aug_cfg, backend=clone.backend, head=clone.head,
        classes=clone.classes,
    )
    return clone


def cl_run(batches, backend: ConvNetBackend, buffer_capacity: int,
           ridge_lambda: float = 1.0, fine_tune_cfg: TrainConfig | None = None,
           aug_cfg: AugmentConfig | None = None, test_images=None, test_labels=None,
           input_width: int | None = None, warm_start: bool = False):
    """Run the full incremental protocol over a sequence of material batches.

    `batches` is a sequence of (label, images) pairs, one new material each.
    Training at step t sees only that batch and the buffer; earlier batches
    are gone by construction. Returns (snapshots, rows) where each row is
    (t, acc of ridge floor, acc of fine-tuned model, buffer size), with
    accuracies over the test items belonging to classes seen so far (or None
    when no test set is supplied).
    """
    state = RlsState(dim=backend.embed_dim, ridge_lambda=ridge_lambda)
    buffer = MemoryBuffer(capacity=buffer_capacity)
    snapshots: list[ClSnapshot] = []
    rows: list[tuple] = []
    seen: list = []
    prev_tuned: Classifier | None = None

    for t, (label, images) in enumerate(batches, start=1):
        if label in seen:
            raise ValidationError(f"class {label!r} appears twice in the sequence")
        seen.append(label)
        images = list(images)
        embeddings = embed_images(backend, images, input_width)
        state = rls_update(state, embeddings, [label] * len(images))
        head = ridge_solve(state)
        ridge_clf = Classifier(backend, head, state.classes, input_width)
        buffer = select_exemplars(
            buffer, images, [label] * len(images), backend,
            embeddings=embeddings, input_width=input_width,
        )

        if fine_tune_cfg is not None and fine_tune_cfg.epochs > 0 and len(seen) >= 2:
            # with a single class there is nothing to discriminate yet
            start = ridge_clf
            if warm_start and prev_tuned is not None:
                start = Classifier(prev_tuned.backend, head, state.classes, input_width)
            tuned = fine_tune(start, buffer, fine_tune_cfg, aug_cfg)
        else:
            tuned = ridge_clf.clone()
        prev_tuned = tuned

        acc_ridge = acc_tuned = None
        if test_images is not None:
            eval_idx = [i for i, l in enumerate(test_labels) if l in seen]
            if eval_idx:
                subset = [test_images[i] for i in eval_idx]
                subset_labels = [test_labels[i] for i in eval_idx]
                acc_ridge = ridge_clf.accuracy(subset, subset_labels)
                acc_tuned = tuned.accuracy(subset, subset_labels)

        snapshots.append(
            ClSnapshot(task_index=t, ridge=ridge_clf, fine_tuned=tuned,
                       buffer_sizes=buffer.sizes())
        )
        rows.append((t, acc_ridge, acc_tuned, buffer.total))
    return snapshots, rows


def cl_rows_to_csv(rows) -> str:
    lines = ["t,acc_ridge,acc_fine_tuned,buffer_size"]
    for t, a, b, size in rows:
        a_s = "" if a is None else repr(float(a))
        b_s = "" if b is None else repr(float(b))
        lines.append(f"{t},{a_s},{b_s},{size}")
    return "\n".join(lines) + "\n"
