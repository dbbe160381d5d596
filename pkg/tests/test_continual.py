import numpy as np
import pytest

from taclearn.continual import (
    MemoryBuffer,
    RlsState,
    batch_ridge_head,
    cl_rows_to_csv,
    cl_run,
    fine_tune,
    herding_order,
    ridge_solve,
    rls_update,
    select_exemplars,
)
from taclearn.errors import RuntimeFailure, ValidationError
from taclearn.model import Classifier, TrainConfig, embed_images
from taclearn.prng import Prng
from taclearn.tactile_image import TactileImage

from conftest import synth_images


def _random_embeddings(rng, n, d):
    return rng.uniform(-1, 1, size=(n, d))


def _dense_ridge_oracle(embeddings, labels, classes, lam):
    # independent dense normal-equations solve
    x = np.asarray(embeddings)
    y = np.zeros((x.shape[0], len(classes)))
    for i, l in enumerate(labels):
        y[i, classes.index(l)] = 1.0
    return np.linalg.solve(x.T @ x + lam * np.eye(x.shape[1]), x.T @ y)


def test_empty_batch_is_identity():
    state = RlsState(dim=4)
    updated = rls_update(state, np.empty((0, 4)), [])
    assert np.array_equal(updated.A, state.A)
    assert updated.c == {}
    assert updated.counts == {}


def test_single_sample_outer_product():
    state = RlsState(dim=3)
    e = np.array([0.5, -1.0, 2.0])
    updated = rls_update(state, e[None], [0])
    assert np.array_equal(updated.A, np.outer(e, e))
    assert np.array_equal(updated.c[0], e)
    assert updated.counts == {0: 1}
    # input state untouched
    assert np.array_equal(state.A, np.zeros((3, 3)))


def test_split_batches_equal_combined_bitwise():
    rng = Prng(0)
    e = _random_embeddings(rng, 12, 5)
    labels = [0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2]
    state = RlsState(dim=5)
    split = rls_update(rls_update(state, e[:7], labels[:7]), e[7:], labels[7:])
    combined = rls_update(state, e, labels)
    assert np.array_equal(split.A, combined.A)
    for k in combined.c:
        assert np.array_equal(split.c[k], combined.c[k])
    assert split.counts == combined.counts


def test_update_validates_inputs():
    state = RlsState(dim=4)
    with pytest.raises(ValidationError, match="expected embeddings"):
        rls_update(state, np.zeros((2, 3)), [0, 1])
    with pytest.raises(ValidationError, match="non-finite"):
        rls_update(state, np.full((1, 4), np.nan), [0])


def test_accumulator_stays_symmetric_psd():
    rng = Prng(17)
    state = RlsState(dim=6)
    for _ in range(5):
        n = 1 + rng.randint(20)
        emb = _random_embeddings(rng, n, 6)
        state = rls_update(state, emb, [rng.randint(3) for _ in range(n)])
    assert np.array_equal(state.A, state.A.T)
    assert np.linalg.eigvalsh(state.A).min() >= -1e-9
    assert state.total_count == sum(state.counts.values())


def test_ridge_solve_hand_case():
    # one class-0 sample with psi = e1 in 2-D, lambda = 1:
    # A = e1 e1^T, so (A + I) = diag(2, 1) and W[:,0] = e1 / 2.
    state = RlsState(dim=2, ridge_lambda=1.0)
    state = rls_update(state, np.array([[1.0, 0.0]]), [0])
    head = ridge_solve(state)
    assert np.allclose(head.weights[:, 0], [0.5, 0.0])
    assert np.array_equal(head.bias, np.zeros(1))


def test_ridge_solution_satisfies_normal_equations():
    rng = Prng(1)
    e = _random_embeddings(rng, 40, 8)
    labels = [i % 3 for i in range(40)]
    state = rls_update(RlsState(dim=8, ridge_lambda=0.5), e, labels)
    head = ridge_solve(state)
    m = state.A + 0.5 * np.eye(8)
    c = np.stack([state.c[y] for y in state.classes], axis=1)
    residual = np.linalg.norm(m @ head.weights - c)
    assert residual <= 1e-8 * np.linalg.norm(c)


def test_streamed_ridge_matches_dense_oracle():
    rng = Prng(2)
    for trial in range(10):
        d = 3 + rng.randint(13)
        n = 20 + rng.randint(60)
        k = 2 + rng.randint(3)
        e = _random_embeddings(rng, n, d)
        labels = [rng.randint(k) for _ in range(n)]
        if len(set(labels)) < 2:
            labels[0], labels[1] = 0, 1
        lam = 0.1 + rng.random()
        state = RlsState(dim=d, ridge_lambda=lam)
        # stream in uneven chunks
        pos = 0
        while pos < n:
            step = 1 + rng.randint(9)
            state = rls_update(state, e[pos : pos + step], labels[pos : pos + step])
            pos += step
        head = ridge_solve(state)
        classes = list(state.classes)
        oracle = _dense_ridge_oracle(e, labels, classes, lam)
        rel = np.linalg.norm(head.weights - oracle) / np.linalg.norm(oracle)
        assert rel <= 1e-6


def test_duplicated_dataset_with_doubled_lambda_matches():
    rng = Prng(3)
    e = _random_embeddings(rng, 30, 6)
    labels = [i % 2 for i in range(30)]
    head_single, _ = batch_ridge_head(e, labels, ridge_lambda=1.0)
    head_double, _ = batch_ridge_head(
        np.vstack([e, e]), labels + labels, ridge_lambda=2.0
    )
    assert np.allclose(head_single.weights, head_double.weights, atol=1e-12)


def test_ridge_singular_system_reports_condition():
    state = RlsState(dim=3, ridge_lambda=1e-12)
    state = rls_update(state, np.array([[1.0, 0.0, 0.0]]), [0])
    state.A[0, 0] = -1.0  # force an indefinite accumulator
    with pytest.raises(RuntimeFailure, match="condition estimate"):
        ridge_solve(state)


def test_ridge_requires_a_class():
    with pytest.raises(ValidationError, match="at least one"):
        ridge_solve(RlsState(dim=4))


def test_herding_first_pick_nearest_mean():
    rng = Prng(4)
    embs = _random_embeddings(rng, 10, 2)
    mu = embs.mean(axis=0)
    order = herding_order(embs)
    nearest = int(np.argmin(np.linalg.norm(embs - mu, axis=1)))
    assert order[0] == nearest


def test_herding_matches_exhaustive_per_step_oracle():
    rng = Prng(5)
    embs = _random_embeddings(rng, 10, 2)
    order = herding_order(embs)
    # brute force: recompute each greedy step with explicit loops
    mu = embs.mean(axis=0)
    total = np.zeros(2)
    remaining = list(range(10))
    for step, picked in enumerate(order, start=1):
        best_idx, best_dist = None, np.inf
        for i in remaining:
            dist = float(np.linalg.norm(mu - (total + embs[i]) / step))
            if dist < best_dist:
                best_idx, best_dist = i, dist
        assert picked == best_idx
        total += embs[best_idx]
        remaining.remove(best_idx)


def _image_batch(n, label, seed):
    rng = Prng(seed)
    images = [
        TactileImage(data=rng.uniform(-1, 1, size=(10, 24)), normalized=True)
        for _ in range(n)
    ]
    return images, [label] * n


def test_select_exemplars_keeps_all_when_budget_allows(random_backend):
    images, labels = _image_batch(6, "mat_a", seed=6)
    buffer = MemoryBuffer(capacity=20)
    buffer = select_exemplars(buffer, images, labels, random_backend)
    assert buffer.total == 6
    assert set(buffer.per_class) == {"mat_a"}


def test_select_exemplars_rebalances_and_truncates(random_backend):
    buffer = MemoryBuffer(capacity=8)
    images_a, labels_a = _image_batch(10, "a", seed=7)
    buffer = select_exemplars(buffer, images_a, labels_a, random_backend)
    assert buffer.sizes() == {"a": 8}
    kept_a = list(buffer.per_class["a"])

    images_b, labels_b = _image_batch(10, "b", seed=8)
    buffer = select_exemplars(buffer, images_b, labels_b, random_backend)
    assert buffer.sizes() == {"a": 4, "b": 4}
    assert buffer.total <= buffer.capacity
    # truncation keeps the earliest-selected prefix
    assert all(x is y for x, y in zip(buffer.per_class["a"], kept_a[:4]))


def test_select_exemplars_budget_error(random_backend):
    buffer = MemoryBuffer(capacity=2)
    for label, seed in [("a", 9), ("b", 10)]:
        images, labels = _image_batch(3, label, seed)
        buffer = select_exemplars(buffer, images, labels, random_backend)
    images, labels = _image_batch(3, "c", seed=11)
    with pytest.raises(ValidationError, match="budget"):
        select_exemplars(buffer, images, labels, random_backend)


def test_select_exemplars_rejects_repeat_class(random_backend):
    images, labels = _image_batch(4, "a", seed=12)
    buffer = select_exemplars(MemoryBuffer(capacity=10), images, labels, random_backend)
    with pytest.raises(ValidationError, match="already"):
        select_exemplars(buffer, images, labels, random_backend)


def _small_cl_problem(backend, num_classes=3, per_class=6, seed=31):
    images, labels, bounds = synth_images(
        num_classes=num_classes, per_class=per_class, channels=10, length=32, seed=seed
    )
    by_class = {}
    for img, label in zip(images, labels):
        by_class.setdefault(label, []).append(img)
    batches = [(label, by_class[label]) for label in sorted(by_class)]
    test_images, test_labels, _ = synth_images(
        num_classes=num_classes, per_class=3, channels=10, length=32, seed=seed,
        start_index=per_class, bounds=bounds,
    )
    return batches, test_images, test_labels


def test_fine_tune_zero_epochs_is_identity(random_backend):
    batches, _, _ = _small_cl_problem(random_backend)
    images, labels = batches[0][1], [batches[0][0]] * len(batches[0][1])
    images2, labels2 = batches[1][1], [batches[1][0]] * len(batches[1][1])
    emb = embed_images(random_backend, images + images2)
    state = rls_update(RlsState(dim=random_backend.embed_dim), emb, labels + labels2)
    head = ridge_solve(state)
    clf = Classifier(random_backend, head, state.classes)
    buffer = select_exemplars(MemoryBuffer(capacity=10), images, labels, random_backend)
    cfg = TrainConfig(epochs=0, lr_schedule="cosine")
    tuned = fine_tune(clf, buffer, cfg)
    assert tuned is not clf
    assert np.array_equal(tuned.head.weights, clf.head.weights)
    assert np.array_equal(tuned.backend.get_flat(), clf.backend.get_flat())


def test_fine_tune_leaves_ridge_state_untouched(random_backend):
    batches, _, _ = _small_cl_problem(random_backend)
    (label_a, images_a), (label_b, images_b) = batches[0], batches[1]
    emb = embed_images(random_backend, images_a + images_b)
    labels = [label_a] * len(images_a) + [label_b] * len(images_b)
    state = rls_update(RlsState(dim=random_backend.embed_dim), emb, labels)
    a_before = state.A.copy()
    c_before = {k: v.copy() for k, v in state.c.items()}
    head = ridge_solve(state)
    clf = Classifier(random_backend, head, state.classes)
    buffer = select_exemplars(
        MemoryBuffer(capacity=8), images_a + images_b, labels, random_backend
    )
    backend_flat_before = random_backend.get_flat().copy()
    cfg = TrainConfig(epochs=3, lr=0.01, batch_size=4, lr_schedule="cosine", seed=1)
    fine_tune(clf, buffer, cfg)
    assert np.array_equal(state.A, a_before)
    for k in c_before:
        assert np.array_equal(state.c[k], c_before[k])
    # the frozen backend itself is cloned, not trained
    assert np.array_equal(random_backend.get_flat(), backend_flat_before)


def test_fine_tune_validations(random_backend):
    clf = Classifier(random_backend, ridge_solve(
        rls_update(RlsState(dim=random_backend.embed_dim),
                   np.ones((2, random_backend.embed_dim)), [0, 1])
    ), (0, 1))
    with pytest.raises(ValidationError, match="non-empty"):
        fine_tune(clf, MemoryBuffer(capacity=4), TrainConfig(epochs=1, lr_schedule="cosine"))
    images, labels = _image_batch(3, 0, seed=13)
    buffer = select_exemplars(MemoryBuffer(capacity=4), images, labels, random_backend)
    with pytest.raises(ValidationError, match="cosine"):
        fine_tune(clf, buffer, TrainConfig(epochs=1, lr_schedule="constant"))


def test_cl_run_single_step_equals_batch_baseline(random_backend):
    batches, test_images, test_labels = _small_cl_problem(random_backend, num_classes=2)
    label, images = batches[0]
    label2, images2 = batches[1]
    all_images = images + images2
    all_labels = [label] * len(images) + [label2] * len(images2)
    snapshots, rows = cl_run(
        [(label, images), (label2, images2)], random_backend, buffer_capacity=12,
        test_images=test_images, test_labels=test_labels,
    )
    head_direct, classes = batch_ridge_head(
        embed_images(random_backend, all_images), all_labels
    )
    assert np.allclose(snapshots[-1].ridge.head.weights, head_direct.weights, atol=1e-9)
    assert snapshots[-1].ridge.classes == classes
    assert rows[-1][3] <= 12


def test_cl_run_single_batch_reduces_to_frozen_classification(random_backend):
    images, labels = _image_batch(6, "solo", seed=29)
    snapshots, rows = cl_run([("solo", images)], random_backend, buffer_capacity=4)
    head_direct, classes = batch_ridge_head(embed_images(random_backend, images), labels)
    assert snapshots[0].ridge.classes == classes == ("solo",)
    assert np.allclose(snapshots[0].ridge.head.weights, head_direct.weights, atol=1e-12)
    assert rows[0][3] == 4  # buffer truncated to capacity


def test_cl_run_order_invariant_head(random_backend):
    batches, _, _ = _small_cl_problem(random_backend, num_classes=3)
    snaps_fwd, _ = cl_run(batches, random_backend, buffer_capacity=9)
    snaps_rev, _ = cl_run(batches[::-1], random_backend, buffer_capacity=9)
    w1 = snaps_fwd[-1].ridge.head.weights
    w2 = snaps_rev[-1].ridge.head.weights
    assert np.linalg.norm(w1 - w2) <= 1e-6 * max(1.0, np.linalg.norm(w1))


def test_cl_run_rejects_repeated_class(random_backend):
    batches, _, _ = _small_cl_problem(random_backend, num_classes=2)
    label, images = batches[0]
    with pytest.raises(ValidationError, match="twice"):
        cl_run([(label, images), (label, images)], random_backend, buffer_capacity=8)


def test_cl_rows_csv_shape(random_backend):
    batches, test_images, test_labels = _small_cl_problem(random_backend, num_classes=2)
    _, rows = cl_run(batches, random_backend, buffer_capacity=8,
                     test_images=test_images, test_labels=test_labels)
    csv = cl_rows_to_csv(rows)
    lines = csv.strip().splitlines()
    assert lines[0] == "t,acc_ridge,acc_fine_tuned,buffer_size"
    assert len(lines) == 3
