"""Command-line entry point.

    taclearn ingest --config FILE --out DIR [--seed N]
    taclearn train  --config FILE --out DIR [--seed N] [--no-augment] [--threads N]
    taclearn cl     --config FILE --out DIR [--seed N] [--no-augment] [--sweep]
    taclearn eval MODE --config FILE --checkpoint FILE --out DIR [--seed N]

Exit codes: 0 success, 1 validation error (bad config, files, parameters),
2 runtime failure. Validation runs before anything is written; every output
is a deterministic function of (config, seed), so reruns produce identical
bytes. Heavy imports happen after argument parsing so --threads can cap the
BLAS pools via environment variables.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="taclearn",
                                     description="Tactile representation learning toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False):
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the run seed")
        p.add_argument("--threads", type=int, default=None, help="cap worker threads")
        if checkpoint:
            p.add_argument("--checkpoint", required=True, help="model checkpoint (.tacm)")

    p_ingest = sub.add_parser("ingest", help="validate streams and build a dataset manifest")
    common(p_ingest)

    p_train = sub.add_parser("train", help="train a classifier or composition model")
    common(p_train)
    p_train.add_argument("--no-augment", action="store_true", help="disable augmentation")

    p_cl = sub.add_parser("cl", help="run the continual-learning protocol")
    common(p_cl)
    p_cl.add_argument("--no-augment", action="store_true", help="disable augmentation")
    p_cl.add_argument("--sweep", action="store_true",
                      help="run every capacity in [cl] sweep_capacities")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("mode", choices=["kfold", "length", "speed", "noise", "composition"])
    common(p_eval, checkpoint=True)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(args.threads))

    from .errors import RuntimeFailure, ValidationError

    commands = {
        "ingest": cmd_ingest,
        "train": cmd_train,
        "cl": cmd_cl,
        "eval": cmd_eval,
    }
    try:
        return commands[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RuntimeFailure as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"unexpected failure: {exc!r}", file=sys.stderr)
        return 2


def _run_seed(config, args) -> int:
    if args.seed is not None:
        return args.seed
    return config.get_int("run", "seed", 0)


def _sub_seed(run_seed: int, key: int) -> int:
    from .prng import Prng

    return Prng(run_seed).spawn(key).next_u64()


class _Bundle:
    """Loaded dataset: normalized tactile images split into train/test."""

    def __init__(self, train_images, train_labels, train_cons,
                 test_images, test_labels, test_cons, bounds, input_width, spec):
        self.train_images = train_images
        self.train_labels = train_labels
        self.train_cons = train_cons
        self.test_images = test_images
        self.test_labels = test_labels
        self.test_cons = test_cons
        self.bounds = bounds
        self.input_width = input_width
        self.spec = spec


def _synthetic_config(config):
    from .sensor_io import SyntheticTextureConfig

    return SyntheticTextureConfig(
        num_classes=config.get_int("dataset", "num_classes"),
        channels=config.get_int("dataset", "channels", 12),
        stream_length=config.get_int("dataset", "stream_length", 64),
        base_frequency_range=(
            config.get_float("dataset", "base_freq_lo", 0.05),
            config.get_float("dataset", "base_freq_hi", 0.45),
        ),
        noise_floor=config.get_float("dataset", "noise_floor", 0.05),
        seed=config.get_int("dataset", "seed", 0),
    )


def _constituent_map(config):
    items = config.section_items("composition")
    mapping = {}
    for label, names in items.items():
        mapping[label] = frozenset(n for n in names.split(";") if n)
    return mapping


def _synthetic_streams(config):
    from .sensor_io import generate_synthetic

    synth = _synthetic_config(config)
    train_n = config.get_int("dataset", "train_per_class", 40)
    test_n = config.get_int("dataset", "test_per_class", 10)
    cons_map = _constituent_map(config)
    train, test = [], []
    for c in range(synth.num_classes):
        cons = cons_map.get(str(c))
        for i in range(train_n):
            train.append(generate_synthetic(synth, c, i).with_label(str(c), cons))
        for i in range(test_n):
            test.append(generate_synthetic(synth, c, train_n + i).with_label(str(c), cons))
    return train, test


def _manifest_streams(config):
    from .sensor_io import load_manifest, load_manifest_streams

    man_path = config.get_str("dataset", "manifest")
    manifest = load_manifest(man_path)
    _, streams = load_manifest_streams(man_path, manifest)
    train = [s for s, e in zip(streams, manifest.entries) if e.split == "train"]
    test = [s for s, e in zip(streams, manifest.entries) if e.split == "test"]
    return train, test, manifest


def _load_bundle(config) -> _Bundle:
    from .errors import ValidationError
    from .sensor_io import CAMERA_FRAMES
    from .tactile_image import (build_tactile_image, camera_frame_image,
                                compute_bounds, normalize)

    mode = config.get_str("dataset", "mode")
    manifest_bounds = None
    if mode == "synthetic":
        train_streams, test_streams = _synthetic_streams(config)
        spec = train_streams[0].spec
    elif mode == "manifest":
        train_streams, test_streams, manifest = _manifest_streams(config)
        spec = manifest.spec
        manifest_bounds = manifest.norm_bounds
    else:
        raise ValidationError(f"[dataset] mode must be synthetic or manifest, got {mode!r}")
    if not train_streams:
        raise ValidationError("dataset has no training samples")

    bounds = manifest_bounds or compute_bounds(train_streams)
    window_start = config.get_int("transform", "window_start", None)
    window_end = config.get_int("transform", "window_end", None)
    frame_index = config.get_int("transform", "frame_index", 0)

    def build(stream):
        if stream.spec.kind == CAMERA_FRAMES:
            return camera_frame_image(stream, frame_index)
        return build_tactile_image(stream, window_start, window_end)

    def prepare(streams):
        images, labels, cons = [], [], []
        for s in streams:
            images.append(normalize(build(s), *bounds))
            labels.append(str(s.label))
            cons.append(s.constituents)
        return images, labels, cons

    train_images, train_labels, train_cons = prepare(train_streams)
    test_images, test_labels, test_cons = prepare(test_streams) if test_streams else ([], [], [])
    input_width = config.get_int("transform", "input_width", train_images[0].width)
    return _Bundle(train_images, train_labels, train_cons,
                   test_images, test_labels, test_cons, bounds, input_width, spec)


def _augment_config(config, args, input_width, run_seed):
    from .augment import AugmentConfig

    if getattr(args, "no_augment", False):
        return None
    if not config.get_bool("augment", "enabled", True):
        return None
    if "augment" not in config.sections:
        return None
    return AugmentConfig(
        flip_prob=config.get_float("augment", "flip_prob", 0.5),
        resize_factor_range=(
            config.get_float("augment", "resize_min", 0.7),
            config.get_float("augment", "resize_max", 1.4),
        ),
        crop_len_range=(
            config.get_int("augment", "crop_min", max(1, input_width // 4)),
            config.get_int("augment", "crop_max", input_width),
        ),
        jitter_level=config.get_float("augment", "jitter_level", 0.1),
        seed=config.get_int("augment", "seed", _sub_seed(run_seed, 1)),
        output_width=input_width,
    )


def _train_config(config, run_seed, task):
    from .model import TrainConfig

    default_epochs = 50 if task == "composition" else 100
    return TrainConfig(
        epochs=config.get_int("train", "epochs", default_epochs),
        lr=config.get_float("train", "lr", 0.01),
        momentum=config.get_float("train", "momentum", 0.9),
        weight_decay=config.get_float("train", "weight_decay", 1e-4),
        batch_size=config.get_int("train", "batch_size", 16),
        lr_schedule=config.get_str("train", "schedule", "plateau"),
        seed=config.get_int("train", "seed", run_seed),
        val_fraction=config.get_float("train", "val_fraction", 0.1),
        plateau_patience=config.get_int("train", "plateau_patience", 10),
        freeze_backend=config.get_bool("train", "freeze_backend", False),
    )


def _prepare_out(args, config, run_seed) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.used.txt").write_text(config.resolved_text(run_seed), encoding="utf-8")
    return out


def _load_backend_for_train(config):
    from .model import load_checkpoint

    pretrained = config.get_str("train", "pretrained", None)
    if pretrained is None:
        return None
    return load_checkpoint(pretrained).backend


def cmd_ingest(args) -> int:
    from .config import load_config
    from .sensor_io import Manifest, ManifestEntry, write_manifest, write_stream
    from .tactile_image import compute_bounds

    config = load_config(args.config)
    run_seed = _run_seed(config, args)
    mode = config.get_str("dataset", "mode")

    if mode == "synthetic":
        train_streams, test_streams = _synthetic_streams(config)
        bounds = compute_bounds(train_streams)
        out = _prepare_out(args, config, run_seed)
        (out / "streams").mkdir(exist_ok=True)
        entries = []
        per_class_counter: dict[str, int] = {}
        for split, streams in (("train", train_streams), ("test", test_streams)):
            for s in streams:
                idx = per_class_counter.get(s.label, 0)
                per_class_counter[s.label] = idx + 1
                rel = f"streams/c{s.label}_s{idx:04d}.csv"
                write_stream(out / rel, s, fmt="csv")
                entries.append(ManifestEntry(rel, s.label, split, s.constituents))
        manifest = Manifest(spec=train_streams[0].spec, entries=entries, norm_bounds=bounds)
        write_manifest(out / "manifest.txt", manifest)
        print(f"manifest samples={len(entries)} bounds=({bounds[0]!r},{bounds[1]!r}) "
              f"path={out / 'manifest.txt'}")
        return 0

    # manifest mode: validate every stream and image build, fill in bounds, re-emit
    _load_bundle(config)
    train_streams, test_streams, manifest = _manifest_streams(config)
    bounds = manifest.norm_bounds or compute_bounds(train_streams)
    out = _prepare_out(args, config, run_seed)
    resolved = Manifest(spec=manifest.spec, entries=manifest.entries, norm_bounds=bounds)
    write_manifest(out / "manifest.txt", resolved)
    print(f"manifest samples={len(manifest.entries)} bounds=({bounds[0]!r},{bounds[1]!r}) "
          f"path={out / 'manifest.txt'}")
    return 0


def cmd_train(args) -> int:
    from .config import load_config
    from .errors import ValidationError
    from .model import (Checkpoint, history_to_csv, save_checkpoint,
                        train_composition, train_supervised)

    config = load_config(args.config)
    run_seed = _run_seed(config, args)
    task = config.get_str("train", "task", "classify")
    if task not in ("classify", "composition"):
        raise ValidationError(f"[train] task must be classify or composition, got {task!r}")
    bundle = _load_bundle(config)
    train_cfg = _train_config(config, run_seed, task)
    aug_cfg = _augment_config(config, args, bundle.input_width, run_seed)
    backend = _load_backend_for_train(config)

    if task == "classify":
        dataset = list(zip(bundle.train_images, bundle.train_labels))
        classes = tuple(sorted(set(bundle.train_labels)))
    else:
        missing = [i for i, c in enumerate(bundle.train_cons) if c is None]
        if missing:
            raise ValidationError(
                f"composition training needs constituent sets; sample {missing[0]} has none"
            )
        dataset = list(zip(bundle.train_images, bundle.train_cons))

    out = _prepare_out(args, config, run_seed)

    if task == "classify":
        backend, head, history = train_supervised(dataset, train_cfg, aug_cfg, backend=backend)
        heads = {"classify": head}
        meta = {"task": task, "classes": ";".join(classes),
                "input_width": str(bundle.input_width)}
    else:
        from .fabric import CONSTITUENTS

        backend, comp_heads, history = train_composition(dataset, train_cfg, aug_cfg,
                                                         backend=backend)
        heads = dict(zip(CONSTITUENTS, comp_heads))
        meta = {"task": task, "input_width": str(bundle.input_width)}

    for row in history:
        val = "" if row.val_acc is None else f" val_acc={row.val_acc!r}"
        print(f"epoch={row.epoch} loss={row.loss!r}{val} lr={row.lr!r}")
    (out / "history.csv").write_text(history_to_csv(history), encoding="utf-8")
    save_checkpoint(out / "model.tacm", Checkpoint(backend=backend, heads=heads, meta=meta))
    final = f" final_loss={history[-1].loss!r}" if history else ""
    print(f"checkpoint={out / 'model.tacm'}{final}")
    return 0


def cmd_cl(args) -> int:
    from .config import load_config
    from .continual import cl_rows_to_csv, cl_run
    from .errors import ValidationError
    from .model import Checkpoint, ConvNetBackend, TrainConfig, load_checkpoint, save_checkpoint

    config = load_config(args.config)
    run_seed = _run_seed(config, args)
    bundle = _load_bundle(config)

    backend_path = config.get_str("cl", "backend_checkpoint", None)
    if backend_path is not None:
        backend = load_checkpoint(backend_path).backend
    else:
        backend = ConvNetBackend(seed=_sub_seed(run_seed, 2))

    capacity = config.get_int("cl", "capacity", 40)
    capacities = [capacity]
    if args.sweep:
        capacities = config.get_int_list("cl", "sweep_capacities")
        if not capacities:
            raise ValidationError("[cl] sweep_capacities is empty")
    ridge_lambda = config.get_float("cl", "ridge_lambda", 1.0)
    ft_epochs = config.get_int("cl", "ft_epochs", 10)
    ft_cfg = None
    if ft_epochs > 0:
        ft_cfg = TrainConfig(
            epochs=ft_epochs,
            lr=config.get_float("cl", "ft_lr", 0.01),
            momentum=config.get_float("cl", "ft_momentum", 0.9),
            weight_decay=config.get_float("cl", "ft_weight_decay", 1e-4),
            batch_size=config.get_int("cl", "ft_batch_size", 16),
            lr_schedule="cosine",
            seed=config.get_int("cl", "ft_seed", run_seed),
        )
    aug_cfg = None
    if config.get_bool("cl", "ft_augment", True):
        aug_cfg = _augment_config(args=args, config=config,
                                  input_width=bundle.input_width, run_seed=run_seed)
    warm_start = config.get_bool("cl", "warm_start", False)

    by_class: dict[str, list] = {}
    for img, label in zip(bundle.train_images, bundle.train_labels):
        by_class.setdefault(label, []).append(img)
    batches = [(label, by_class[label]) for label in sorted(by_class)]

    out = _prepare_out(args, config, run_seed)
    for cap in capacities:
        snapshots, rows = cl_run(
            batches, backend, cap, ridge_lambda=ridge_lambda, fine_tune_cfg=ft_cfg,
            aug_cfg=aug_cfg, test_images=bundle.test_images or None,
            test_labels=bundle.test_labels or None, input_width=bundle.input_width,
            warm_start=warm_start,
        )
        suffix = f"_cap{cap}" if len(capacities) > 1 else ""
        (out / f"cl_steps{suffix}.csv").write_text(cl_rows_to_csv(rows), encoding="utf-8")
        for t, acc_r, acc_f, size in rows:
            acc_r_s = "" if acc_r is None else f" acc_ridge={acc_r!r}"
            acc_f_s = "" if acc_f is None else f" acc_ft={acc_f!r}"
            print(f"capacity={cap} t={t}{acc_r_s}{acc_f_s} buffer={size}")
        final = snapshots[-1]
        save_checkpoint(
            out / f"final_ridge{suffix}.tacm",
            Checkpoint(backend=final.ridge.backend, heads={"classify": final.ridge.head},
                       meta={"task": "classify", "classes": ";".join(final.ridge.classes),
                             "input_width": str(bundle.input_width)}),
        )
        save_checkpoint(
            out / f"final_fine_tuned{suffix}.tacm",
            Checkpoint(backend=final.fine_tuned.backend,
                       heads={"classify": final.fine_tuned.head},
                       meta={"task": "classify",
                             "classes": ";".join(final.fine_tuned.classes),
                             "input_width": str(bundle.input_width)}),
        )
    return 0


def _classifier_from_checkpoint(ckpt):
    from .errors import ValidationError
    from .model import Classifier

    if "classify" not in ckpt.heads:
        raise ValidationError("checkpoint has no classification head")
    classes = tuple(ckpt.meta.get("classes", "").split(";"))
    head = ckpt.heads["classify"]
    if len(classes) != head.out_dim:
        raise ValidationError(
            f"checkpoint lists {len(classes)} classes for a {head.out_dim}-way head"
        )
    width = ckpt.meta.get("input_width")
    return Classifier(ckpt.backend, head, classes,
                      int(width) if width is not None else None)


def cmd_eval(args) -> int:
    from .config import load_config
    from .errors import ValidationError
    from .evaluate import (composition_eval, curve_to_csv, kfold_eval, length_sweep,
                           noise_sweep, ridge_classifier, speed_sweep)
    from .model import load_checkpoint

    config = load_config(args.config)
    run_seed = _run_seed(config, args)
    bundle = _load_bundle(config)
    ckpt = load_checkpoint(args.checkpoint)
    mode = args.mode

    if mode != "kfold" and not bundle.test_images:
        raise ValidationError("dataset has no test split to evaluate")

    curve = None
    if mode == "kfold":
        k = config.get_int("eval", "k", 5)
        images = bundle.train_images + bundle.test_images
        labels = bundle.train_labels + bundle.test_labels
        lam = config.get_float("eval", "ridge_lambda", 1.0)

        def trainer(train_images, train_labels):
            clf = ridge_classifier(ckpt.backend, train_images, train_labels, lam,
                                   bundle.input_width)
            return clf.predict

        report = kfold_eval(images, labels, k, trainer, seed=run_seed,
                            task_id=f"kfold-k{k}")
    elif mode == "composition":
        from .fabric import CONSTITUENTS

        missing = [name for name in CONSTITUENTS if name not in ckpt.heads]
        if missing:
            raise ValidationError(f"checkpoint lacks constituent heads: {missing}")
        heads = [ckpt.heads[name] for name in CONSTITUENTS]
        items = []
        for img, cons in zip(bundle.test_images, bundle.test_cons):
            if cons is None:
                raise ValidationError("test sample without constituent truth")
            items.append((img, cons))
        threshold = config.get_float("eval", "threshold", 0.5)
        report = composition_eval(ckpt.backend, heads, items, threshold)
    else:
        clf = _classifier_from_checkpoint(ckpt)
        images, labels = bundle.test_images, bundle.test_labels
        if mode == "length":
            w = bundle.input_width
            lengths = config.get_int_list("eval", "lengths",
                                          [max(1, w // 8), max(1, w // 4), w // 2, w])
            curve = length_sweep(clf, images, labels, lengths)
        elif mode == "speed":
            factors = config.get_float_list("eval", "speeds", [0.5, 1.0, 2.0, 4.0])
            curve = speed_sweep(clf, images, labels, factors)
        else:
            levels = config.get_float_list("eval", "noise_levels", [0.0, 0.1, 0.2, 0.3, 0.5])
            curve = noise_sweep(clf, images, labels, levels, seed=run_seed)
        from .evaluate import EvalReport

        report = EvalReport(task_id=mode, curves={mode: curve})

    out = _prepare_out(args, config, run_seed)
    if curve is not None:
        (out / f"{mode}_curve.csv").write_text(curve_to_csv(curve), encoding="utf-8")
    (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / "summary.txt").write_text(report.summary_text(), encoding="utf-8")
    print(report.summary_text(), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
