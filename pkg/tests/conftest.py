"""Shared fixtures: synthetic datasets and a session-wide pretrained backend.

The pretrained backend plays the role of the transferable embedding model:
it is trained once per session on its own synthetic task (different seed and
class count from every downstream experiment) and then used frozen wherever
a fixed representation is required.
"""

import pytest

from taclearn.augment import AugmentConfig
from taclearn.model import ConvNetBackend, TrainConfig, train_supervised
from taclearn.sensor_io import SyntheticTextureConfig, generate_synthetic
from taclearn.tactile_image import build_tactile_image, compute_bounds, normalize


def synth_images(num_classes=5, per_class=10, channels=12, length=64, noise=0.05,
                 seed=0, start_index=0, bounds=None):
    """Labeled normalized tactile images from the synthetic generator.

    Returns (images, labels, bounds). Pass `bounds` to reuse calibration
    computed on a training split.
    """
    cfg = SyntheticTextureConfig(
        num_classes=num_classes,
        channels=channels,
        stream_length=length,
        noise_floor=noise,
        seed=seed,
    )
    streams = [
        generate_synthetic(cfg, c, start_index + i)
        for c in range(num_classes)
        for i in range(per_class)
    ]
    if bounds is None:
        bounds = compute_bounds(streams)
    images = [normalize(build_tactile_image(s), *bounds) for s in streams]
    labels = [s.label for s in streams]
    return images, labels, bounds


@pytest.fixture(scope="session")
def pretrained_backend():
    """Backend trained on a disjoint 10-class synthetic task, then frozen.

    Light augmentation during pretraining makes the representation transfer
    well enough that a frozen-feature ridge classifier clears 95% on unseen
    5-class tasks.
    """
    images, labels, _ = synth_images(num_classes=10, per_class=40, seed=777)
    aug = AugmentConfig(flip_prob=0.5, resize_factor_range=(0.8, 1.25),
                        crop_len_range=(32, 64), jitter_level=0.2, seed=2,
                        output_width=64)
    cfg = TrainConfig(epochs=60, lr=0.01, momentum=0.9, weight_decay=1e-4,
                      batch_size=16, lr_schedule="cosine", seed=777)
    backend, _, _ = train_supervised(list(zip(images, labels)), cfg, aug)
    return backend


@pytest.fixture(scope="session")
def random_backend():
    return ConvNetBackend(seed=4242)


@pytest.fixture
def tiny_dataset():
    images, labels, _ = synth_images(num_classes=3, per_class=8, channels=10,
                                     length=32, seed=11)
    return list(zip(images, labels))
