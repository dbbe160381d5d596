"""Tactile-image augmentations.

Four families, each a physically meaningful perturbation of the collection
process: temporal flipping (motion direction reversed), temporal resizing
(motion speed), temporal cropping (motion duration) and jitter (sensor noise
and drift). A data-axis flip is also provided for sensors whose channel
layout is symmetric, but the default randomized pipeline flips time.

All ops are pure: they never mutate their input and consume randomness only
from an explicitly passed generator, so replaying the generator replays the
augmentation stream. `random_augment` applies, in a fixed draw order:
flip (one uniform draw), resize (one factor draw), crop (one length and one
start draw), jitter (one bulk draw when the level is positive), then a final
resize to the configured output width.

Augmented images drop the `window` metadata since their columns no longer
map to raw reading indices. Jitter may push values outside [-1, 1] by up to
its level; nothing re-clamps, because the noise-robustness suites measure
exactly that excursion.

Camera frames have no privileged time axis: the randomized pipeline resizes
both axes by the drawn factor and crops a square window (one extra start
draw for the vertical offset), then restores the native frame size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .prng import Prng
from .sensor_io import CAMERA_FRAMES
from .tactile_image import TactileImage


@dataclass(frozen=True)
class AugmentConfig:
    flip_prob: float = 0.5
    resize_factor_range: tuple[float, float] = (1.0, 1.0)
    crop_len_range: tuple[int, int] = (1, 2**31)
    jitter_level: float = 0.0
    seed: int = 0
    # Temporal width emitted by random_augment; None keeps the input width.
    output_width: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValidationError(f"flip_prob must be in [0, 1], got {self.flip_prob}")
        lo, hi = self.resize_factor_range
        if not (0.0 < lo <= hi):
            raise ValidationError(
                f"resize factors must satisfy 0 < min <= max, got {self.resize_factor_range}"
            )
        clo, chi = self.crop_len_range
        if not (1 <= clo <= chi):
            raise ValidationError(
                f"crop lengths must satisfy 1 <= min <= max, got {self.crop_len_range}"
            )
        if self.jitter_level < 0:
            raise ValidationError(f"jitter_level must be >= 0, got {self.jitter_level}")
        if self.output_width is not None and self.output_width < 1:
            raise ValidationError(f"output_width must be >= 1, got {self.output_width}")


def flip_temporal(image: TactileImage) -> TactileImage:
    """Mirror the temporal axis (reverses the direction of motion)."""
    return image.with_data(image.data[..., ::-1].copy(), window=None)


def flip_channels(image: TactileImage) -> TactileImage:
    """Mirror the data axis; optional, for symmetric channel layouts."""
    return image.with_data(np.flip(image.data, axis=-2).copy(), window=None)


def _resample_axis(data: np.ndarray, new_len: int, axis: int) -> np.ndarray:
    # Linear interpolation with endpoints pinned: output position i samples
    # input position i*(W-1)/(W'-1), so ramps stay ramps and W'=W is exact.
    old_len = data.shape[axis]
    if new_len == old_len:
        return data.copy()
    if new_len == 1:
        pos = np.array([(old_len - 1) / 2.0])
    else:
        pos = np.arange(new_len) * ((old_len - 1) / (new_len - 1))
    left = np.minimum(pos.astype(np.int64), old_len - 1)
    right = np.minimum(left + 1, old_len - 1)
    frac = pos - left
    moved = np.moveaxis(data, axis, -1)
    out = moved[..., left] * (1.0 - frac) + moved[..., right] * frac
    return np.moveaxis(out, -1, axis)


def resize_temporal(image: TactileImage, factor: float) -> TactileImage:
    """Rescale the temporal axis by `factor` with linear interpolation."""
    if factor <= 0:
        raise ValidationError(f"resize factor must be positive, got {factor}")
    new_w = int(np.floor(image.width * factor + 0.5))
    if new_w < 1:
        raise ValidationError(f"resize factor {factor} collapses width {image.width} to zero")
    return resize_to_width(image, new_w)


def resize_to_width(image: TactileImage, width: int) -> TactileImage:
    if width < 1:
        raise ValidationError(f"target width must be >= 1, got {width}")
    if width == image.width:
        return image
    return image.with_data(_resample_axis(image.data, width, axis=-1), window=None)


def resize_frame(image: TactileImage, height: int, width: int) -> TactileImage:
    """Resize both spatial axes (camera frames)."""
    if height < 1 or width < 1:
        raise ValidationError(f"target size must be >= 1x1, got {height}x{width}")
    if (height, width) == (image.height, image.width):
        return image
    data = _resample_axis(image.data, height, axis=-2)
    data = _resample_axis(data, width, axis=-1)
    return image.with_data(data, window=None)


def crop_temporal(image: TactileImage, start: int, length: int) -> TactileImage:
    """Keep columns [start, start+length)."""
    if length < 1:
        raise ValidationError(f"crop length must be >= 1, got {length}")
    if start < 0 or start + length > image.width:
        raise ValidationError(
            f"crop [{start}, {start + length}) out of range for width {image.width}"
        )
    return image.with_data(image.data[..., start : start + length].copy(), window=None)


def crop_rows(image: TactileImage, start: int, length: int) -> TactileImage:
    """Keep rows [start, start+length) along the data axis."""
    if length < 1:
        raise ValidationError(f"crop length must be >= 1, got {length}")
    if start < 0 or start + length > image.height:
        raise ValidationError(
            f"row crop [{start}, {start + length}) out of range for height {image.height}"
        )
    moved = np.moveaxis(image.data, -2, 0)
    return image.with_data(np.moveaxis(moved[start : start + length], 0, -2).copy(), window=None)


def jitter(image: TactileImage, level: float, rng: Prng) -> TactileImage:
    """Add i.i.d. uniform noise on [-level, +level] to every entry."""
    if level < 0:
        raise ValidationError(f"jitter level must be >= 0, got {level}")
    if level == 0:
        return image
    noise = rng.uniform(-level, level, size=image.data.shape)
    return image.with_data(image.data + noise, window=None)


def random_augment(image: TactileImage, cfg: AugmentConfig, rng: Prng) -> TactileImage:
    """Randomized flip / resize / crop / jitter, then resize to the output width."""
    is_camera = image.source is not None and image.source.kind == CAMERA_FRAMES
    out_h = image.height
    out_w = cfg.output_width if cfg.output_width is not None else image.width

    if rng.random() < cfg.flip_prob:
        image = flip_temporal(image)

    factor = rng.uniform(*cfg.resize_factor_range)
    if is_camera:
        new_h = max(1, int(np.floor(image.height * factor + 0.5)))
        new_w = max(1, int(np.floor(image.width * factor + 0.5)))
        image = resize_frame(image, new_h, new_w)
    else:
        image = resize_temporal(image, factor)

    lo, hi = cfg.crop_len_range
    hi = min(hi, image.width)
    if image.width < lo:
        raise ValidationError(
            f"image width {image.width} after resize is below minimum crop length {lo}"
        )
    length = lo + rng.randint(hi - lo + 1)
    start = rng.randint(image.width - length + 1)
    image = crop_temporal(image, start, length)
    if is_camera:
        row_len = min(length, image.height)
        row_start = rng.randint(image.height - row_len + 1)
        image = crop_rows(image, row_start, row_len)

    image = jitter(image, cfg.jitter_level, rng)

    if is_camera:
        return resize_frame(image, out_h, out_w)
    return resize_to_width(image, out_w)
