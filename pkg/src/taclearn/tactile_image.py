"""Unified tactile-image construction.

Vector-stream sensors become 2-D images by stacking consecutive readings as
columns (channel axis x time axis); camera sensors pass their frames through
natively. Images are normalized to [-1, 1] with dataset-level calibration
bounds, then channel-replicated to the three-plane layout the models expect.

Multi-modal sensors keep whatever channel order the manifest delivered; the
loader does not reorder modalities.

Single-plane images serialize to the stream binary layout with an ``IMG1``
sub-magic in place of the version field: ``TACL`` + ``IMG1`` + u32 flags
(bit 0: normalized) + u32 H + u32 W + H*W little-endian float32 values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .sensor_io import CAMERA_FRAMES, VECTOR_STREAM, SensorSpec, SensorStream

MODEL_CHANNELS = 3

_IMG_MAGIC = b"TACL"
_IMG_SUBMAGIC = b"IMG1"


class WindowError(ValidationError):
    """Requested reading window falls outside the stream."""


class WrongSensorKindError(ValidationError):
    """Operation applied to an incompatible sensor kind."""


class NotNormalizedError(ValidationError):
    """Image must be normalized before this step."""


@dataclass(frozen=True)
class TactileImage:
    """2-D tactile input; `data` is (H, W), or (channels, H, W) once replicated.

    `normalized` records that the entries were calibrated into [-1, 1].
    Later additive noise (the test-time jitter suites) may push values
    slightly outside that range without invalidating the calibration, so
    downstream consumers trust the flag rather than re-checking bounds.
    """

    data: np.ndarray
    channels: int = 1
    source: SensorSpec | None = None
    window: tuple[int, int] | None = None
    normalized: bool = False

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        if self.channels == 1:
            if data.ndim != 2:
                raise ValidationError(f"single-channel image must be 2-D, got {data.shape}")
        else:
            if data.ndim != 3 or data.shape[0] != self.channels:
                raise ValidationError(
                    f"{self.channels}-channel image must be ({self.channels}, H, W), "
                    f"got {data.shape}"
                )
        if self.height < 1 or self.width < 1:
            raise ValidationError(f"image must be at least 1x1, got {data.shape}")
        if not np.isfinite(data).all():
            raise ValidationError("image contains non-finite values")
        data.setflags(write=False)

    @property
    def height(self) -> int:
        return self.data.shape[-2]

    @property
    def width(self) -> int:
        return self.data.shape[-1]

    def with_data(self, data: np.ndarray, **changes) -> "TactileImage":
        return replace(self, data=data, **changes)


def build_tactile_image(stream: SensorStream, j: int | None = None, k: int | None = None) -> TactileImage:
    """Stack readings j..k (inclusive) as columns; defaults to the full stream."""
    if stream.spec.kind != VECTOR_STREAM:
        raise WrongSensorKindError(
            f"build_tactile_image needs a vector stream, got {stream.spec.kind}"
        )
    t = stream.length
    if j is None:
        j = 0
    if k is None:
        k = t - 1
    if not (0 <= j <= k < t):
        raise WindowError(f"window [{j}, {k}] invalid for stream of length {t}")
    data = stream.readings[j : k + 1].T.copy()
    return TactileImage(data=data, source=stream.spec, window=(j, k))


def camera_frame_image(stream: SensorStream, index: int = 0) -> TactileImage:
    """One camera reading reshaped to its native frame."""
    spec = stream.spec
    if spec.kind != CAMERA_FRAMES:
        raise WrongSensorKindError(f"camera_frame_image needs camera frames, got {spec.kind}")
    if not 0 <= index < stream.length:
        raise WindowError(f"frame index {index} invalid for stream of length {stream.length}")
    data = stream.readings[index].reshape(spec.frame_h, spec.frame_w)
    return TactileImage(data=data, source=spec, window=(index, index))


def normalize(image: TactileImage, lo: float, hi: float) -> TactileImage:
    """Affine map [lo, hi] -> [-1, 1]; out-of-range values clamp to the ends."""
    if not lo < hi:
        raise ValidationError(f"normalization bounds need lo < hi, got ({lo}, {hi})")
    if lo == -1.0 and hi == 1.0:
        # The map is the identity; evaluating the affine form would only add
        # rounding, which would break normalize's idempotence.
        data = np.clip(image.data, -1.0, 1.0)
    else:
        scale = 2.0 / (hi - lo)
        data = np.clip((image.data - lo) * scale - 1.0, -1.0, 1.0)
    return image.with_data(data, normalized=True)


def prepare_for_model(image: TactileImage) -> TactileImage:
    """Replicate the single plane three times; 3-channel input passes through."""
    if not image.normalized:
        raise NotNormalizedError(
            "image must be normalized to [-1, 1] before model preparation"
        )
    if image.channels == MODEL_CHANNELS:
        return image
    if image.channels != 1:
        raise ValidationError(f"cannot prepare an image with {image.channels} channels")
    data = np.repeat(image.data[None, :, :], MODEL_CHANNELS, axis=0)
    return image.with_data(data, channels=MODEL_CHANNELS)


def compute_bounds(streams) -> tuple[float, float]:
    """Dataset-level calibration bounds (min/max over all training readings)."""
    streams = list(streams)
    if not streams:
        raise ValidationError("cannot compute bounds from an empty dataset")
    lo = min(float(s.readings.min()) for s in streams)
    hi = max(float(s.readings.max()) for s in streams)
    if not lo < hi:
        raise ValidationError(f"degenerate data: min == max == {lo}")
    return lo, hi


def image_bounds(images) -> tuple[float, float]:
    """Same as compute_bounds but over already-built images."""
    images = list(images)
    if not images:
        raise ValidationError("cannot compute bounds from an empty dataset")
    lo = min(float(im.data.min()) for im in images)
    hi = max(float(im.data.max()) for im in images)
    if not lo < hi:
        raise ValidationError(f"degenerate data: min == max == {lo}")
    return lo, hi


def write_image(path, image: TactileImage) -> None:
    """Serialize a single-plane image; values quantize to float32."""
    if image.channels != 1:
        raise ValidationError("only single-plane images serialize; save before replication")
    flags = 1 if image.normalized else 0
    header = struct.pack(
        "<4s4sIII", _IMG_MAGIC, _IMG_SUBMAGIC, flags, image.height, image.width
    )
    Path(path).write_bytes(header + image.data.astype("<f4").tobytes())


def load_image(path) -> TactileImage:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"image file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < 20 or raw[:4] != _IMG_MAGIC or raw[4:8] != _IMG_SUBMAGIC:
        raise ValidationError(f"{path}: not a taclearn image file")
    flags, h, w = struct.unpack("<III", raw[8:20])
    if len(raw) != 20 + 4 * h * w:
        raise ValidationError(f"{path}: truncated image payload")
    data = np.frombuffer(raw, dtype="<f4", offset=20).astype(np.float64).reshape(h, w)
    return TactileImage(data=data, normalized=bool(flags & 1))
