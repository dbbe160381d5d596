import numpy as np
import pytest

from taclearn.errors import ValidationError
from taclearn.prng import Prng
from taclearn.sensor_io import (
    CAMERA_FRAMES,
    SensorSpec,
    SensorStream,
    SyntheticTextureConfig,
    generate_synthetic,
)
from taclearn.tactile_image import (
    NotNormalizedError,
    TactileImage,
    WindowError,
    WrongSensorKindError,
    build_tactile_image,
    camera_frame_image,
    compute_bounds,
    normalize,
    prepare_for_model,
)


def _stream(n, t, seed=0):
    rng = Prng(seed)
    spec = SensorSpec("s", channels=n, sample_rate_hz=100.0, value_range=(-10.0, 10.0))
    return SensorStream(spec=spec, readings=rng.uniform(-5, 5, size=(t, n)))


def test_biotac_like_window_shape():
    stream = _stream(19, 400)
    img = build_tactile_image(stream, 0, 399)
    assert img.data.shape == (19, 400)
    assert img.window == (0, 399)


def test_contactile_like_full_stream_default():
    img = build_tactile_image(_stream(27, 599))
    assert img.data.shape == (27, 599)


def test_single_reading_window():
    stream = _stream(6, 10)
    img = build_tactile_image(stream, 0, 0)
    assert img.data.shape == (6, 1)
    assert np.array_equal(img.data[:, 0], stream.readings[0])


def test_column_fidelity_random_windows():
    stream = _stream(8, 50, seed=4)
    rng = Prng(1)
    for _ in range(20):
        j = rng.randint(50)
        k = j + rng.randint(50 - j)
        img = build_tactile_image(stream, j, k)
        for c in range(k - j + 1):
            assert np.array_equal(img.data[:, c], stream.readings[j + c])


def test_window_bounds_errors():
    stream = _stream(4, 10)
    with pytest.raises(WindowError):
        build_tactile_image(stream, 5, 3)
    with pytest.raises(WindowError):
        build_tactile_image(stream, 0, 10)
    with pytest.raises(WindowError):
        build_tactile_image(stream, -1, 3)


def test_wrong_kind_rejected():
    cam = SensorSpec("cam", channels=12, sample_rate_hz=10.0, kind=CAMERA_FRAMES,
                     frame_h=3, frame_w=4, value_range=(0.0, 1.0))
    stream = SensorStream(spec=cam, readings=np.zeros((2, 12)))
    with pytest.raises(WrongSensorKindError):
        build_tactile_image(stream)
    with pytest.raises(WrongSensorKindError):
        camera_frame_image(_stream(4, 10))


def test_camera_frame_pass_through():
    cam = SensorSpec("cam", channels=12, sample_rate_hz=10.0, kind=CAMERA_FRAMES,
                     frame_h=3, frame_w=4, value_range=(0.0, 1.0))
    readings = np.arange(24, dtype=float).reshape(2, 12)
    stream = SensorStream(spec=cam, readings=readings)
    img = camera_frame_image(stream, 1)
    assert img.data.shape == (3, 4)
    assert img.data[0, 0] == 12.0


def test_normalize_endpoints_midpoint_clamp():
    img = TactileImage(data=np.array([[0.0, 5.0, 10.0, 12.0]]))
    out = normalize(img, 0.0, 10.0)
    assert out.normalized
    assert np.allclose(out.data, [[-1.0, 0.0, 1.0, 1.0]])
    assert out.data.max() <= 1.0 and out.data.min() >= -1.0


def test_normalize_bad_bounds():
    img = TactileImage(data=np.zeros((2, 2)))
    with pytest.raises(ValidationError):
        normalize(img, 3.0, 3.0)


def test_normalize_idempotent():
    rng = Prng(2)
    img = TactileImage(data=rng.uniform(-4, 9, size=(7, 11)))
    once = normalize(img, -4.0, 9.0)
    twice = normalize(once, -1.0, 1.0)
    assert np.array_equal(once.data, twice.data)


def test_normalize_monotone():
    rng = Prng(3)
    a = rng.uniform(-2, 2, size=(5, 5))
    b = a + rng.uniform(0, 1, size=(5, 5))
    na = normalize(TactileImage(data=a), -2.0, 3.0)
    nb = normalize(TactileImage(data=b), -2.0, 3.0)
    assert (na.data <= nb.data).all()


def test_prepare_replicates_channels():
    img = normalize(TactileImage(data=Prng(5).uniform(-1, 1, size=(19, 40))), -1.0, 1.0)
    prepped = prepare_for_model(img)
    assert prepped.channels == 3
    assert prepped.data.shape == (3, 19, 40)
    assert np.array_equal(prepped.data[0], prepped.data[2])
    assert np.array_equal(prepped.data[0], img.data)


def test_prepare_three_channel_pass_through():
    data = np.clip(Prng(6).uniform(-1, 1, size=(3, 4, 5)), -1, 1)
    img = TactileImage(data=data, channels=3, normalized=True)
    assert prepare_for_model(img) is img


def test_prepare_requires_normalization():
    img = TactileImage(data=np.full((2, 3), 7.0))
    with pytest.raises(NotNormalizedError):
        prepare_for_model(img)


def test_compute_bounds_from_streams():
    cfg = SyntheticTextureConfig(num_classes=2, channels=4, stream_length=32, seed=5)
    streams = [generate_synthetic(cfg, c, i) for c in range(2) for i in range(3)]
    lo, hi = compute_bounds(streams)
    assert lo < hi
    for s in streams:
        assert lo <= s.readings.min() and s.readings.max() <= hi


def test_image_binary_round_trip(tmp_path):
    from taclearn.tactile_image import load_image, write_image

    data = Prng(9).uniform(-1, 1, size=(7, 13)).astype(np.float32).astype(np.float64)
    img = normalize(TactileImage(data=data), -1.0, 1.0)
    p = tmp_path / "img.taci"
    write_image(p, img)
    loaded = load_image(p)
    assert loaded.normalized
    assert np.array_equal(loaded.data, img.data)
    # an image file is not a valid sensor stream
    from taclearn.sensor_io import MalformedStreamError, SensorSpec, load_stream

    spec = SensorSpec("x", channels=13, sample_rate_hz=1.0)
    with pytest.raises(MalformedStreamError):
        load_stream(p, spec)


def test_image_binary_rejects_garbage(tmp_path):
    from taclearn.tactile_image import load_image

    p = tmp_path / "junk.taci"
    p.write_bytes(b"TACLJUNK" + b"\x00" * 16)
    with pytest.raises(ValidationError, match="not a taclearn image"):
        load_image(p)
