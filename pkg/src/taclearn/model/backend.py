"""Convolutional embedding backend and checkpoint serialization.

The backend is a stack of stride-2 conv+ReLU blocks followed by global
average pooling, so any input above the minimum spatial size maps to a
fixed-length embedding. It stands in for a large pretrained vision encoder:
train it once on one dataset, then reuse the checkpoint as the frozen
embedding model for transfer and continual-learning experiments.

Checkpoints are a `TACM` file: magic, u32 version, u32 header length, a
UTF-8 text header describing the architecture / heads / metadata, then all
parameters as little-endian float32 in header order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from ..prng import Prng
from ..tactile_image import TactileImage
from . import layers

_CKPT_MAGIC = b"TACM"
_CKPT_VERSION = 1

DEFAULT_WIDTHS = (16, 32, 64, 128)
MIN_INPUT = 8  # below this the stride-2 stack sees mostly padding


@dataclass
class LinearHead:
    """Dense classification head: logits = emb @ weights + bias."""

    weights: np.ndarray  # (d, C)
    bias: np.ndarray  # (C,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[1],):
            raise ValidationError(
                f"head shapes disagree: weights {self.weights.shape}, bias {self.bias.shape}"
            )
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise ValidationError("head parameters must be finite")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[1]

    def logits(self, emb: np.ndarray) -> np.ndarray:
        if emb.shape[-1] != self.in_dim:
            raise ValidationError(
                f"embedding dim {emb.shape[-1]} does not match head input {self.in_dim}"
            )
        return layers.linear_forward(np.atleast_2d(emb), self.weights, self.bias)

    def clone(self) -> "LinearHead":
        return LinearHead(self.weights.copy(), self.bias.copy())

    @classmethod
    def zeros(cls, in_dim: int, out_dim: int) -> "LinearHead":
        return cls(np.zeros((in_dim, out_dim)), np.zeros(out_dim))


class ConvNetBackend:
    """Size-agnostic conv encoder; embed(x) has fixed length for any valid x."""

    def __init__(self, in_channels: int = 3, widths=DEFAULT_WIDTHS, kernel: int = 3,
                 stride: int = 2, seed: int = 0):
        if not widths:
            raise ValidationError("backend needs at least one conv block")
        self.in_channels = in_channels
        self.widths = tuple(int(w) for w in widths)
        self.kernel = kernel
        self.stride = stride
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        rng = Prng(seed).spawn(0)
        c_in = in_channels
        for i, c_out in enumerate(self.widths):
            fan_in = c_in * kernel * kernel
            limit = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-limit, limit, size=(c_out, c_in, kernel, kernel))
            self.weights.append(np.asarray(w))
            self.biases.append(np.zeros(c_out))
            c_in = c_out

    @property
    def embed_dim(self) -> int:
        return self.widths[-1]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def num_params(self) -> int:
        return sum(p.size for p in self.params())

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def set_flat(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.num_params(),):
            raise ValidationError(
                f"flat parameter vector has {vec.size} entries, expected {self.num_params()}"
            )
        offset = 0
        for p in self.params():
            p[...] = vec[offset : offset + p.size].reshape(p.shape)
            offset += p.size

    def clone(self) -> "ConvNetBackend":
        other = ConvNetBackend(self.in_channels, self.widths, self.kernel, self.stride)
        other.set_flat(self.get_flat())
        return other

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 3:
            x = x[None]
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValidationError(
                f"expected (N, {self.in_channels}, H, W) input, got shape {x.shape}"
            )
        if x.shape[2] < MIN_INPUT or x.shape[3] < MIN_INPUT:
            raise ValidationError(
                f"input {x.shape[2]}x{x.shape[3]} below minimum {MIN_INPUT}x{MIN_INPUT}"
            )
        if not np.isfinite(x).all():
            raise ValidationError("backend input contains non-finite values")
        return x

    def forward(self, x: np.ndarray):
        """Returns (embeddings (N, d), cache for backward)."""
        x = self._check_input(x)
        caches = []
        h = x
        for w, b in zip(self.weights, self.biases):
            h, conv_cache = layers.conv_forward(h, w, b, self.stride, pad=self.kernel // 2)
            h, relu_cache = layers.relu_forward(h)
            caches.append((conv_cache, relu_cache))
        emb, gap_shape = layers.gap_forward(h)
        return emb, (caches, gap_shape)

    def backward(self, demb: np.ndarray, cache):
        """Gradients for every parameter, aligned with params()."""
        caches, gap_shape = cache
        dh = layers.gap_backward(demb, gap_shape)
        grads: list[np.ndarray] = []
        for conv_cache, relu_cache in reversed(caches):
            dh = layers.relu_backward(dh, relu_cache)
            dh, dw, db = layers.conv_backward(dh, conv_cache)
            grads.append(db)
            grads.append(dw)
        grads.reverse()
        return grads

    def embed_batch(self, x: np.ndarray) -> np.ndarray:
        emb, _ = self.forward(x)
        return emb

    def embed_image(self, image: TactileImage) -> np.ndarray:
        """Embedding of one channel-prepared tactile image."""
        if image.channels != self.in_channels:
            raise ValidationError(
                f"image has {image.channels} channels; prepare_for_model first"
            )
        return self.embed_batch(image.data[None])[0]

    def arch_header(self) -> str:
        widths = ",".join(str(w) for w in self.widths)
        return f"backend in={self.in_channels} kernel={self.kernel} stride={self.stride} widths={widths}"

    @classmethod
    def from_arch_header(cls, line: str) -> "ConvNetBackend":
        try:
            fields = dict(part.split("=", 1) for part in line.split()[1:])
            widths = tuple(int(w) for w in fields["widths"].split(","))
            return cls(
                in_channels=int(fields["in"]),
                widths=widths,
                kernel=int(fields["kernel"]),
                stride=int(fields["stride"]),
            )
        except (KeyError, ValueError, IndexError):
            raise ValidationError(f"bad backend descriptor: {line!r}") from None


@dataclass
class Checkpoint:
    """A backend plus named heads and free-form string metadata."""

    backend: ConvNetBackend
    heads: dict[str, LinearHead] = field(default_factory=dict)
    meta: dict[str, str] = field(default_factory=dict)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    header_lines = [ckpt.backend.arch_header()]
    flat_parts = [ckpt.backend.get_flat()]
    for name, head in ckpt.heads.items():
        if any(ch.isspace() for ch in name):
            raise ValidationError(f"head name may not contain whitespace: {name!r}")
        header_lines.append(f"head {name} {head.in_dim} {head.out_dim}")
        flat_parts.append(head.weights.ravel())
        flat_parts.append(head.bias.ravel())
    for key, value in ckpt.meta.items():
        if any(ch.isspace() for ch in key) or "\n" in value:
            raise ValidationError(f"bad meta entry {key!r}")
        header_lines.append(f"meta {key} {value}")
    header = ("\n".join(header_lines) + "\n").encode("utf-8")
    flat = np.concatenate(flat_parts).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", _CKPT_MAGIC, _CKPT_VERSION, len(header)))
        fh.write(header)
        fh.write(struct.pack("<I", flat.size))
        fh.write(flat.tobytes())


def load_checkpoint(path) -> Checkpoint:
    if not Path(path).exists():
        raise ValidationError(f"checkpoint not found: {path}")
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != _CKPT_MAGIC:
        raise ValidationError(f"{path}: not a taclearn checkpoint")
    _, version, header_len = struct.unpack("<4sII", raw[:12])
    if version != _CKPT_VERSION:
        raise ValidationError(f"{path}: unsupported checkpoint version {version}")
    header = raw[12 : 12 + header_len].decode("utf-8").splitlines()
    offset = 12 + header_len
    (n_params,) = struct.unpack("<I", raw[offset : offset + 4])
    flat = np.frombuffer(raw, dtype="<f4", offset=offset + 4, count=n_params).astype(np.float64)

    backend = None
    head_specs: list[tuple[str, int, int]] = []
    meta: dict[str, str] = {}
    for line in header:
        if not line.strip():
            continue
        kind = line.split()[0]
        if kind == "backend":
            backend = ConvNetBackend.from_arch_header(line)
        elif kind == "head":
            _, name, d, c = line.split()
            head_specs.append((name, int(d), int(c)))
        elif kind == "meta":
            _, key, value = line.split(" ", 2)
            meta[key] = value
        else:
            raise ValidationError(f"{path}: unknown header line {line!r}")
    if backend is None:
        raise ValidationError(f"{path}: checkpoint has no backend descriptor")

    pos = backend.num_params()
    if flat.size < pos:
        raise ValidationError(f"{path}: parameter vector too short")
    backend.set_flat(flat[:pos])
    heads: dict[str, LinearHead] = {}
    for name, d, c in head_specs:
        w = flat[pos : pos + d * c].reshape(d, c)
        pos += d * c
        b = flat[pos : pos + c]
        pos += c
        heads[name] = LinearHead(w.copy(), b.copy())
    if pos != flat.size:
        raise ValidationError(f"{path}: {flat.size - pos} trailing parameters")
    return Checkpoint(backend=backend, heads=heads, meta=meta)
