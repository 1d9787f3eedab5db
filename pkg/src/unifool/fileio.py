"""Binary artifact formats.

Three container formats, all little-endian:

DUAP (perturbation)
    magic ``DUAP`` | version u16 = 1 | H u32 | W u32 | C u32 |
    budget f64 | H*W*C entries f32, row-major channel-last

DUWM (victim weights)
    magic ``DUWM`` | version u16 = 1 | layer count u32 | per layer:
    rows u32 | cols u32 | rows*cols f32 weights row-major | rows f32 biases

DUDS (labeled dataset)
    magic ``DUDS`` | version u16 = 1 | N u32 | H u32 | W u32 | C u32 |
    N labels u32 | N*H*W*C pixels f32 in [0, 1], row-major channel-last

Readers reject bad magic, unsupported versions, truncation and trailing
garbage, always naming the offending byte offset.
"""

from __future__ import annotations

import struct

import numpy as np

from .tensors import Perturbation

PERTURBATION_MAGIC = b"DUAP"
WEIGHTS_MAGIC = b"DUWM"
DATASET_MAGIC = b"DUDS"
FORMAT_VERSION = 1


class FormatError(ValueError):
    """A binary artifact failed to parse; the message names the byte offset."""


class _Reader:
    def __init__(self, buf: bytes, path: str):
        self.buf = buf
        self.path = path
        self.pos = 0

    def fail(self, msg: str) -> "FormatError":
        return FormatError(f"{self.path}: {msg} at byte offset {self.pos}")

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(
                f"{self.path}: truncated while reading {what} at byte offset {self.pos} "
                f"(need {n} bytes, have {len(self.buf) - self.pos})"
            )
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def magic(self, expected: bytes) -> None:
        got = self.take(4, "magic")
        if got != expected:
            raise FormatError(f"{self.path}: bad magic {got!r} at byte offset 0, expected {expected!r}")

    def version(self) -> None:
        at = self.pos
        (v,) = struct.unpack("<H", self.take(2, "format version"))
        if v != FORMAT_VERSION:
            raise FormatError(f"{self.path}: unsupported format version {v} at byte offset {at}")

    def u32(self, what: str) -> int:
        (v,) = struct.unpack("<I", self.take(4, what))
        return v

    def f64(self, what: str) -> float:
        (v,) = struct.unpack("<d", self.take(8, what))
        return v

    def f32_array(self, count: int, what: str) -> np.ndarray:
        raw = self.take(4 * count, what)
        return np.frombuffer(raw, dtype="<f4").copy()

    def u32_array(self, count: int, what: str) -> np.ndarray:
        raw = self.take(4 * count, what)
        return np.frombuffer(raw, dtype="<u4").copy()

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise self.fail(f"trailing data ({len(self.buf) - self.pos} unexpected bytes)")


def _positive_dim(reader: _Reader, what: str) -> int:
    at = reader.pos
    v = reader.u32(what)
    if v < 1:
        raise FormatError(f"{reader.path}: {what} must be positive, got {v} at byte offset {at}")
    return v


def save_perturbation(pert: Perturbation, path: str) -> None:
    h, w, c = pert.shape
    with open(path, "wb") as f:
        f.write(PERTURBATION_MAGIC)
        f.write(struct.pack("<HIII", FORMAT_VERSION, h, w, c))
        f.write(struct.pack("<d", pert.budget))
        f.write(np.ascontiguousarray(pert.data, dtype="<f4").tobytes())


def load_perturbation(path: str) -> Perturbation:
    with open(path, "rb") as f:
        r = _Reader(f.read(), path)
    r.magic(PERTURBATION_MAGIC)
    r.version()
    h = _positive_dim(r, "height")
    w = _positive_dim(r, "width")
    c = _positive_dim(r, "channels")
    at = r.pos
    budget = r.f64("budget")
    if not np.isfinite(budget) or budget < 0.0:
        raise FormatError(f"{path}: budget must be finite and non-negative, got {budget} at byte offset {at}")
    data = r.f32_array(h * w * c, "perturbation entries").astype(np.float64).reshape(h, w, c)
    r.done()
    return Perturbation(data, budget)


def save_weights(layers: list[tuple[np.ndarray, np.ndarray]], path: str) -> None:
    """Write affine layers as (weights (rows, cols), biases (rows,)) pairs."""
    with open(path, "wb") as f:
        f.write(WEIGHTS_MAGIC)
        f.write(struct.pack("<HI", FORMAT_VERSION, len(layers)))
        for weights, biases in layers:
            rows, cols = weights.shape
            if biases.shape != (rows,):
                raise ValueError(f"bias length {biases.shape} does not match {rows} output rows")
            f.write(struct.pack("<II", rows, cols))
            f.write(np.ascontiguousarray(weights, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(biases, dtype="<f4").tobytes())


def load_weights(path: str) -> list[tuple[np.ndarray, np.ndarray]]:
    with open(path, "rb") as f:
        r = _Reader(f.read(), path)
    r.magic(WEIGHTS_MAGIC)
    r.version()
    at = r.pos
    n_layers = r.u32("layer count")
    if n_layers < 1:
        raise FormatError(f"{path}: layer count must be positive, got {n_layers} at byte offset {at}")
    layers = []
    prev_rows = None
    for i in range(n_layers):
        at = r.pos
        rows = _positive_dim(r, f"layer {i} rows")
        cols = _positive_dim(r, f"layer {i} cols")
        if prev_rows is not None and cols != prev_rows:
            raise FormatError(
                f"{path}: layer {i} expects {cols} inputs but previous layer emits {prev_rows} "
                f"at byte offset {at}"
            )
        weights = r.f32_array(rows * cols, f"layer {i} weights").astype(np.float32).reshape(rows, cols)
        biases = r.f32_array(rows, f"layer {i} biases").astype(np.float32)
        layers.append((weights, biases))
        prev_rows = rows
    r.done()
    return layers


def save_dataset_arrays(images: np.ndarray, labels: np.ndarray, path: str) -> None:
    """Write an (N, H, W, C) float image stack with per-image u32 labels."""
    n, h, w, c = images.shape
    if labels.shape != (n,):
        raise ValueError(f"label count {labels.shape} does not match image count {n}")
    with open(path, "wb") as f:
        f.write(DATASET_MAGIC)
        f.write(struct.pack("<HIIII", FORMAT_VERSION, n, h, w, c))
        f.write(np.ascontiguousarray(labels, dtype="<u4").tobytes())
        f.write(np.ascontiguousarray(images, dtype="<f4").tobytes())


def load_dataset_arrays(path: str) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as f:
        r = _Reader(f.read(), path)
    r.magic(DATASET_MAGIC)
    r.version()
    n = _positive_dim(r, "image count")
    h = _positive_dim(r, "height")
    w = _positive_dim(r, "width")
    c = _positive_dim(r, "channels")
    labels = r.u32_array(n, "labels").astype(np.int64)
    at = r.pos
    images = r.f32_array(n * h * w * c, "pixels").astype(np.float64).reshape(n, h, w, c)
    if images.min() < 0.0 or images.max() > 1.0:
        raise FormatError(f"{path}: pixels must lie in [0, 1] (data from byte offset {at})")
    r.done()
    return images, labels
