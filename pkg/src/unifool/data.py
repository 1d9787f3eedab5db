"""Dataset ingestion: IDX pairs, the native labeled container, and a toy generator.

A data source is named by a spec string:

    idx:IMAGES_PATH:LABELS_PATH      standard big-endian IDX image/label pair
    dutensor:PATH                    native labeled container (DUDS)
    toy:CLASSESxHxWxC:COUNT:SEED     deterministic synthetic blob/stripe set
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import fileio
from .fileio import FormatError
from .tensors import ImageTensor

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

TOY_NOISE_SIGMA = 0.08
TOY_CONTRAST = 0.5


@dataclass(eq=False)
class Dataset:
    """Aligned images and integer labels from one source."""

    images: list[ImageTensor]
    labels: list[int]
    source: str

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.labels)} labels for {len(self.images)} images")
        if self.images:
            shape = self.images[0].data.shape
            for i, img in enumerate(self.images):
                if img.data.shape != shape:
                    raise ValueError(f"image {i} has shape {img.data.shape}, expected {shape}")
        for i, y in enumerate(self.labels):
            if y < 0:
                raise ValueError(f"label {y} at index {i} is negative")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.images[0].data.shape


def _from_arrays(images: np.ndarray, labels: np.ndarray, source: str) -> Dataset:
    return Dataset(
        images=[ImageTensor(images[i]) for i in range(len(images))],
        labels=[int(v) for v in labels],
        source=source,
    )


def load_idx(images_path: str, labels_path: str) -> Dataset:
    """Read a standard IDX image/label file pair, scaling pixels to [0, 1]."""
    with open(images_path, "rb") as f:
        img_buf = f.read()
    if len(img_buf) < 16:
        raise FormatError(f"{images_path}: truncated header at byte offset {len(img_buf)} (need 16 bytes)")
    magic, count, rows, cols = struct.unpack(">IIII", img_buf[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise FormatError(
            f"{images_path}: bad magic 0x{magic:08x} at byte offset 0, expected 0x{IDX_IMAGE_MAGIC:08x}"
        )
    need = count * rows * cols
    if len(img_buf) - 16 != need:
        raise FormatError(
            f"{images_path}: pixel payload is {len(img_buf) - 16} bytes at byte offset 16, expected {need}"
        )
    pixels = np.frombuffer(img_buf, dtype=np.uint8, offset=16).reshape(count, rows, cols, 1)

    with open(labels_path, "rb") as f:
        lbl_buf = f.read()
    if len(lbl_buf) < 8:
        raise FormatError(f"{labels_path}: truncated header at byte offset {len(lbl_buf)} (need 8 bytes)")
    magic, lbl_count = struct.unpack(">II", lbl_buf[:8])
    if magic != IDX_LABEL_MAGIC:
        raise FormatError(
            f"{labels_path}: bad magic 0x{magic:08x} at byte offset 0, expected 0x{IDX_LABEL_MAGIC:08x}"
        )
    if lbl_count != count:
        raise FormatError(
            f"{labels_path}: label count {lbl_count} does not match image count {count} (byte offset 4)"
        )
    if len(lbl_buf) - 8 != lbl_count:
        raise FormatError(
            f"{labels_path}: label payload is {len(lbl_buf) - 8} bytes at byte offset 8, expected {lbl_count}"
        )
    labels = np.frombuffer(lbl_buf, dtype=np.uint8, offset=8)
    return _from_arrays(pixels.astype(np.float64) / 255.0, labels, f"idx:{images_path}:{labels_path}")


def make_toy_dataset(
    classes: int, height: int, width: int, channels: int, count: int, seed: int
) -> Dataset:
    """Deterministic n-class blob/stripe image set.

    Every image shares one Gaussian blob background; class identity is
    carried by stripes running along the wrap-around diagonals (constant
    (row - col) mod height), with class-specific frequency and phase.
    Per-sample jitter of the stripe pattern has a heterogeneous scale, so
    sample difficulty spans from deep inside a class region to right at a
    decision boundary, while pixel noise orthogonal to the stripe pattern
    teaches classifiers to ignore unstructured perturbations. Labels cycle
    0..classes-1, so the set is balanced.
    """
    if classes < 2:
        raise ValueError(f"need at least 2 classes, got {classes}")
    if min(height, width, channels, count) < 1:
        raise ValueError("height, width, channels and count must be positive")
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    sigma = 0.17 * (height + width) / 2.0
    blob = 0.2 * np.exp(
        -((yy - (height - 1) / 2.0) ** 2 + (xx - (width - 1) / 2.0) ** 2) / (2.0 * sigma**2)
    )
    # wrap-around diagonal index; class stripes are constant along these
    diag = np.mod(yy - xx, height).astype(np.int64)

    templates = np.empty((classes, height, width, channels))
    for c in range(classes):
        freq = 1.0 + (c % 3)
        phase = 2.0 * np.pi * c / classes
        for j in range(channels):
            stripe = np.cos(2.0 * np.pi * freq * diag / height + phase + np.pi * j / max(1, channels))
            templates[c, :, :, j] = np.clip(0.5 + blob + TOY_CONTRAST * 0.5 * stripe, 0.0, 1.0)

    labels = np.arange(count) % classes
    # stripe-space jitter: per-diagonal offsets with per-sample heterogeneous
    # scale (spreads boundary margins); plus unstructured pixel noise that is
    # mean-free along every diagonal (carries no stripe information)
    scales = rng.uniform(0.3, 3.0, size=count) * TOY_NOISE_SIGMA
    diag_offsets = rng.normal(0.0, 1.0, size=(count, height, channels)) * scales[:, None, None]
    jitter = diag_offsets[:, diag, :]
    raw = rng.normal(0.0, TOY_NOISE_SIGMA, size=(count, height, width, channels))
    flat = raw.reshape(count, height * width, channels)
    idx = diag.reshape(-1)
    means = np.stack([flat[:, idx == d, :].mean(axis=1) for d in range(height)], axis=1)
    unstructured = raw - means[:, idx, :].reshape(raw.shape)
    images = np.clip(templates[labels] + jitter + unstructured, 0.0, 1.0)
    return _from_arrays(images, labels, f"toy:{classes}x{height}x{width}x{channels}:{count}:{seed}")


def save_dataset(dataset: Dataset, path: str) -> None:
    """Write a dataset to the native labeled container."""
    images = np.stack([img.data for img in dataset.images])
    fileio.save_dataset_arrays(images, np.asarray(dataset.labels), path)


def load_dataset(path: str) -> Dataset:
    images, labels = fileio.load_dataset_arrays(path)
    return _from_arrays(images, labels, f"dutensor:{path}")


def ingest(path: str, fmt: str) -> Dataset:
    """Load a dataset given its location and format name.

    ``idx`` takes ``IMAGES_PATH:LABELS_PATH``; ``dutensor`` a container
    path; ``toy`` a generator spec ``CLASSESxHxWxC:COUNT:SEED``.
    """
    if fmt == "idx":
        parts = path.split(":")
        if len(parts) != 2:
            raise ValueError(f"idx source must be IMAGES_PATH:LABELS_PATH, got {path!r}")
        return load_idx(parts[0], parts[1])
    if fmt == "dutensor":
        return load_dataset(path)
    if fmt == "toy":
        parts = path.split(":")
        if len(parts) != 3:
            raise ValueError(f"toy source must be CLASSESxHxWxC:COUNT:SEED, got {path!r}")
        dims = parts[0].split("x")
        if len(dims) != 4:
            raise ValueError(f"toy dimensions must be CLASSESxHxWxC, got {parts[0]!r}")
        try:
            classes, height, width, channels = (int(v) for v in dims)
            count, seed = int(parts[1]), int(parts[2])
        except ValueError as exc:
            raise ValueError(f"toy source {path!r} has a non-integer field: {exc}") from None
        return make_toy_dataset(classes, height, width, channels, count, seed)
    raise ValueError(f"unknown dataset format {fmt!r} (expected idx, dutensor or toy)")


def ingest_spec(spec: str) -> Dataset:
    """Parse a ``format:rest`` data spec string and load it."""
    fmt, sep, rest = spec.partition(":")
    if not sep or not rest:
        raise ValueError(f"data spec must look like format:source, got {spec!r}")
    return ingest(rest, fmt)
