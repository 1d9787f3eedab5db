"""Label-only classifier oracles.

The synthesis and evaluation code sees every classifier through one
contract: images in, top-1 class indices out. No scores, probabilities or
gradients are ever exposed, locally or over the wire. ``query_count``
tallies every image submitted to an oracle instance.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import requests

from . import fileio
from .tensors import ImageTensor


class OracleUnavailableError(RuntimeError):
    """The remote label service could not answer after retries.

    ``index`` is the submission index of the first image in the failed
    request. When raised out of a synthesis run, ``partial_report`` holds
    the progress made before the failure.
    """

    def __init__(self, message: str, index: int = 0):
        super().__init__(message)
        self.index = index
        self.partial_report = None


class LabelOracle:
    """Behavioral contract shared by every victim.

    Subclasses implement ``_labels(flat)`` mapping a (batch, H*W*C) float
    array to int labels; this base class owns validation and the query
    counter. Identical image bytes always yield identical labels within
    one instance.
    """

    def __init__(self, input_dim: int, num_classes: int):
        self.input_dim = int(input_dim)
        self.num_classes = int(num_classes)
        self._count_lock = threading.Lock()
        self._query_count = 0

    @property
    def query_count(self) -> int:
        return self._query_count

    def _tally(self, n: int) -> None:
        with self._count_lock:
            self._query_count += n

    def _labels(self, flat: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def classify_batch(self, images: list[ImageTensor]) -> list[int]:
        """Top-1 class index per image, order-preserving."""
        if not images:
            return []
        flat = _flatten_batch(images, self.input_dim)
        self._tally(len(images))
        return [int(v) for v in self._labels(flat)]

    def classify(self, image: ImageTensor) -> int:
        return self.classify_batch([image])[0]


def _flatten_batch(images: list[ImageTensor], input_dim: int) -> np.ndarray:
    shape = images[0].data.shape
    for i, img in enumerate(images):
        if not isinstance(img, ImageTensor):
            raise ValueError(f"image {i} is not an ImageTensor")
        if img.data.shape != shape:
            raise ValueError(f"image {i} has shape {img.data.shape}, expected {shape}")
    if int(np.prod(shape)) != input_dim:
        raise ValueError(f"image shape {shape} has {int(np.prod(shape))} entries, oracle expects {input_dim}")
    return np.stack([img.data.reshape(-1) for img in images])


class LinearVictim(LabelOracle):
    """Fixed affine classifier: label = argmax(W x + b), ties to the lower index.

    Deliberately simple so attack behaviour can be cross-checked by hand.
    """

    def __init__(self, weights, biases):
        weights = np.asarray(weights, dtype=np.float64)
        biases = np.asarray(biases, dtype=np.float64)
        if weights.ndim != 2:
            raise ValueError(f"weights must be (classes, inputs), got shape {weights.shape}")
        if biases.shape != (weights.shape[0],):
            raise ValueError(f"bias shape {biases.shape} does not match {weights.shape[0]} classes")
        super().__init__(input_dim=weights.shape[1], num_classes=weights.shape[0])
        weights.setflags(write=False)
        biases.setflags(write=False)
        self.weights = weights
        self.biases = biases

    def _labels(self, flat: np.ndarray) -> np.ndarray:
        return np.argmax(flat @ self.weights.T + self.biases, axis=1)


class MlpVictim(LabelOracle):
    """Small fully-connected classifier over flattened pixels.

    Holds a list of (weights, biases) float32 layers with a rectifier
    between them; the forward pass runs entirely in float32 so saved and
    reloaded weights reproduce labels bit for bit. Weights are frozen at
    construction.
    """

    def __init__(self, layers: list[tuple[np.ndarray, np.ndarray]], seed: int | None = None):
        if not layers:
            raise ValueError("at least one affine layer is required")
        frozen = []
        for i, (w, b) in enumerate(layers):
            w = np.ascontiguousarray(w, dtype=np.float32)
            b = np.ascontiguousarray(b, dtype=np.float32)
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {i} must be (rows, cols) weights with rows biases")
            if i > 0 and w.shape[1] != layers[i - 1][0].shape[0]:
                raise ValueError(f"layer {i} expects {w.shape[1]} inputs, previous layer emits "
                                 f"{layers[i - 1][0].shape[0]}")
            w.setflags(write=False)
            b.setflags(write=False)
            frozen.append((w, b))
        super().__init__(input_dim=frozen[0][0].shape[1], num_classes=frozen[-1][0].shape[0])
        self.layers = frozen
        self.seed = seed
        self.final_train_accuracy: float | None = None

    def _logits(self, flat32: np.ndarray) -> np.ndarray:
        h = flat32
        last = len(self.layers) - 1
        for i, (w, b) in enumerate(self.layers):
            h = h @ w.T + b
            if i < last:
                h = np.maximum(h, np.float32(0.0))
        return h

    def _labels(self, flat: np.ndarray) -> np.ndarray:
        return np.argmax(self._logits(flat.astype(np.float32)), axis=1)


def train_mlp(
    images: list[ImageTensor],
    labels: list[int],
    epochs: int,
    lr: float = 0.1,
    batch: int = 32,
    seed: int = 0,
    hidden: int = 64,
    num_classes: int | None = None,
) -> MlpVictim:
    """Train a (hidden, 32) rectifier network with minibatch SGD.

    Deterministic for a given seed: the same data and settings reproduce
    bitwise-identical weights. ``epochs=0`` returns the seeded random
    initialization unchanged. The victim's ``final_train_accuracy`` is set
    from a full pass after training.
    """
    if not images:
        raise ValueError("training set must be nonempty")
    if len(labels) != len(images):
        raise ValueError(f"{len(labels)} labels for {len(images)} images")
    if epochs < 0 or batch < 1 or lr <= 0:
        raise ValueError("epochs must be >= 0, batch >= 1 and lr > 0")
    n_classes = int(max(labels)) + 1 if num_classes is None else int(num_classes)
    for i, y in enumerate(labels):
        if not 0 <= y < n_classes:
            raise ValueError(f"label {y} at index {i} outside [0, {n_classes})")

    input_dim = int(np.prod(images[0].data.shape))
    flat = _flatten_batch(images, input_dim).astype(np.float32)
    y_arr = np.asarray(labels, dtype=np.int64)

    rng = np.random.default_rng(seed)
    sizes = [input_dim, hidden, 32, n_classes]
    layers = []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        scale = np.sqrt(2.0 / fan_in)
        w = (rng.standard_normal((fan_out, fan_in)) * scale).astype(np.float32)
        b = np.zeros(fan_out, dtype=np.float32)
        layers.append((w, b))

    lr32 = np.float32(lr)
    n = len(flat)
    for _ in range(epochs):
        perm = rng.permutation(n)
        for start in range(0, n, batch):
            idx = perm[start : start + batch]
            x = flat[idx]
            y = y_arr[idx]
            # forward with cached activations
            acts = [x]
            last = len(layers) - 1
            for i, (w, b) in enumerate(layers):
                z = acts[-1] @ w.T + b
                acts.append(np.maximum(z, np.float32(0.0)) if i < last else z)
            # softmax cross-entropy gradient
            logits = acts[-1]
            shifted = logits - logits.max(axis=1, keepdims=True)
            e = np.exp(shifted)
            delta = e / e.sum(axis=1, keepdims=True)
            delta[np.arange(len(y)), y] -= np.float32(1.0)
            delta /= np.float32(len(y))
            for i in reversed(range(len(layers))):
                w, b = layers[i]
                grad_w = delta.T @ acts[i]
                grad_b = delta.sum(axis=0)
                if i > 0:
                    delta = (delta @ w) * (acts[i] > 0)
                w -= lr32 * grad_w
                b -= lr32 * grad_b

    victim = MlpVictim(layers, seed=seed)
    h = flat
    last = len(layers) - 1
    for i, (w, b) in enumerate(victim.layers):
        h = h @ w.T + b
        if i < last:
            h = np.maximum(h, np.float32(0.0))
    victim.final_train_accuracy = float(np.mean(np.argmax(h, axis=1) == y_arr))
    return victim


def save_victim(victim: LinearVictim | MlpVictim, path: str) -> None:
    """Serialize a local victim's affine layers to a weights file."""
    if isinstance(victim, MlpVictim):
        fileio.save_weights(victim.layers, path)
    elif isinstance(victim, LinearVictim):
        fileio.save_weights([(victim.weights, victim.biases)], path)
    else:
        raise ValueError(f"cannot serialize oracle of type {type(victim).__name__}")


def load_victim(path: str) -> MlpVictim:
    """Load a weights file; the same file always yields identical labels."""
    return MlpVictim(fileio.load_weights(path))


class RemoteOracle(LabelOracle):
    """Client for a remote label service speaking the JSON wire protocol.

    Large batches are split into ``max_batch`` chunks posted concurrently
    (up to ``concurrency`` in flight) and reassembled in submission order.
    Each chunk is retried ``retries`` times on transport failure before an
    OracleUnavailableError is raised. ``query_count`` counts every image
    attempted, including images in failed requests.
    """

    def __init__(
        self,
        endpoint: str,
        timeout_ms: int = 5000,
        retries: int = 2,
        max_batch: int = 64,
        concurrency: int = 8,
    ):
        if max_batch < 1 or concurrency < 1 or retries < 0 or timeout_ms <= 0:
            raise ValueError("timeout_ms must be > 0, retries >= 0, max_batch and concurrency >= 1")
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout_ms / 1000.0
        self.retries = retries
        self.max_batch = max_batch
        self.concurrency = concurrency
        self._count_lock = threading.Lock()
        self._query_count = 0
        self._num_classes: int | None = None

    @property
    def query_count(self) -> int:
        return self._query_count

    def _tally(self, n: int) -> None:
        with self._count_lock:
            self._query_count += n

    @property
    def num_classes(self) -> int:
        if self._num_classes is None:
            payload = self._request_json("get", f"{self.endpoint}/health", None, index=0)
            self._num_classes = int(payload["num_classes"])
        return self._num_classes

    def _request_json(self, method: str, url: str, body: dict | None, index: int) -> dict:
        last_error = None
        for _ in range(self.retries + 1):
            try:
                if method == "get":
                    resp = requests.get(url, timeout=self.timeout)
                else:
                    resp = requests.post(url, json=body, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = str(exc)
                continue
            if resp.status_code == 200:
                return resp.json()
            if 400 <= resp.status_code < 500:
                # deterministic rejection; retrying cannot help
                raise OracleUnavailableError(
                    f"label service rejected request ({resp.status_code}): {resp.text}", index=index
                )
            last_error = f"HTTP {resp.status_code}: {resp.text}"
        raise OracleUnavailableError(
            f"label service unreachable after {self.retries + 1} attempts: {last_error}", index=index
        )

    def _classify_chunk(self, shape: list[int], chunk: list[ImageTensor], start: int) -> list[int]:
        body = {"shape": shape, "images": [img.data.reshape(-1).tolist() for img in chunk]}
        payload = self._request_json("post", f"{self.endpoint}/classify_batch", body, index=start)
        labels = payload.get("labels")
        if not isinstance(labels, list) or len(labels) != len(chunk):
            raise OracleUnavailableError(
                f"label service returned {labels!r} for a batch of {len(chunk)}", index=start
            )
        return [int(v) for v in labels]

    def classify_batch(self, images: list[ImageTensor]) -> list[int]:
        if not images:
            return []
        shape = list(images[0].data.shape)
        for i, img in enumerate(images):
            if list(img.data.shape) != shape:
                raise ValueError(f"image {i} has shape {img.data.shape}, expected {tuple(shape)}")
        self._tally(len(images))
        chunks = [(start, images[start : start + self.max_batch])
                  for start in range(0, len(images), self.max_batch)]
        if len(chunks) == 1:
            return self._classify_chunk(shape, chunks[0][1], 0)
        labels: list[int] = []
        with ThreadPoolExecutor(max_workers=self.concurrency) as pool:
            futures = [pool.submit(self._classify_chunk, shape, chunk, start) for start, chunk in chunks]
            failure: OracleUnavailableError | None = None
            for future in futures:
                try:
                    labels.extend(future.result())
                except OracleUnavailableError as exc:
                    if failure is None or exc.index < failure.index:
                        failure = exc
            if failure is not None:
                raise failure
        return labels
