"""HTTP label service wrapping a local victim.

Exposes exactly the label-only wire protocol:

    POST /classify        {"shape":[H,W,C],"data":[...]}    -> {"label": int}
    POST /classify_batch  {"shape":[H,W,C],"images":[[...]]} -> {"labels": [int]}
    GET  /health                                            -> {"status":"ok","num_classes":int}

Malformed bodies get 400 with {"error": str}; batches above the configured
limit get 413. No response ever carries scores, logits or gradients. The
handler is stateless over frozen weights, so concurrent requests behave
exactly like sequential ones.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .oracle import LabelOracle
from .tensors import ImageTensor


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8787
    max_batch: int = 64
    log_path: str | None = None

    def __post_init__(self):
        if self.max_batch < 1:
            raise ValueError(f"max_batch must be >= 1, got {self.max_batch}")


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a over raw bytes; used to fingerprint logged images."""
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


class _BadRequest(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


def _parse_images(payload: dict, key: str, single: bool) -> list[ImageTensor]:
    shape = payload.get("shape")
    if (
        not isinstance(shape, list)
        or len(shape) != 3
        or not all(isinstance(v, int) and v > 0 for v in shape)
    ):
        raise _BadRequest(400, "shape must be a list of three positive integers")
    entries = int(np.prod(shape))
    raw = payload.get(key)
    rows = [raw] if single else raw
    if not isinstance(rows, list) or (not single and not all(isinstance(r, list) for r in rows)):
        raise _BadRequest(400, f"{key} must be {'a list' if single else 'a list of lists'} of numbers")
    images = []
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != entries:
            raise _BadRequest(400, f"image {i} must hold exactly {entries} values")
        arr = np.asarray(row, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise _BadRequest(400, f"image {i} holds non-finite values")
        try:
            images.append(ImageTensor(arr.reshape(shape)))
        except ValueError as exc:
            raise _BadRequest(400, f"image {i}: {exc}") from None
    return images


class _Handler(BaseHTTPRequestHandler):
    server: "LabelService"

    def log_message(self, fmt, *args):  # silence per-request stderr noise
        pass

    def _send(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/health":
            self._send(200, {"status": "ok", "num_classes": self.server.victim.num_classes})
        else:
            self._send(404, {"error": f"unknown path {self.path}"})

    def do_POST(self):
        if self.path not in ("/classify", "/classify_batch"):
            self._send(404, {"error": f"unknown path {self.path}"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            try:
                payload = json.loads(self.rfile.read(length))
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                raise _BadRequest(400, f"request body is not valid JSON: {exc}") from None
            if not isinstance(payload, dict):
                raise _BadRequest(400, "request body must be a JSON object")
            if self.path == "/classify":
                images = _parse_images(payload, "data", single=True)
                labels = self.server.classify_and_log(images)
                self._send(200, {"label": labels[0]})
            else:
                images = _parse_images(payload, "images", single=False)
                if len(images) > self.server.config.max_batch:
                    raise _BadRequest(
                        413, f"batch of {len(images)} exceeds limit {self.server.config.max_batch}"
                    )
                if not images:
                    raise _BadRequest(400, "batch must hold at least one image")
                labels = self.server.classify_and_log(images)
                self._send(200, {"labels": labels})
        except _BadRequest as exc:
            self._send(exc.status, {"error": str(exc)})
        except ValueError as exc:
            self._send(400, {"error": str(exc)})


class LabelService(ThreadingHTTPServer):
    """Threaded label server over an immutable victim."""

    daemon_threads = True

    def __init__(self, victim: LabelOracle, config: ServiceConfig):
        super().__init__((config.host, config.port), _Handler)
        self.victim = victim
        self.config = config
        self._log_lock = threading.Lock()
        self._log_file = open(config.log_path, "a") if config.log_path else None

    @property
    def port(self) -> int:
        return self.server_address[1]

    @property
    def endpoint(self) -> str:
        return f"http://{self.server_address[0]}:{self.port}"

    def classify_and_log(self, images: list[ImageTensor]) -> list[int]:
        labels = self.victim.classify_batch(images)
        if self._log_file is not None:
            stamp = time.time()
            lines = [
                json.dumps(
                    {"ts": stamp, "hash": f"{fnv1a64(img.data.tobytes()):016x}", "label": label}
                )
                for img, label in zip(images, labels)
            ]
            with self._log_lock:
                self._log_file.write("\n".join(lines) + "\n")
                self._log_file.flush()
        return labels

    def server_close(self):
        super().server_close()
        if self._log_file is not None:
            self._log_file.close()
            self._log_file = None


def start_service(victim: LabelOracle, config: ServiceConfig) -> tuple[LabelService, threading.Thread]:
    """Run the service on a background thread; caller shuts it down via
    ``service.shutdown(); service.server_close()``."""
    service = LabelService(victim, config)
    thread = threading.Thread(target=service.serve_forever, daemon=True)
    thread.start()
    return service, thread


def serve(victim: LabelOracle, config: ServiceConfig) -> None:
    """Serve until interrupted."""
    service = LabelService(victim, config)
    try:
        service.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        service.shutdown()
        service.server_close()
