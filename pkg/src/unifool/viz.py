"""Static artifact export: PGM renderings and plus/minus histograms."""

from __future__ import annotations

import json

import numpy as np

from .attack import IterationRecord
from .tensors import Perturbation

PGM_PER_CHANNEL = "pgm-per-channel"
SCALED_COMPOSITE = "scaled-composite"
EXPORT_MODES = (PGM_PER_CHANNEL, SCALED_COMPOSITE)


def rescale_plane(plane: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Affine map [min, max] -> [0, 255]; a constant plane maps to 128."""
    lo = float(plane.min())
    hi = float(plane.max())
    if hi == lo:
        return np.full(plane.shape, 128, dtype=np.uint8), lo, hi
    scaled = np.rint((plane - lo) * (255.0 / (hi - lo)))
    return scaled.astype(np.uint8), lo, hi


def write_pgm(path: str, gray: np.ndarray) -> None:
    height, width = gray.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{width} {height}\n255\n".encode())
        f.write(np.ascontiguousarray(gray, dtype=np.uint8).tobytes())


def export_perturbation(pert: Perturbation, out_prefix: str, mode: str = PGM_PER_CHANNEL) -> dict:
    """Render a perturbation to PGM files plus a sidecar JSON of rescale params.

    Per-channel mode writes ``{prefix}_c{j}.pgm`` for each channel;
    composite mode averages channels into a single ``{prefix}.pgm``.
    Returns the sidecar content; the sidecar lands at ``{prefix}.json``.
    """
    if mode not in EXPORT_MODES:
        raise ValueError(f"mode must be one of {EXPORT_MODES}, got {mode!r}")
    planes: list[tuple[str, np.ndarray]] = []
    if mode == PGM_PER_CHANNEL:
        for j in range(pert.data.shape[2]):
            planes.append((f"{out_prefix}_c{j}.pgm", pert.data[:, :, j]))
    else:
        planes.append((f"{out_prefix}.pgm", pert.data.mean(axis=2)))
    sidecar = {"mode": mode, "files": {}}
    for path, plane in planes:
        gray, lo, hi = rescale_plane(plane)
        write_pgm(path, gray)
        sidecar["files"][path] = {"min": lo, "max": hi}
    with open(f"{out_prefix}.json", "w") as f:
        json.dump(sidecar, f, indent=2)
    return sidecar


def report_plus_minus(records: list[IterationRecord], window: int) -> list[tuple[int, int, int, int]]:
    """Count committed plus/minus branches per iteration window.

    Rows are (window start, window end exclusive, plus count, minus count);
    the last window may be short.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    rows = []
    for lo in range(0, len(records), window):
        chunk = records[lo : lo + window]
        plus = sum(1 for r in chunk if r.sign > 0)
        rows.append((lo, lo + len(chunk), plus, len(chunk) - plus))
    return rows


def plus_minus_csv(rows: list[tuple[int, int, int, int]]) -> str:
    lines = ["start,end,plus,minus"]
    lines.extend(f"{a},{b},{p},{m}" for a, b, p, m in rows)
    return "\n".join(lines) + "\n"


def plus_minus_text(rows: list[tuple[int, int, int, int]]) -> str:
    lines = [f"{'window':>14}  {'plus':>6}  {'minus':>6}"]
    lines.extend(f"{f'[{a}, {b})':>14}  {p:>6}  {m:>6}" for a, b, p, m in rows)
    return "\n".join(lines) + "\n"
