"""Dense tensor values used throughout the toolkit.

Images are H x W x C float arrays in [0, 1], row-major and channel-last.
A single perturbation tensor is shared by every image and is kept inside
a Frobenius-norm ball by :func:`project`. Steps are laid out by a cyclic
column rotation of the identity so one update touches W pixels along a
wrap-around diagonal of one channel.

All operations here are pure: they validate, then return new values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Absolute tolerance for every norm comparison in the toolkit.
NORM_TOL = 1e-6

# Scale applied to the accumulated step history when forming a new step.
MOMENTUM_COEF = 0.9


@dataclass(frozen=True, eq=False)
class ImageTensor:
    """One classifier input: H x W x C pixels in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or arr.size == 0:
            raise ValueError(f"image must be a nonempty H x W x C tensor, got shape {arr.shape}")
        lo = float(arr.min())
        hi = float(arr.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"pixel values must lie in [0, 1], got range [{lo:g}, {hi:g}]")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True, eq=False)
class Perturbation:
    """Image-agnostic additive perturbation with a Frobenius budget.

    ``data`` has unbounded sign; ``budget`` is the maximum Frobenius norm
    enforced by :func:`project`. The shape is fixed for an attack run.
    """

    data: np.ndarray
    budget: float

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or arr.size == 0:
            raise ValueError(f"perturbation must be a nonempty H x W x C tensor, got shape {arr.shape}")
        if not np.isfinite(self.budget) or self.budget < 0.0:
            raise ValueError(f"budget must be a finite non-negative real, got {self.budget}")
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "budget", float(self.budget))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def norm(self) -> float:
        return frobenius_norm(self.data)

    @classmethod
    def zeros(cls, shape, budget: float) -> "Perturbation":
        return cls(np.zeros(shape, dtype=np.float64), budget)


@dataclass(frozen=True)
class StepMatrix:
    """Cyclic column rotation of the identity pattern.

    Column c carries a single 1 at row (c + shift) mod height; nothing is
    stored densely. For height == width the dense form is a permutation
    matrix, so its columns are orthonormal.
    """

    height: int
    width: int
    shift: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("step matrix extents must be positive")
        if not 0 <= self.shift < self.width:
            raise ValueError(f"shift must lie in [0, {self.width}), got {self.shift}")

    def rows(self) -> np.ndarray:
        """Row index of the 1 in each column, length ``width``."""
        return (np.arange(self.width) + self.shift) % self.height

    def dense(self) -> np.ndarray:
        q = np.zeros((self.height, self.width), dtype=np.float64)
        q[self.rows(), np.arange(self.width)] = 1.0
        return q


@dataclass(eq=False)
class MomentumState:
    """Accumulated signed history of committed steps.

    Starts at zero and changes only when the synthesis loop commits a
    branch; :meth:`commit` adds the signed step pattern into the stepped
    channel.
    """

    data: np.ndarray

    @classmethod
    def zeros(cls, shape) -> "MomentumState":
        return cls(np.zeros(shape, dtype=np.float64))

    def commit(self, q: StepMatrix, channel: int, epsilon: float, sign: int) -> None:
        _check_sign(sign)
        self.data[q.rows(), np.arange(q.width), channel] += sign * epsilon


def make_step_matrix(height: int, width: int, shift: int) -> StepMatrix:
    """Build the step pattern whose column c alters row (c + shift) mod height."""
    return StepMatrix(height=height, width=width, shift=shift)


def frobenius_norm(t) -> float:
    """Square root of the sum of squared entries."""
    arr = np.asarray(t, dtype=np.float64)
    return float(np.sqrt(np.sum(arr * arr)))


def clip_image(x) -> np.ndarray:
    """Clamp every entry into [0, 1]; applied to X +/- V before any query."""
    return np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)


def project(pert: Perturbation) -> Perturbation:
    """Project onto the Frobenius ball of radius ``pert.budget``.

    Feasible inputs are returned unchanged (same object); infeasible ones
    are radially rescaled, which is the exact minimizer of the distance to
    the ball. Idempotent at NORM_TOL.
    """
    norm = frobenius_norm(pert.data)
    if norm <= pert.budget + NORM_TOL:
        return pert
    return Perturbation(pert.data * (pert.budget / norm), pert.budget)


def apply_step(
    pert: Perturbation,
    q: StepMatrix,
    channel: int,
    epsilon: float,
    momentum: MomentumState,
    sign: int,
    momentum_coef: float = MOMENTUM_COEF,
) -> Perturbation:
    """Return the unprojected update of one synthesis branch.

    The stepped channel receives sign * epsilon at the positions of ``q``;
    every channel receives sign * momentum_coef * M. Inputs are not
    modified.
    """
    h, w, c = pert.shape
    if (q.height, q.width) != (h, w):
        raise ValueError(f"step matrix {q.height}x{q.width} does not match perturbation {h}x{w}")
    if momentum.data.shape != pert.data.shape:
        raise ValueError(
            f"momentum shape {momentum.data.shape} does not match perturbation {pert.data.shape}"
        )
    if not 0 <= channel < c:
        raise ValueError(f"channel must lie in [0, {c}), got {channel}")
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    _check_sign(sign)
    out = pert.data + sign * (momentum_coef * momentum.data)
    out[q.rows(), np.arange(w), channel] += sign * epsilon
    return Perturbation(out, pert.budget)


def _check_sign(sign: int) -> None:
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign}")
