"""Synthesis of a single image-agnostic perturbation from top-1 labels.

Each iteration draws a cyclic-shift step pattern, forms a subtractive and
an additive candidate (step plus 0.9x the committed-step history), projects
both onto the Frobenius ball, probes the oracle with X - V_left and
X + V_right over the current batch, and commits whichever candidate fools
(or, in targeted mode, hits) more images. Ties go to the additive branch.
The loop stops early once a committed branch covers the whole batch.

The returned perturbation is oriented so that adding it to an image
reproduces the final committed probe; evaluation therefore always applies
X + V.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .oracle import LabelOracle, OracleUnavailableError
from .tensors import (
    MOMENTUM_COEF,
    ImageTensor,
    MomentumState,
    Perturbation,
    apply_step,
    clip_image,
    frobenius_norm,
    make_step_matrix,
    project,
)

ORTHOGONAL_MOMENTUM = "orthogonal-momentum"
RANDOM_SAMPLING = "random-sampling"
STRATEGIES = (ORTHOGONAL_MOMENTUM, RANDOM_SAMPLING)


class NoEligibleImagesError(ValueError):
    """Every training image is already classified as the target class."""


@dataclass(frozen=True)
class AttackConfig:
    """Synthesis settings.

    ``budget`` is the Frobenius cap on the perturbation, ``epsilon`` the
    per-step magnitude, ``iterations`` the maximum loop length. ``target``
    switches to targeted mode. ``batch_size`` of None probes the full
    training set every iteration; smaller values cycle through it in
    contiguous chunks.
    """

    budget: float
    epsilon: float = 0.2
    iterations: int = 1000
    momentum: float = MOMENTUM_COEF
    target: int | None = None
    strategy: str = ORTHOGONAL_MOMENTUM
    seed: int = 0
    batch_size: int | None = None

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.budget <= 0:
            raise ValueError(f"budget must be positive, got {self.budget}")
        if self.momentum < 0:
            raise ValueError(f"momentum coefficient must be non-negative, got {self.momentum}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")


@dataclass(frozen=True)
class IterationRecord:
    """One committed loop iteration.

    ``shift`` is the step-pattern rotation, or -1 for the random-sampling
    strategy. ``sign`` is +1 for the additive branch, -1 for the
    subtractive one. ``norm`` is the perturbation norm after projection.
    """

    iteration: int
    shift: int
    channel: int
    sign: int
    fooled_left: int
    fooled_right: int
    norm: float

    def to_json(self) -> dict:
        return {
            "iteration": self.iteration,
            "shift": self.shift,
            "channel": self.channel,
            "sign": self.sign,
            "fooled_left": self.fooled_left,
            "fooled_right": self.fooled_right,
            "norm": self.norm,
        }


@dataclass(eq=False)
class AttackReport:
    """Per-iteration records plus run totals for one synthesis run."""

    records: list[IterationRecord] = field(default_factory=list)
    queries: int = 0
    plus_count: int = 0
    minus_count: int = 0
    wall_time: float = 0.0
    perturbation: Perturbation | None = None

    def summary(self) -> dict:
        return {
            "iterations": len(self.records),
            "queries": self.queries,
            "plus_count": self.plus_count,
            "minus_count": self.minus_count,
            "wall_time": self.wall_time,
            "final_norm": self.perturbation.norm() if self.perturbation is not None else None,
            "final_fooled": self.records[-1].fooled_right
            if self.records and self.records[-1].sign > 0
            else (self.records[-1].fooled_left if self.records else 0),
        }


def duattack(
    oracle: LabelOracle, train_images: list[ImageTensor], config: AttackConfig
) -> tuple[Perturbation, AttackReport]:
    """Untargeted synthesis: maximize the count of label changes."""
    if config.target is not None:
        raise ValueError("config.target must be None for the untargeted attack")
    return _synthesize(oracle, train_images, config)


def duattack_targeted(
    oracle: LabelOracle, train_images: list[ImageTensor], config: AttackConfig
) -> tuple[Perturbation, AttackReport]:
    """Targeted synthesis: maximize the count of images pushed to config.target."""
    if config.target is None:
        raise ValueError("config.target must be set for the targeted attack")
    return _synthesize(oracle, train_images, config)


def _probe(oracle: LabelOracle, batch: np.ndarray) -> np.ndarray:
    images = [ImageTensor(arr) for arr in clip_image(batch)]
    return np.asarray(oracle.classify_batch(images), dtype=np.int64)


def _synthesize(
    oracle: LabelOracle, train_images: list[ImageTensor], config: AttackConfig
) -> tuple[Perturbation, AttackReport]:
    if not train_images:
        raise ValueError("train_images must be nonempty")
    shape = train_images[0].data.shape
    for i, img in enumerate(train_images):
        if img.data.shape != shape:
            raise ValueError(f"image {i} has shape {img.data.shape}, expected {shape}")
    height, width, channels = shape
    started = time.perf_counter()

    # one clean pass, cached for the whole run
    clean = oracle.classify_batch(train_images)
    queries = len(train_images)

    targeted = config.target is not None
    if targeted:
        keep = [i for i, y in enumerate(clean) if y != config.target]
        if not keep:
            raise NoEligibleImagesError(
                f"all {len(clean)} training images already classify as target {config.target}"
            )
    else:
        keep = list(range(len(clean)))
    stack = np.stack([train_images[i].data for i in keep])
    base = np.asarray([clean[i] for i in keep], dtype=np.int64)
    pool = len(keep)
    per_batch = pool if config.batch_size is None else min(config.batch_size, pool)

    rng = np.random.default_rng(config.seed)
    pert = Perturbation.zeros(shape, config.budget)
    momentum = MomentumState.zeros(shape)
    records: list[IterationRecord] = []
    plus = minus = 0
    last_sign = 1

    def build_report() -> AttackReport:
        return AttackReport(
            records=records,
            queries=queries,
            plus_count=plus,
            minus_count=minus,
            wall_time=time.perf_counter() - started,
            perturbation=pert,
        )

    try:
        for t in range(config.iterations):
            lo = (t * per_batch) % pool
            sel = np.arange(lo, lo + per_batch) % pool
            batch = stack[sel]
            batch_clean = base[sel]
            channel = t % channels

            if config.strategy == ORTHOGONAL_MOMENTUM:
                shift = int(rng.integers(0, width))
                q = make_step_matrix(height, width, shift)
                left = project(apply_step(pert, q, channel, config.epsilon, momentum, -1,
                                          momentum_coef=config.momentum))
                right = project(apply_step(pert, q, channel, config.epsilon, momentum, +1,
                                           momentum_coef=config.momentum))
            else:
                shift = -1
                q = None
                picks = rng.choice(height * width, size=width, replace=False)
                step = np.zeros(shape)
                step.reshape(height * width, channels)[picks, channel] = config.epsilon
                left = project(Perturbation(pert.data - step, config.budget))
                right = project(Perturbation(pert.data + step, config.budget))

            left_labels = _probe(oracle, batch - left.data)
            queries += per_batch
            right_labels = _probe(oracle, batch + right.data)
            queries += per_batch

            if targeted:
                fooled_left = int(np.sum(left_labels == config.target))
                fooled_right = int(np.sum(right_labels == config.target))
            else:
                fooled_left = int(np.sum(left_labels != batch_clean))
                fooled_right = int(np.sum(right_labels != batch_clean))

            if fooled_right >= fooled_left:
                pert, sign, committed = right, 1, fooled_right
                plus += 1
            else:
                pert, sign, committed = left, -1, fooled_left
                minus += 1
            if q is not None:
                momentum.commit(q, channel, config.epsilon, sign)
            last_sign = sign
            records.append(
                IterationRecord(
                    iteration=t,
                    shift=shift,
                    channel=channel,
                    sign=sign,
                    fooled_left=fooled_left,
                    fooled_right=fooled_right,
                    norm=frobenius_norm(pert.data),
                )
            )
            if committed == per_batch:
                break
    except OracleUnavailableError as exc:
        exc.partial_report = build_report()
        raise

    if last_sign < 0:
        # final commit was the subtractive branch; flip so X + V is the
        # image-space point whose fooled count was just measured
        pert = Perturbation(-pert.data, config.budget)
    report = build_report()
    report.perturbation = pert
    return pert, report


def write_report_jsonl(report: AttackReport, path: str) -> None:
    """One JSON line per committed iteration, then a summary object."""
    with open(path, "w") as f:
        for record in report.records:
            f.write(json.dumps(record.to_json()) + "\n")
        f.write(json.dumps({"summary": report.summary()}) + "\n")


def read_report_jsonl(path: str) -> tuple[list[IterationRecord], dict]:
    """Parse a report file back into records and its summary object."""
    records: list[IterationRecord] = []
    summary: dict = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "summary" in obj:
                summary = obj["summary"]
            else:
                records.append(IterationRecord(**obj))
    return records, summary
