"""Attack success metrics.

Untargeted success is measured over images the oracle already classifies
correctly; targeted success over images not yet classified as the target.
Both apply the perturbation as clip(X + V), matching the synthesis loop's
probe convention. An empty denominator yields an explicit undefined flag,
never a silent 0 or 1.
"""

from __future__ import annotations

from dataclasses import dataclass

from .oracle import LabelOracle
from .tensors import ImageTensor, Perturbation, clip_image, frobenius_norm

CSV_HEADER = (
    "n_total,n_correct_clean,n_eligible,n_fooled,"
    "asr_untargeted,asr_targeted,mean_distance,mean_distance_255,undefined"
)


@dataclass(frozen=True)
class EvalResult:
    """Outcome of one evaluation pass.

    ``n_eligible`` is the success-rate denominator: clean-correct images
    for untargeted runs, images not already at the target for targeted
    ones (where it differs from ``n_correct_clean``). ``mean_distance`` is
    the perturbation's Frobenius norm, identical for every image; the
    ``_255`` variant is the same value on the 0-255 pixel convention.
    """

    n_total: int
    n_correct_clean: int
    n_eligible: int
    n_fooled: int
    asr_untargeted: float | None
    asr_targeted: float | None
    mean_distance: float
    mean_distance_255: float
    undefined: bool

    def to_json(self) -> dict:
        return {
            "n_total": self.n_total,
            "n_correct_clean": self.n_correct_clean,
            "n_eligible": self.n_eligible,
            "n_fooled": self.n_fooled,
            "asr_untargeted": self.asr_untargeted,
            "asr_targeted": self.asr_targeted,
            "mean_distance": self.mean_distance,
            "mean_distance_255": self.mean_distance_255,
            "undefined": self.undefined,
        }

    def to_csv_row(self) -> str:
        def cell(v):
            if v is None:
                return ""
            if isinstance(v, bool):
                return "1" if v else "0"
            return repr(v) if isinstance(v, float) else str(v)

        return ",".join(
            cell(v)
            for v in (
                self.n_total,
                self.n_correct_clean,
                self.n_eligible,
                self.n_fooled,
                self.asr_untargeted,
                self.asr_targeted,
                self.mean_distance,
                self.mean_distance_255,
                self.undefined,
            )
        )


def _adversarial_labels(oracle: LabelOracle, images: list[ImageTensor], pert: Perturbation) -> list[int]:
    shape = images[0].data.shape
    if pert.data.shape != shape:
        raise ValueError(f"perturbation shape {pert.data.shape} does not match images {shape}")
    adv = [ImageTensor(clip_image(img.data + pert.data)) for img in images]
    return oracle.classify_batch(adv)


def _check_aligned(images: list[ImageTensor], labels: list[int]) -> None:
    if not images:
        raise ValueError("evaluation set must be nonempty")
    if len(images) != len(labels):
        raise ValueError(f"{len(labels)} labels for {len(images)} images")


def evaluate_untargeted(
    oracle: LabelOracle, images: list[ImageTensor], labels: list[int], pert: Perturbation
) -> EvalResult:
    """Fraction of clean-correct images whose label changes under clip(X + V)."""
    _check_aligned(images, labels)
    clean = oracle.classify_batch(images)
    adv = _adversarial_labels(oracle, images, pert)
    correct = [i for i in range(len(images)) if clean[i] == labels[i]]
    fooled = sum(1 for i in correct if adv[i] != labels[i])
    undefined = not correct
    dist = frobenius_norm(pert.data)
    return EvalResult(
        n_total=len(images),
        n_correct_clean=len(correct),
        n_eligible=len(correct),
        n_fooled=fooled,
        asr_untargeted=None if undefined else fooled / len(correct),
        asr_targeted=None,
        mean_distance=dist,
        mean_distance_255=255.0 * dist,
        undefined=undefined,
    )


def evaluate_targeted(
    oracle: LabelOracle,
    images: list[ImageTensor],
    labels: list[int],
    pert: Perturbation,
    target: int,
) -> EvalResult:
    """Fraction of not-yet-target images pushed to ``target`` under clip(X + V)."""
    _check_aligned(images, labels)
    clean = oracle.classify_batch(images)
    adv = _adversarial_labels(oracle, images, pert)
    eligible = [i for i in range(len(images)) if clean[i] != target]
    hits = sum(1 for i in eligible if adv[i] == target)
    undefined = not eligible
    dist = frobenius_norm(pert.data)
    return EvalResult(
        n_total=len(images),
        n_correct_clean=sum(1 for i in range(len(images)) if clean[i] == labels[i]),
        n_eligible=len(eligible),
        n_fooled=hits,
        asr_untargeted=None,
        asr_targeted=None if undefined else hits / len(eligible),
        mean_distance=dist,
        mean_distance_255=255.0 * dist,
        undefined=undefined,
    )


def evaluate_transfer(
    source_pert: Perturbation,
    victim_a: LabelOracle,
    victim_b: LabelOracle,
    images: list[ImageTensor],
    labels: list[int],
) -> tuple[EvalResult, EvalResult]:
    """Untargeted success of one perturbation on two victims, each judged
    against its own clean predictions."""
    if victim_a.input_dim != victim_b.input_dim:
        raise ValueError(
            f"victims expect {victim_a.input_dim} and {victim_b.input_dim} inputs; shapes must agree"
        )
    return (
        evaluate_untargeted(victim_a, images, labels, source_pert),
        evaluate_untargeted(victim_b, images, labels, source_pert),
    )
