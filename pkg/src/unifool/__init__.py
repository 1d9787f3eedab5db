"""Label-only universal adversarial perturbation toolkit.

Synthesizes a single additive perturbation for a whole image distribution
using nothing but a classifier's top-1 labels, evaluates its success rate
locally or against a remote label service, and ships the supporting file
formats, serving layer and CLI.
"""

__version__ = "0.1.0"

from .attack import (
    AttackConfig,
    AttackReport,
    IterationRecord,
    NoEligibleImagesError,
    duattack,
    duattack_targeted,
    read_report_jsonl,
    write_report_jsonl,
)
from .data import Dataset, ingest, ingest_spec, load_dataset, load_idx, make_toy_dataset, save_dataset
from .evaluate import EvalResult, evaluate_targeted, evaluate_transfer, evaluate_untargeted
from .fileio import FormatError, load_perturbation, save_perturbation
from .oracle import (
    LabelOracle,
    LinearVictim,
    MlpVictim,
    OracleUnavailableError,
    RemoteOracle,
    load_victim,
    save_victim,
    train_mlp,
)
from .serve import LabelService, ServiceConfig, serve, start_service
from .tensors import (
    MOMENTUM_COEF,
    NORM_TOL,
    ImageTensor,
    MomentumState,
    Perturbation,
    StepMatrix,
    apply_step,
    clip_image,
    frobenius_norm,
    make_step_matrix,
    project,
)
from .viz import export_perturbation, report_plus_minus

__all__ = [
    "__version__",
    "AttackConfig",
    "AttackReport",
    "IterationRecord",
    "NoEligibleImagesError",
    "duattack",
    "duattack_targeted",
    "read_report_jsonl",
    "write_report_jsonl",
    "Dataset",
    "ingest",
    "ingest_spec",
    "load_dataset",
    "load_idx",
    "make_toy_dataset",
    "save_dataset",
    "EvalResult",
    "evaluate_targeted",
    "evaluate_transfer",
    "evaluate_untargeted",
    "FormatError",
    "load_perturbation",
    "save_perturbation",
    "LabelOracle",
    "LinearVictim",
    "MlpVictim",
    "OracleUnavailableError",
    "RemoteOracle",
    "load_victim",
    "save_victim",
    "train_mlp",
    "LabelService",
    "ServiceConfig",
    "serve",
    "start_service",
    "MOMENTUM_COEF",
    "NORM_TOL",
    "ImageTensor",
    "MomentumState",
    "Perturbation",
    "StepMatrix",
    "apply_step",
    "clip_image",
    "frobenius_norm",
    "make_step_matrix",
    "project",
    "export_perturbation",
    "report_plus_minus",
]
