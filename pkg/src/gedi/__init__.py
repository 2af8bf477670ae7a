"""Generalized Disparate Impact (GeDI): audit and enforce kernel-based fairness constraints."""

from .constraints import ConstraintReport, ConstraintSpec, evaluate_constraint, exclusive_equivalence
from .data import Dataset, export_dataset, kfold_split, load_dataset, synth_fig2
from .errors import GediError
from .indicators import (
    CoefficientMap,
    DidiResult,
    GediResult,
    didi_binned,
    didi_classification,
    didi_regression,
    gedi,
    gedi_covariance_form,
    gedi_v1,
    pearson_via_least_squares,
    quantile_bins,
)
from .kernel import KernelMatrix, KernelSpec, build_kernel, condition_number, numerical_rank
from .learners import LearnerModel, LearnerSpec, fit, predict
from .projection import ProjectionResult, project_classification, project_regression, project_relaxed
from .qp import QpProblem, QpSolution, solve_constrained_ls
from .report import audit_report
from .training import MtConfig, SbrConfig, TrainResult, moving_targets, penalty_gradient, penalty_vector, sbr_train

__version__ = "0.1.0"

__all__ = [
    "CoefficientMap",
    "ConstraintReport",
    "ConstraintSpec",
    "Dataset",
    "DidiResult",
    "GediError",
    "GediResult",
    "KernelMatrix",
    "KernelSpec",
    "LearnerModel",
    "LearnerSpec",
    "MtConfig",
    "ProjectionResult",
    "QpProblem",
    "QpSolution",
    "SbrConfig",
    "TrainResult",
    "audit_report",
    "build_kernel",
    "condition_number",
    "didi_binned",
    "didi_classification",
    "didi_regression",
    "evaluate_constraint",
    "exclusive_equivalence",
    "export_dataset",
    "fit",
    "gedi",
    "gedi_covariance_form",
    "gedi_v1",
    "kfold_split",
    "load_dataset",
    "moving_targets",
    "numerical_rank",
    "pearson_via_least_squares",
    "penalty_gradient",
    "penalty_vector",
    "predict",
    "project_classification",
    "project_regression",
    "project_relaxed",
    "quantile_bins",
    "sbr_train",
    "solve_constrained_ls",
    "synth_fig2",
]
