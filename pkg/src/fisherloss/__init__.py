"""Fisher information loss (FIL) for output-perturbed linear and logistic regression.

Modules:
    dataset     tabular ingestion, encoding, unit-ball normalization, PCA
    glm         weighted L2-regularized solvers
    mechanism   Gaussian output perturbation
    fil         minimizer Jacobians, Fisher matrices and eta
    irfil       iterative reweighting towards equal per-example FIL
    attacks     attribute-inversion adversaries and decile analysis
    oracle      finite-difference and Monte-Carlo cross-checks
    synthbench  seeded synthetic datasets
"""
__version__ = "0.1.0"

from .dataset import Dataset, FeatureSpec, encode, load_csv, normalize_unit_ball, pca_project, split
from .fil import (
    FilValue, FisherMatrix, compose, example_etas, example_jacobian, fil_eta, fim, full_fim,
    subset_fim,
)
from .glm import ConvergenceError, LossKind, ModelParams, Trainer, fit
from .irfil import IrfilTrace, run_irfil, weight_update
from .mechanism import PerturbedModel, calibrate_sigma, perturb

__all__ = [
    "ConvergenceError", "Dataset", "FeatureSpec", "FilValue", "FisherMatrix", "IrfilTrace",
    "LossKind", "ModelParams", "PerturbedModel", "Trainer", "calibrate_sigma", "compose",
    "encode", "example_etas", "example_jacobian", "fil_eta", "fim", "fit", "full_fim",
    "load_csv", "normalize_unit_ball", "pca_project", "perturb", "run_irfil", "split",
    "subset_fim", "weight_update",
]
