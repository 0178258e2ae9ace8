"""High-dimensional logistic regression on dependent (augmented) data.

Simulation of risk universality against matched Gaussian surrogates,
empirical verification of the low-rank Gaussian min-max comparison
inequalities, and deterministic fixed-point prediction of the asymptotic
training and test risk under data augmentation.
"""

__version__ = "0.1.0"

from .augment import (AugmentationScheme, CoordinateDistribution,
                      GroupStructure, SignalSpec, augment_dataset,
                      make_beta_star, sample_original)
from .covmodel import (AssumptionReport, CovarianceModel, ExperimentDims,
                       build_from_scheme, estimate_from_samples,
                       verify_cgmt_var_assumption)
from .logit import (FitResult, LabelModel, LogitConfig, fit_gd, generate_labels,
                    sp_membership, test_risk_mc, train_risk)
from .surrogate import (BlockCovariance, build_block_covariance,
                        sample_surrogate_dataset, sample_surrogate_fast)

__all__ = [
    "AugmentationScheme", "CoordinateDistribution", "GroupStructure",
    "SignalSpec", "augment_dataset", "make_beta_star", "sample_original",
    "AssumptionReport", "CovarianceModel", "ExperimentDims",
    "build_from_scheme", "estimate_from_samples", "verify_cgmt_var_assumption",
    "FitResult", "LabelModel", "LogitConfig", "fit_gd", "generate_labels",
    "sp_membership", "test_risk_mc", "train_risk",
    "BlockCovariance", "build_block_covariance", "sample_surrogate_dataset",
    "sample_surrogate_fast",
]
