"""Deep boosting with soft decision trees and compositional AUC training."""

from ._dbdt import (
    AucHead,
    BalanceDecay,
    DualProjection,
    InputError,
    JacobianMode,
    Model,
    NumericError,
    PdscaConfig,
    Regularization,
    SgdConfig,
    TreeShape,
    auc,
    confusion,
    h_measure,
    init_model,
    load_csv,
    load_model,
    make_two_gaussians,
    permutation_importance,
    residuals,
    roc_curve,
    save_model,
    train_pdsca,
    train_sgd,
)

__all__ = [
    "AucHead",
    "BalanceDecay",
    "DualProjection",
    "InputError",
    "JacobianMode",
    "Model",
    "NumericError",
    "PdscaConfig",
    "Regularization",
    "SgdConfig",
    "TreeShape",
    "auc",
    "confusion",
    "h_measure",
    "init_model",
    "load_csv",
    "load_model",
    "make_two_gaussians",
    "permutation_importance",
    "residuals",
    "roc_curve",
    "save_model",
    "train_pdsca",
    "train_sgd",
]
