from .base import (
    CLASSIFY_FAMILIES,
    FAMILIES,
    REGRESS_FAMILIES,
    MetaModel,
    load_model,
    save_model,
)
from .boosting import GBParams, fit_gradient_boosting, gb_train_losses
from .linear import fit_linear, lasso_null_lambda
from .logistic import fit_logistic_l1
from .network import NNParams, fit_shallow_nn, nn_init, nn_loss_and_grads

__all__ = [
    "CLASSIFY_FAMILIES",
    "FAMILIES",
    "REGRESS_FAMILIES",
    "MetaModel",
    "load_model",
    "save_model",
    "GBParams",
    "fit_gradient_boosting",
    "gb_train_losses",
    "fit_linear",
    "lasso_null_lambda",
    "fit_logistic_l1",
    "NNParams",
    "fit_shallow_nn",
    "nn_init",
    "nn_loss_and_grads",
]
