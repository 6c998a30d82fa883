"""Mixture models expressed as recursive query scripts."""

from __future__ import annotations

from .base import FitResult, Provided, RandomUniform, TrainConfig, script_plan, script_text
from .gmm import train_gmm
from .inference import cluster_assign, infer_posterior, log_likelihood
from .metrics import evaluate_clustering, nmi, purity
from .mlr import train_mlr, train_moe
from .params import GmmParams, MlrParams, MoeParams, params_from_relation

__all__ = [
    "FitResult",
    "GmmParams",
    "MlrParams",
    "MoeParams",
    "Provided",
    "RandomUniform",
    "TrainConfig",
    "cluster_assign",
    "evaluate_clustering",
    "infer_posterior",
    "log_likelihood",
    "nmi",
    "params_from_relation",
    "purity",
    "script_plan",
    "script_text",
    "train_gmm",
    "train_mlr",
    "train_moe",
]
