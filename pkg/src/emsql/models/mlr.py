"""Mixtures of linear regressions and mixtures of experts."""

from __future__ import annotations

import numpy as np

from ..relation import Relation
from .base import EMPTY_MASS, SIGMA_FLOOR, FitResult, Provided, TrainConfig, data_columns, data_range, fit, script_plan, warn_empty
from .inference import log_likelihood
from .params import MlrParams, MoeParams


def _prepare(XY: Relation, cfg: TrainConfig):
    data = data_columns(XY, ("id", "x", "y"))
    x = np.asarray(data.column("x"))
    y = np.asarray(data.column("y"), dtype=np.float64)
    n, d = x.shape
    if n < cfg.K * d:
        raise ValueError(f"need at least K*d={cfg.K * d} points, got {n}")
    sigma_min = SIGMA_FLOOR * data_range(y)
    return data, x, y, sigma_min


def _init_experts(x, y, cfg: TrainConfig, rng):
    lo = 0.0 if cfg.init.lo is None else cfg.init.lo
    hi = 10.0 if cfg.init.hi is None else cfg.init.hi
    beta = rng.uniform(lo, hi, size=(cfg.K, x.shape[1]))
    sd = float(np.std(y)) or 1.0
    return beta, np.full(cfg.K, sd)


def init_mlr(x, y, cfg: TrainConfig, rng) -> MlrParams:
    """Coefficients uniform on [lo, hi] (default [0, 10]), sigma = std(y), equal weights."""
    if isinstance(cfg.init, Provided):
        p = cfg.init.params
        return MlrParams(p.pie.copy(), p.beta.copy(), p.sigma.copy(), p.k.copy())
    beta, sigma = _init_experts(x, y, cfg, rng)
    return MlrParams(np.full(cfg.K, 1.0 / cfg.K), beta, sigma)


def init_moe(x, y, cfg: TrainConfig, rng) -> MoeParams:
    """Like :func:`init_mlr` with all gate weights zero (a uniform gate)."""
    if isinstance(cfg.init, Provided):
        p = cfg.init.params
        return MoeParams(p.theta.copy(), p.beta.copy(), p.sigma.copy(), p.k.copy())
    beta, sigma = _init_experts(x, y, cfg, rng)
    return MoeParams(np.zeros_like(beta), beta, sigma)


def _mlr_repair(x, y, cfg, rng):
    n = x.shape[0]

    def repair(p: MlrParams) -> MlrParams | None:
        empty = p.pie * n < EMPTY_MASS
        if not empty.any():
            return None
        beta, sigma = _init_experts(x, y, cfg, rng)
        q = MlrParams(p.pie.copy(), p.beta.copy(), p.sigma.copy(), p.k.copy())
        for j in np.flatnonzero(empty):
            warn_empty(int(q.k[j]))
            q.beta[j], q.sigma[j], q.pie[j] = beta[j], sigma[j], 1.0 / q.K
        q.pie = q.pie / q.pie.sum()
        return q

    return repair


def train_mlr(XY: Relation, cfg: TrainConfig) -> FitResult:
    """EM for a K-component mixture of linear regressions via the shipped script."""
    data, x, y, sigma_min = _prepare(XY, cfg)
    rng = np.random.default_rng(cfg.seed)
    init = init_mlr(x, y, cfg, rng)
    return fit(
        script_plan("mlr.sql"),
        {"xy": data},
        {"n": len(data), "sigma_min": sigma_min},
        init,
        MlrParams.from_relation,
        lambda p: log_likelihood(p, data),
        cfg,
        _mlr_repair(x, y, cfg, rng),
    )


def train_moe(XY: Relation, cfg: TrainConfig) -> FitResult:
    """Single-loop EM for a mixture of experts via the shipped script."""
    data, x, y, sigma_min = _prepare(XY, cfg)
    rng = np.random.default_rng(cfg.seed)
    init = init_moe(x, y, cfg, rng)
    return fit(
        script_plan("moe.sql"),
        {"xy": data},
        {"n": len(data), "sigma_min": sigma_min},
        init,
        MoeParams.from_relation,
        lambda p: log_likelihood(p, data),
        cfg,
    )
