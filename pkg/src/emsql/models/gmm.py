"""Gaussian mixture models trained through the recursive query engine."""

from __future__ import annotations

import numpy as np

from ..relation import Relation
from .base import EMPTY_MASS, SIGMA_FLOOR, FitResult, Provided, TrainConfig, data_columns, data_range, fit, script_plan, warn_empty
from .inference import log_likelihood
from .params import GmmParams

SCRIPT = "gmm.sql"


def sample_covariance(x: np.ndarray) -> np.ndarray:
    """Biased (1/n) sample covariance."""
    c = x - x.mean(axis=0)
    return c.T @ c / x.shape[0]


def init_gmm(x: np.ndarray, cfg: TrainConfig, rng: np.random.Generator) -> GmmParams:
    """Means uniform over the data's bounding box (or [lo, hi]); full-data covariance; equal weights."""
    if isinstance(cfg.init, Provided):
        return cfg.init.params.copy()
    n, d = x.shape
    lo = x.min(axis=0) if cfg.init.lo is None else np.full(d, cfg.init.lo)
    hi = x.max(axis=0) if cfg.init.hi is None else np.full(d, cfg.init.hi)
    mean = rng.uniform(lo, hi, size=(cfg.K, d))
    cov = np.repeat(sample_covariance(x)[None], cfg.K, axis=0)
    return GmmParams(np.full(cfg.K, 1.0 / cfg.K), mean, cov)


def make_repair(x: np.ndarray, rng: np.random.Generator):
    """Reinitialize empty components and keep covariances above the variance floor."""
    n = x.shape[0]
    pooled = sample_covariance(x)
    var_floor = (SIGMA_FLOOR * data_range(x)) ** 2

    def repair(p: GmmParams) -> GmmParams | None:
        empty = p.pie * n < EMPTY_MASS
        eig_min = np.linalg.eigvalsh(p.cov)[:, 0]
        thin = eig_min < var_floor
        if not empty.any() and not thin.any():
            return None
        q = p.copy()
        for j in np.flatnonzero(empty):
            warn_empty(int(q.k[j]))
            q.mean[j] = x[rng.integers(n)]
            q.cov[j] = pooled
            q.pie[j] = 1.0 / q.K
        q.pie = q.pie / q.pie.sum()
        # clipping the eigenvalues is the constrained M-step, so EM still ascends
        for j in np.flatnonzero(thin & ~empty):
            w, v = np.linalg.eigh(q.cov[j])
            c = (v * np.maximum(w, var_floor)) @ v.T
            q.cov[j] = 0.5 * (c + c.T)
        return q

    return repair


def train_gmm(X: Relation, cfg: TrainConfig) -> FitResult:
    """Fit a K-component GMM by running the shipped EM script for up to cfg.max_iterations steps."""
    data = data_columns(X, ("id", "x"))
    x = np.asarray(data.column("x"))
    if len(data) < cfg.K:
        raise ValueError(f"need at least K={cfg.K} points, got {len(data)}")
    rng = np.random.default_rng(cfg.seed)
    init = init_gmm(x, cfg, rng)
    return fit(
        script_plan(SCRIPT),
        {"x": data},
        {"n": len(data)},
        init,
        GmmParams.from_relation,
        lambda p: log_likelihood(p, data),
        cfg,
        make_repair(x, rng),
    )
