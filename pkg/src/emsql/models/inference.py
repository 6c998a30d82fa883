"""Querying trained model views: posteriors, cluster assignment, log-likelihood."""

from __future__ import annotations

import functools

import numpy as np

from .. import kernels
from ..catalog import Database
from ..engine import evaluate
from ..relation import Relation
from ..sql.lower import compile_script
from .base import data_columns
from .params import GmmParams, MlrParams, MoeParams

POSTERIOR_SQL = """
select x.id, gmm.k,
       norm(x.x, gmm.mean, gmm.cov) * gmm.pie
         / sum(norm(x.x, gmm.mean, gmm.cov) * gmm.pie) over (partition by x.id) as p
from gmm, x
"""

# argmax per id; ties go to the smallest component id
ASSIGN_SQL = """
select r.id, min(r.k) as k
from r, (select id, max(p) as pmax from r group by id) as m
where r.id = m.id and r.p = m.pmax
group by r.id
"""


@functools.lru_cache(maxsize=None)
def _plan(text: str):
    return compile_script(text)


def infer_posterior(params: GmmParams, X: Relation) -> Relation:
    """Responsibilities R(id, k, p) of every component for every point."""
    db = Database({"gmm": params.to_relation(), "x": data_columns(X, ("id", "x"))})
    out, _ = evaluate(_plan(POSTERIOR_SQL), db)
    return out


def cluster_assign(R: Relation) -> Relation:
    """CLU(id, k): the most probable component per point."""
    db = Database({"r": R.rename(["id", "k", "p"])})
    out, _ = evaluate(_plan(ASSIGN_SQL), db)
    return out.sorted_by(["id"])


def _gmm_component_densities(params: GmmParams, x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    dens = np.empty((n, params.K))
    for j in range(params.K):
        m = np.broadcast_to(params.mean[j], x.shape)
        c = np.broadcast_to(params.cov[j], (n,) + params.cov[j].shape)
        dens[:, j] = kernels.floored(kernels.norm_pdf_batch(x, m, c))
    return dens


def _mlr_component_densities(params, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    mu = x @ params.beta.T
    return kernels.floored(kernels.norm_pdf_1d(y[:, None], mu, params.sigma[None, :]))


def _gates(theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    logits = x @ theta.T
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def log_likelihood(params, data: Relation) -> float:
    """Sum over points of ln sum_k w_k f_k(point), with densities floored."""
    if isinstance(params, GmmParams):
        x = np.asarray(data_columns(data, ("id", "x")).column("x"))
        mix = _gmm_component_densities(params, x) @ params.pie
    else:
        rel = data_columns(data, ("id", "x", "y"))
        x, y = np.asarray(rel.column("x")), np.asarray(rel.column("y"), dtype=np.float64)
        dens = _mlr_component_densities(params, x, y)
        if isinstance(params, MlrParams):
            mix = dens @ params.pie
        elif isinstance(params, MoeParams):
            mix = (dens * _gates(params.theta, x)).sum(axis=1)
        else:
            raise TypeError(f"unsupported parameters {type(params).__name__}")
    return float(np.sum(np.log(mix)))


def gmm_responsibilities(params: GmmParams, x: np.ndarray) -> np.ndarray:
    """Host-side E-step; rows are points, columns components."""
    w = _gmm_component_densities(params, np.asarray(x, dtype=np.float64)) * params.pie
    return w / w.sum(axis=1, keepdims=True)
