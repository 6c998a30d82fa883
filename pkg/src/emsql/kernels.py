"""Numerical primitives: densities, distances, entropy, gating, least squares.

Scalar-argument functions check their inputs and are meant for host code;
the ``*_batch`` variants work row-wise over stacked arrays and back the
dialect's function table.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DimensionMismatch, NonPositiveDefinite, NotAProbabilityVector, SingularDesign

DENSITY_FLOOR = 1e-300
REGULARIZATION = 1e-6
LOG_2PI = math.log(2.0 * math.pi)


# factorization --------------------------------------------------------------


def _regularized(a: np.ndarray) -> np.ndarray:
    d = a.shape[-1]
    lam = REGULARIZATION * np.trace(a) / d
    return a + lam * np.eye(d)


def _check_symmetric(a: np.ndarray, what: str = "covariance") -> None:
    asym = np.abs(a - np.swapaxes(a, -1, -2))
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    if asym.size and asym.max() > 1e-9 * scale:
        raise NonPositiveDefinite(f"{what} matrix is not symmetric")


def cholesky(cov: np.ndarray, error=NonPositiveDefinite) -> np.ndarray:
    """Lower Cholesky factor, retrying once with a trace-scaled ridge."""
    cov = np.asarray(cov, dtype=np.float64)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    if not np.trace(cov) > 0:
        raise error("matrix is not positive definite and cannot be regularized (trace <= 0)")
    try:
        return np.linalg.cholesky(_regularized(cov))
    except np.linalg.LinAlgError:
        raise error("matrix is not positive definite even after regularization") from None


def cholesky_batch(covs: np.ndarray, error=NonPositiveDefinite) -> np.ndarray:
    covs = np.asarray(covs, dtype=np.float64)
    if covs.shape[0] == 0:
        return covs.copy()
    try:
        return np.linalg.cholesky(covs)
    except np.linalg.LinAlgError:
        out = np.empty_like(covs)
        for i in range(covs.shape[0]):
            out[i] = cholesky(covs[i], error)
        return out


def _unique_matrices(mats: np.ndarray):
    """Collapse runs of identical matrices; returns (unique, inverse) or None.

    Relational plans broadcast a handful of parameter matrices over many rows
    (a Cartesian product of K components with n points), so factorizing the
    distinct ones is much cheaper than factorizing every row.
    """
    m = mats.shape[0]
    if m < 64:
        return None
    flat = np.ascontiguousarray(mats).reshape(m, -1)
    # cheap fingerprint first; confirm exact equality afterwards
    probe = flat @ np.linspace(1.0, 2.0, flat.shape[1])
    _, first, inverse = np.unique(probe, return_index=True, return_inverse=True)
    if len(first) * 4 > m:
        return None
    uniq = mats[first]
    if not np.array_equal(uniq[inverse], mats):
        return None
    return uniq, inverse


# densities -----------------------------------------------------------------


def log_norm_pdf_batch(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Row-wise multivariate normal log-density; x, mean are (m, d), cov is (m, d, d)."""
    x = np.asarray(x, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    cov = np.asarray(cov, dtype=np.float64)
    if x.shape != mean.shape or cov.shape != x.shape + (x.shape[-1],):
        raise DimensionMismatch(f"norm: shapes {x.shape}, {mean.shape}, {cov.shape} disagree")
    m, d = x.shape
    if m == 0:
        return np.zeros(0)
    _check_symmetric(cov)
    diff = x - mean
    uniq = _unique_matrices(cov)
    if uniq is not None:
        mats, inverse = uniq
        chol = cholesky_batch(mats)
        logdet = 2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
        maha = np.empty(m)
        for j in range(len(mats)):
            rows = np.flatnonzero(inverse == j)
            z = np.linalg.solve(chol[j], diff[rows].T)
            maha[rows] = np.einsum("ij,ij->j", z, z)
        logdet = logdet[inverse]
    else:
        chol = cholesky_batch(cov)
        z = np.linalg.solve(chol, diff[..., None])[..., 0]
        maha = np.einsum("ij,ij->i", z, z)
        logdet = 2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
    return -0.5 * (d * LOG_2PI + logdet + maha)


def norm_pdf_batch(x, mean, cov) -> np.ndarray:
    return np.exp(log_norm_pdf_batch(x, mean, cov))


def norm_pdf(x, mean, cov) -> float:
    """Multivariate normal density N(x | mean, cov) for a single point."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    return float(norm_pdf_batch(x[None], mean[None], cov[None])[0])


def log_norm_pdf_1d(x, mean, sd) -> np.ndarray:
    """Univariate normal log-density parameterized by standard deviation."""
    sd = np.asarray(sd, dtype=np.float64)
    if np.any(sd <= 0):
        raise NonPositiveDefinite("standard deviation must be positive")
    z = (np.asarray(x, dtype=np.float64) - mean) / sd
    return -0.5 * (LOG_2PI + z * z) - np.log(sd)


def norm_pdf_1d(x, mean, sd):
    out = np.exp(log_norm_pdf_1d(x, mean, sd))
    return float(out) if np.ndim(out) == 0 else out


def floored(density):
    """Apply the underflow floor used before Bayes-rule normalization."""
    return np.maximum(density, DENSITY_FLOOR)


# distances and information -------------------------------------------------------


def mahalanobis_batch(x, mean, cov) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    cov = np.asarray(cov, dtype=np.float64)
    if x.shape != mean.shape or cov.shape != x.shape + (x.shape[-1],):
        raise DimensionMismatch(f"mahalanobis: shapes {x.shape}, {mean.shape}, {cov.shape} disagree")
    if x.shape[0] == 0:
        return np.zeros(0)
    _check_symmetric(cov)
    chol = cholesky_batch(cov)
    z = np.linalg.solve(chol, (x - mean)[..., None])[..., 0]
    return np.sqrt(np.einsum("ij,ij->i", z, z))


def mahalanobis(x, mean, cov) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    return float(mahalanobis_batch(x[None], mean[None], cov[None])[0])


def entropy_batch(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2:
        raise DimensionMismatch("entropy expects a stack of probability vectors")
    if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-9):
        raise NotAProbabilityVector("entries must be nonnegative and sum to 1")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return -terms.sum(axis=1) + 0.0


def entropy(posteriors) -> float:
    """Shannon entropy in nats, with 0 ln 0 taken as 0."""
    p = np.atleast_1d(np.asarray(posteriors, dtype=np.float64))
    return float(entropy_batch(p[None])[0])


def softmax_gate(x, thetas) -> np.ndarray:
    """Gating probabilities exp(x.theta_k) / sum_j exp(x.theta_j)."""
    x = np.asarray(x, dtype=np.float64)
    thetas = np.asarray(thetas, dtype=np.float64)
    if thetas.ndim != 2 or thetas.shape[1] != x.shape[-1]:
        raise DimensionMismatch(f"softmax_gate: x has {x.shape[-1]} entries, thetas {thetas.shape}")
    # row-wise products and an exactly rounded total keep the result
    # independent of component order
    logits = (thetas * x).sum(axis=1)
    e = np.exp(logits - logits.max())
    return e / math.fsum(e.tolist())


# linear algebra ---------------------------------------------------------------


def spd_solve(a, b, error=SingularDesign) -> np.ndarray:
    """Solve a x = b for symmetric positive-definite a via Cholesky."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[-1] != b.shape[-1] or a.shape[-2] != a.shape[-1]:
        raise DimensionMismatch(f"solve: matrix {a.shape} and vector {b.shape} disagree")
    chol = cholesky(a, error)
    y = np.linalg.solve(chol, b)
    return np.linalg.solve(chol.T, y)


def spd_solve_batch(a: np.ndarray, b: np.ndarray, error=SingularDesign) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[:-1] != b.shape or a.shape[-1] != a.shape[-2]:
        raise DimensionMismatch(f"solve: matrices {a.shape} and vectors {b.shape} disagree")
    if a.shape[0] == 0:
        return b.copy()
    chol = cholesky_batch(a, error)
    y = np.linalg.solve(chol, b[..., None])
    return np.linalg.solve(np.swapaxes(chol, -1, -2), y)[..., 0]


def least_squares(X, y, weights=None) -> np.ndarray:
    """Weighted least squares via the normal equations (X'WX) b = X'Wy."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"least_squares: design {X.shape} and targets {y.shape} disagree")
    n, d = X.shape
    if n < d:
        raise SingularDesign(f"need at least {d} observations, got {n}")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (n,) or np.any(w < 0):
        raise SingularDesign("weights must be n nonnegative reals")
    xtw = X.T * w
    return spd_solve(xtw @ X, xtw @ y)


def dot(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"dot: {a.shape} vs {b.shape}")
    return float(a @ b)


def outer(a, b) -> np.ndarray:
    return np.outer(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))


def scale(s: float, v) -> np.ndarray:
    return float(s) * np.asarray(v, dtype=np.float64)


def mat_add(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"mat_add: {a.shape} vs {b.shape}")
    return a + b


def mat_sub_outer(a, mu) -> np.ndarray:
    """a - mu mu^T, the second-moment-to-covariance correction."""
    a = np.asarray(a, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if a.shape != (mu.shape[0], mu.shape[0]):
        raise DimensionMismatch(f"mat_sub_outer: {a.shape} vs {mu.shape}")
    return a - np.outer(mu, mu)
