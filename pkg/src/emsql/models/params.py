"""Parameter containers and their relational (model view) form."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import SchemaError
from ..relation import Attribute, Kind, Relation


def _ordered(rel: Relation) -> Relation:
    if "k" not in rel.names:
        raise SchemaError(f"model view needs a k column, got {rel.names}")
    return rel.sorted_by(["k"])


def _vec(rel: Relation, name: str) -> np.ndarray:
    a = rel.schema[name]
    c = np.asarray(rel.column(name), dtype=np.float64)
    return c if a.kind is Kind.VEC else c.reshape(-1, 1)


@dataclass
class GmmParams:
    """K components: mixing weights (K,), means (K, d), covariances (K, d, d)."""

    pie: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    k: np.ndarray = field(default=None)  # component ids, 1..K by default

    def __post_init__(self):
        self.pie = np.asarray(self.pie, dtype=np.float64).reshape(-1)
        self.mean = np.atleast_2d(np.asarray(self.mean, dtype=np.float64))
        K, d = self.mean.shape
        self.cov = np.asarray(self.cov, dtype=np.float64).reshape(K, d, d)
        self.k = np.arange(1, K + 1, dtype=np.int64) if self.k is None else np.asarray(self.k, dtype=np.int64)
        if self.pie.shape != (K,) or self.k.shape != (K,):
            raise SchemaError("pie, mean and k must describe the same number of components")

    @property
    def K(self) -> int:
        return len(self.pie)

    @property
    def d(self) -> int:
        return self.mean.shape[1]

    def to_relation(self, name: str = "gmm") -> Relation:
        attrs = [
            Attribute("k", Kind.INT),
            Attribute("pie", Kind.REAL),
            Attribute("mean", Kind.VEC, self.d),
            Attribute("cov", Kind.MAT, self.d),
        ]
        return Relation(attrs, [self.k, self.pie, self.mean, self.cov], key=["k"], name=name)

    @classmethod
    def from_relation(cls, rel: Relation) -> "GmmParams":
        """Read a model view; scalar mean/cov columns are read as 1-d with cov a standard deviation."""
        rel = _ordered(rel)
        mean = _vec(rel, "mean")
        a = rel.schema["cov"]
        cov = np.asarray(rel.column("cov"), dtype=np.float64)
        if a.kind is not Kind.MAT:
            cov = (cov**2).reshape(-1, 1, 1)
        return cls(rel.column("pie"), mean, cov, rel.column("k"))

    def copy(self) -> "GmmParams":
        return GmmParams(self.pie.copy(), self.mean.copy(), self.cov.copy(), self.k.copy())

    def check(self, tol: float = 1e-9) -> None:
        """Raise if the mixture weights or covariances violate their invariants."""
        if abs(self.pie.sum() - 1.0) > tol or np.any(self.pie < 0):
            raise ValueError(f"mixing weights must be nonnegative and sum to 1, got {self.pie}")
        if not np.allclose(self.cov, np.swapaxes(self.cov, 1, 2), atol=tol):
            raise ValueError("covariances must be symmetric")
        if np.any(np.linalg.eigvalsh(self.cov) < -tol):
            raise ValueError("covariances must be positive semi-definite")

    def max_abs_diff(self, other: "GmmParams") -> float:
        return max(
            float(np.max(np.abs(self.pie - other.pie))),
            float(np.max(np.abs(self.mean - other.mean))),
            float(np.max(np.abs(self.cov - other.cov))),
        )


@dataclass
class MlrParams:
    """Mixture of linear regressions: weights (K,), coefficients (K, d), noise std (K,)."""

    pie: np.ndarray
    beta: np.ndarray
    sigma: np.ndarray
    k: np.ndarray = field(default=None)

    def __post_init__(self):
        self.pie = np.asarray(self.pie, dtype=np.float64).reshape(-1)
        self.beta = np.atleast_2d(np.asarray(self.beta, dtype=np.float64))
        self.sigma = np.asarray(self.sigma, dtype=np.float64).reshape(-1)
        K = len(self.pie)
        self.k = np.arange(1, K + 1, dtype=np.int64) if self.k is None else np.asarray(self.k, dtype=np.int64)

    @property
    def K(self) -> int:
        return len(self.pie)

    def to_relation(self, name: str = "mlr") -> Relation:
        d = self.beta.shape[1]
        attrs = [
            Attribute("k", Kind.INT),
            Attribute("pie", Kind.REAL),
            Attribute("beta", Kind.VEC, d),
            Attribute("sigma", Kind.REAL),
        ]
        return Relation(attrs, [self.k, self.pie, self.beta, self.sigma], key=["k"], name=name)

    @classmethod
    def from_relation(cls, rel: Relation) -> "MlrParams":
        rel = _ordered(rel)
        return cls(rel.column("pie"), _vec(rel, "beta"), rel.column("sigma"), rel.column("k"))

    def max_abs_diff(self, other: "MlrParams") -> float:
        return max(
            float(np.max(np.abs(self.pie - other.pie))),
            float(np.max(np.abs(self.beta - other.beta))),
            float(np.max(np.abs(self.sigma - other.sigma))),
        )


@dataclass
class MoeParams:
    """Mixture of experts: gate weights (K, d), coefficients (K, d), noise std (K,)."""

    theta: np.ndarray
    beta: np.ndarray
    sigma: np.ndarray
    k: np.ndarray = field(default=None)

    def __post_init__(self):
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=np.float64))
        self.beta = np.atleast_2d(np.asarray(self.beta, dtype=np.float64))
        self.sigma = np.asarray(self.sigma, dtype=np.float64).reshape(-1)
        K = len(self.sigma)
        self.k = np.arange(1, K + 1, dtype=np.int64) if self.k is None else np.asarray(self.k, dtype=np.int64)

    @property
    def K(self) -> int:
        return len(self.sigma)

    def to_relation(self, name: str = "moe") -> Relation:
        d = self.beta.shape[1]
        attrs = [
            Attribute("k", Kind.INT),
            Attribute("theta", Kind.VEC, d),
            Attribute("beta", Kind.VEC, d),
            Attribute("sigma", Kind.REAL),
        ]
        return Relation(attrs, [self.k, self.theta, self.beta, self.sigma], key=["k"], name=name)

    @classmethod
    def from_relation(cls, rel: Relation) -> "MoeParams":
        rel = _ordered(rel)
        return cls(_vec(rel, "theta"), _vec(rel, "beta"), rel.column("sigma"), rel.column("k"))

    def max_abs_diff(self, other: "MoeParams") -> float:
        return max(
            float(np.max(np.abs(self.theta - other.theta))),
            float(np.max(np.abs(self.beta - other.beta))),
            float(np.max(np.abs(self.sigma - other.sigma))),
        )


def params_from_relation(rel: Relation):
    """Pick the parameter class matching a model view's columns."""
    names = set(rel.names)
    if {"pie", "mean", "cov"} <= names:
        return GmmParams.from_relation(rel)
    if {"theta", "beta", "sigma"} <= names:
        return MoeParams.from_relation(rel)
    if {"pie", "beta", "sigma"} <= names:
        return MlrParams.from_relation(rel)
    raise SchemaError(f"not a model view: {rel.names}")
