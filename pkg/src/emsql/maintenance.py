"""Incremental maintenance of GMM model views under inserts and deletes.

A model view is kept in sync with its base table through per-component
sufficient statistics (n_k, s1_k = sum p x, s2_k = sum p x x^T).  Inserts add
the new points' contributions, deletes subtract them, and a few stochastic
passes over a small staging set X' refine the result.  :class:`ModelMaintenance`
wires this into :class:`~emsql.catalog.Database` triggers.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from . import operators as ops
from .catalog import Database, Trigger
from .errors import EmptyComponent, SchemaError
from .relation import Attribute, Kind, Relation
from .models.base import EMPTY_MASS, data_columns
from .models.inference import log_likelihood
from .models.params import GmmParams

EIG_FLOOR = kernels.REGULARIZATION


@dataclass
class SuffStats:
    nk: np.ndarray  # (K,)
    s1: np.ndarray  # (K, d)
    s2: np.ndarray  # (K, d, d)
    n: int
    k: np.ndarray = field(default=None)

    def __post_init__(self):
        self.nk = np.asarray(self.nk, dtype=np.float64).reshape(-1)
        self.s1 = np.atleast_2d(np.asarray(self.s1, dtype=np.float64))
        K, d = self.s1.shape
        self.s2 = np.asarray(self.s2, dtype=np.float64).reshape(K, d, d)
        self.n = int(self.n)
        self.k = np.arange(1, K + 1, dtype=np.int64) if self.k is None else np.asarray(self.k, dtype=np.int64)

    @property
    def K(self) -> int:
        return len(self.nk)

    def copy(self) -> "SuffStats":
        return SuffStats(self.nk.copy(), self.s1.copy(), self.s2.copy(), self.n, self.k.copy())

    def add(self, x: np.ndarray, p: np.ndarray, sign: float = 1.0) -> None:
        """Add (or with sign=-1 remove) points x weighted by posteriors p, in place."""
        if len(x) == 0:
            return
        self.nk += sign * p.sum(axis=0)
        self.s1 += sign * (p.T @ x)
        self.s2 += sign * np.einsum("ik,ia,ib->kab", p, x, x)

    def max_abs_diff(self, other: "SuffStats") -> float:
        return max(
            float(np.max(np.abs(self.nk - other.nk))),
            float(np.max(np.abs(self.s1 - other.s1))),
            float(np.max(np.abs(self.s2 - other.s2))),
            float(abs(self.n - other.n)),
        )

    def to_relation(self, name: str = "stats") -> Relation:
        d = self.s1.shape[1]
        attrs = [
            Attribute("k", Kind.INT),
            Attribute("n", Kind.INT),
            Attribute("nk", Kind.REAL),
            Attribute("s1", Kind.VEC, d),
            Attribute("s2", Kind.MAT, d),
        ]
        cols = [self.k, np.full(self.K, self.n, dtype=np.int64), self.nk, self.s1, self.s2]
        return Relation(attrs, cols, key=["k"], name=name)

    @classmethod
    def from_relation(cls, rel: Relation) -> "SuffStats":
        rel = rel.sorted_by(["k"])
        n = np.asarray(rel.column("n"))
        return cls(rel.column("nk"), rel.column("s1"), rel.column("s2"), int(n[0]) if len(n) else 0, rel.column("k"))


class _Posterior:
    """E-step for one parameter set, with the per-component factorizations cached."""

    def __init__(self, params: GmmParams):
        chol = kernels.cholesky_batch(params.cov)
        self.inv_chol = np.linalg.inv(chol)
        self.log_norm = -0.5 * params.d * np.log(2 * np.pi) - np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
        self.mean = params.mean
        self.pie = params.pie

    def __call__(self, x: np.ndarray) -> np.ndarray:
        z = np.einsum("kab,ikb->ika", self.inv_chol, x[:, None, :] - self.mean[None])
        logf = self.log_norm - 0.5 * np.einsum("ika,ika->ik", z, z)
        w = np.maximum(np.exp(logf), kernels.DENSITY_FLOOR) * self.pie
        return w / w.sum(axis=1, keepdims=True)


def responsibilities(params: GmmParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if len(x) == 0:
        return np.zeros((0, params.K))
    return _Posterior(params)(x)


def _points(X: Relation) -> tuple[np.ndarray, np.ndarray]:
    rel = data_columns(X, ("id", "x"))
    return np.asarray(rel.column("id")), np.asarray(rel.column("x"), dtype=np.float64)


def _posterior_matrix(R: Relation, ids: np.ndarray, k: np.ndarray) -> np.ndarray:
    row = {v: i for i, v in enumerate(ids.tolist())}
    col = {v: j for j, v in enumerate(k.tolist())}
    p = np.zeros((len(ids), len(k)))
    seen = np.zeros_like(p, dtype=bool)
    for i, j, v in zip(R.column("id").tolist(), R.column("k").tolist(), R.column("p").tolist()):
        if i not in row or j not in col:
            raise SchemaError(f"responsibility row ({i}, {j}) does not match the data or model")
        p[row[i], col[j]] = v
        seen[row[i], col[j]] = True
    if not seen.all():
        raise SchemaError("responsibilities must cover every (id, k) pair")
    return p


def stats_from_model(params: GmmParams, X: Relation, R: Relation | None = None) -> SuffStats:
    """Sufficient statistics of X under params; R, if given, supplies the posteriors."""
    ids, x = _points(X)
    if len(x) and x.shape[1] != params.d:
        raise SchemaError(f"data has dimension {x.shape[1]}, model {params.d}")
    p = responsibilities(params, x) if R is None else _posterior_matrix(R, ids, params.k)
    s = SuffStats(np.zeros(params.K), np.zeros((params.K, params.d)), np.zeros((params.K, params.d, params.d)), len(x), params.k.copy())
    s.add(x, p)
    return s


def stats_and_ledger(params: GmmParams, X: Relation) -> tuple[SuffStats, dict]:
    """Statistics of X plus each row's counted posterior, keyed by id."""
    ids, x = _points(X)
    if len(x) and x.shape[1] != params.d:
        raise SchemaError(f"data has dimension {x.shape[1]}, model {params.d}")
    p = responsibilities(params, x)
    s = SuffStats(np.zeros(params.K), np.zeros((params.K, params.d)), np.zeros((params.K, params.d, params.d)), len(x), params.k.copy())
    s.add(x, p)
    return s, dict(zip(ids.tolist(), p))


def ledger_to_relation(ledger: dict, k: np.ndarray, name: str = "contributions") -> Relation:
    rows = [(i, int(kk), float(v)) for i, p in sorted(ledger.items()) for kk, v in zip(k.tolist(), p)]
    attrs = [Attribute("id", Kind.INT), Attribute("k", Kind.INT), Attribute("p", Kind.REAL)]
    if not rows:
        return Relation.empty(attrs, name=name)
    cols = list(zip(*rows))
    return Relation(attrs, [np.asarray(cols[0]), np.asarray(cols[1]), np.asarray(cols[2], dtype=np.float64)], name=name)


def ledger_from_relation(rel: Relation, k: np.ndarray) -> dict:
    ids = np.asarray(rel.column("id")).tolist()
    return {i: row for i, row in zip(sorted(set(ids)), _posterior_matrix(rel, np.asarray(sorted(set(ids))), k))}


def _moments(s: SuffStats, fallback_mean, fallback_cov, eig_floor: float):
    empty = s.nk < EMPTY_MASS
    nk = np.where(empty, 1.0, s.nk)
    mean = s.s1 / nk[:, None]
    cov = s.s2 / nk[:, None, None] - mean[:, :, None] * mean[:, None, :]
    cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    w, v = np.linalg.eigh(cov)
    if w[:, 0].min() < eig_floor:
        cov = (v * np.maximum(w, eig_floor)[:, None, :]) @ np.swapaxes(v, 1, 2)
        cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    if empty.any():
        mean[empty] = fallback_mean[empty]
        cov[empty] = fallback_cov[empty]
    pie = np.maximum(s.nk, 0.0) / s.n
    total = pie.sum()
    if total <= 0:
        raise EmptyComponent("all components are empty")
    return pie / total, mean, cov


def params_from_stats(s: SuffStats, fallback: GmmParams | None = None, eig_floor: float = EIG_FLOOR) -> GmmParams:
    """Recover GMM parameters; covariance eigenvalues are clipped at eig_floor.

    A component whose mass is below the empty threshold raises EmptyComponent,
    unless ``fallback`` is given, in which case it keeps the fallback's mean and
    covariance with weight max(n_k, 0)/n.
    """
    if s.n <= 0:
        raise EmptyComponent("no data points left")
    empty = s.nk < EMPTY_MASS
    if empty.any() and fallback is None:
        raise EmptyComponent(f"component(s) {s.k[empty].tolist()} have no mass")
    fm, fc = (fallback.mean, fallback.cov) if fallback is not None else (None, None)
    pie, mean, cov = _moments(s, fm, fc, eig_floor)
    return GmmParams(pie, mean, cov, s.k.copy())


# data selection -------------------------------------------------------------


@dataclass(frozen=True)
class SelectionPolicy:
    """budget caps the number of retained original points; None means no cap."""

    budget: int | None = None

    def __post_init__(self):
        if self.budget is not None and self.budget < 0:
            raise ValueError("budget must be nonnegative")


@dataclass(frozen=True)
class DistanceBased(SelectionPolicy):
    """Retain points whose membership is ambiguous by Mahalanobis distance."""

    radius: float = 3.0


@dataclass(frozen=True)
class EntropyBased(SelectionPolicy):
    """Retain the points with the most uncertain posteriors."""


def _distances(params: GmmParams, x: np.ndarray) -> np.ndarray:
    n = len(x)
    out = np.empty((n, params.K))
    for j in range(params.K):
        out[:, j] = kernels.mahalanobis_batch(x, np.broadcast_to(params.mean[j], x.shape), np.broadcast_to(params.cov[j], (n, params.d, params.d)))
    return out


def select_retain_set(X: Relation, params: GmmParams, policy: SelectionPolicy) -> Relation:
    """Rows of X whose cluster membership is unstable, most ambiguous first."""
    ids, x = _points(X)
    if len(x) == 0 or policy.budget == 0:
        return X.take(np.zeros(0, dtype=np.int64))
    if isinstance(policy, DistanceBased):
        dist = _distances(params, x)
        inside = (dist <= policy.radius).sum(axis=1)
        keep = np.flatnonzero(inside != 1)
        if params.K == 1:
            score = -dist[keep, 0]
        else:
            two = np.sort(dist[keep], axis=1)[:, :2]
            score = two[:, 1] - two[:, 0]
    elif isinstance(policy, EntropyBased):
        keep = np.arange(len(x))
        score = -kernels.entropy_batch(responsibilities(params, x))
    else:
        raise TypeError(f"unknown selection policy {type(policy).__name__}")
    order = keep[np.lexsort((ids[keep], score))]
    if policy.budget is not None:
        order = order[: policy.budget]
    return X.take(order)


# update passes --------------------------------------------------------------


def _posterior_one(pie, mean, cov, x):
    chol = np.linalg.cholesky(cov)
    z = np.linalg.solve(chol, (x - mean)[:, :, None])[:, :, 0]
    logf = -0.5 * (z * z).sum(axis=1) - np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
    logf -= 0.5 * x.shape[0] * np.log(2 * np.pi)
    w = np.maximum(np.exp(logf), kernels.DENSITY_FLOOR) * pie
    return w / w.sum()


def _refine(params: GmmParams, s: SuffStats, theta0: GmmParams, X_prime: Relation, known: dict, T: int, seed) -> GmmParams:
    """T shuffled passes over X', swapping each point's old contribution for a fresh one.

    ``known`` maps ids to the contribution already counted in s; it is updated
    in place with the contributions left in s after the passes.
    """
    if T <= 0 or len(X_prime) == 0:
        return params
    ids, x = _points(X_prime)
    # posteriors under the warm start, for points whose contribution is not known yet
    old = responsibilities(theta0, x)
    for j, i in enumerate(ids.tolist()):
        if i in known:
            old[j] = known[i]
    pie, mean, cov = params.pie, params.mean, params.cov
    floor = -1e-6 * max(s.n, 1)
    rng = np.random.default_rng(seed)
    for _ in range(T):
        for i in rng.permutation(len(x)):
            xi = x[i]
            cur = _posterior_one(pie, mean, cov, xi)
            delta = cur - old[i]
            s.nk += delta
            s.s1 += delta[:, None] * xi
            s.s2 += delta[:, None, None] * np.outer(xi, xi)
            old[i] = cur
            if s.nk.min() < floor:
                raise EmptyComponent(f"component mass driven below zero: {s.nk.tolist()}")
            pie, mean, cov = _moments(s, mean, cov, EIG_FLOOR)
    known.update(zip(ids.tolist(), old))
    return GmmParams(pie, mean, cov, s.k.copy())


def _checked(s: SuffStats, params: GmmParams) -> GmmParams:
    if np.any(s.nk < -1e-6 * max(s.n, 1)):
        raise EmptyComponent(f"component mass driven below zero: {s.nk.tolist()}")
    return params_from_stats(s, fallback=params)


def model_update(
    params: GmmParams, s: SuffStats, X_prime: Relation, inserted: Relation, T: int = 0, seed=0, ledger: dict | None = None
) -> tuple[GmmParams, SuffStats]:
    """Fold inserted rows into the stats, then refine over X' (which includes them).

    ``ledger``, if given, maps row ids to the posterior each row contributes to
    s; it supplies the old contributions of retained rows and is kept current.
    """
    s = s.copy()
    theta0 = params
    ids, x = _points(inserted)
    p = responsibilities(theta0, x)
    s.add(x, p)
    s.n += len(x)
    known = {} if ledger is None else ledger
    known.update(zip(ids.tolist(), p))
    if len(x) == 0 and T <= 0:
        return params, s
    params = _checked(s, theta0)
    return _refine(params, s, theta0, X_prime, known, T, seed), s


def model_downdate(
    params: GmmParams, s: SuffStats, deleted: Relation, X_prime: Relation, T: int = 0, seed=0, ledger: dict | None = None
) -> tuple[GmmParams, SuffStats]:
    """Remove deleted rows' contributions, then refine over X'.

    A row found in ``ledger`` is removed with exactly the posterior it was
    counted with; other rows use their posterior under the current params.
    """
    s = s.copy()
    theta0 = params
    ids, x = _points(deleted)
    known = {} if ledger is None else ledger
    p = responsibilities(theta0, x)
    for j, i in enumerate(ids.tolist()):
        if i in known:
            p[j] = known.pop(i)
    s.add(x, p, sign=-1.0)
    s.n -= len(x)
    if len(x) == 0 and T <= 0:
        return params, s
    params = _checked(s, theta0)
    return _refine(params, s, theta0, X_prime, known, T, seed), s


# triggers -------------------------------------------------------------------


@dataclass
class MaintenanceReport:
    operation: str
    rows: int
    retained: int
    seconds: float
    loglik: float


class ModelMaintenance(Trigger):
    """Keeps a GMM view in sync with inserts into and deletes from its base table.

    T1 (before insert, per statement) stages the retain set X', T2 (per row)
    appends each incoming row to X', T3 (after insert) runs the update and
    drops X'.  Deletes run the downdate after the rows are gone.
    """

    def __init__(self, view: str, policy: SelectionPolicy, T: int = 0, seed=0, precompute: bool = True):
        self.view = view.lower()
        self.policy = policy
        self.T = T
        self.seed = seed
        self.precompute = precompute
        self.stats: SuffStats | None = None
        self.ledger: dict | None = None  # id -> posterior counted in stats
        self.reports: list[MaintenanceReport] = []
        self._staged: list[Relation] = []
        self._incoming: list[int] = []
        self._started = 0.0

    def staging_name(self, table: str) -> str:
        return f"{table}_prime"

    def _current(self, db: Database, table: str) -> tuple[GmmParams, SuffStats]:
        params = GmmParams.from_relation(db[self.view])
        if self.stats is None or not self.precompute:
            self.stats, self.ledger = stats_and_ledger(params, db[table])
        return params, self.stats

    def before_insert(self, db, table, rows):
        self._started = time.perf_counter()
        params, _ = self._current(db, table)
        retain = select_retain_set(db[table], params, self.policy)
        self._staged = [retain]
        self._incoming = []
        db.register(self.staging_name(table), retain)

    def before_insert_row(self, db, table, rows, index):
        self._incoming.append(index)
        staged = db[self.staging_name(table)]
        db.register(self.staging_name(table), _concat(staged, rows.take(np.asarray([index], dtype=np.int64))))

    def after_insert(self, db, table, rows):
        try:
            params, s = GmmParams.from_relation(db[self.view]), self.stats
            inserted = rows.take(np.asarray(self._incoming, dtype=np.int64))
            x_prime = db[self.staging_name(table)]
            params, s = model_update(params, s, x_prime, inserted, self.T, self.seed, self.ledger)
            self._publish(db, table, params, s, "insert", len(inserted), len(self._staged[0]))
        finally:
            db.drop(self.staging_name(table))
            self._staged, self._incoming = [], []

    def before_delete(self, db, table, rows):
        self._started = time.perf_counter()
        self._current(db, table)

    def after_delete(self, db, table, rows):
        params, s = GmmParams.from_relation(db[self.view]), self.stats
        retain = select_retain_set(db[table], params, self.policy)
        params, s = model_downdate(params, s, rows, retain, self.T, self.seed, self.ledger)
        self._publish(db, table, params, s, "delete", len(rows), len(retain))

    def _publish(self, db, table, params, s, op, m, retained):
        db.register(self.view, params.to_relation(self.view))
        self.stats = s
        ll = log_likelihood(params, db[table]) if len(db[table]) else 0.0
        self.reports.append(MaintenanceReport(op, m, retained, time.perf_counter() - self._started, ll))


def _concat(a: Relation, b: Relation) -> Relation:
    return ops.union_all(a.with_name(None), b.with_name(None))


def attach_triggers(
    db: Database, table: str, view: str, policy: SelectionPolicy, T: int = 0, seed=0, precompute: bool = True
) -> ModelMaintenance:
    """Bind a maintenance trigger set to ``table`` so mutations keep ``view`` current."""
    if table not in db or view not in db:
        raise SchemaError(f"need both table {table!r} and view {view!r} in the catalog")
    params = GmmParams.from_relation(db[view])
    rel = db[table]
    _, x = _points(rel)
    if len(x) and x.shape[1] != params.d:
        raise SchemaError(f"view {view!r} has dimension {params.d} but table {table!r} has {x.shape[1]}")
    trig = ModelMaintenance(view, policy, T, seed, precompute)
    if precompute:
        trig.stats, trig.ledger = stats_and_ledger(params, rel)
    db.attach(table, trig)
    return trig
