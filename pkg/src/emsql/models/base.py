"""Training configuration and the shared driver that runs a model script."""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Callable

import numpy as np

from ..catalog import Database
from ..engine import EvalTrace, IterationRecord, evaluate, evaluate_resumable
from ..errors import EmptyClusterWarning, SchemaError
from ..relation import Attribute, Kind, Relation
from ..sql.lower import LogicalPlan, compile_script

EMPTY_MASS = 1e-8
SIGMA_FLOOR = 1e-6  # relative to the data range


@dataclass(frozen=True)
class RandomUniform:
    """Draw initial locations uniformly; ``None`` bounds mean "from the data"."""

    lo: float | None = None
    hi: float | None = None


@dataclass(frozen=True)
class Provided:
    params: Any


@dataclass
class TrainConfig:
    K: int
    max_iterations: int = 10
    seed: int = 0
    init: RandomUniform | Provided = field(default_factory=RandomUniform)
    epsilon: float | None = None
    max_chunks: int = 100

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        init = self.init
        if isinstance(init, RandomUniform) and init.lo is not None and init.hi is not None and not init.lo < init.hi:
            raise ValueError("RandomUniform needs lo < hi")


@dataclass
class FitResult:
    """Outcome of a training run.

    ``loglik[0]`` is the log-likelihood of the initial parameters and
    ``loglik[t]`` that after iteration t; ``history`` is aligned with it.
    """

    params: Any
    loglik: list[float]
    history: list[Any]
    trace: EvalTrace

    @property
    def iterations(self) -> int:
        return len(self.history) - 1


def script_text(name: str) -> str:
    return (resources.files("emsql.models") / "scripts" / name).read_text(encoding="utf-8")


@functools.lru_cache(maxsize=None)
def script_plan(name: str) -> LogicalPlan:
    return compile_script(script_text(name))


def data_columns(rel: Relation, names: tuple[str, ...]) -> Relation:
    """Project ``rel`` onto ``names``, turning a scalar ``x`` column into a 1-vector."""
    missing = [n for n in names if n not in rel.names]
    if missing:
        raise SchemaError(f"input relation needs columns {names}, missing {missing}")
    attrs, cols = [], []
    for n in names:
        a = rel.schema[n]
        c = rel.column(n)
        if n == "x" and a.kind.numeric:
            a, c = Attribute("x", Kind.VEC, 1), np.asarray(c, dtype=np.float64).reshape(-1, 1)
        attrs.append(a.renamed(n))
        cols.append(c)
    return Relation(attrs, cols, nrows=len(rel))


def warn_empty(k: int) -> None:
    warnings.warn(f"component {k} lost all responsibility mass and was reinitialized", EmptyClusterWarning, stacklevel=3)


def fit(
    plan: LogicalPlan,
    tables: dict[str, Relation],
    host_params: dict[str, object],
    init,
    decode: Callable[[Relation], Any],
    loglik: Callable[[Any], float],
    cfg: TrainConfig,
    repair: Callable[[Any], Any | None] | None = None,
) -> FitResult:
    """Run a model script from ``init``, tracking parameters and log-likelihood per iteration."""
    db = Database(dict(tables, init_para=init.to_relation("init_para")), host_params)
    history = [init]
    ll = [loglik(init)]

    def hook(t: int, r: Relation):
        p = decode(r)
        fixed = repair(p) if repair is not None else None
        if fixed is not None:
            p = fixed
        history.append(p)
        ll.append(loglik(p))
        return p.to_relation(plan.name) if fixed is not None else None

    _, trace = evaluate(plan, db, on_iteration=hook, max_recursion=cfg.max_iterations)
    records = list(trace.records)
    chunks = 1
    if cfg.epsilon is not None:
        while (
            trace.exit_reason == "bound"
            and chunks < cfg.max_chunks
            and not (len(ll) >= 2 and abs(ll[-1] - ll[-2]) < cfg.epsilon)
        ):
            _, trace = evaluate_resumable(plan, db, trace.recursive, on_iteration=hook, max_recursion=cfg.max_iterations)
            offset = len(records)
            records += [IterationRecord(r.iteration + offset, r.rows, r.changed, r.millis) for r in trace.records]
            chunks += 1
    combined = EvalTrace(records, trace.exit_reason, trace.recursive)
    return FitResult(history[-1], ll, history, combined)


def data_range(values: np.ndarray) -> float:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return 1.0
    span = float(np.max(v.max(axis=0) - v.min(axis=0)))
    return span if span > 0 else 1.0
