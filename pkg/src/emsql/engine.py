"""Iterative evaluation of lowered recursive programs.

The loop follows "initialize R; while R changes: R <- ..." semantics:

1. compute the computed-by temporaries in dependency order,
2. compute the step; if it is empty, stop,
3. merge the step into R (set union for UNION ALL, keyed replacement for
   UNION BY UPDATE),
4. stop when R did not change or the recursion bound is reached.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import operators as ops
from .errors import EngineError, EvaluationError, SchemaError
from .plan import Env, SelectPlan
from .relation import Kind, Relation, Schema
from .sql.lower import LogicalPlan, TempPlan, compile_script

IterationHook = Callable[[int, Relation], "Relation | None"]


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    rows: int
    changed: bool
    millis: float


@dataclass
class EvalTrace:
    records: list[IterationRecord] = field(default_factory=list)
    exit_reason: str = ""
    recursive: Relation | None = None  # the terminal recursive relation

    def __len__(self) -> int:
        return len(self.records)

    @property
    def iterations(self) -> int:
        return len(self.records)

    def millis(self) -> np.ndarray:
        return np.array([r.millis for r in self.records])

    def to_csv(self, target: str | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "rows", "changed", "millis"])
        for r in self.records:
            w.writerow([r.iteration, r.rows, int(r.changed), f"{r.millis:.3f}"])
        text = buf.getvalue()
        if target is not None:
            with open(target, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def _relations(db) -> Mapping[str, Relation]:
    rels = getattr(db, "relations", db)
    return rels() if callable(rels) else rels


def _params(db, params) -> dict:
    out = dict(getattr(db, "params", {}) or {})
    out.update(params or {})
    return out


def conform(rel: Relation, schema: Schema, what: str) -> Relation:
    """Cast ``rel`` onto ``schema`` position-wise (names are taken from ``schema``)."""
    if len(rel.schema) != len(schema):
        raise SchemaError(f"{what}: expected {len(schema)} columns, got {len(rel.schema)}")
    cols = []
    for a, b, c in zip(rel.schema, schema, rel.columns):
        if a.kind == b.kind and a.dim == b.dim:
            cols.append(c)
        elif a.kind is Kind.INT and b.kind is Kind.REAL:
            cols.append(c.astype(np.float64))
        elif a.kind is Kind.REAL and b.kind is Kind.INT and np.all(np.mod(c, 1) == 0):
            cols.append(c.astype(np.int64))
        else:
            raise SchemaError(f"{what}: column {b.name!r} is {b.type_str()}, got {a.type_str()}")
    return Relation._trusted(schema, tuple(cols), len(rel), key=rel.key, name=rel.name)


def _unify(rels: list[Relation], names: tuple[str, ...], what: str) -> Relation:
    """Stack branch results under the declared column names."""
    first = rels[0].rename(list(names))
    attrs = list(first.schema)
    for r in rels[1:]:
        if len(r.schema) != len(attrs):
            raise SchemaError(f"{what}: branches produce different column counts")
        for i, a in enumerate(r.schema):
            if {a.kind, attrs[i].kind} == {Kind.INT, Kind.REAL}:
                attrs[i] = attrs[i].__class__(attrs[i].name, Kind.REAL)
    schema = Schema(attrs)
    parts = [conform(r, schema, what) for r in rels]
    cols = [np.concatenate([p.columns[j] for p in parts]) for j in range(len(schema))]
    return Relation._trusted(schema, tuple(cols), sum(len(p) for p in parts))


def _run_temps(temps: list[TempPlan], env: Env) -> Env:
    rels = dict(env.relations)
    for t in temps:
        rels[t.name] = t.plan.execute(Env(rels, env.params)).with_name(t.name)
    return Env(rels, env.params)


def _merge(plan: LogicalPlan, r: Relation, s: Relation) -> Relation:
    if plan.mode == "update":
        return ops.union_by_update(r, s, plan.key)
    return ops.union(r, s)


def _initial(plan: LogicalPlan, env: Env) -> Relation:
    try:
        env = _run_temps(plan.init_temporaries, env)
        r0 = _unify([b.execute(env) for b in plan.init], plan.columns, plan.name)
    except EngineError as exc:
        raise EvaluationError(0, exc) from exc
    if plan.mode == "update":
        return r0.with_key(plan.key).with_name(plan.name)
    return ops.distinct(r0).with_name(plan.name)


def _loop(plan: LogicalPlan, env: Env, r: Relation, on_iteration: IterationHook | None, max_recursion: int | None):
    trace = EvalTrace()
    bound = max_recursion or plan.max_recursion
    if not plan.step:
        trace.exit_reason = "no-step"
    for t in range(1, bound + 1 if plan.step else 1):
        start = time.perf_counter()
        try:
            step_env = _run_temps(plan.temporaries, env.with_relations({plan.name: r}))
            s = _unify([b.execute(step_env) for b in plan.step], plan.columns, plan.name)
            if not len(s):
                trace.exit_reason = "empty"
                break
            s = conform(s, r.schema, plan.name)
            merged = _merge(plan, r, s).with_name(plan.name)
            if on_iteration is not None:
                replacement = on_iteration(t, merged)
                if replacement is not None:
                    merged = conform(replacement, r.schema, plan.name).with_name(plan.name)
        except EvaluationError:
            raise
        except EngineError as exc:
            raise EvaluationError(t, exc) from exc
        if plan.mode == "update":
            changed = not (merged == r)
        else:
            changed = len(merged) != len(r)
        trace.records.append(IterationRecord(t, len(merged), changed, (time.perf_counter() - start) * 1e3))
        r = merged
        if not changed:
            trace.exit_reason = "fixpoint"
            break
        if t == bound:
            trace.exit_reason = "bound"
    trace.recursive = r
    return r, trace


def _finish(plan: LogicalPlan, env: Env, r: Relation) -> Relation:
    try:
        return plan.final.execute(env.with_relations({plan.name: r}))
    except EngineError as exc:
        raise EvaluationError(-1, exc) from exc


def evaluate(
    plan: LogicalPlan | SelectPlan,
    db,
    params: Mapping[str, object] | None = None,
    on_iteration: IterationHook | None = None,
    max_recursion: int | None = None,
) -> tuple[Relation, EvalTrace]:
    """Run ``plan`` against the base relations of ``db``.

    ``db`` is a :class:`~emsql.catalog.Database` or a mapping of names to
    relations.  ``on_iteration(t, R)`` is called after every merge and may
    return a replacement for R.  Returns the final query's result and the trace.
    """
    env = Env(dict(_relations(db)), _params(db, params))
    if isinstance(plan, SelectPlan):
        return plan.execute(env), EvalTrace(exit_reason="no-step")
    r0 = _initial(plan, env)
    r, trace = _loop(plan, env, r0, on_iteration, max_recursion)
    return _finish(plan, env, r), trace


def evaluate_resumable(
    plan: LogicalPlan,
    db,
    initial: Relation,
    params: Mapping[str, object] | None = None,
    on_iteration: IterationHook | None = None,
    max_recursion: int | None = None,
) -> tuple[Relation, EvalTrace]:
    """Like :func:`evaluate` but start the loop from ``initial`` instead of the init query."""
    if len(initial.schema) != len(plan.columns):
        raise SchemaError(f"{plan.name}: expected columns {plan.columns}, got {initial.names}")
    r0 = initial.rename(list(plan.columns), plan.name)
    if plan.mode == "update":
        r0 = r0.with_key(plan.key)
    else:
        r0 = ops.distinct(r0)
    env = Env(dict(_relations(db)), _params(db, params))
    r, trace = _loop(plan, env, r0, on_iteration, max_recursion)
    return _finish(plan, env, r), trace


def run_script(text: str, db, params=None, **kw) -> tuple[Relation, EvalTrace]:
    """Compile and evaluate dialect source against ``db``."""
    names = list(_relations(db))
    return evaluate(compile_script(text, names), db, params, **kw)
