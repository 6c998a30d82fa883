"""Executable operator trees produced by lowering.

A plan node turns an :class:`Env` (named relations plus host parameters)
into a relation.  Nodes only call into :mod:`emsql.operators` and
:mod:`emsql.expr`; they hold no state between executions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import operators as ops
from .errors import AmbiguousAttribute, SchemaError
from .expr import Binary, Call, Column, Expr, Window, aggregate_col, evaluate, factorize, resolve
from .relation import Attribute, Kind, Relation, Schema


@dataclass
class Env:
    relations: Mapping[str, Relation]
    params: Mapping[str, object] = field(default_factory=dict)

    def with_relations(self, extra: Mapping[str, Relation]) -> "Env":
        merged = dict(self.relations)
        merged.update(extra)
        return Env(merged, self.params)


def qualify(rel: Relation, binding: str) -> Relation:
    names = [f"{binding}.{n.rsplit('.', 1)[-1]}" for n in rel.names]
    return rel.rename(names, binding)


UNIT = Relation._trusted(Schema(()), (), 1)


class Node:
    def execute(self, env: Env) -> Relation:  # pragma: no cover - interface
        raise NotImplementedError


@dataclass
class Scan(Node):
    table: str
    binding: str

    def execute(self, env: Env) -> Relation:
        try:
            rel = env.relations[self.table]
        except KeyError:
            raise SchemaError(f"unknown relation {self.table!r}") from None
        return qualify(rel, self.binding)


@dataclass
class Derived(Node):
    query: "SelectPlan"
    binding: str

    def execute(self, env: Env) -> Relation:
        return qualify(self.query.execute(env), self.binding)


def _conjuncts(e: Expr | None) -> list[Expr]:
    if e is None:
        return []
    if isinstance(e, Binary) and e.op == "and":
        return _conjuncts(e.left) + _conjuncts(e.right)
    return [e]


def _lookup(rel: Relation, col: Column) -> int | None:
    try:
        return resolve(rel.names, col)
    except AmbiguousAttribute:
        return None


def _join_pairs(left: Relation, right: Relation, conds: list[Expr]):
    """Equality conjuncts usable as hash-join keys between left and right."""
    pairs, used = [], []
    for c in conds:
        if not (isinstance(c, Binary) and c.op == "=" and isinstance(c.left, Column) and isinstance(c.right, Column)):
            continue
        for a, b in ((c.left, c.right), (c.right, c.left)):
            li, ri = _lookup(left, a), _lookup(right, b)
            if li is None or ri is None or _lookup(right, a) is not None or _lookup(left, b) is not None:
                continue
            lk, rk = left.schema[li].kind, right.schema[ri].kind
            if not ((lk.numeric and rk.numeric) or (lk is rk is Kind.TEXT)):
                continue
            pairs.append((left.names[li], right.names[ri]))
            used.append(c)
            break
    return pairs, used


def _and(conds: list[Expr]) -> Expr | None:
    out = None
    for c in conds:
        out = c if out is None else Binary("and", out, c)
    return out


@dataclass
class SelectPlan(Node):
    """FROM/WHERE/window/GROUP BY/projection pipeline of one SELECT.

    ``windows`` and ``aggregates`` hold the calls that lowering lifted out of
    the select list; the projection refers to them as ``$w<i>``/``$a<i>``.
    """

    sources: list[Node]
    where: Expr | None
    windows: list[tuple[Window, str]]
    group_by: list[Expr]
    aggregates: list[tuple[Call, str]]
    items: list[tuple[Expr, str]] | None  # None means SELECT *
    grouped: bool = False
    star_columns: tuple[str, ...] | None = None

    def joined(self, env: Env) -> Relation:
        rels = [s.execute(env) for s in self.sources]
        conds = _conjuncts(self.where)
        if not rels:
            cur = UNIT
        else:
            cur = rels[0]
            for nxt in rels[1:]:
                pairs, used = _join_pairs(cur, nxt, conds)
                conds = [c for c in conds if not any(c is u for u in used)]
                cur = ops.join(cur, nxt, pairs) if pairs else ops.cartesian(cur, nxt)
        rest = _and(conds)
        if rest is not None:
            cur = ops.select(cur, rest, env.params)
        return cur

    def execute(self, env: Env) -> Relation:
        rel = self.joined(env)
        for w, name in self.windows:
            rel = _append(rel, name, *_window(w, rel, env.params))
        if self.grouped:
            rel = _aggregate(rel, self.group_by, self.aggregates, env.params)
        if self.items is None:
            rel = _star(rel)
            if self.star_columns is not None:
                if len(self.star_columns) != len(rel.schema):
                    raise SchemaError(f"expected {len(self.star_columns)} columns, query produces {len(rel.schema)}")
                rel = rel.rename(list(self.star_columns))
            return rel
        return ops.project(rel, self.items, env.params)


def _append(rel: Relation, name: str, attr_kind: Attribute, data: np.ndarray) -> Relation:
    schema = Schema(tuple(rel.schema) + (attr_kind.renamed(name),))
    return Relation._trusted(schema, rel.columns + (data,), len(rel), name=rel.name)


def _window(w: Window, rel: Relation, params) -> tuple[Attribute, np.ndarray]:
    parts = [evaluate(p, rel, params).stored() for p in w.partition_by]
    codes, ngroups, _ = factorize(parts, len(rel))
    arg = None if w.call.star or not w.call.args else evaluate(w.call.args[0], rel, params)
    op = "count" if w.call.star else w.call.name
    out = aggregate_col(op, arg, codes, ngroups)
    return out.attribute("w"), out.data[codes]


def _aggregate(rel: Relation, group_by, aggregates, params) -> Relation:
    keys = [evaluate(g, rel, params).stored() for g in group_by]
    codes, ngroups, first = factorize(keys, len(rel))
    rep = rel.take(first)
    for call, name in aggregates:
        arg = None if call.star or not call.args else evaluate(call.args[0], rel, params)
        op = "count" if call.star else call.name
        out = aggregate_col(op, arg, codes, ngroups)
        rep = _append(rep, name, out.attribute(name), out.data)
    return rep


def _star(rel: Relation) -> Relation:
    bare = [n.rsplit(".", 1)[-1] for n in rel.names]
    names = [b if bare.count(b) == 1 else n for b, n in zip(bare, rel.names)]
    return rel.rename(names, None)


def output_names(items: list[tuple[Expr, str]]) -> list[str]:
    return [n for _, n in items]
