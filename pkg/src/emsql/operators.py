"""Relational algebra over :class:`~emsql.relation.Relation` values.

Every operator is pure: it reads its inputs and returns a new relation.
``select``/``project``/``join``/``cartesian`` have bag semantics; the set
operators and ``union_by_update`` work on whole-row (or key) identity.

Expressions may be given as :mod:`emsql.expr` trees or as dialect source
text (``"0.5 * x"``), which is parsed on the fly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, KeyViolation, SchemaError, TypeMismatch
from .expr import Col, Expr, aggregate_col, evaluate, factorize
from .relation import Attribute, Kind, Relation, Schema


def _as_expr(e: Expr | str) -> Expr:
    if isinstance(e, Expr):
        return e
    from .sql.parser import parse_expression

    return parse_expression(e)


def _build(attrs: Sequence[Attribute], cols: Sequence[np.ndarray], n: int, key=None, name=None) -> Relation:
    return Relation._trusted(Schema(attrs), tuple(cols), n, key=key, name=name)


# unary operators ------------------------------------------------------------------


def select(rel: Relation, predicate: Expr | str, params=None) -> Relation:
    """Rows of ``rel`` for which ``predicate`` holds."""
    res = evaluate(_as_expr(predicate), rel, params)
    if res.kind is not Kind.BOOL:
        raise TypeMismatch("selection predicate must be boolean")
    mask = np.asarray(res.data, dtype=bool)
    if mask.all():
        return rel
    return rel.take(np.flatnonzero(mask))


def project(rel: Relation, exprs: Sequence[tuple[Expr | str, str]], params=None) -> Relation:
    """One output row per input row, one column per ``(expression, name)``."""
    attrs, cols = [], []
    for e, name in exprs:
        c = evaluate(_as_expr(e), rel, params)
        data = c.stored()
        if data.shape[0] != len(rel):
            data = np.broadcast_to(data, (len(rel),) + data.shape[1:])
        attrs.append(c.attribute(name))
        cols.append(np.ascontiguousarray(data))
    return _build(attrs, cols, len(rel), name=rel.name)


def rename(rel: Relation, names: Sequence[str], name: str | None = None) -> Relation:
    return rel.rename(names, name)


def distinct(rel: Relation) -> Relation:
    seen = set()
    keep = []
    for i, k in enumerate(rel.row_keys()):
        if k not in seen:
            seen.add(k)
            keep.append(i)
    if len(keep) == len(rel):
        return rel
    return rel.take(np.asarray(keep, dtype=np.int64))


# joins -------------------------------------------------------------------------


def _key_array(rel: Relation, name: str) -> tuple[Kind, np.ndarray]:
    a = rel.schema[name]
    c = rel.column(name)
    if a.kind in (Kind.VEC, Kind.MAT):
        raise TypeMismatch(f"cannot join on {a.type_str()} attribute {name!r}")
    return a.kind, c


def _joint_codes(lc: np.ndarray, lk: Kind, rc: np.ndarray, rk: Kind, what: str):
    if lk.numeric and rk.numeric:
        if lk is Kind.INT and rk is Kind.INT:
            both = np.concatenate([lc, rc])
        else:
            both = np.concatenate([lc.astype(np.float64), rc.astype(np.float64)])
    elif lk is Kind.TEXT and rk is Kind.TEXT:
        both = np.concatenate([lc, rc])
    else:
        raise TypeMismatch(f"join attributes {what} have incomparable types {lk.value} and {rk.value}")
    _, inv = np.unique(both, return_inverse=True)
    inv = inv.reshape(-1).astype(np.int64)
    return inv[: len(lc)], inv[len(lc):]


def equi_join_indices(lkeys, rkeys, nl: int, nr: int) -> tuple[np.ndarray, np.ndarray]:
    """Matching row index pairs for an equi-join, in nested-loop order.

    ``lkeys``/``rkeys`` are aligned lists of ``(kind, array)`` key columns.
    """
    lcode = np.zeros(nl, dtype=np.int64)
    rcode = np.zeros(nr, dtype=np.int64)
    for (lk, lc), (rk, rc) in zip(lkeys, rkeys):
        a, b = _joint_codes(lc, lk, rc, rk, "")
        card = int(max(a.max(initial=-1), b.max(initial=-1))) + 1
        both = np.concatenate([lcode * card + a, rcode * card + b])
        _, inv = np.unique(both, return_inverse=True)
        inv = inv.reshape(-1).astype(np.int64)
        lcode, rcode = inv[:nl], inv[nl:]
    order = np.argsort(rcode, kind="stable")
    sorted_r = rcode[order]
    starts = np.searchsorted(sorted_r, lcode, side="left")
    ends = np.searchsorted(sorted_r, lcode, side="right")
    counts = ends - starts
    total = int(counts.sum())
    li = np.repeat(np.arange(nl, dtype=np.int64), counts)
    if total == 0:
        return li, np.zeros(0, dtype=np.int64)
    offsets = np.repeat(starts - np.concatenate([[0], np.cumsum(counts)[:-1]]), counts)
    ri = order[offsets + np.arange(total)]
    return li, ri


def _combined_schema(left: Relation, right: Relation) -> list[Attribute]:
    attrs = list(left.schema)
    taken = set(left.names)
    prefix = right.name or "right"
    for a in right.schema:
        name = a.name
        if name in taken:
            name = f"{prefix}.{a.name}"
            if name in taken:
                raise SchemaError(f"cannot disambiguate attribute {a.name!r} in join output")
        taken.add(name)
        attrs.append(a.renamed(name))
    return attrs


def _gather_pair(left: Relation, right: Relation, li, ri) -> Relation:
    attrs = _combined_schema(left, right)
    cols = [c[li] for c in left.columns] + [c[ri] for c in right.columns]
    return _build(attrs, cols, len(li))


def join(left: Relation, right: Relation, on: Sequence[tuple[str, str]]) -> Relation:
    """Equi-join on attribute pairs ``(left_attr, right_attr)``."""
    if not on:
        return cartesian(left, right)
    lkeys = [_key_array(left, a) for a, _ in on]
    rkeys = [_key_array(right, b) for _, b in on]
    for (lk, _), (rk, _), (a, b) in zip(lkeys, rkeys, on):
        if not ((lk.numeric and rk.numeric) or lk == rk):
            raise TypeMismatch(f"join attributes {a!r} and {b!r} have incomparable types")
    li, ri = equi_join_indices(lkeys, rkeys, len(left), len(right))
    return _gather_pair(left, right, li, ri)


def cartesian(left: Relation, right: Relation) -> Relation:
    nl, nr = len(left), len(right)
    li = np.repeat(np.arange(nl, dtype=np.int64), nr)
    ri = np.tile(np.arange(nr, dtype=np.int64), nl)
    return _gather_pair(left, right, li, ri)


# set operations -------------------------------------------------------------------


def _require_same_schema(r: Relation, s: Relation, op: str) -> None:
    if not r.schema.compatible(s.schema):
        raise SchemaError(f"{op}: schemas differ: {r.schema!r} vs {s.schema!r}")


def union_all(r: Relation, s: Relation) -> Relation:
    _require_same_schema(r, s, "union all")
    cols = [np.concatenate([a, b]) for a, b in zip(r.columns, s.columns)]
    return _build(r.schema, cols, len(r) + len(s), name=r.name)


def union(r: Relation, s: Relation) -> Relation:
    """Set union: duplicates across and within the inputs are removed."""
    return distinct(union_all(r, s))


def difference(r: Relation, s: Relation) -> Relation:
    """Rows of ``r`` that do not occur in ``s`` (bag rows of r are kept as-is)."""
    _require_same_schema(r, s, "difference")
    drop = set(s.row_keys())
    keep = [i for i, k in enumerate(r.row_keys()) if k not in drop]
    return r.take(np.asarray(keep, dtype=np.int64))


def semijoin(r: Relation, s: Relation, on: Sequence[str]) -> Relation:
    """Rows of ``r`` agreeing with some row of ``s`` on attributes ``on``."""
    present = set(s.row_keys(on))
    keep = [i for i, k in enumerate(r.row_keys(on)) if k in present]
    return r.take(np.asarray(keep, dtype=np.int64))


def union_by_update(r: Relation, s: Relation, key: Sequence[str]) -> Relation:
    """Replace tuples of ``r`` by tuples of ``s`` that agree on ``key``; add the rest.

    Equivalent to ``(r - (r semijoin_key s)) union s``.  Both inputs must be
    key-unique on ``key``.
    """
    key = tuple(key)
    _require_same_schema(r, s, "union by update")
    for k in key:
        r.schema.index(k)
    rk = r.row_keys(key)
    sk = s.row_keys(key)
    for label, keys in (("left", rk), ("right", sk)):
        if len(set(keys)) != len(keys):
            raise KeyViolation(f"union by update: duplicate key values in the {label} input")
    incoming = set(sk)
    keep = np.asarray([i for i, k in enumerate(rk) if k not in incoming], dtype=np.int64)
    cols = [np.concatenate([a[keep], b]) for a, b in zip(r.columns, s.columns)]
    return _build(r.schema, cols, len(keep) + len(s), key=key, name=r.name)


# aggregation ----------------------------------------------------------------------


_AGG_ALIASES = {
    "sum-of-vector": ("sum", Kind.VEC),
    "sum-of-matrix": ("sum", Kind.MAT),
    "sum_vec": ("sum", Kind.VEC),
    "sum_mat": ("sum", Kind.MAT),
}


@dataclass(frozen=True)
class AggSpec:
    op: str
    expr: Expr | str | None
    name: str


def group_aggregate(rel: Relation, group_by: Sequence[str], aggs: Sequence[AggSpec], params=None) -> Relation:
    """One row per distinct ``group_by`` value with each aggregate computed over the group.

    Groups appear in order of first occurrence; sums accumulate in row order.
    """
    key_idx = [rel.schema.index(g) for g in group_by]
    codes, ngroups, first = factorize([rel.columns[i] for i in key_idx], len(rel))
    attrs = [rel.schema[i] for i in key_idx]
    cols = [rel.columns[i][first] for i in key_idx]
    for spec in aggs:
        op, required = _AGG_ALIASES.get(spec.op, (spec.op, None))
        col = None
        if spec.expr is not None:
            col = evaluate(_as_expr(spec.expr), rel, params)
            if required is not None and col.kind is not required:
                raise DimensionMismatch(f"{spec.op} needs {required.value} input")
        out = aggregate_col(op, col, codes, ngroups)
        attrs.append(out.attribute(spec.name))
        cols.append(out.data)
    return _build(attrs, cols, ngroups, key=tuple(group_by) or None)


# linear-algebra joins -----------------------------------------------------------------


_PLUS = {"sum": np.add, "max": np.maximum, "min": np.minimum}
_TIMES = {"mul": np.multiply, "add": np.add, "min": np.minimum, "max": np.maximum}


def _triple(rel: Relation, what: str):
    if len(rel.schema) != 3:
        raise TypeMismatch(f"{what} expects a (F, T, value) relation, got {rel.schema!r}")
    f, t, v = rel.schema
    for a in (f, t):
        if a.kind not in (Kind.INT, Kind.TEXT):
            raise TypeMismatch(f"{what}: index attribute {a.name!r} must be int or text")
    if not v.kind.numeric:
        raise TypeMismatch(f"{what}: entry attribute {v.name!r} must be numeric")
    return f, t, v


def _reduce(plus: str, values: np.ndarray, codes: np.ndarray, ngroups: int) -> np.ndarray:
    if plus == "sum":
        if values.ndim == 1:
            return np.bincount(codes, weights=values, minlength=ngroups)
        out = np.zeros((ngroups,) + values.shape[1:])
        np.add.at(out, codes, values)
        return out
    ufunc = _PLUS[plus]
    out = np.full((ngroups,) + values.shape[1:], -np.inf if plus == "max" else np.inf)
    ufunc.at(out, codes, values)
    return out


def _semiring(plus: str, times: str):
    if plus not in _PLUS or times not in _TIMES:
        raise TypeMismatch(f"unsupported semiring ({plus}, {times})")
    return _TIMES[times]


def mv_join(e: Relation, v: Relation, plus: str = "sum", times: str = "mul") -> Relation:
    """Matrix-vector product of E(F, T, e) and V(ID, v): per F, plus over T=ID of e times v."""
    mul = _semiring(plus, times)
    f, t, ev = _triple(e, "mv_join")
    if len(v.schema) != 2:
        raise TypeMismatch(f"mv_join expects a (ID, v) relation, got {v.schema!r}")
    vid, vv = v.schema
    if vv.kind not in (Kind.INT, Kind.REAL, Kind.VEC):
        raise TypeMismatch("mv_join: vector entries must be numeric")
    li, ri = equi_join_indices(
        [(t.kind, e.columns[1])], [(vid.kind, v.columns[0])], len(e), len(v)
    )
    lhs = e.columns[2][li].astype(np.float64)
    rhs = v.columns[1][ri].astype(np.float64)
    if rhs.ndim > 1:
        lhs = lhs[:, None]
    prod = mul(lhs, rhs)
    codes, ngroups, first = factorize([e.columns[0][li]], len(li))
    vals = _reduce(plus, prod, codes, ngroups)
    out_kind = Attribute("val", Kind.VEC, rhs.shape[1]) if rhs.ndim > 1 else Attribute("val", Kind.REAL)
    return _build([f, out_kind], [e.columns[0][li][first], vals], ngroups, key=(f.name,))


def mm_join(e: Relation, e2: Relation, plus: str = "sum", times: str = "mul") -> Relation:
    """Matrix-matrix product: join E.T = E'.F, group by (E.F, E'.T)."""
    mul = _semiring(plus, times)
    f, t, _ = _triple(e, "mm_join")
    f2, t2, _ = _triple(e2, "mm_join")
    li, ri = equi_join_indices([(t.kind, e.columns[1])], [(f2.kind, e2.columns[0])], len(e), len(e2))
    prod = mul(e.columns[2][li].astype(np.float64), e2.columns[2][ri].astype(np.float64))
    rows, cols_ = e.columns[0][li], e2.columns[1][ri]
    codes, ngroups, first = factorize([rows, cols_], len(li))
    vals = _reduce(plus, prod, codes, ngroups)
    out_t = t2 if t2.name != f.name else t2.renamed(f"{t2.name}2")
    return _build([f, out_t, Attribute("val", Kind.REAL)], [rows[first], cols_[first], vals], ngroups, key=(f.name, out_t.name))


def elementwise_join(e: Relation, e2: Relation, plus: str = "sum", times: str = "mul") -> Relation:
    """Join on both indices, multiply entries, and aggregate per row index F."""
    mul = _semiring(plus, times)
    f, t, _ = _triple(e, "elementwise_join")
    f2, t2, _ = _triple(e2, "elementwise_join")
    li, ri = equi_join_indices(
        [(f.kind, e.columns[0]), (t.kind, e.columns[1])],
        [(f2.kind, e2.columns[0]), (t2.kind, e2.columns[1])],
        len(e),
        len(e2),
    )
    prod = mul(e.columns[2][li].astype(np.float64), e2.columns[2][ri].astype(np.float64))
    rows = e.columns[0][li]
    codes, ngroups, first = factorize([rows], len(li))
    vals = _reduce(plus, prod, codes, ngroups)
    return _build([f, Attribute("val", Kind.REAL)], [rows[first], vals], ngroups, key=(f.name,))


def col_to_relation(name: str, c: Col) -> Relation:
    return _build([c.attribute(name)], [c.stored()], len(c.data))
