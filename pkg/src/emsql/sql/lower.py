"""Lowering of validated syntax trees to executable plans."""

from __future__ import annotations

from dataclasses import dataclass, replace

from ..errors import LoweringError
from ..expr import Binary, Call, Column, Expr, Literal, Unary, Window, check_functions, is_aggregate_call
from ..plan import Derived, Scan, SelectPlan
from .ast import Select, Statement, SubqueryRef, TableRef, WithQuery
from .validate import DependencyGraph, validate

DEFAULT_MAX_RECURSION = 100


def transform(e: Expr, fn) -> Expr:
    """Rebuild ``e`` bottom-up; ``fn`` may return a replacement for any node."""
    if isinstance(e, (Literal, Column)):
        out = e
    elif isinstance(e, Unary):
        out = Unary(e.op, transform(e.operand, fn))
    elif isinstance(e, Binary):
        out = Binary(e.op, transform(e.left, fn), transform(e.right, fn))
    elif isinstance(e, Call):
        out = Call(e.name, tuple(transform(a, fn) for a in e.args), e.star)
    elif isinstance(e, Window):
        out = Window(transform(e.call, fn), tuple(transform(p, fn) for p in e.partition_by))
    else:
        raise LoweringError(f"cannot lower {e!r}")
    new = fn(out)
    return out if new is None else new


def _has_aggregate(e: Expr) -> bool:
    return any(is_aggregate_call(x) for x in e.walk())


def _lift_windows(e: Expr, windows: list) -> Expr:
    def visit(node):
        if isinstance(node, Window):
            call = node.call
            if not is_aggregate_call(call):
                raise LoweringError(f"{call.name}() cannot be used as a window function")
            for a in call.args + node.partition_by:
                if _has_aggregate(a) or any(isinstance(x, Window) for x in a.walk()):
                    raise LoweringError("window arguments may not contain aggregates or windows")
            name = f"$w{len(windows)}"
            windows.append((node, name))
            return Column(name)
        return None

    return transform(e, visit)


def _lift_aggregates(e: Expr, aggs: list) -> Expr:
    def visit(node):
        if is_aggregate_call(node):
            for a in node.args:
                if _has_aggregate(a):
                    raise LoweringError(f"aggregate {node.name}() cannot contain another aggregate")
            for known, name in aggs:
                if known == node:
                    return Column(name)
            name = f"$a{len(aggs)}"
            aggs.append((node, name))
            return Column(name)
        return None

    return transform(e, visit)


def _grouped_column_ok(col: Column, group_by: list[Expr]) -> bool:
    if col.name.startswith("$"):
        return True
    for g in group_by:
        if isinstance(g, Column) and g.name == col.name and (col.table is None or g.table is None or col.table == g.table):
            return True
    return False


def _default_name(e: Expr, i: int) -> str:
    return e.name if isinstance(e, Column) else f"col{i + 1}"


def lower_select(sel: Select, columns: tuple[str, ...] | None = None) -> SelectPlan:
    """Lower one SELECT; ``columns`` renames the output (CTE column lists)."""
    sources = []
    for f in sel.from_:
        if isinstance(f, TableRef):
            sources.append(Scan(f.name, f.binding))
        elif isinstance(f, SubqueryRef):
            sources.append(Derived(lower_select(f.query), f.alias))
    exprs = [i.expr for i in sel.items] + ([sel.where] if sel.where is not None else []) + list(sel.group_by)
    for e in exprs:
        check_functions(e)
    if sel.where is not None and _has_aggregate(sel.where):
        raise LoweringError("aggregates are not allowed in WHERE")
    for g in sel.group_by:
        if not isinstance(g, Column):
            raise LoweringError("GROUP BY accepts column references only")
    windows: list = []
    aggs: list = []
    items = []
    for i, item in enumerate(sel.items):
        e = _lift_windows(item.expr, windows)
        e = _lift_aggregates(e, aggs)
        name = item.alias or _default_name(item.expr, i)
        items.append((e, name))
    grouped = bool(aggs or sel.group_by)
    if grouped:
        if sel.star:
            raise LoweringError("SELECT * cannot be combined with GROUP BY or aggregates")
        if windows:
            raise LoweringError("window functions cannot be combined with GROUP BY or aggregates")
        for e, _ in items:
            for node in e.walk():
                if isinstance(node, Column) and not _grouped_column_ok(node, list(sel.group_by)):
                    raise LoweringError(f"column {node.qualified!r} must appear in GROUP BY or inside an aggregate")
    if columns is not None and not sel.star:
        if len(columns) != len(items):
            raise LoweringError(f"expected {len(columns)} columns, query selects {len(items)}")
        items = [(e, c) for (e, _), c in zip(items, columns)]
    else:
        names = [n for _, n in items]
        items = [(e, n if names.count(n) == 1 else f"col{i + 1}") for i, (e, n) in enumerate(items)]
    plan = SelectPlan(
        sources=sources,
        where=sel.where,
        windows=windows,
        group_by=list(sel.group_by),
        aggregates=aggs,
        items=None if sel.star else items,
        grouped=grouped,
        star_columns=tuple(columns) if columns is not None and sel.star else None,
    )
    return plan


@dataclass
class TempPlan:
    name: str
    columns: tuple[str, ...]
    plan: SelectPlan


@dataclass
class LogicalPlan:
    """A lowered recursive program.

    ``init`` and ``step`` hold one plan per initial/recursive branch; their
    results are unioned before being merged into the recursive relation.
    """

    name: str
    columns: tuple[str, ...]
    init: list[SelectPlan]
    init_temporaries: list[TempPlan]
    temporaries: list[TempPlan]
    step: list[SelectPlan]
    mode: str
    key: tuple[str, ...]
    max_recursion: int
    final: SelectPlan
    graph: DependencyGraph

    def with_max_recursion(self, n: int) -> "LogicalPlan":
        if n < 1:
            raise ValueError("max_recursion must be positive")
        return replace(self, max_recursion=n)


def lower(stmt: Statement, graph: DependencyGraph | None = None, base_tables=None) -> LogicalPlan | SelectPlan:
    """Lower a statement; plain SELECTs become a single :class:`SelectPlan`."""
    graph = graph or validate(stmt, base_tables)
    if isinstance(stmt, Select):
        return lower_select(stmt)
    q: WithQuery = stmt
    defs = {cb.name: cb for b in q.branches for cb in b.computed_by}
    rec = q.recursive_branches
    init = [b for b in q.branches if b not in rec]

    def temps(order):
        return [TempPlan(n, defs[n].columns, lower_select(defs[n].query, defs[n].columns)) for n in order]

    union = q.union_mode
    return LogicalPlan(
        name=q.name,
        columns=q.columns,
        init=[lower_select(b.query, q.columns) for b in init],
        init_temporaries=temps(graph.init_order),
        temporaries=temps(graph.order),
        step=[lower_select(b.query, q.columns) for b in rec],
        mode=union.mode if union else "all",
        key=union.key if union else (),
        max_recursion=q.max_recursion or DEFAULT_MAX_RECURSION,
        final=lower_select(q.final),
        graph=graph,
    )


def compile_script(text: str, base_tables=None) -> LogicalPlan | SelectPlan:
    """parse -> validate -> lower in one call."""
    from .parser import parse

    stmt = parse(text)
    graph = validate(stmt, base_tables)
    return lower(stmt, graph)
