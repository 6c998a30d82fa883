"""Structural checks on parsed WITH programs and their dependency graph."""

from __future__ import annotations

import graphlib
from dataclasses import dataclass
from typing import Iterable

from ..errors import ValidationError
from ..expr import Window
from .ast import Branch, Select, Statement, SubqueryRef, WithQuery

# Diagnostic codes
MULTIPLE_UNION_BY_UPDATE = "MultipleUnionByUpdate"
RECURSIVE_COMPUTED_BY = "RecursiveComputedBy"
CYCLIC_COMPUTED_BY = "CyclicComputedBy"
UNKNOWN_RELATION = "UnknownRelation"
UPDATE_KEY_NOT_IN_COLUMNS = "UpdateKeyNotInColumns"
MISSING_INITIAL_QUERY = "MissingInitialQuery"
RECURSIVE_INITIAL_QUERY = "RecursiveInitialQuery"
DUPLICATE_NAME = "DuplicateName"
COLUMN_COUNT_MISMATCH = "ColumnCountMismatch"
WINDOW_NOT_ALLOWED = "WindowNotAllowed"
MULTIPLE_WINDOWS = "MultipleWindows"


@dataclass(frozen=True)
class DependencyGraph:
    """Reads-from edges between relations of one program.

    ``edges`` holds ``(reader, source)`` pairs.  ``order`` lists the
    recursive branch's temporaries in evaluation order and
    ``init_order`` those of the initial branches.
    """

    nodes: tuple[str, ...]
    edges: frozenset[tuple[str, str]]
    order: tuple[str, ...] = ()
    init_order: tuple[str, ...] = ()
    step: str | None = None

    def sources(self, node: str) -> set[str]:
        return {s for r, s in self.edges if r == node}

    def readers(self, node: str) -> set[str]:
        return {r for r, s in self.edges if s == node}


def _windows(sel: Select):
    for item in sel.items:
        n = sum(isinstance(x, Window) for x in item.expr.walk())
        yield item, n
    for f in sel.from_:
        if isinstance(f, SubqueryRef):
            yield from _windows(f.query)


def _check_windows(sel: Select, where: str, allowed: bool) -> None:
    for item, n in _windows(sel):
        if n and not allowed:
            raise ValidationError(WINDOW_NOT_ALLOWED, where, "window functions may only appear in computed-by or recursive subqueries")
        if n > 1:
            raise ValidationError(MULTIPLE_WINDOWS, where, "at most one window function per expression")
    for e in ([sel.where] if sel.where is not None else []) + list(sel.group_by):
        if any(isinstance(x, Window) for x in e.walk()):
            raise ValidationError(WINDOW_NOT_ALLOWED, where, "window functions are only allowed in the select list")


def _check_arity(cols, sel: Select, where: str) -> None:
    if not sel.star and len(sel.items) != len(cols):
        raise ValidationError(
            COLUMN_COUNT_MISMATCH, where, f"declares {len(cols)} columns but selects {len(sel.items)}"
        )


def _topo(deps: dict[str, set[str]], declared: list[str]) -> tuple[str, ...]:
    ts = graphlib.TopologicalSorter({n: deps[n] for n in declared})
    try:
        ts.prepare()
    except graphlib.CycleError as exc:
        cycle = exc.args[1]
        raise ValidationError(CYCLIC_COMPUTED_BY, " -> ".join(cycle), "computed-by definitions form a cycle") from None
    rank = {n: i for i, n in enumerate(declared)}
    out = []
    while ts.is_active():
        ready = sorted(ts.get_ready(), key=rank.__getitem__)
        out.extend(ready)
        ts.done(*ready)
    return tuple(out)


def _branch_graph(q: WithQuery, b: Branch, base: set[str] | None, edges: set, reader: str) -> tuple[str, ...]:
    temps = [cb.name for cb in b.computed_by]
    seen = set()
    for cb in b.computed_by:
        if cb.name in seen or cb.name == q.name or (base is not None and cb.name in base):
            raise ValidationError(DUPLICATE_NAME, cb.name, "computed-by name is already defined")
        seen.add(cb.name)
        if len(set(cb.columns)) != len(cb.columns):
            raise ValidationError(DUPLICATE_NAME, cb.name, "duplicate column names")
    known = set(temps) | {q.name}
    deps: dict[str, set[str]] = {}
    for cb in b.computed_by:
        reads = cb.query.relations()
        if cb.name in reads:
            raise ValidationError(RECURSIVE_COMPUTED_BY, cb.name, "computed-by queries must be non-recursive")
        _check_unknown(reads, known, base)
        _check_arity(cb.columns, cb.query, cb.name)
        _check_windows(cb.query, cb.name, True)
        deps[cb.name] = reads & set(temps)
        edges.update((cb.name, r) for r in reads)
    reads = b.query.relations()
    _check_unknown(reads, known, base)
    edges.update((reader, r) for r in reads)
    return _topo(deps, temps)


def _check_unknown(reads: set[str], known: set[str], base: set[str] | None) -> None:
    if base is None:
        return
    for r in sorted(reads):
        if r not in known and r not in base:
            raise ValidationError(UNKNOWN_RELATION, r, "not a base table, computed-by temporary or the recursive relation")


def validate(stmt: Statement, base_tables: Iterable[str] | None = None) -> DependencyGraph:
    """Check a parsed statement and return its dependency graph.

    Relation names are checked against ``base_tables`` only when it is given.
    """
    base = None if base_tables is None else {t.lower() for t in base_tables}
    if isinstance(stmt, Select):
        reads = stmt.relations()
        _check_unknown(reads, set(), base)
        _check_windows(stmt, "select", True)
        return DependencyGraph(tuple(sorted(reads)), frozenset(("select", r) for r in reads))
    q = stmt
    if len(set(q.columns)) != len(q.columns):
        raise ValidationError(DUPLICATE_NAME, q.name, "duplicate column names")
    if base is not None and q.name in base:
        raise ValidationError(DUPLICATE_NAME, q.name, "recursive relation shadows a base table")
    modes = [u.mode for u in q.unions]
    if modes.count("update") > 1 or ("update" in modes and "all" in modes):
        raise ValidationError(
            MULTIPLE_UNION_BY_UPDATE, q.name, "UNION BY UPDATE may appear once and never with UNION ALL"
        )
    update = "update" in modes
    for u in q.unions:
        for k in u.key:
            if k not in q.columns:
                raise ValidationError(UPDATE_KEY_NOT_IN_COLUMNS, k, f"not a column of {q.name}")
    init, rec = q.initial_branches, q.recursive_branches
    if update and q.reads_recursive(q.branches[0]):
        raise ValidationError(RECURSIVE_INITIAL_QUERY, q.name, "the initial query may not read the recursive relation")
    if not init:
        raise ValidationError(MISSING_INITIAL_QUERY, q.name, "no branch computes the initial relation")

    step = f"{q.name}.next"
    edges: set[tuple[str, str]] = set()
    init_order: list[str] = []
    order: tuple[str, ...] = ()
    all_temps = [cb.name for b in q.branches for cb in b.computed_by]
    for name in all_temps:
        if all_temps.count(name) > 1:
            raise ValidationError(DUPLICATE_NAME, name, "computed-by name defined in more than one branch")
    for b in q.branches:
        _check_arity(q.columns, b.query, q.name)
        is_rec = b in rec
        _check_windows(b.query, q.name, is_rec)
        names = _branch_graph(q, b, base, edges, step if is_rec else q.name)
        if is_rec:
            order += names
        else:
            init_order.extend(names)
    _check_windows(q.final, "final query", False)
    _check_unknown(q.final.relations(), {q.name}, base)
    edges.update(("result", r) for r in q.final.relations())
    if rec:
        edges.add((q.name, step))
    nodes = sorted({n for e in edges for n in e})
    return DependencyGraph(tuple(nodes), frozenset(edges), order, tuple(init_order), step if rec else None)
