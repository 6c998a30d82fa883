"""Canonical source text for syntax trees; ``parse(pretty_print(t)) == t``."""

from __future__ import annotations

from ..expr import Binary, Call, Column, Expr, Literal, Unary, Window
from .ast import Branch, ComputedBy, Select, Statement, SubqueryRef, TableRef, WithQuery
from .lexer import KEYWORDS

_PREC = {"or": 1, "and": 2, "=": 4, "<>": 4, "<": 4, "<=": 4, ">": 4, ">=": 4, "+": 5, "-": 5, "*": 6, "/": 6}


def _prec(e: Expr) -> int:
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, Unary):
        return 3 if e.op == "not" else 7
    return 9


def _literal(v) -> str:
    if isinstance(v, str):
        return "'" + v.replace("'", "''") + "'"
    if isinstance(v, float):
        text = repr(v)
        return text if any(c in text for c in ".e") else text + ".0"
    return str(v)


def _name(n: str) -> str:
    if n in KEYWORDS:
        raise ValueError(f"{n!r} is a reserved word and cannot be printed as a name")
    return n


def format_expr(e: Expr) -> str:
    if isinstance(e, Literal):
        text = _literal(e.value)
        return f"({text})" if text.startswith("-") else text
    if isinstance(e, Column):
        return f"{_name(e.table)}.{_name(e.name)}" if e.table else _name(e.name)
    if isinstance(e, Unary):
        inner = format_expr(e.operand)
        if _prec(e.operand) < _prec(e):
            inner = f"({inner})"
        if e.op == "not":
            return f"not {inner}"
        return f"-({inner})" if inner.startswith("-") else f"-{inner}"
    if isinstance(e, Binary):
        p = _PREC[e.op]
        left, right = format_expr(e.left), format_expr(e.right)
        lp, rp = _prec(e.left), _prec(e.right)
        if lp < p or (p == 4 and lp == 4):
            left = f"({left})"
        if rp <= p or right.startswith("-"):
            right = f"({right})"
        return f"{left} {e.op} {right}"
    if isinstance(e, Call):
        if e.star:
            return f"{e.name}(*)"
        return f"{e.name}(" + ", ".join(format_expr(a) for a in e.args) + ")"
    if isinstance(e, Window):
        parts = ", ".join(format_expr(p) for p in e.partition_by)
        spec = f"partition by {parts}" if parts else ""
        return f"{format_expr(e.call)} over ({spec})"
    raise TypeError(f"cannot print {e!r}")


def format_select(s: Select, indent: str = "") -> str:
    head = "select " + ("*" if s.star else ", ".join(
        format_expr(i.expr) + (f" as {_name(i.alias)}" if i.alias else "") for i in s.items
    ))
    lines = [head]
    if s.from_:
        srcs = []
        for f in s.from_:
            if isinstance(f, TableRef):
                srcs.append(_name(f.name) + (f" as {_name(f.alias)}" if f.alias else ""))
            else:
                srcs.append(f"({format_select(f.query)}) as {_name(f.alias)}")
        lines.append("from " + ", ".join(srcs))
    if s.where is not None:
        lines.append("where " + format_expr(s.where))
    if s.group_by:
        lines.append("group by " + ", ".join(format_expr(g) for g in s.group_by))
    return ("\n" + indent).join(lines) if indent else " ".join(lines)


def _computed(cb: ComputedBy, indent: str) -> str:
    cols = ", ".join(_name(c) for c in cb.columns)
    return f"{_name(cb.name)}({cols}) as {format_select(cb.query, indent + '    ')}"


def _branch(b: Branch, indent: str) -> str:
    text = "(" + format_select(b.query, indent + " ")
    if b.computed_by:
        text += f"\n{indent} computed by"
        for cb in b.computed_by:
            text += f"\n{indent}   " + _computed(cb, indent + "   ")
    return text + ")"


def pretty_print(stmt: Statement) -> str:
    if isinstance(stmt, Select):
        return format_select(stmt, "  ")
    if not isinstance(stmt, WithQuery):
        raise TypeError(f"cannot print {stmt!r}")
    ind = "    "
    out = [f"with {_name(stmt.name)}(" + ", ".join(_name(c) for c in stmt.columns) + ") as ("]
    for i, b in enumerate(stmt.branches):
        if i:
            u = stmt.unions[i - 1]
            out.append(ind + ("union all" if u.mode == "all" else "union by update " + ", ".join(_name(k) for k in u.key)))
        out.append(ind + _branch(b, ind))
    if stmt.max_recursion is not None:
        out.append(f"{ind}maxrecursion {stmt.max_recursion}")
    out.append(")")
    out.append(format_select(stmt.final, "  "))
    return "\n".join(out) + "\n"
