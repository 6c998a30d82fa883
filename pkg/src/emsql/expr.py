"""Row expressions and their column-at-a-time evaluation.

Expressions are immutable trees.  ``evaluate`` computes one value per row of a
relation and returns a :class:`Col` (kind + numpy array).  Column references
are resolved by name against the relation's attributes, which may be
qualified (``x.id``); bare names that match no attribute fall back to scalar
parameters bound by the host.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import kernels
from .errors import (
    AmbiguousAttribute,
    ArityMismatch,
    DimensionMismatch,
    NonFiniteError,
    TypeMismatch,
    UnknownAttribute,
    UnknownFunction,
)
from .relation import Attribute, Kind, Relation


class Expr:
    __slots__ = ()

    def children(self) -> tuple["Expr", ...]:
        return ()

    def walk(self):
        yield self
        for c in self.children():
            yield from c.walk()


@dataclass(frozen=True)
class Literal(Expr):
    value: int | float | str


@dataclass(frozen=True)
class Column(Expr):
    name: str
    table: str | None = None

    @property
    def qualified(self) -> str:
        return f"{self.table}.{self.name}" if self.table else self.name


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # "-" or "not"
    operand: Expr

    def children(self):
        return (self.operand,)


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Call(Expr):
    name: str
    args: tuple[Expr, ...] = ()
    star: bool = False  # count(*)

    def children(self):
        return self.args


@dataclass(frozen=True)
class Window(Expr):
    call: Call
    partition_by: tuple[Expr, ...] = field(default=())

    def children(self):
        return (self.call,) + self.partition_by


# values ----------------------------------------------------------------------


@dataclass
class Col:
    kind: Kind
    data: np.ndarray

    @property
    def dim(self) -> int | None:
        return self.data.shape[1] if self.kind in (Kind.VEC, Kind.MAT) else None

    def attribute(self, name: str) -> Attribute:
        kind = Kind.INT if self.kind is Kind.BOOL else self.kind
        return Attribute(name, kind, self.dim)

    def stored(self) -> np.ndarray:
        if self.kind is Kind.BOOL:
            return self.data.astype(np.int64)
        return self.data


def _describe(c: Col) -> str:
    if c.kind is Kind.VEC:
        return f"vec[{c.dim}]"
    if c.kind is Kind.MAT:
        return f"mat[{c.dim}x{c.dim}]"
    return c.kind.value


def _as_real(c: Col) -> np.ndarray:
    if c.kind is Kind.INT:
        return c.data.astype(np.float64)
    if c.kind is Kind.REAL:
        return c.data
    raise TypeMismatch(f"expected a number, got {_describe(c)}")


def _col_from_python(value, n: int) -> Col:
    if isinstance(value, bool):
        return Col(Kind.INT, np.full(n, int(value), dtype=np.int64))
    if isinstance(value, (int, np.integer)):
        return Col(Kind.INT, np.full(n, int(value), dtype=np.int64))
    if isinstance(value, (float, np.floating)):
        return Col(Kind.REAL, np.full(n, float(value)))
    if isinstance(value, str):
        arr = np.empty(n, dtype=object)
        arr[:] = value
        return Col(Kind.TEXT, arr)
    a = np.asarray(value, dtype=np.float64)
    if a.ndim == 1:
        return Col(Kind.VEC, np.broadcast_to(a, (n,) + a.shape))
    if a.ndim == 2:
        return Col(Kind.MAT, np.broadcast_to(a, (n,) + a.shape))
    raise TypeMismatch(f"unsupported parameter value of shape {a.shape}")


# name resolution --------------------------------------------------------------


def resolve(rel_names, col: Column) -> int | None:
    """Index of the attribute ``col`` refers to, or None when nothing matches."""
    if col.table is not None:
        target = f"{col.table}.{col.name}"
        hits = [i for i, n in enumerate(rel_names) if n == target]
        if not hits and len({n.split(".", 1)[0] for n in rel_names if "." in n}) == 0:
            hits = [i for i, n in enumerate(rel_names) if n == col.name]
    else:
        hits = [i for i, n in enumerate(rel_names) if n == col.name or n.rsplit(".", 1)[-1] == col.name]
        exact = [i for i in hits if rel_names[i] == col.name]
        if len(hits) > 1 and len(exact) == 1:
            hits = exact
    if len(hits) > 1:
        raise AmbiguousAttribute(col.qualified, [rel_names[i] for i in hits])
    return hits[0] if hits else None


# evaluation ------------------------------------------------------------------


class Scope:
    """What an expression may see: a relation plus host parameters."""

    def __init__(self, rel: Relation, params: Mapping[str, object] | None = None):
        self.rel = rel
        self.params = params or {}
        self.n = len(rel)


def evaluate(expr: Expr, rel: Relation, params: Mapping[str, object] | None = None) -> Col:
    return _eval(expr, Scope(rel, params))


def _eval(e: Expr, s: Scope) -> Col:
    if isinstance(e, Column):
        i = resolve(s.rel.names, e)
        if i is None:
            if e.table is None and e.name in s.params:
                return _col_from_python(s.params[e.name], s.n)
            raise UnknownAttribute(e.qualified, s.rel.names)
        a = s.rel.schema[i]
        return Col(a.kind, s.rel.columns[i])
    if isinstance(e, Literal):
        return _col_from_python(e.value, s.n)
    if isinstance(e, Unary):
        v = _eval(e.operand, s)
        if e.op == "-":
            if v.kind in (Kind.TEXT, Kind.BOOL):
                raise TypeMismatch(f"cannot negate {_describe(v)}")
            return Col(v.kind, -v.data)
        if e.op == "not":
            if v.kind is not Kind.BOOL:
                raise TypeMismatch("NOT expects a boolean")
            return Col(Kind.BOOL, ~v.data)
        raise TypeMismatch(f"unknown unary operator {e.op}")
    if isinstance(e, Binary):
        return _binary(e.op, _eval(e.left, s), _eval(e.right, s))
    if isinstance(e, Call):
        fn = SCALAR_OVERLOADS.get((e.name, len(e.args))) or FUNCTIONS.get(e.name)
        if fn is None:
            raise UnknownFunction(f"unknown function {e.name}()")
        if fn.aggregate:
            raise TypeMismatch(f"aggregate {e.name}() used outside GROUP BY or a window")
        if len(e.args) not in fn.arity:
            raise ArityMismatch(f"{e.name}() takes {_arity_text(fn.arity)} arguments, got {len(e.args)}")
        args = [_eval(a, s) for a in e.args]
        out = fn.impl(*args)
        _check_finite(out, e.name)
        return out
    if isinstance(e, Window):
        raise TypeMismatch("window functions must be lowered before evaluation")
    raise TypeMismatch(f"cannot evaluate {e!r}")


def _check_finite(c: Col, what: str) -> None:
    if c.kind in (Kind.REAL, Kind.VEC, Kind.MAT) and not np.all(np.isfinite(c.data)):
        raise NonFiniteError(f"{what} produced a non-finite value")


_ARITH = {"+", "-", "*", "/"}
_CMP = {"=", "<>", "<", "<=", ">", ">="}


def _binary(op: str, a: Col, b: Col) -> Col:
    if op in ("and", "or"):
        if a.kind is not Kind.BOOL or b.kind is not Kind.BOOL:
            raise TypeMismatch(f"{op.upper()} expects booleans")
        return Col(Kind.BOOL, (a.data & b.data) if op == "and" else (a.data | b.data))
    if op in _CMP:
        return _compare(op, a, b)
    if op not in _ARITH:
        raise TypeMismatch(f"unknown operator {op}")
    out = _arith(op, a, b)
    _check_finite(out, f"operator {op}")
    return out


def _compare(op: str, a: Col, b: Col) -> Col:
    if a.kind is Kind.TEXT and b.kind is Kind.TEXT:
        x, y = a.data, b.data
    elif a.kind.numeric and b.kind.numeric:
        x, y = a.data, b.data
    elif a.kind is Kind.BOOL and b.kind is Kind.BOOL and op in ("=", "<>"):
        x, y = a.data, b.data
    else:
        raise TypeMismatch(f"cannot compare {_describe(a)} with {_describe(b)}")
    res = {
        "=": lambda: x == y,
        "<>": lambda: x != y,
        "<": lambda: x < y,
        "<=": lambda: x <= y,
        ">": lambda: x > y,
        ">=": lambda: x >= y,
    }[op]()
    return Col(Kind.BOOL, np.asarray(res, dtype=bool))


def _arith(op: str, a: Col, b: Col) -> Col:
    ka, kb = a.kind, b.kind
    if ka.numeric and kb.numeric:
        if op == "/":
            return Col(Kind.REAL, _as_real(a) / _divisor(_as_real(b)))
        res = {"+": np.add, "-": np.subtract, "*": np.multiply}[op](a.data, b.data)
        kind = Kind.INT if ka is Kind.INT and kb is Kind.INT else Kind.REAL
        return Col(kind, res)
    tensor = (Kind.VEC, Kind.MAT)
    if op in ("+", "-") and ka in tensor and ka == kb:
        if a.data.shape[1:] != b.data.shape[1:]:
            raise DimensionMismatch(f"{_describe(a)} {op} {_describe(b)}")
        return Col(ka, a.data + b.data if op == "+" else a.data - b.data)
    if op == "*" and ka.numeric and kb in tensor:
        return Col(kb, _bcast(_as_real(a), b.data) * b.data)
    if op == "*" and kb.numeric and ka in tensor:
        return Col(ka, a.data * _bcast(_as_real(b), a.data))
    if op == "/" and kb.numeric and ka in tensor:
        return Col(ka, a.data / _bcast(_divisor(_as_real(b)), a.data))
    raise TypeMismatch(f"unsupported operands for {op}: {_describe(a)} and {_describe(b)}")


def _divisor(x: np.ndarray) -> np.ndarray:
    if np.any(x == 0):
        raise NonFiniteError("division by zero")
    return x


def _bcast(s: np.ndarray, like: np.ndarray) -> np.ndarray:
    return s.reshape(s.shape + (1,) * (like.ndim - 1))


# function table -----------------------------------------------------------------


@dataclass(frozen=True)
class Function:
    name: str
    arity: tuple[int, ...]
    impl: Callable[..., Col] | None = None
    aggregate: bool = False


def _arity_text(arity) -> str:
    return " or ".join(str(a) for a in arity)


def _need(c: Col, kind: Kind, fn: str) -> np.ndarray:
    if kind is Kind.REAL:
        return _as_real(c)
    if c.kind is not kind:
        raise TypeMismatch(f"{fn}() expects {kind.value}, got {_describe(c)}")
    return c.data


def _fn_norm(x: Col, m: Col, s: Col) -> Col:
    # scalar form takes a standard deviation; vector form a covariance matrix
    if x.kind.numeric:
        out = kernels.norm_pdf_1d(_as_real(x), _need(m, Kind.REAL, "norm"), _need(s, Kind.REAL, "norm"))
        return Col(Kind.REAL, kernels.floored(np.asarray(out, dtype=np.float64).reshape(-1)))
    xv = _need(x, Kind.VEC, "norm")
    mv = _need(m, Kind.VEC, "norm")
    cv = _need(s, Kind.MAT, "norm")
    return Col(Kind.REAL, kernels.floored(kernels.norm_pdf_batch(xv, mv, cv)))


def _fn_pow(a: Col, b: Col | None = None) -> Col:
    if b is None:
        if a.kind.numeric:
            return Col(a.kind, a.data * a.data)
        v = _need(a, Kind.VEC, "pow")
        return Col(Kind.MAT, v[:, :, None] * v[:, None, :])
    return Col(Kind.REAL, np.power(_as_real(a), _as_real(b)))


def _fn_sqrt(a: Col) -> Col:
    x = _as_real(a)
    if np.any(x < 0):
        raise NonFiniteError("sqrt of a negative number")
    return Col(Kind.REAL, np.sqrt(x))


def _fn_ln(a: Col) -> Col:
    x = _as_real(a)
    if np.any(x <= 0):
        raise NonFiniteError("ln of a non-positive number")
    return Col(Kind.REAL, np.log(x))


def _fn_exp(a: Col) -> Col:
    with np.errstate(over="ignore"):
        return Col(Kind.REAL, np.exp(_as_real(a)))


def _fn_abs(a: Col) -> Col:
    if not a.kind.numeric:
        raise TypeMismatch("abs() expects a number")
    return Col(a.kind, np.abs(a.data))


def _fn_dot(a: Col, b: Col) -> Col:
    x = _need(a, Kind.VEC, "dot")
    y = _need(b, Kind.VEC, "dot")
    if x.shape[1:] != y.shape[1:]:
        raise DimensionMismatch(f"dot: {_describe(a)} vs {_describe(b)}")
    return Col(Kind.REAL, np.einsum("ij,ij->i", x, y))


def _fn_outer(a: Col, b: Col) -> Col:
    x = _need(a, Kind.VEC, "outer")
    y = _need(b, Kind.VEC, "outer")
    if x.shape[1:] != y.shape[1:]:
        raise DimensionMismatch(f"outer: {_describe(a)} vs {_describe(b)}")
    return Col(Kind.MAT, x[:, :, None] * y[:, None, :])


def _fn_scale(s: Col, v: Col) -> Col:
    return _arith("*", s, v)


def _fn_max2(a: Col, b: Col) -> Col:
    out = np.maximum(_as_real(a), _as_real(b))
    return Col(Kind.INT if a.kind is Kind.INT and b.kind is Kind.INT else Kind.REAL, out)


def _fn_min2(a: Col, b: Col) -> Col:
    out = np.minimum(_as_real(a), _as_real(b))
    return Col(Kind.INT if a.kind is Kind.INT and b.kind is Kind.INT else Kind.REAL, out)


def _fn_solve(a: Col, b: Col) -> Col:
    m = _need(a, Kind.MAT, "solve")
    v = _need(b, Kind.VEC, "solve")
    return Col(Kind.VEC, kernels.spd_solve_batch(m, v))


def _fn_mahalanobis(x: Col, m: Col, c: Col) -> Col:
    return Col(
        Kind.REAL,
        kernels.mahalanobis_batch(_need(x, Kind.VEC, "mahalanobis"), _need(m, Kind.VEC, "mahalanobis"), _need(c, Kind.MAT, "mahalanobis")),
    )


def _fn_entropy(p: Col) -> Col:
    return Col(Kind.REAL, kernels.entropy_batch(_need(p, Kind.VEC, "entropy")))


FUNCTIONS: dict[str, Function] = {
    f.name: f
    for f in [
        Function("norm", (3,), _fn_norm),
        Function("pow", (1, 2), _fn_pow),
        Function("sqrt", (1,), _fn_sqrt),
        Function("exp", (1,), _fn_exp),
        Function("ln", (1,), _fn_ln),
        Function("abs", (1,), _fn_abs),
        Function("dot", (2,), _fn_dot),
        Function("outer", (2,), _fn_outer),
        Function("scale", (2,), _fn_scale),
        Function("solve", (2,), _fn_solve),
        Function("mahalanobis", (3,), _fn_mahalanobis),
        Function("entropy", (1,), _fn_entropy),
        Function("sum", (1,), aggregate=True),
        Function("count", (0, 1), aggregate=True),
        Function("avg", (1,), aggregate=True),
        Function("max", (1,), aggregate=True),
        Function("min", (1,), aggregate=True),
    ]
}

# two-argument max/min are ordinary scalar functions
SCALAR_OVERLOADS: dict[tuple[str, int], Function] = {
    ("max", 2): Function("max", (2,), _fn_max2),
    ("min", 2): Function("min", (2,), _fn_min2),
}


def is_aggregate_call(e: Expr) -> bool:
    if not isinstance(e, Call) or (e.name, len(e.args)) in SCALAR_OVERLOADS:
        return False
    fn = FUNCTIONS.get(e.name)
    return bool(fn and fn.aggregate)


def check_functions(e: Expr) -> None:
    """Static check that every call names a known function with a valid arity."""
    for node in e.walk():
        if isinstance(node, Call):
            fn = SCALAR_OVERLOADS.get((node.name, len(node.args))) or FUNCTIONS.get(node.name)
            if fn is None:
                raise UnknownFunction(f"unknown function {node.name}()")
            if node.star:
                if node.name != "count":
                    raise ArityMismatch(f"{node.name}(*) is not allowed")
                continue
            if len(node.args) not in fn.arity:
                raise ArityMismatch(f"{node.name}() takes {_arity_text(fn.arity)} arguments, got {len(node.args)}")


# aggregation over factorized groups -----------------------------------------------------


def aggregate_col(op: str, c: Col | None, codes: np.ndarray, ngroups: int) -> Col:
    """Reduce ``c`` per group; rows are accumulated in their input order."""
    if op == "count":
        return Col(Kind.INT, np.bincount(codes, minlength=ngroups).astype(np.int64))
    assert c is not None
    if c.kind in (Kind.TEXT, Kind.BOOL):
        raise TypeMismatch(f"{op}() cannot aggregate {_describe(c)}")
    if op in ("sum", "avg"):
        if c.kind is Kind.INT and op == "sum":
            out = np.zeros(ngroups, dtype=np.int64)
            np.add.at(out, codes, c.data)
            return Col(Kind.INT, out)
        data = c.data.astype(np.float64, copy=False)
        if data.ndim == 1:
            out = np.bincount(codes, weights=data, minlength=ngroups)
        else:
            out = np.zeros((ngroups,) + data.shape[1:])
            np.add.at(out, codes, data)
        if op == "avg":
            counts = np.bincount(codes, minlength=ngroups)
            out = out / counts.reshape((-1,) + (1,) * (data.ndim - 1))
        return Col(Kind.REAL if c.kind is Kind.INT else c.kind, out)
    if op in ("max", "min"):
        if c.kind not in (Kind.INT, Kind.REAL):
            raise TypeMismatch(f"{op}() expects numbers, got {_describe(c)}")
        fill = np.iinfo(np.int64).min if c.kind is Kind.INT else -np.inf
        if op == "min":
            fill = np.iinfo(np.int64).max if c.kind is Kind.INT else np.inf
        out = np.full(ngroups, fill, dtype=c.data.dtype)
        (np.maximum if op == "max" else np.minimum).at(out, codes, c.data)
        return Col(c.kind, out)
    raise UnknownFunction(f"unknown aggregate {op}()")


def factorize(cols: list[np.ndarray], n: int) -> tuple[np.ndarray, int, np.ndarray]:
    """Group codes numbered by first appearance, plus each group's first row."""
    if not cols:
        return np.zeros(n, dtype=np.int64), (1 if n else 0), np.zeros(1 if n else 0, dtype=np.int64)
    combined = None
    for c in cols:
        c = np.asarray(c)
        if c.ndim > 1:
            _, inv = np.unique(c.reshape(n, -1), axis=0, return_inverse=True)
            card = int(inv.max()) + 1 if n else 0
        else:
            _, inv = np.unique(c, return_inverse=True)
            card = int(inv.max()) + 1 if n else 0
        inv = inv.reshape(-1).astype(np.int64)
        combined = inv if combined is None else combined * card + inv
        if combined is not None and n:
            _, combined = np.unique(combined, return_inverse=True)
            combined = combined.reshape(-1).astype(np.int64)
    if n == 0:
        return np.zeros(0, dtype=np.int64), 0, np.zeros(0, dtype=np.int64)
    ngroups = int(combined.max()) + 1
    first = np.full(ngroups, n, dtype=np.int64)
    np.minimum.at(first, combined, np.arange(n, dtype=np.int64))
    order = np.argsort(first, kind="stable")
    remap = np.empty(ngroups, dtype=np.int64)
    remap[order] = np.arange(ngroups)
    return remap[combined], ngroups, first[order]
