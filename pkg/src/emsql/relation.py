"""Columnar in-memory relations whose cells may be scalars, text, vectors or matrices.

A relation stores one numpy array per attribute:

* ``INT``  -> int64, shape (n,)
* ``REAL`` -> float64, shape (n,)
* ``TEXT`` -> object, shape (n,)
* ``VEC``  -> float64, shape (n, d)
* ``MAT``  -> float64, shape (n, d, d)

Arrays are frozen (``writeable=False``) so relations behave as values.
"""

from __future__ import annotations

import csv
import enum
import io
from collections import Counter
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import KeyViolation, NonFiniteError, SchemaError, TypeMismatch


class Kind(enum.Enum):
    INT = "int"
    REAL = "real"
    TEXT = "text"
    VEC = "vec"
    MAT = "mat"
    BOOL = "bool"  # predicate results only; never stored

    @property
    def numeric(self) -> bool:
        return self in (Kind.INT, Kind.REAL)


@dataclass(frozen=True)
class Attribute:
    name: str
    kind: Kind
    dim: int | None = None

    def __post_init__(self):
        if self.kind in (Kind.VEC, Kind.MAT) and (self.dim is None or self.dim < 1):
            raise SchemaError(f"attribute {self.name!r}: {self.kind.value} needs a positive dimension")
        if self.kind is Kind.BOOL:
            raise SchemaError(f"attribute {self.name!r}: boolean columns cannot be stored")

    def type_str(self) -> str:
        if self.kind is Kind.VEC:
            return f"vec[{self.dim}]"
        if self.kind is Kind.MAT:
            return f"mat[{self.dim}x{self.dim}]"
        return self.kind.value

    def renamed(self, name: str) -> "Attribute":
        return Attribute(name, self.kind, self.dim)


class Schema(tuple):
    """Ordered, duplicate-free tuple of attributes."""

    def __new__(cls, attrs: Iterable[Attribute]):
        attrs = tuple(attrs)
        seen = set()
        for a in attrs:
            if a.name in seen:
                raise SchemaError(f"duplicate attribute name {a.name!r}")
            seen.add(a.name)
        return super().__new__(cls, attrs)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self)

    def index(self, name: str) -> int:  # type: ignore[override]
        for i, a in enumerate(self):
            if a.name == name:
                return i
        raise SchemaError(f"unknown attribute {name!r} (available: {', '.join(self.names)})")

    def __getitem__(self, item):
        if isinstance(item, str):
            return tuple.__getitem__(self, self.index(item))
        return tuple.__getitem__(self, item)

    def compatible(self, other: "Schema") -> bool:
        return len(self) == len(other) and all(
            a.name == b.name and a.kind == b.kind and a.dim == b.dim for a, b in zip(self, other)
        )

    def __repr__(self) -> str:
        return "Schema(" + ", ".join(f"{a.name}:{a.type_str()}" for a in self) + ")"


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def coerce_column(attr: Attribute, data: Any, nrows: int | None = None) -> np.ndarray:
    """Convert ``data`` into the canonical array layout for ``attr``."""
    if attr.kind is Kind.TEXT:
        arr = np.empty(len(data), dtype=object)
        for i, v in enumerate(data):
            if not isinstance(v, str):
                raise TypeMismatch(f"attribute {attr.name!r} expects text, got {type(v).__name__}")
            arr[i] = v
    elif attr.kind is Kind.INT:
        raw = np.asarray(data)
        if raw.size and not (np.issubdtype(raw.dtype, np.integer) or raw.dtype == bool):
            if np.issubdtype(raw.dtype, np.floating) and np.all(np.mod(raw, 1) == 0):
                pass
            else:
                raise TypeMismatch(f"attribute {attr.name!r} expects int, got {raw.dtype}")
        arr = np.array(raw, dtype=np.int64).reshape(-1)
    else:
        try:
            arr = np.array(data, dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise TypeMismatch(f"attribute {attr.name!r}: {exc}") from None
        n = arr.shape[0] if arr.ndim else 0
        if arr.size == 0:
            n = len(data) if nrows is None else nrows
        expected = {
            Kind.REAL: (n,),
            Kind.VEC: (n, attr.dim),
            Kind.MAT: (n, attr.dim, attr.dim),
        }[attr.kind]
        if arr.size == 0:
            arr = arr.reshape(expected)
        if arr.shape != expected:
            raise TypeMismatch(
                f"attribute {attr.name!r} expects {attr.type_str()} cells, got array of shape {arr.shape[1:]}"
            )
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"attribute {attr.name!r} contains NaN or infinity")
    if nrows is not None and arr.shape[0] != nrows:
        raise SchemaError(f"attribute {attr.name!r} has {arr.shape[0]} rows, expected {nrows}")
    return _freeze(arr)


def infer_attribute(name: str, values: Sequence[Any]) -> Attribute:
    """Guess an attribute type from python cell values."""
    kind = None
    dim = None
    for v in values:
        if isinstance(v, str):
            k, d = Kind.TEXT, None
        elif isinstance(v, (bool, np.bool_)):
            k, d = Kind.INT, None
        elif isinstance(v, (int, np.integer)):
            k, d = Kind.INT, None
        elif isinstance(v, (float, np.floating)):
            k, d = Kind.REAL, None
        else:
            a = np.asarray(v, dtype=np.float64)
            if a.ndim == 1:
                k, d = Kind.VEC, a.shape[0]
            elif a.ndim == 2 and a.shape[0] == a.shape[1]:
                k, d = Kind.MAT, a.shape[0]
            else:
                raise TypeMismatch(f"attribute {name!r}: unsupported cell of shape {a.shape}")
        if kind is None:
            kind, dim = k, d
        elif {kind, k} == {Kind.INT, Kind.REAL}:
            kind = Kind.REAL
        elif kind != k or dim != d:
            raise TypeMismatch(f"attribute {name!r} mixes {kind.value} and {k.value} cells")
    return Attribute(name, kind or Kind.REAL, dim)


class Relation:
    """An immutable bag of tuples over a schema, with an optional declared key."""

    __slots__ = ("schema", "columns", "key", "name", "_nrows")
    __hash__ = None  # type: ignore[assignment]

    def __init__(
        self,
        schema: Schema | Sequence[Attribute],
        columns: Sequence[Any],
        key: Sequence[str] | None = None,
        name: str | None = None,
        nrows: int | None = None,
    ):
        schema = schema if isinstance(schema, Schema) else Schema(schema)
        if len(columns) != len(schema):
            raise SchemaError(f"expected {len(schema)} columns, got {len(columns)}")
        if nrows is None:
            if not columns:
                raise SchemaError("a relation without attributes needs an explicit row count")
            nrows = len(columns[0])
        cols = tuple(coerce_column(a, c, nrows) for a, c in zip(schema, columns))
        self.schema = schema
        self.columns = cols
        self.name = name
        self._nrows = int(nrows)
        self.key = tuple(key) if key else None
        if self.key:
            for k in self.key:
                schema.index(k)
            dups = [k for k, c in Counter(self.key_tuples(self.key)).items() if c > 1]
            if dups:
                raise KeyViolation(f"relation {name or ''!s} has duplicate key {self.key}: {dups[0]!r}")

    # construction -------------------------------------------------------

    @classmethod
    def _trusted(cls, schema: Schema, columns: tuple, nrows: int, key=None, name=None) -> "Relation":
        """Build from arrays that already satisfy every invariant."""
        rel = object.__new__(cls)
        rel.schema = schema
        rel.columns = tuple(_freeze(c) if c.flags.writeable else c for c in columns)
        rel._nrows = nrows
        rel.key = tuple(key) if key else None
        rel.name = name
        return rel

    @classmethod
    def from_rows(
        cls,
        schema: Sequence[Attribute | str],
        rows: Iterable[Sequence[Any]],
        key: Sequence[str] | None = None,
        name: str | None = None,
    ) -> "Relation":
        rows = [tuple(r) for r in rows]
        for r in rows:
            if len(r) != len(schema):
                raise SchemaError(f"row {r!r} has {len(r)} cells, schema has {len(schema)}")
        attrs = []
        for i, a in enumerate(schema):
            if isinstance(a, Attribute):
                attrs.append(a)
            else:
                attrs.append(infer_attribute(a, [r[i] for r in rows]))
        cols = [[r[i] for r in rows] for i in range(len(attrs))]
        return cls(attrs, cols, key=key, name=name, nrows=len(rows))

    @classmethod
    def from_columns(cls, data: dict[str, Any], key=None, name=None) -> "Relation":
        attrs = []
        cols = []
        for nm, values in data.items():
            arr = values if isinstance(values, np.ndarray) else None
            if arr is not None and arr.dtype != object:
                if np.issubdtype(arr.dtype, np.integer):
                    attrs.append(Attribute(nm, Kind.INT))
                elif arr.ndim == 1:
                    attrs.append(Attribute(nm, Kind.REAL))
                elif arr.ndim == 2:
                    attrs.append(Attribute(nm, Kind.VEC, arr.shape[1]))
                else:
                    attrs.append(Attribute(nm, Kind.MAT, arr.shape[1]))
            else:
                attrs.append(infer_attribute(nm, list(values)))
            cols.append(values)
        n = len(cols[0]) if cols else 0
        return cls(attrs, cols, key=key, name=name, nrows=n)

    @classmethod
    def empty(cls, schema: Sequence[Attribute], key=None, name=None) -> "Relation":
        return cls(schema, [[] for _ in schema], key=key, name=name, nrows=0)

    # access -------------------------------------------------------------

    def __len__(self) -> int:
        return self._nrows

    @property
    def names(self) -> tuple[str, ...]:
        return self.schema.names

    def column(self, name: str) -> np.ndarray:
        return self.columns[self.schema.index(name)]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.column(name)

    def cell(self, row: int, name: str):
        return _to_python(self.schema[name], self.column(name)[row])

    def rows(self) -> list[tuple]:
        """Rows as python tuples; vectors and matrices become nested tuples."""
        out = []
        for i in range(self._nrows):
            out.append(tuple(_to_python(a, c[i]) for a, c in zip(self.schema, self.columns)))
        return out

    def __iter__(self):
        return iter(self.rows())

    def take(self, idx: np.ndarray) -> "Relation":
        idx = np.asarray(idx, dtype=np.int64)
        cols = tuple(c[idx] for c in self.columns)
        return Relation._trusted(self.schema, cols, len(idx), name=self.name)

    def rename(self, names: Sequence[str], name: str | None = None) -> "Relation":
        if len(names) != len(self.schema):
            raise SchemaError(f"rename needs {len(self.schema)} names, got {len(names)}")
        schema = Schema(a.renamed(n) for a, n in zip(self.schema, names))
        key = None
        if self.key:
            mapping = dict(zip(self.schema.names, names))
            key = [mapping[k] for k in self.key]
        return Relation._trusted(schema, self.columns, self._nrows, key=key, name=name or self.name)

    def with_key(self, key: Sequence[str] | None) -> "Relation":
        return Relation(self.schema, self.columns, key=key, name=self.name, nrows=self._nrows)

    def with_name(self, name: str | None) -> "Relation":
        return Relation._trusted(self.schema, self.columns, self._nrows, key=self.key, name=name)

    # identity -----------------------------------------------------------

    def row_keys(self, names: Sequence[str] | None = None) -> list[tuple]:
        """Hashable per-row identities; float cells compare bitwise."""
        idx = range(len(self.schema)) if names is None else [self.schema.index(n) for n in names]
        parts = []
        for i in idx:
            c = self.columns[i]
            if c.dtype == object:
                parts.append(list(c))
            else:
                flat = np.ascontiguousarray(c).reshape(self._nrows, int(np.prod(c.shape[1:], dtype=np.int64)))
                parts.append([flat[j].tobytes() for j in range(self._nrows)])
        if not parts:
            return [()] * self._nrows
        return list(zip(*parts))

    key_tuples = row_keys

    def canonical(self) -> list[tuple]:
        """Rows in a deterministic order, for set/bag comparisons."""
        return sorted(self.row_keys())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Relation):
            return NotImplemented
        return (
            self.schema.compatible(other.schema)
            and len(self) == len(other)
            and Counter(self.row_keys()) == Counter(other.row_keys())
        )

    def sorted_by(self, names: Sequence[str]) -> "Relation":
        if not self._nrows:
            return self
        keys = [self.column(n) for n in reversed(names)]
        if any(k.ndim != 1 or k.dtype == object for k in keys):
            order = sorted(range(self._nrows), key=lambda i: tuple(self.cell(i, n) for n in names))
        else:
            order = np.lexsort(keys)
        rel = self.take(np.asarray(order))
        return Relation._trusted(rel.schema, rel.columns, len(rel), key=self.key, name=self.name)

    def __repr__(self) -> str:
        return f"Relation({self.name or ''}{self.schema!r}, {self._nrows} rows)"

    def pretty(self, limit: int = 50) -> str:
        header = list(self.names)
        body = [[format_cell(a, c[i]) for a, c in zip(self.schema, self.columns)] for i in range(min(limit, self._nrows))]
        widths = [max([len(h)] + [len(r[j]) for r in body]) for j, h in enumerate(header)]
        lines = [" | ".join(h.ljust(w) for h, w in zip(header, widths))]
        lines.append("-+-".join("-" * w for w in widths))
        lines += [" | ".join(v.ljust(w) for v, w in zip(r, widths)) for r in body]
        if self._nrows > limit:
            lines.append(f"... ({self._nrows - limit} more rows)")
        return "\n".join(lines)


def _to_python(attr: Attribute, v):
    if attr.kind is Kind.INT:
        return int(v)
    if attr.kind is Kind.REAL:
        return float(v)
    if attr.kind is Kind.TEXT:
        return v
    return tuple(map(tuple, v.tolist())) if attr.kind is Kind.MAT else tuple(v.tolist())


# CSV ------------------------------------------------------------------------


def _fmt_real(x: float) -> str:
    return repr(float(x))


def format_cell(attr: Attribute, v) -> str:
    if attr.kind is Kind.INT:
        return str(int(v))
    if attr.kind is Kind.REAL:
        return _fmt_real(v)
    if attr.kind is Kind.TEXT:
        return v
    if attr.kind is Kind.VEC:
        return "[" + ",".join(_fmt_real(x) for x in v) + "]"
    return "[" + ",".join("[" + ",".join(_fmt_real(x) for x in row) + "]" for row in v) + "]"


def _parse_cell(text: str):
    t = text.strip()
    if t.startswith("["):
        if not t.endswith("]"):
            raise ValueError(f"unterminated vector literal {text!r}")
        inner = t[1:-1].strip()
        if inner.startswith("["):
            rows = []
            depth_ok = inner.startswith("[") and inner.endswith("]")
            if not depth_ok:
                raise ValueError(f"malformed matrix literal {text!r}")
            for part in inner[1:-1].split("],["):
                rows.append([float(x) for x in part.split(",")])
            if len({len(r) for r in rows}) != 1 or len(rows) != len(rows[0]):
                raise ValueError(f"matrix literal {text!r} is not square")
            out = np.array(rows)
        else:
            if not inner:
                raise ValueError("empty vector literal")
            out = np.array([float(x) for x in inner.split(",")])
        if not np.all(np.isfinite(out)):
            raise ValueError(f"non-finite entry in {text!r}")
        return out
    try:
        return int(t)
    except ValueError:
        pass
    try:
        x = float(t)
    except ValueError:
        return text
    if not np.isfinite(x):
        raise ValueError(f"non-finite number {text!r}")
    return x


class CsvFormatError(SchemaError):
    def __init__(self, row: int, message: str):
        self.row = row
        super().__init__(f"row {row}: {message}")


def read_csv(source: str | io.TextIOBase, name: str | None = None, key=None) -> Relation:
    """Parse CSV text (or an open file) into a relation.

    Rows are numbered from 1 after the header in error messages.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise CsvFormatError(0, "missing header row") from None
    header = [h.strip() for h in header]
    rows = []
    for lineno, raw in enumerate(reader, start=1):
        if not raw or all(not c.strip() for c in raw):
            continue
        if len(raw) != len(header):
            raise CsvFormatError(lineno, f"expected {len(header)} cells, got {len(raw)}")
        try:
            rows.append(tuple(_parse_cell(c) for c in raw))
        except ValueError as exc:
            raise CsvFormatError(lineno, str(exc)) from None
    attrs = []
    for j, h in enumerate(header):
        try:
            attrs.append(infer_attribute(h, [r[j] for r in rows]))
        except TypeMismatch as exc:
            bad = _first_bad_row(rows, j)
            raise CsvFormatError(bad, str(exc)) from None
    try:
        return Relation(attrs, [[r[j] for r in rows] for j in range(len(attrs))], key=key, name=name, nrows=len(rows))
    except (TypeMismatch, NonFiniteError) as exc:
        raise CsvFormatError(0, str(exc)) from None


def _first_bad_row(rows, j) -> int:
    first = rows[0][j] if rows else None
    for i, r in enumerate(rows, start=1):
        v = r[j]
        if type(v) is not type(first) and not (isinstance(v, (int, float)) and isinstance(first, (int, float))):
            return i
        if isinstance(v, np.ndarray) and np.shape(v) != np.shape(first):
            return i
    return 0


def write_csv(rel: Relation, target: str | io.TextIOBase | None = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(rel.names)
    for i in range(len(rel)):
        writer.writerow([format_cell(a, c[i]) for a, c in zip(rel.schema, rel.columns)])
    text = buf.getvalue()
    if isinstance(target, str):
        with open(target, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    elif target is not None:
        target.write(text)
    return text


def load_csv(path: str, name: str | None = None, key=None) -> Relation:
    with open(path, encoding="utf-8", newline="") as fh:
        return read_csv(fh, name=name, key=key)
