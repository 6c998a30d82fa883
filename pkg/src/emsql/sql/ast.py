"""Syntax trees for the recursive WITH dialect.

Every node carries the source position it was parsed from, but positions
are excluded from equality so that a tree printed and re-parsed compares
equal to the original.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..expr import Expr

Pos = tuple[int, int]


def _pos():
    return field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class SelectItem:
    expr: Expr
    alias: str | None = None
    pos: Pos = _pos()


@dataclass(frozen=True)
class TableRef:
    name: str
    alias: str | None = None
    pos: Pos = _pos()

    @property
    def binding(self) -> str:
        return self.alias or self.name


@dataclass(frozen=True)
class SubqueryRef:
    query: "Select"
    alias: str
    pos: Pos = _pos()

    @property
    def binding(self) -> str:
        return self.alias


FromItem = TableRef | SubqueryRef


@dataclass(frozen=True)
class Select:
    items: tuple[SelectItem, ...]
    star: bool = False
    from_: tuple[FromItem, ...] = ()
    where: Expr | None = None
    group_by: tuple[Expr, ...] = ()
    pos: Pos = _pos()

    def relations(self) -> set[str]:
        """Names of stored relations read here, including inside derived tables."""
        out = set()
        for f in self.from_:
            if isinstance(f, TableRef):
                out.add(f.name)
            else:
                out |= f.query.relations()
        return out


@dataclass(frozen=True)
class ComputedBy:
    name: str
    columns: tuple[str, ...]
    query: Select
    pos: Pos = _pos()


@dataclass(frozen=True)
class Branch:
    query: Select
    computed_by: tuple[ComputedBy, ...] = ()
    pos: Pos = _pos()


@dataclass(frozen=True)
class UnionOp:
    mode: str  # "all" or "update"
    key: tuple[str, ...] = ()
    pos: Pos = _pos()


@dataclass(frozen=True)
class WithQuery:
    """``WITH name(cols) AS (branch {union branch} [MAXRECURSION n]) final``."""

    name: str
    columns: tuple[str, ...]
    branches: tuple[Branch, ...]
    unions: tuple[UnionOp, ...]
    max_recursion: int | None
    final: Select
    pos: Pos = _pos()

    @property
    def union_mode(self) -> UnionOp | None:
        return self.unions[0] if self.unions else None

    def reads_recursive(self, branch: Branch) -> bool:
        names = branch.query.relations()
        for cb in branch.computed_by:
            names |= cb.query.relations()
        return self.name in names

    @property
    def initial_branches(self) -> tuple[Branch, ...]:
        return tuple(b for b in self.branches if not self.reads_recursive(b))

    @property
    def recursive_branches(self) -> tuple[Branch, ...]:
        return tuple(b for b in self.branches if self.reads_recursive(b))

    @property
    def initial_query(self) -> Select | None:
        init = self.initial_branches
        return init[0].query if init else None

    @property
    def recursive_query(self) -> Select | None:
        rec = self.recursive_branches
        return rec[0].query if rec else None

    @property
    def computed_by(self) -> tuple[ComputedBy, ...]:
        return tuple(cb for b in self.recursive_branches for cb in b.computed_by)


Statement = WithQuery | Select
