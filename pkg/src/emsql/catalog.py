"""A mutable catalog of named relations with insert/delete trigger hooks."""

from __future__ import annotations

import threading
from collections import defaultdict
from typing import Iterable, Mapping

import numpy as np

from . import operators as ops
from .errors import SchemaError
from .relation import Relation


class Trigger:
    """Hooks fired by :meth:`Database.insert` and :meth:`Database.delete`.

    For one insert statement the order is ``before_insert`` once,
    ``before_insert_row`` per incoming row, then ``after_insert`` once.
    """

    def before_insert(self, db: "Database", table: str, rows: Relation) -> None:
        pass

    def before_insert_row(self, db: "Database", table: str, rows: Relation, index: int) -> None:
        pass

    def after_insert(self, db: "Database", table: str, rows: Relation) -> None:
        pass

    def before_delete(self, db: "Database", table: str, rows: Relation) -> None:
        pass

    def after_delete(self, db: "Database", table: str, rows: Relation) -> None:
        pass


class Database:
    """Named base relations, host parameters and per-table triggers.

    Relations are immutable, so a reader holding a relation obtained from the
    catalog never observes a half-applied update.  Mutations of one table
    (including the triggers they fire) run under that table's lock.
    """

    def __init__(self, tables: Mapping[str, Relation] | None = None, params: Mapping[str, object] | None = None):
        self._tables: dict[str, Relation] = {}
        self.params: dict[str, object] = dict(params or {})
        self._locks: dict[str, threading.RLock] = defaultdict(threading.RLock)
        self._triggers: dict[str, list[Trigger]] = defaultdict(list)
        for name, rel in (tables or {}).items():
            self.register(name, rel)

    # catalog ------------------------------------------------------------

    def register(self, name: str, rel: Relation) -> None:
        name = name.lower()
        with self._locks[name]:
            self._tables[name] = rel.with_name(name)

    def drop(self, name: str) -> None:
        self._tables.pop(name.lower(), None)

    def __contains__(self, name: str) -> bool:
        return name.lower() in self._tables

    def __getitem__(self, name: str) -> Relation:
        try:
            return self._tables[name.lower()]
        except KeyError:
            raise SchemaError(f"unknown relation {name!r}") from None

    def get(self, name: str, default=None):
        return self._tables.get(name.lower(), default)

    @property
    def relations(self) -> dict[str, Relation]:
        return dict(self._tables)

    def names(self) -> list[str]:
        return sorted(self._tables)

    def lock(self, table: str) -> threading.RLock:
        return self._locks[table.lower()]

    # triggers -----------------------------------------------------------

    def attach(self, table: str, trigger: Trigger) -> Trigger:
        self[table]
        self._triggers[table.lower()].append(trigger)
        return trigger

    def detach(self, table: str, trigger: Trigger) -> None:
        self._triggers[table.lower()].remove(trigger)

    def triggers(self, table: str) -> list[Trigger]:
        return list(self._triggers.get(table.lower(), ()))

    # mutation -----------------------------------------------------------

    def insert(self, table: str, rows: Relation) -> Relation:
        """Append ``rows`` to ``table`` and fire its triggers; returns the new table."""
        from .engine import conform

        table = table.lower()
        with self._locks[table]:
            current = self[table]
            rows = conform(rows, current.schema, f"insert into {table}")
            trig = self.triggers(table)
            for t in trig:
                t.before_insert(self, table, rows)
            for i in range(len(rows)):
                for t in trig:
                    t.before_insert_row(self, table, rows, i)
            new = ops.union_all(current.with_name(None), rows.with_name(None))
            if current.key:
                new = new.with_key(current.key)
            self._tables[table] = new.with_name(table)
            for t in trig:
                t.after_insert(self, table, rows)
            return self._tables[table]

    def delete(self, table: str, ids: Iterable, column: str = "id") -> Relation:
        """Remove rows whose ``column`` value is in ``ids``; returns the removed rows."""
        table = table.lower()
        with self._locks[table]:
            current = self[table]
            wanted = set(ids)
            col = current.column(column)
            mask = np.fromiter((v in wanted for v in col.tolist()), dtype=bool, count=len(current))
            removed = current.take(np.flatnonzero(mask))
            trig = self.triggers(table)
            for t in trig:
                t.before_delete(self, table, removed)
            kept = current.take(np.flatnonzero(~mask))
            self._tables[table] = (kept.with_key(current.key) if current.key else kept).with_name(table)
            for t in trig:
                t.after_delete(self, table, removed)
            return removed
