"""On-disk workspace: a JSON config plus one CSV file per table, view and stats set."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

from .catalog import Database
from .maintenance import (
    DistanceBased,
    EntropyBased,
    ModelMaintenance,
    SelectionPolicy,
    SuffStats,
    ledger_from_relation,
    ledger_to_relation,
    stats_and_ledger,
)
from .models.params import GmmParams
from .relation import Relation, load_csv, write_csv

CONFIG = "workspace.json"


@dataclass
class ViewEntry:
    model: str
    table: str
    path: str
    config: dict = field(default_factory=dict)


@dataclass
class TriggerEntry:
    view: str
    strategy: str = "distance"
    radius: float = 3.0
    budget: int | None = None
    T: int = 0
    seed: int = 0
    precompute: bool = True

    def policy(self) -> SelectionPolicy:
        if self.strategy == "distance":
            return DistanceBased(budget=self.budget, radius=self.radius)
        if self.strategy == "entropy":
            return EntropyBased(budget=self.budget)
        raise ValueError(f"unknown selection strategy {self.strategy!r}")


@dataclass
class WorkspaceConfig:
    data_dir: str = "data"
    tables: dict[str, str] = field(default_factory=dict)
    views: dict[str, ViewEntry] = field(default_factory=dict)
    triggers: dict[str, TriggerEntry] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "WorkspaceConfig":
        raw = json.loads(text)
        return cls(
            raw.get("data_dir", "data"),
            dict(raw.get("tables", {})),
            {k: ViewEntry(**v) for k, v in raw.get("views", {}).items()},
            {k: TriggerEntry(**v) for k, v in raw.get("triggers", {}).items()},
        )


class Workspace:
    """A directory holding the config and CSV files; relations are read on open."""

    def __init__(self, root: str):
        self.root = os.path.abspath(root)
        path = os.path.join(self.root, CONFIG)
        if os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                self.config = WorkspaceConfig.from_json(fh.read())
        else:
            self.config = WorkspaceConfig()
        self._check()

    def _check(self) -> None:
        clash = set(self.config.tables) & set(self.config.views)
        if clash:
            raise ValueError(f"names used for both a table and a view: {sorted(clash)}")
        for name, rel in list(self.config.tables.items()) + [(v, e.path) for v, e in self.config.views.items()]:
            if not os.path.exists(self.path(rel)):
                raise FileNotFoundError(f"workspace file for {name!r} is missing: {self.path(rel)}")

    def path(self, rel: str) -> str:
        return os.path.join(self.root, rel)

    def save(self) -> None:
        os.makedirs(self.root, exist_ok=True)
        with open(os.path.join(self.root, CONFIG), "w", encoding="utf-8") as fh:
            fh.write(self.config.to_json())

    def _write(self, rel_path: str, rel: Relation) -> None:
        full = self.path(rel_path)
        os.makedirs(os.path.dirname(full), exist_ok=True)
        with open(full, "w", encoding="utf-8", newline="") as fh:
            write_csv(rel, fh)

    # tables and views ---------------------------------------------------

    def store_table(self, name: str, rel: Relation) -> None:
        name = name.lower()
        if name in self.config.views:
            raise ValueError(f"{name!r} is already a view")
        path = self.config.tables.get(name, os.path.join(self.config.data_dir, f"{name}.csv"))
        self._write(path, rel)
        self.config.tables[name] = path

    def store_view(self, name: str, rel: Relation, model: str, table: str, config: dict) -> None:
        name = name.lower()
        if name in self.config.tables:
            raise ValueError(f"{name!r} is already a table")
        path = os.path.join(self.config.data_dir, f"{name}.view.csv")
        self._write(path, rel)
        self.config.views[name] = ViewEntry(model, table.lower(), path, config)

    def stats_path(self, view: str) -> str:
        return os.path.join(self.config.data_dir, f"{view}.stats.csv")

    def ledger_path(self, view: str) -> str:
        return os.path.join(self.config.data_dir, f"{view}.contrib.csv")

    def _write_stats(self, view: str, stats: SuffStats, ledger: dict | None) -> None:
        self._write(self.stats_path(view), stats.to_relation(f"{view}_stats"))
        if ledger is not None:
            self._write(self.ledger_path(view), ledger_to_relation(ledger, stats.k, f"{view}_contrib"))

    def database(self) -> Database:
        db = Database()
        for name, path in self.config.tables.items():
            db.register(name, load_csv(self.path(path), name))
        for name, entry in self.config.views.items():
            db.register(name, load_csv(self.path(entry.path), name, key=["k"]))
        return db

    # triggers -----------------------------------------------------------

    def bind(self, table: str, entry: TriggerEntry, db: Database) -> None:
        """Record a binding; with precompute, persist the view's stats now."""
        table = table.lower()
        entry.policy()
        self.config.triggers[table] = entry
        if entry.precompute:
            stats, ledger = stats_and_ledger(GmmParams.from_relation(db[entry.view]), db[table])
            self._write_stats(entry.view, stats, ledger)

    def attach_all(self, db: Database) -> dict[str, ModelMaintenance]:
        out = {}
        for table, entry in self.config.triggers.items():
            trig = ModelMaintenance(entry.view, entry.policy(), entry.T, entry.seed, entry.precompute)
            sp = self.path(self.stats_path(entry.view))
            lp = self.path(self.ledger_path(entry.view))
            if entry.precompute and os.path.exists(sp):
                trig.stats = SuffStats.from_relation(load_csv(sp))
                if os.path.exists(lp):
                    trig.ledger = ledger_from_relation(load_csv(lp), trig.stats.k)
            db.attach(table, trig)
            out[table] = trig
        return out

    def persist(self, db: Database, table: str, trig: ModelMaintenance | None) -> None:
        """Write back a mutated table and, if bound, its view and stats."""
        self.store_table(table, db[table])
        if trig is None:
            return
        entry = self.config.views[trig.view]
        self._write(entry.path, db[trig.view])
        if trig.precompute and trig.stats is not None:
            self._write_stats(trig.view, trig.stats, trig.ledger)
