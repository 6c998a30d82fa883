"""An embedded relational engine with a recursive SQL dialect for training mixture models."""

from .catalog import Database, Trigger
from .engine import EvalTrace, evaluate, evaluate_resumable, run_script
from .relation import Attribute, Kind, Relation, Schema, load_csv, read_csv, write_csv

__version__ = "0.1.0"

__all__ = [
    "Attribute",
    "Database",
    "EvalTrace",
    "Kind",
    "Relation",
    "Schema",
    "Trigger",
    "evaluate",
    "evaluate_resumable",
    "load_csv",
    "read_csv",
    "run_script",
    "write_csv",
]
