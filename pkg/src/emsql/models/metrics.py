"""External clustering quality: purity and normalized mutual information."""

from __future__ import annotations

import numpy as np

from ..relation import Relation


def contingency(pred, truth) -> np.ndarray:
    """Counts table with predicted clusters as rows and true classes as columns."""
    _, pi = np.unique(np.asarray(pred), return_inverse=True)
    _, ti = np.unique(np.asarray(truth), return_inverse=True)
    table = np.zeros((pi.max(initial=-1) + 1, ti.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(table, (pi, ti), 1)
    return table


def purity(pred, truth) -> float:
    table = contingency(pred, truth)
    n = table.sum()
    return float(table.max(axis=1).sum() / n) if n else 1.0


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def nmi(pred, truth) -> float:
    """Mutual information over the arithmetic mean of the two entropies."""
    table = contingency(pred, truth)
    n = int(table.sum())
    if n == 0:
        return 1.0
    hp = _entropy(table.sum(axis=1), n)
    ht = _entropy(table.sum(axis=0), n)
    if hp == 0.0 and ht == 0.0:
        return 1.0
    nz = table > 0
    pij = table[nz] / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))[nz] / n**2
    mi = float((pij * np.log(pij / outer)).sum())
    return float(np.clip(mi / ((hp + ht) / 2.0), 0.0, 1.0))


def _labels(rel: Relation, what: str) -> dict:
    names = rel.names
    if "id" not in names:
        raise ValueError(f"{what} needs an id column, got {names}")
    col = next((c for c in ("k", "label") if c in names), None)
    if col is None:
        others = [c for c in names if c != "id"]
        if not others:
            raise ValueError(f"{what} has no label column")
        col = others[0]
    ids = np.asarray(rel.column("id")).tolist()
    labels = np.asarray(rel.column(col)).tolist()
    if len(set(ids)) != len(ids):
        raise ValueError(f"{what} has duplicate ids")
    return dict(zip(ids, labels))


def evaluate_clustering(clu: Relation, truth: Relation) -> tuple[float, float]:
    """(purity, nmi) of an assignment CLU(id, k) against ground truth (id, label)."""
    a = _labels(clu, "assignment")
    b = _labels(truth, "ground truth")
    if set(a) != set(b):
        missing = sorted(set(a) ^ set(b))[:5]
        raise ValueError(f"assignment and ground truth cover different ids, e.g. {missing}")
    ids = sorted(a)
    pred = [a[i] for i in ids]
    true = [b[i] for i in ids]
    return purity(pred, true), nmi(pred, true)
