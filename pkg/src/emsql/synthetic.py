"""Seeded synthetic datasets with hidden labels for training and evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .relation import Attribute, Kind, Relation

GENERATORS = ("gaussian", "linear", "rfm")


@dataclass(frozen=True)
class SyntheticSpec:
    generator: str = "gaussian"
    n: int = 1000
    d: int = 2
    K: int = 3
    seed: int = 0
    lo: float = 0.0
    hi: float = 10.0
    spread: float = 1.0  # component std (gaussian) or noise std (linear)

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}; choose from {GENERATORS}")
        if self.n < 1 or self.d < 1 or self.K < 1:
            raise ValueError("n, d and K must be positive")
        if not self.lo < self.hi:
            raise ValueError("need lo < hi")


def even_labels(n: int, K: int, rng: np.random.Generator) -> np.ndarray:
    """n labels in 1..K, as evenly split as possible, in random order."""
    labels = np.arange(n) % K + 1
    return rng.permutation(labels).astype(np.int64)


def _ids(n: int) -> np.ndarray:
    return np.arange(1, n + 1, dtype=np.int64)


def gaussian_mixture(spec: SyntheticSpec) -> tuple[Relation, np.ndarray]:
    """Points drawn evenly from K isotropic Gaussians with means uniform on [lo, hi]^d."""
    rng = np.random.default_rng(spec.seed)
    means = rng.uniform(spec.lo, spec.hi, size=(spec.K, spec.d))
    labels = even_labels(spec.n, spec.K, rng)
    x = means[labels - 1] + rng.normal(0.0, spec.spread, size=(spec.n, spec.d))
    attrs = [Attribute("id", Kind.INT), Attribute("x", Kind.VEC, spec.d), Attribute("label", Kind.INT)]
    return Relation(attrs, [_ids(spec.n), x, labels], name="x"), means


def linear_mixture(spec: SyntheticSpec) -> tuple[Relation, np.ndarray]:
    """y = x . beta_label + noise, x = (1, u) with u uniform on [lo, hi]^(d-1)."""
    rng = np.random.default_rng(spec.seed)
    betas = rng.uniform(spec.lo, spec.hi, size=(spec.K, spec.d))
    labels = even_labels(spec.n, spec.K, rng)
    x = np.hstack([np.ones((spec.n, 1)), rng.uniform(spec.lo, spec.hi, size=(spec.n, spec.d - 1))])
    y = np.einsum("ij,ij->i", x, betas[labels - 1]) + rng.normal(0.0, spec.spread, size=spec.n)
    attrs = [
        Attribute("id", Kind.INT),
        Attribute("x", Kind.VEC, spec.d),
        Attribute("y", Kind.REAL),
        Attribute("label", Kind.INT),
    ]
    return Relation(attrs, [_ids(spec.n), x, y, labels], name="xy"), betas


def rfm_customers(spec: SyntheticSpec) -> tuple[Relation, np.ndarray]:
    """Recency, frequency and monetary features of K customer segments, standardized per column."""
    rng = np.random.default_rng(spec.seed)
    labels = even_labels(spec.n, spec.K, rng)
    # per segment: mean days since last purchase, purchase rate, log spend
    profile = np.column_stack([
        rng.uniform(5, 200, spec.K),
        rng.uniform(1, 30, spec.K),
        rng.uniform(3, 8, spec.K),
    ])
    p = profile[labels - 1]
    raw = np.column_stack([
        rng.exponential(p[:, 0]),
        rng.poisson(p[:, 1]).astype(np.float64),
        np.exp(rng.normal(p[:, 2], 0.3)),
    ])
    sd = raw.std(axis=0)
    x = (raw - raw.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    attrs = [Attribute("id", Kind.INT), Attribute("x", Kind.VEC, 3), Attribute("label", Kind.INT)]
    return Relation(attrs, [_ids(spec.n), x, labels], name="x"), profile


def generate(spec: SyntheticSpec) -> Relation:
    """The dataset for ``spec``; identical specs give identical relations."""
    fn = {"gaussian": gaussian_mixture, "linear": linear_mixture, "rfm": rfm_customers}[spec.generator]
    return fn(spec)[0]
