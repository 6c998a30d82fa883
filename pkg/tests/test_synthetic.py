from __future__ import annotations

from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from emsql.relation import write_csv
from emsql.synthetic import SyntheticSpec, even_labels, gaussian_mixture, generate, linear_mixture, rfm_customers


def test_even_split():
    rel = generate(SyntheticSpec("gaussian", n=100, d=2, K=10, seed=0))
    assert Counter(np.asarray(rel.column("label")).tolist()) == {k: 10 for k in range(1, 11)}


@given(st.integers(1, 300), st.integers(1, 12))
def test_labels_as_even_as_possible(n, K):
    counts = Counter(even_labels(n, K, np.random.default_rng(0)).tolist())
    sizes = [counts.get(k, 0) for k in range(1, K + 1)]
    assert sum(sizes) == n and max(sizes) - min(sizes) <= 1


@pytest.mark.parametrize("gen", ["gaussian", "linear", "rfm"])
def test_same_seed_same_bytes(gen):
    spec = SyntheticSpec(gen, n=50, d=3, K=3, seed=7)
    assert write_csv(generate(spec)) == write_csv(generate(spec))
    assert write_csv(generate(spec)) != write_csv(generate(SyntheticSpec(gen, n=50, d=3, K=3, seed=8)))


def test_linear_schema():
    rel = generate(SyntheticSpec("linear", n=20, d=2, K=2, seed=1))
    assert rel.names == ("id", "x", "y", "label")
    x = np.asarray(rel.column("x"))
    assert x.shape == (20, 2) and np.all(x[:, 0] == 1.0)


def test_linear_targets_follow_their_line():
    rel, betas = linear_mixture(SyntheticSpec("linear", n=200, d=3, K=2, seed=2, spread=0.01))
    x, y, lab = (np.asarray(rel.column(c)) for c in ("x", "y", "label"))
    resid = y - np.einsum("ij,ij->i", x, betas[lab - 1])
    assert np.abs(resid).max() < 0.1


def test_gaussian_parameters_in_range():
    rel, means = gaussian_mixture(SyntheticSpec("gaussian", n=100, d=4, K=5, seed=3, lo=2.0, hi=3.0))
    assert means.shape == (5, 4) and means.min() >= 2.0 and means.max() <= 3.0
    assert np.asarray(rel.column("x")).shape == (100, 4)


def test_rfm_standardized():
    rel, _ = rfm_customers(SyntheticSpec("rfm", n=500, d=3, K=4, seed=4))
    x = np.asarray(rel.column("x"))
    assert np.allclose(x.mean(axis=0), 0.0, atol=1e-12)
    assert np.allclose(x.std(axis=0), 1.0, atol=1e-12)


@pytest.mark.parametrize(
    "kw",
    [dict(generator="nope"), dict(n=0), dict(d=0), dict(K=0), dict(lo=5.0, hi=5.0)],
)
def test_invalid_specs(kw):
    with pytest.raises(ValueError):
        SyntheticSpec(**kw)
