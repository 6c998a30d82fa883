"""Independent reference implementations used as test oracles.

Everything here is written directly against numpy with plain loops or
textbook formulas, sharing no code with the package under test.
"""

from __future__ import annotations

import math
from collections import defaultdict, deque

import numpy as np


# relational -----------------------------------------------------------------


def nested_loop_join(left_rows, right_rows, li, ri):
    return [l + r for l in left_rows for r in right_rows if l[li] == r[ri]]


def dense(triples, shape):
    m = np.zeros(shape)
    for f, t, v in triples:
        m[f, t] = v
    return m


def bfs_closure(nodes, edges):
    adj = defaultdict(list)
    for a, b in edges:
        adj[a].append(b)
    out = set()
    for s in nodes:
        seen = set()
        q = deque(adj[s])
        while q:
            u = q.popleft()
            if u in seen:
                continue
            seen.add(u)
            q.extend(adj[u])
        out |= {(s, u) for u in seen}
    return out


# densities ------------------------------------------------------------------


def mvn_pdf(x, mean, cov):
    """Textbook density with an explicit inverse and determinant."""
    x, mean, cov = map(lambda a: np.asarray(a, dtype=float), (x, mean, cov))
    d = len(mean)
    diff = x - mean
    inv = np.linalg.inv(cov)
    q = float(diff @ inv @ diff)
    return math.exp(-0.5 * q) / math.sqrt((2 * math.pi) ** d * np.linalg.det(cov))


def gauss_1d(y, mu, sd):
    return math.exp(-0.5 * ((y - mu) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))


# EM references --------------------------------------------------------------


def ref_gmm_step(x, pie, mean, cov):
    n, K = len(x), len(pie)
    p = np.empty((n, K))
    for i in range(n):
        for k in range(K):
            p[i, k] = max(mvn_pdf(x[i], mean[k], cov[k]), 1e-300) * pie[k]
        p[i] /= p[i].sum()
    nk = p.sum(axis=0)
    new_mean = np.array([(p[:, k, None] * x).sum(axis=0) / nk[k] for k in range(K)])
    new_cov = np.empty_like(cov)
    for k in range(K):
        acc = np.zeros((x.shape[1], x.shape[1]))
        for i in range(n):
            diff = x[i] - new_mean[k]
            acc += p[i, k] * np.outer(diff, diff)
        new_cov[k] = acc / nk[k]
    return nk / n, new_mean, new_cov


def ref_gmm(x, pie, mean, cov, iterations):
    """Per-iteration parameter history, starting with the initial values."""
    hist = [(np.array(pie, float), np.array(mean, float), np.array(cov, float))]
    for _ in range(iterations):
        hist.append(ref_gmm_step(x, *hist[-1]))
    return hist


def ref_gmm_loglik(x, pie, mean, cov):
    total = 0.0
    for xi in x:
        total += math.log(sum(pie[k] * max(mvn_pdf(xi, mean[k], cov[k]), 1e-300) for k in range(len(pie))))
    return total


def ref_mlr_step(x, y, pie, beta, sigma, sigma_min):
    n, K = len(x), len(pie)
    p = np.empty((n, K))
    for i in range(n):
        for k in range(K):
            p[i, k] = max(gauss_1d(y[i], x[i] @ beta[k], sigma[k]), 1e-300) * pie[k]
        p[i] /= p[i].sum()
    nk = p.sum(axis=0)
    nb = np.empty_like(beta)
    ns = np.empty_like(sigma)
    for k in range(K):
        w = p[:, k]
        nb[k] = np.linalg.solve((x * w[:, None]).T @ x, (x * w[:, None]).T @ y)
        ns[k] = max(math.sqrt(float((w * (y - x @ nb[k]) ** 2).sum()) / nk[k]), sigma_min)
    return nk / n, nb, ns


def ref_moe_step(x, y, theta, beta, sigma, sigma_min, floor=1e-6):
    n, K = len(x), len(sigma)
    logits = x @ theta.T
    g = np.exp(logits - logits.max(axis=1, keepdims=True))
    g /= g.sum(axis=1, keepdims=True)
    p = np.empty((n, K))
    for i in range(n):
        for k in range(K):
            p[i, k] = g[i, k] * max(gauss_1d(y[i], x[i] @ beta[k], sigma[k]), 1e-300)
        p[i] /= p[i].sum()
    nk = p.sum(axis=0)
    nb = np.empty_like(beta)
    ns = np.empty_like(sigma)
    nt = np.empty_like(theta)
    gram = x.T @ x
    for k in range(K):
        w = p[:, k]
        nb[k] = np.linalg.solve((x * w[:, None]).T @ x, (x * w[:, None]).T @ y)
        ns[k] = max(math.sqrt(float((w * (y - x @ nb[k]) ** 2).sum()) / nk[k]), sigma_min)
        target = np.log(np.maximum(p[:, k], floor) / np.maximum(p[:, K - 1], floor))
        nt[k] = np.linalg.solve(gram, x.T @ target)
    return nt, nb, ns


# metrics --------------------------------------------------------------------


def contingency_purity_nmi(pred, truth):
    pred, truth = list(pred), list(truth)
    n = len(pred)
    cs, ts = sorted(set(pred)), sorted(set(truth))
    table = [[sum(1 for a, b in zip(pred, truth) if a == c and b == t) for t in ts] for c in cs]
    purity = sum(max(row) for row in table) / n
    rows = [sum(r) for r in table]
    cols = [sum(table[i][j] for i in range(len(cs))) for j in range(len(ts))]
    mi = 0.0
    for i in range(len(cs)):
        for j in range(len(ts)):
            nij = table[i][j]
            if nij:
                mi += nij / n * math.log(n * nij / (rows[i] * cols[j]))
    hc = -sum(r / n * math.log(r / n) for r in rows if r)
    ht = -sum(c / n * math.log(c / n) for c in cols if c)
    if hc == 0 and ht == 0:
        return purity, 1.0
    return purity, mi / ((hc + ht) / 2)
