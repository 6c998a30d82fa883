from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import normalized_mutual_info_score

from emsql.models import (
    GmmParams,
    MlrParams,
    MoeParams,
    Provided,
    RandomUniform,
    TrainConfig,
    cluster_assign,
    evaluate_clustering,
    infer_posterior,
    log_likelihood,
    nmi,
    purity,
    train_gmm,
    train_mlr,
    train_moe,
)
from emsql.relation import Attribute, Kind, Relation
from emsql.synthetic import SyntheticSpec, gaussian_mixture, linear_mixture

from oracles import contingency_purity_nmi, gauss_1d, mvn_pdf, ref_gmm, ref_mlr_step, ref_moe_step


def points(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    return Relation([Attribute("id", Kind.INT), Attribute("x", Kind.VEC, d)], [np.arange(1, n + 1), x])


def design(x, y):
    x = np.asarray(x, dtype=float)
    n, d = x.shape
    attrs = [Attribute("id", Kind.INT), Attribute("x", Kind.VEC, d), Attribute("y", Kind.REAL)]
    return Relation(attrs, [np.arange(1, n + 1), x, np.asarray(y, dtype=float)])


def responsibilities(R):
    ids, ks, ps = (np.asarray(R.column(c)) for c in ("id", "k", "p"))
    out = np.zeros((ids.max(), ks.max()))
    out[ids - 1, ks - 1] = ps
    return out


# GMM ------------------------------------------------------------------------


class TestTrainGmm:
    def test_two_points(self):
        init = GmmParams([0.5, 0.5], [[-1.0], [1.0]], [[[1.0]], [[1.0]]])
        res = train_gmm(points([-5.0, 5.0]), TrainConfig(K=2, max_iterations=15, init=Provided(init)))
        assert np.allclose(res.params.mean[:, 0], [-5.0, 5.0], atol=1e-6)
        assert np.allclose(res.params.pie, [0.5, 0.5], atol=1e-6)

    def test_two_points_wide_start_follows_reference(self):
        # starting from the full-data variance the means move slowly outward
        x = np.array([[-5.0], [5.0]])
        init = GmmParams([0.5, 0.5], [[-1.0], [1.0]], [[[25.0]], [[25.0]]])
        res = train_gmm(points(x[:, 0]), TrainConfig(K=2, max_iterations=15, init=Provided(init)))
        pie, mean, cov = ref_gmm(x, init.pie, init.mean, init.cov, 15)[-1]
        assert np.allclose(res.params.mean, mean, atol=1e-8)
        assert np.allclose(res.params.cov, cov, atol=1e-8)
        assert np.all(np.abs(mean) < 5.0)

    def test_single_component_closed_form(self):
        x = np.random.default_rng(0).normal(size=(40, 2))
        res = train_gmm(points(x), TrainConfig(K=1, max_iterations=1, seed=3))
        c = x - x.mean(axis=0)
        assert res.iterations == 1
        assert np.allclose(res.params.mean[0], x.mean(axis=0), atol=1e-12)
        assert np.allclose(res.params.cov[0], c.T @ c / len(x), atol=1e-12)
        assert res.params.pie[0] == pytest.approx(1.0, abs=1e-15)

    def test_symmetric_init_stays_symmetric(self):
        x = np.random.default_rng(1).normal(size=(30, 2))
        init = GmmParams([0.5, 0.5], [[0.1, 0.2]] * 2, [np.eye(2)] * 2)
        res = train_gmm(points(x), TrainConfig(K=2, max_iterations=5, init=Provided(init)))
        for p in res.history:
            assert np.allclose(p.mean[0], p.mean[1], atol=1e-12)
            assert np.allclose(p.cov[0], p.cov[1], atol=1e-12)
            assert np.allclose(p.pie, 0.5, atol=1e-12)
            assert np.allclose(responsibilities(infer_posterior(p, points(x))), 0.5, atol=1e-12)

    def test_matches_reference_every_iteration(self):
        rel, _ = gaussian_mixture(SyntheticSpec(n=90, d=2, K=3, seed=4))
        x = np.asarray(rel.column("x"))
        res = train_gmm(rel, TrainConfig(K=3, max_iterations=12, seed=5))
        p0 = res.history[0]
        hist = ref_gmm(x, p0.pie, p0.mean, p0.cov, res.iterations)
        for got, (pie, mean, cov) in zip(res.history, hist):
            assert np.max(np.abs(got.pie - pie)) < 1e-8
            assert np.max(np.abs(got.mean - mean)) < 1e-8
            assert np.max(np.abs(got.cov - cov)) < 1e-8

    def test_invariants_hold_every_iteration(self):
        rel, _ = gaussian_mixture(SyntheticSpec(n=120, d=3, K=4, seed=6, spread=2.0))
        res = train_gmm(rel, TrainConfig(K=4, max_iterations=10, seed=7))
        for p in res.history:
            p.check()
            assert abs(p.pie.sum() - 1) <= 1e-9
            assert sorted(p.k.tolist()) == [1, 2, 3, 4]

    @settings(max_examples=8)
    @given(st.integers(0, 10_000), st.integers(1, 3), st.integers(1, 3))
    def test_log_likelihood_ascends(self, seed, d, K):
        rel, _ = gaussian_mixture(SyntheticSpec(n=80, d=d, K=K, seed=seed))
        res = train_gmm(rel, TrainConfig(K=K, max_iterations=8, seed=seed))
        assert np.all(np.diff(res.loglik) >= -1e-8)

    def test_loglik_is_recorded_per_iteration(self):
        rel, _ = gaussian_mixture(SyntheticSpec(n=60, d=2, K=2, seed=8))
        res = train_gmm(rel, TrainConfig(K=2, max_iterations=4, seed=1))
        assert len(res.loglik) == len(res.history) == res.iterations + 1
        assert res.loglik[-1] == pytest.approx(log_likelihood(res.params, rel), rel=1e-12)

    def test_epsilon_loop_continues_past_one_chunk(self):
        rel, _ = gaussian_mixture(SyntheticSpec(n=100, d=2, K=3, seed=9, spread=2.5))
        res = train_gmm(rel, TrainConfig(K=3, max_iterations=2, seed=2, epsilon=1e-6, max_chunks=50))
        assert res.iterations > 2
        stopped_by_bound = res.trace.exit_reason == "bound"
        if stopped_by_bound and res.iterations < 100:
            assert abs(res.loglik[-1] - res.loglik[-2]) < 1e-6

    def test_same_seed_same_result(self):
        rel, _ = gaussian_mixture(SyntheticSpec(n=60, d=2, K=2, seed=10))
        a = train_gmm(rel, TrainConfig(K=2, max_iterations=3, seed=4))
        b = train_gmm(rel, TrainConfig(K=2, max_iterations=3, seed=4))
        assert a.params.max_abs_diff(b.params) == 0.0

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            train_gmm(points([1.0, 2.0]), TrainConfig(K=3))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(K=0)
        with pytest.raises(ValueError):
            TrainConfig(K=2, init=RandomUniform(5.0, 1.0))

    def test_empty_component_is_reinitialized(self):
        x = np.concatenate([np.zeros(5), np.full(5, 10.0)]) + np.linspace(0, 0.1, 10)
        # the third component starts far from the data and loses all mass
        init = GmmParams([0.4, 0.4, 0.2], [[0.0], [10.0], [1e4]], [[[1.0]], [[1.0]], [[1e-2]]])
        with pytest.warns(UserWarning, match="reinitialized"):
            res = train_gmm(points(x), TrainConfig(K=3, max_iterations=3, init=Provided(init)))
        for p in res.history:
            p.check()


# MLR ------------------------------------------------------------------------


def line_design(u):
    return np.column_stack([np.ones(len(u)), u])


class TestTrainMlr:
    def test_exact_line(self):
        u = np.linspace(0, 5, 20)
        xy = design(line_design(u), 2 * u + 1)
        res = train_mlr(xy, TrainConfig(K=1, max_iterations=3, seed=0))
        assert np.allclose(res.params.beta[0], [1.0, 2.0], atol=1e-9)
        assert res.params.sigma[0] == pytest.approx(1e-6 * 10.0, rel=1e-9)

    def test_matches_reference_every_iteration(self):
        rel, betas = linear_mixture(SyntheticSpec(generator="linear", n=120, d=2, K=2, seed=3, spread=0.5))
        x, y = np.asarray(rel.column("x")), np.asarray(rel.column("y"))
        init = MlrParams([0.5, 0.5], betas + 0.3, [2.0, 2.0])
        res = train_mlr(rel, TrainConfig(K=2, max_iterations=10, init=Provided(init)))
        smin = 1e-6 * (y.max() - y.min())
        cur = (init.pie, init.beta, init.sigma)
        for got in res.history[1:]:
            cur = ref_mlr_step(x, y, *cur, smin)
            assert got.max_abs_diff(MlrParams(*cur)) < 1e-8
        order = np.argsort(res.params.beta[:, 1])
        assert np.allclose(res.params.beta[order, 1], np.sort(cur[1][:, 1]), atol=1e-3)

    def test_one_hot_gives_per_cluster_least_squares(self):
        rng = np.random.default_rng(4)
        u = rng.uniform(0, 10, 40)
        side = np.arange(40) % 2
        y = np.where(side == 0, u, u + 100) + rng.normal(0, 0.1, 40)
        X = line_design(u)
        init = MlrParams([0.5, 0.5], [[0.0, 1.0], [100.0, 1.0]], [1.0, 1.0])
        res = train_mlr(design(X, y), TrainConfig(K=2, max_iterations=1, init=Provided(init)))
        for k in (0, 1):
            ols = np.linalg.lstsq(X[side == k], y[side == k], rcond=None)[0]
            assert np.allclose(res.params.beta[k], ols, atol=1e-9)

    @settings(max_examples=6)
    @given(st.integers(0, 10_000), st.integers(2, 3), st.integers(1, 3))
    def test_log_likelihood_ascends(self, seed, d, K):
        rel, _ = linear_mixture(SyntheticSpec(generator="linear", n=90, d=d, K=K, seed=seed))
        res = train_mlr(rel, TrainConfig(K=K, max_iterations=8, seed=seed))
        assert np.all(np.diff(res.loglik) >= -1e-8)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            train_mlr(design(line_design(np.arange(3.0)), np.arange(3.0)), TrainConfig(K=2))


# MOE ------------------------------------------------------------------------


class TestTrainMoe:
    def test_first_iteration_uses_uniform_gate(self):
        rel, betas = linear_mixture(SyntheticSpec(generator="linear", n=60, d=2, K=2, seed=5))
        beta0, sigma0 = betas + 0.5, [1.5, 1.5]
        moe = train_moe(rel, TrainConfig(K=2, max_iterations=1, init=Provided(MoeParams(np.zeros((2, 2)), beta0, sigma0))))
        mlr = train_mlr(rel, TrainConfig(K=2, max_iterations=1, init=Provided(MlrParams([0.5, 0.5], beta0, sigma0))))
        assert np.allclose(moe.params.beta, mlr.params.beta, atol=1e-12)
        assert np.allclose(moe.params.sigma, mlr.params.sigma, atol=1e-12)

    def test_single_expert_is_least_squares(self):
        rng = np.random.default_rng(6)
        X = line_design(rng.uniform(0, 5, 30))
        y = X @ [0.5, -1.5] + rng.normal(0, 0.2, 30)
        res = train_moe(design(X, y), TrainConfig(K=1, max_iterations=2, seed=0))
        assert np.allclose(res.params.beta[0], np.linalg.lstsq(X, y, rcond=None)[0], atol=1e-10)
        assert np.allclose(res.params.theta, 0.0, atol=1e-12)

    def test_matches_reference_and_splits_gate(self):
        rng = np.random.default_rng(7)
        u = rng.uniform(-5, 5, 200)
        y = np.where(u < 0, 3 + 2 * u, -1 - u) + rng.normal(0, 0.1, 200)
        X = line_design(u)
        init = MoeParams(np.zeros((2, 2)), [[2.5, 1.5], [-0.5, -0.5]], [1.0, 1.0])
        res = train_moe(design(X, y), TrainConfig(K=2, max_iterations=10, init=Provided(init)))
        smin = 1e-6 * (y.max() - y.min())
        th, be, si = init.theta, init.beta, init.sigma
        for got in res.history[1:]:
            th, be, si = ref_moe_step(X, y, th, be, si, smin)
            assert got.max_abs_diff(MoeParams(th, be, si)) < 1e-8
        # component 1 fits the x < 0 line, so its gate logit must fall with u
        theta = res.params.theta[0] - res.params.theta[1]
        assert theta[1] < 0
        boundary = -theta[0] / theta[1]
        assert abs(boundary) < 0.5


# inference ------------------------------------------------------------------


class TestLogLikelihood:
    def test_all_points_at_mean(self):
        p = GmmParams([1.0], [[2.0]], [[[1.0]]])
        assert log_likelihood(p, points([2.0] * 7)) == pytest.approx(7 * math.log(1 / math.sqrt(2 * math.pi)), abs=1e-12)

    def test_identical_components(self):
        one = GmmParams([1.0], [[0.3, 0.1]], [np.eye(2)])
        two = GmmParams([0.5, 0.5], [[0.3, 0.1]] * 2, [np.eye(2)] * 2)
        rel = points([[1.0, 2.0]])
        assert log_likelihood(two, rel) == pytest.approx(log_likelihood(one, rel), abs=1e-12)

    def test_brute_force_gmm(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(15, 2))
        a = rng.normal(size=(3, 2, 2))
        p = GmmParams([0.2, 0.3, 0.5], rng.normal(size=(3, 2)), a @ a.transpose(0, 2, 1) + np.eye(2))
        expect = sum(math.log(sum(p.pie[k] * mvn_pdf(xi, p.mean[k], p.cov[k]) for k in range(3))) for xi in x)
        assert log_likelihood(p, points(x)) == pytest.approx(expect, rel=1e-12)

    def test_brute_force_regressions(self):
        rng = np.random.default_rng(9)
        X, y = line_design(rng.normal(size=10)), rng.normal(size=10)
        beta, sigma = rng.normal(size=(2, 2)), np.array([0.7, 1.3])
        theta = rng.normal(size=(2, 2))
        mlr = MlrParams([0.4, 0.6], beta, sigma)
        expect = sum(math.log(sum(mlr.pie[k] * gauss_1d(y[i], X[i] @ beta[k], sigma[k]) for k in range(2))) for i in range(10))
        assert log_likelihood(mlr, design(X, y)) == pytest.approx(expect, rel=1e-12)
        moe = MoeParams(theta, beta, sigma)
        total = 0.0
        for i in range(10):
            e = np.exp(theta @ X[i])
            g = e / e.sum()
            total += math.log(sum(g[k] * gauss_1d(y[i], X[i] @ beta[k], sigma[k]) for k in range(2)))
        assert log_likelihood(moe, design(X, y)) == pytest.approx(total, rel=1e-12)


class TestInference:
    def test_identical_components(self):
        p = GmmParams([0.5, 0.5], [[0.0], [0.0]], [[[1.0]], [[1.0]]])
        R = infer_posterior(p, points([-1.0, 0.0, 3.0]))
        assert len(R) == 6
        assert np.allclose(responsibilities(R), 0.5, atol=1e-15)

    def test_point_at_separated_mean(self):
        p = GmmParams([0.5, 0.5], [[0.0, 0.0], [10.0, 10.0]], [np.eye(2)] * 2)
        r = responsibilities(infer_posterior(p, points([[0.0, 0.0]])))
        d1, d2 = mvn_pdf([0, 0], [0, 0], np.eye(2)), mvn_pdf([0, 0], [10, 10], np.eye(2))
        assert r[0, 0] > 0.999
        assert r[0, 0] == pytest.approx(d1 / (d1 + d2), abs=1e-15)

    def test_single_component(self):
        p = GmmParams([1.0], [[1.0]], [[[2.0]]])
        assert np.all(responsibilities(infer_posterior(p, points(np.arange(5.0)))) == 1.0)

    def test_rows_normalized(self):
        rel, _ = gaussian_mixture(SyntheticSpec(n=50, d=2, K=3, seed=11))
        p = train_gmm(rel, TrainConfig(K=3, max_iterations=3, seed=0)).params
        r = responsibilities(infer_posterior(p, rel))
        assert np.allclose(r.sum(axis=1), 1.0, atol=1e-9)
        assert np.all((r >= 0) & (r <= 1))


def posterior_relation(p):
    n, K = p.shape
    ids = np.repeat(np.arange(1, n + 1), K)
    ks = np.tile(np.arange(1, K + 1), n)
    return Relation.from_rows(["id", "k", "p"], [(int(i), int(k), float(v)) for i, k, v in zip(ids, ks, p.ravel())])


def argmax_scan(p):
    out = []
    for row in p:
        best = 0
        for k in range(1, len(row)):
            if row[k] > row[best]:
                best = k
        out.append(best + 1)
    return out


class TestAssign:
    def test_argmax(self):
        clu = cluster_assign(posterior_relation(np.array([[0.9, 0.1], [0.2, 0.8]])))
        assert list(clu.rows()) == [(1, 1), (2, 2)]

    def test_tie_goes_to_smallest(self):
        clu = cluster_assign(posterior_relation(np.array([[0.5, 0.5], [0.2, 0.4], [0.4, 0.2]]).clip(0, 1)))
        assert [k for _, k in clu.rows()] == [1, 2, 1]

    def test_matches_scan(self):
        p = np.random.default_rng(12).dirichlet(np.ones(4), size=50)
        clu = cluster_assign(posterior_relation(p))
        assert [k for _, k in clu.rows()] == argmax_scan(p)

    @given(st.sampled_from([np.sqrt, np.log1p, lambda v: v**3, lambda v: 2 * v + 7]))
    def test_invariant_under_monotone_maps(self, f):
        p = np.random.default_rng(13).dirichlet(np.ones(3), size=20)
        a = [k for _, k in cluster_assign(posterior_relation(p)).rows()]
        b = [k for _, k in cluster_assign(posterior_relation(f(p))).rows()]
        assert a == b


class TestMetrics:
    def test_perfect(self):
        assert purity([1, 1, 2, 2], [5, 5, 7, 7]) == 1.0
        assert nmi([1, 1, 2, 2], [5, 5, 7, 7]) == pytest.approx(1.0, abs=1e-12)

    def test_single_cluster(self):
        assert purity([1] * 4, [1, 1, 2, 2]) == 0.5
        assert nmi([1] * 4, [1, 1, 2, 2]) == pytest.approx(0.0, abs=1e-12)

    @given(st.lists(st.tuples(st.integers(1, 3), st.integers(1, 3)), min_size=2, max_size=60))
    def test_against_oracles(self, pairs):
        pred, truth = zip(*pairs)
        ep, en = contingency_purity_nmi(pred, truth)
        assert purity(pred, truth) == pytest.approx(ep, abs=1e-12)
        assert nmi(pred, truth) == pytest.approx(min(max(en, 0.0), 1.0), abs=1e-12)
        assert nmi(pred, truth) == pytest.approx(normalized_mutual_info_score(truth, pred), abs=1e-10)

    def test_evaluate_relations(self):
        clu = Relation.from_rows(["id", "k"], [(1, 2), (2, 2), (3, 1)])
        truth = Relation.from_rows(["id", "label"], [(3, 9), (1, 4), (2, 4)])
        assert evaluate_clustering(clu, truth) == (1.0, pytest.approx(1.0))

    def test_id_mismatch(self):
        clu = Relation.from_rows(["id", "k"], [(1, 1), (2, 1)])
        truth = Relation.from_rows(["id", "label"], [(1, 1), (3, 1)])
        with pytest.raises(ValueError):
            evaluate_clustering(clu, truth)

    def test_trained_blobs_are_pure(self):
        rel, _ = gaussian_mixture(SyntheticSpec(n=100, d=2, K=2, seed=14, lo=0, hi=50, spread=0.5))
        # EM is local: some random starts settle with one component on a few points
        p = train_gmm(rel, TrainConfig(K=2, max_iterations=10, seed=0)).params
        score = evaluate_clustering(cluster_assign(infer_posterior(p, rel)), Relation.from_columns({"id": rel.column("id"), "label": rel.column("label")}))
        assert score[0] == 1.0
