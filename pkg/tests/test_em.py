import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import path_graph, random_weights
from glmm import io
from glmm.em import (
    FitConfig,
    FitError,
    GroupPrior,
    MixtureState,
    cluster_log_density,
    e_step,
    fit,
    initialize,
    m_step_graphs,
    m_step_means,
    m_step_prior,
    m_step_weights,
    predict,
    surrogate_objective,
)
from glmm.graph import KernelSpec, laplacian_from_weights, validate_laplacian
from glmm.metrics import clustering_nmse
from glmm.sampling import Dataset, MixtureModelSpec, generate_er_connected, sample_mixture
from glmm.solvers import SmoothSolverParams, WeightedSignals, learn_graph_smooth

SMOOTH = KernelSpec("smooth")
LOG2PI = math.log(2 * math.pi)


def random_gamma(rng, m, k):
    g = rng.uniform(0.05, 1, (m, k))
    return g / g.sum(axis=1, keepdims=True)


def random_state(rng, n, k, kernel=SMOOTH):
    laps = np.stack([laplacian_from_weights(random_weights(rng, n, p=0.8)) for _ in range(k)])
    alpha = rng.dirichlet(np.ones(k))
    return MixtureState(alpha, rng.standard_normal((k, n)), laps)


def separated_dataset(seed=0, m=120):
    g1 = generate_er_connected(8, 0.6, 1)
    g2 = generate_er_connected(8, 0.6, 2)
    means = np.stack([np.full(8, 3.0) * np.tile([1, -1], 4), np.full(8, -3.0) * np.tile([1, -1], 4)])
    spec = MixtureModelSpec([0.5, 0.5], means, np.stack([g1.laplacian, g2.laplacian]))
    return sample_mixture(spec, m, seed)


class TestClusterDensity:
    def test_path_graph_oracle(self):
        # eigenpairs of the 3-node path: (1, [1,0,-1]/sqrt2), (3, [1,-2,1]/sqrt6)
        L = path_graph(3).laplacian
        eps = 1e-6 * (1 + 3) / 2
        x = np.array([0.3, -1.2, 0.7])
        mu = np.array([0.1, 0.2, -0.4])
        y = x - mu
        a = (y[0] - y[2]) / math.sqrt(2)
        b = (y[0] - 2 * y[1] + y[2]) / math.sqrt(6)
        ref = 0.5 * (math.log(1 + eps) + math.log(3 + eps) - (1 + eps) * a * a - (3 + eps) * b * b - 2 * LOG2PI)
        got = cluster_log_density(x[None], mu, L, SMOOTH)[0]
        assert got == pytest.approx(ref, rel=1e-8)

    def test_dense_heat_oracle(self, rng):
        L = laplacian_from_weights(random_weights(rng, 4))
        tau = 0.4
        lam, U = np.linalg.eigh(L)
        C = (U * np.exp(-2 * tau * lam)) @ U.T
        X = rng.standard_normal((5, 4))
        mu = rng.standard_normal(4)
        Ci = np.linalg.inv(C)
        ref = [
            -0.5 * ((x - mu) @ Ci @ (x - mu) + np.linalg.slogdet(C)[1] + 4 * LOG2PI) for x in X
        ]
        assert np.allclose(cluster_log_density(X, mu, L, KernelSpec("heat", tau)), ref, rtol=1e-10)

    def test_constant_shift_invariance(self, rng):
        L = laplacian_from_weights(random_weights(rng, 5))
        x = rng.standard_normal((3, 5))
        mu = rng.standard_normal(5)
        assert np.allclose(cluster_log_density(x + 7.0, mu, L, SMOOTH), cluster_log_density(x, mu, L, SMOOTH))

    def test_disconnected_graph_finite(self):
        L = laplacian_from_weights(np.zeros((4, 4)))
        assert np.all(np.isfinite(cluster_log_density(np.ones((2, 4)), np.zeros(4), L, SMOOTH)))


class TestEStep:
    def test_single_cluster(self, rng):
        st_ = random_state(rng, 4, 1)
        assert np.array_equal(e_step(st_, rng.standard_normal((6, 4)), SMOOTH), np.ones((6, 1)))

    def test_identical_clusters(self, rng):
        s = random_state(rng, 4, 1)
        st2 = MixtureState(np.array([0.5, 0.5]), np.repeat(s.means, 2, 0), np.repeat(s.laplacians, 2, 0))
        assert np.allclose(e_step(st2, rng.standard_normal((6, 4)), SMOOTH), 0.5)

    def test_rejects_nan(self, rng):
        X = rng.standard_normal((3, 4))
        X[1, 2] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            e_step(random_state(rng, 4, 2), X, SMOOTH)

    @given(st.integers(0, 2**32 - 1), st.integers(1, 4))
    def test_row_stochastic(self, seed, k):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((10, 5)) * 10
        for kernel in (SMOOTH, KernelSpec("heat", 0.5)):
            g = e_step(random_state(rng, 5, k), X, kernel)
            assert np.all((g >= 0) & (g <= 1))
            assert np.allclose(g.sum(axis=1), 1, atol=1e-9)


class TestObjective:
    def test_standard_normal(self, rng):
        X = rng.standard_normal((7, 3))
        st_ = MixtureState(np.ones(1), np.zeros((1, 3)), np.zeros((1, 3, 3)))
        ref = float(np.sum(-0.5 * X**2 - 0.5 * LOG2PI))
        assert surrogate_objective(st_, X, KernelSpec("heat", 1.0)) == pytest.approx(ref, rel=1e-12)

    def test_duplication_doubles(self, rng):
        st_ = random_state(rng, 4, 2)
        X = rng.standard_normal((5, 4))
        a = surrogate_objective(st_, X, SMOOTH)
        assert surrogate_objective(st_, np.vstack([X, X]), SMOOTH) == pytest.approx(2 * a, rel=1e-12)

    def test_fixed_graph_monotone(self):
        rng = np.random.default_rng(77)
        for _ in range(100):
            k = int(rng.integers(1, 4))
            kernel = SMOOTH if rng.random() < 0.5 else KernelSpec("heat", 0.3)
            st_ = random_state(rng, 5, k)
            X = rng.standard_normal((20, 5)) * 2
            before = surrogate_objective(st_, X, kernel, 1e-3)
            g = e_step(st_, X, kernel, 1e-3)
            nxt = MixtureState(m_step_weights(g), m_step_means(g, X), st_.laplacians)
            assert surrogate_objective(nxt, X, kernel, 1e-3) >= before - 1e-8 * abs(before)


class TestMStep:
    def test_means_oracle(self, rng):
        X = rng.standard_normal((9, 4))
        g = random_gamma(rng, 9, 3)
        ref = np.zeros((3, 4))
        for k in range(3):
            for m in range(9):
                ref[k] += g[m, k] * X[m]
            ref[k] /= g[:, k].sum()
        assert np.allclose(m_step_means(g, X), ref, atol=1e-12)

    def test_means_single_cluster(self, rng):
        X = rng.standard_normal((9, 4))
        assert np.allclose(m_step_means(np.ones((9, 1)), X), X.mean(axis=0))

    def test_means_empty_cluster(self):
        with pytest.raises(ValueError, match="empty"):
            m_step_means(np.array([[1.0, 0.0]]), np.ones((1, 2)))

    def test_weights(self, rng):
        assert np.allclose(m_step_weights(np.full((6, 3), 1 / 3)), 1 / 3)
        assert np.allclose(m_step_weights(np.eye(3)[[0, 0, 1, 2]]), [0.5, 0.25, 0.25])
        assert m_step_weights(random_gamma(rng, 50, 4)).sum() == pytest.approx(1, abs=1e-12)

    def test_prior_update(self):
        prior = GroupPrior(np.array([0, 0, 1]), np.array([[0.5, 0.5], [0.5, 0.5]]))
        g = np.array([[1.0, 0.0], [0.5, 0.5], [0.2, 0.8]])
        new = m_step_prior(g, prior)
        assert np.allclose(new.prior, [[0.75, 0.25], [0.2, 0.8]])
        frozen = GroupPrior(prior.group_of, prior.prior, frozen=True)
        assert m_step_prior(g, frozen) is frozen

    def test_graphs_block_gamma(self, rng):
        X = rng.standard_normal((40, 5))
        g = np.zeros((40, 2))
        g[:20, 0] = g[20:, 1] = 1
        cfg = FitConfig(2, smooth=SmoothSolverParams(tol=1e-9))
        means = m_step_means(g, X)
        laps, _ = m_step_graphs(g, X, means, cfg)
        solo = learn_graph_smooth(WeightedSignals.unweighted(X[:20] - means[0]), cfg.smooth.scaled(20))
        assert np.allclose(laps[0], solo.laplacian, atol=1e-10)

    def test_graphs_uniform_gamma(self, rng):
        X = rng.standard_normal((30, 5))
        g = np.full((30, 2), 0.5)
        laps, _ = m_step_graphs(g, X, m_step_means(g, X), FitConfig(2))
        assert np.allclose(laps[0], laps[1], atol=1e-10)
        for L in laps:
            assert validate_laplacian(L, tol=1e-8)


class TestInitialize:
    def test_state(self, rng):
        d = Dataset(rng.standard_normal((10, 5)))
        s = initialize(d, FitConfig(3), 4)
        assert np.allclose(s.alpha, 1 / 3)
        assert len({tuple(r) for r in s.means}) == 3
        for L in s.laplacians:
            assert validate_laplacian(L, tol=1e-8)
        s2 = initialize(d, FitConfig(3), 4)
        assert np.array_equal(s.laplacians, s2.laplacians) and np.array_equal(s.means, s2.means)

    def test_too_few_signals(self, rng):
        with pytest.raises(ValueError):
            initialize(Dataset(rng.standard_normal((2, 5))), FitConfig(3), 0)


class TestFit:
    def test_recovers_separated_clusters(self):
        d = separated_dataset()
        model = fit(d, FitConfig(2, restarts=3), 5)
        assert clustering_nmse(model.gamma, d.labels) < 1.0
        assert model.alpha.sum() == pytest.approx(1, abs=1e-9)
        for L in model.laplacians:
            assert validate_laplacian(L, tol=1e-8)

    def test_single_cluster(self, rng):
        d = Dataset(rng.standard_normal((30, 5)))
        model = fit(d, FitConfig(1), 0)
        assert np.allclose(model.means[0], d.signals.mean(axis=0))
        assert np.array_equal(model.alpha, [1.0])

    def test_deterministic(self):
        d = separated_dataset(m=60)
        a = json.dumps(io.model_to_dict(fit(d, FitConfig(2, restarts=2), 9)), sort_keys=True)
        b = json.dumps(io.model_to_dict(fit(d, FitConfig(2, restarts=2), 9)), sort_keys=True)
        assert a == b

    def test_frozen_one_hot_prior(self):
        d = separated_dataset(m=60)
        prior = GroupPrior.from_labels(d.labels, 2, 1.0, frozen=True)
        cfg = FitConfig(2, smooth=SmoothSolverParams(tol=1e-9))
        model = fit(d, cfg, 1, prior=prior)
        assert np.array_equal(model.gamma, d.labels)
        for k in range(2):
            rows = d.label_indices == k
            Y = d.signals[rows] - d.signals[rows].mean(axis=0)
            solo = learn_graph_smooth(WeightedSignals.unweighted(Y), cfg.smooth.scaled(rows.sum()))
            assert np.allclose(model.laplacians[k], solo.laplacian, atol=1e-6)

    def test_predict_reproduces_training(self):
        d = separated_dataset(m=60)
        model = fit(d, FitConfig(2), 3)
        assert np.allclose(predict(model, d), model.gamma, atol=1e-12)

    def test_predict_at_mean(self):
        d = separated_dataset(m=60)
        model = fit(d, FitConfig(2), 3)
        for k in range(2):
            assert np.argmax(predict(model, model.means[k][None])[0]) == k

    def test_predict_dimension(self):
        d = separated_dataset(m=60)
        model = fit(d, FitConfig(2), 3)
        with pytest.raises(ValueError, match="dimension"):
            predict(model, np.ones((2, 3)))

    def test_all_restarts_fail(self):
        d = Dataset(np.ones((10, 4)))
        with pytest.raises(FitError) as info:
            fit(d, FitConfig(1, restarts=2), 0)
        assert len(info.value.diagnostics) == 2

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            fit(Dataset(np.array([[np.nan, 1.0], [0.0, 1.0]])), FitConfig(1), 0)
