import numpy as np
import pytest

from conftest import random_weights
from glmm.baselines import (
    GmmConfig,
    KMeansConfig,
    fit_gmm,
    fit_kmeans,
    gmm_predict,
    kmeans_plus_graph_learning,
    precision_to_graph,
)
from glmm.em import FitConfig, GroupPrior, fit
from glmm.graph import Graph, laplacian_from_weights
from glmm.metrics import clustering_nmse
from glmm.sampling import Dataset, MixtureModelSpec, generate_er_connected, one_hot, sample_mixture
from glmm.solvers import SmoothSolverParams, WeightedSignals, learn_graph_smooth


def blobs(rng, m=200, n=4, sep=20.0):
    labels = np.arange(m) % 2
    X = rng.standard_normal((m, n)) + sep * labels[:, None] * np.tile([1, -1], n // 2)
    return Dataset(X, one_hot(labels, 2))


class TestGmm:
    def test_single_cluster(self, rng):
        d = Dataset(rng.standard_normal((100, 3)))
        model = fit_gmm(d, GmmConfig(1, project_constant_out=False, covariance_ridge=1e-3), 0)
        Xc = d.signals - d.signals.mean(axis=0)
        assert np.allclose(model.means[0], d.signals.mean(axis=0))
        assert np.allclose(model.covariances[0], Xc.T @ Xc / 100 + 1e-3 * np.eye(3))

    def test_separated_blobs(self, rng):
        d = blobs(rng)
        model = fit_gmm(d, GmmConfig(2, restarts=3), 1)
        assert clustering_nmse(model.gamma, d.labels) < 1.0
        assert np.allclose(model.gamma.sum(axis=1), 1, atol=1e-9)

    def test_log_likelihood_monotone(self, rng):
        d = blobs(rng, sep=2.0)
        tr = np.array(fit_gmm(d, GmmConfig(2), 2).log_likelihood_trace)
        assert np.all(np.diff(tr) >= -1e-8 * np.abs(tr[1:]))

    def test_constant_shift_invariance(self, rng):
        d = blobs(rng, sep=3.0)
        a = fit_gmm(d, GmmConfig(2), 3)
        b = fit_gmm(Dataset(d.signals + 5.0, d.labels), GmmConfig(2), 3)
        assert np.allclose(a.gamma, b.gamma, atol=1e-9)
        assert np.allclose(gmm_predict(a, d.signals), a.gamma, atol=1e-9)

    def test_config_checks(self):
        with pytest.raises(ValueError):
            GmmConfig(2, covariance_ridge=-1.0)


class TestPrecisionToGraph:
    def test_diagonal(self):
        assert precision_to_graph(np.diag([1.0, 2.0, 3.0]), 0).num_edges == 0

    def test_planted_precision(self, rng):
        g = generate_er_connected(5, 0.5, 4)
        sigma = np.linalg.inv(g.laplacian + 1e-3 * np.eye(5))
        out = precision_to_graph(sigma, g.num_edges)
        assert np.array_equal(out.weights > 0, g.weights > 0)

    def test_ties_lexicographic(self):
        out = precision_to_graph(np.eye(4), 2)
        assert [e[:2] for e in out.edges()] == [(0, 1), (0, 2)]

    def test_exact_edge_count(self, rng):
        A = rng.standard_normal((8, 8))
        S = A @ A.T + np.eye(8)
        for e in (0, 5, 28):
            assert precision_to_graph(S, e).num_edges == e
        with pytest.raises(ValueError):
            precision_to_graph(S, 29)


class TestKMeans:
    def test_k_equals_m(self, rng):
        d = Dataset(rng.standard_normal((5, 3)))
        km = fit_kmeans(d, KMeansConfig(5), 0)
        assert km.cost == pytest.approx(0.0, abs=1e-20)
        assert sorted(km.labels) == list(range(5))

    def test_separated_blobs(self, rng):
        d = blobs(rng)
        km = fit_kmeans(d, KMeansConfig(2), 0)
        assert clustering_nmse(km.gamma, d.labels) == 0.0

    def test_cost_nonincreasing(self, rng):
        km = fit_kmeans(Dataset(rng.standard_normal((100, 3))), KMeansConfig(4, restarts=1), 1)
        assert np.all(np.diff(km.cost_trace) <= 1e-12)

    def test_too_few(self, rng):
        with pytest.raises(ValueError):
            fit_kmeans(Dataset(rng.standard_normal((2, 3))), KMeansConfig(3), 0)


class TestKMeansGraphLearning:
    def spec_data(self):
        g1, g2 = generate_er_connected(8, 0.6, 1), generate_er_connected(8, 0.6, 2)
        means = np.stack([np.full(8, 4.0) * np.tile([1, -1], 4), -np.full(8, 4.0) * np.tile([1, -1], 4)])
        spec = MixtureModelSpec([0.5, 0.5], means, np.stack([g1.laplacian, g2.laplacian]))
        return sample_mixture(spec, 100, 3)

    def test_matches_frozen_prior_glmm(self):
        d = self.spec_data()
        solver = SmoothSolverParams(tol=1e-9)
        km, graphs = kmeans_plus_graph_learning(d, KMeansConfig(2), solver, 0)
        assert clustering_nmse(km.gamma, d.labels) == 0.0
        prior = GroupPrior.from_labels(km.labels, 2, 1.0, frozen=True)
        model = fit(d, FitConfig(2, smooth=solver), 0, prior=prior)
        for k in range(2):
            assert np.allclose(graphs[k].weights, model.graphs[k].weights, atol=1e-6)

    def test_single_cluster(self, rng):
        d = Dataset(rng.standard_normal((40, 5)))
        _, graphs = kmeans_plus_graph_learning(d, KMeansConfig(1), SmoothSolverParams(tol=1e-9), 0)
        Y = d.signals - d.signals.mean(axis=0)
        ref = learn_graph_smooth(WeightedSignals.unweighted(Y), SmoothSolverParams(tol=1e-9).scaled(40))
        assert np.allclose(graphs[0].weights, ref.graph.weights)

    def test_deterministic(self):
        d = self.spec_data()
        a = kmeans_plus_graph_learning(d, KMeansConfig(2), SmoothSolverParams(), 5)
        b = kmeans_plus_graph_learning(d, KMeansConfig(2), SmoothSolverParams(), 5)
        assert np.array_equal(a[0].labels, b[0].labels)
        assert all(np.array_equal(x.weights, y.weights) for x, y in zip(a[1], b[1]))
