"""Reference methods: full-covariance GMM, K-means, and K-means followed by graph learning."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import Graph, constant_complement_basis
from .sampling import Dataset, derive_seed, make_rng, one_hot
from .solvers import SmoothSolverParams, WeightedSignals, learn_graph_smooth

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GmmConfig:
    k: int
    max_iterations: int = 200
    tol: float = 1e-6
    covariance_ridge: float = 1e-6
    project_constant_out: bool = True
    restarts: int = 1

    def __post_init__(self):
        if self.covariance_ridge < 0:
            raise ValueError("covariance_ridge must be nonnegative")
        if self.k < 1 or self.restarts < 1:
            raise ValueError("k and restarts must be positive")


@dataclass
class GmmModel:
    alpha: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    gamma: np.ndarray
    log_likelihood_trace: list[float]
    basis: np.ndarray | None = None
    iterations_used: int = 0

    @property
    def k(self) -> int:
        return self.alpha.size

    def precisions(self) -> np.ndarray:
        return np.linalg.inv(self.covariances)

    def graphs(self, edge_count: int) -> list[Graph]:
        """Graphs from the largest precision entries, expressed on the original vertices.

        In projected mode the precision is lifted back as ``Q P Q^T``.
        """
        out = []
        for S in self.covariances:
            P = np.linalg.inv(S)
            if self.basis is not None:
                P = self.basis @ P @ self.basis.T
            out.append(_top_entries_graph(P, edge_count))
        return out


@dataclass(frozen=True)
class KMeansConfig:
    k: int
    max_iterations: int = 300
    restarts: int = 10

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")


@dataclass
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    cost: float
    cost_trace: list[float] = field(default_factory=list)

    @property
    def gamma(self) -> np.ndarray:
        return one_hot(self.labels, self.centers.shape[0])


# --- GMM ----------------------------------------------------------------------


def _gauss_logpdf(X: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    c = np.linalg.cholesky(cov)
    sol = np.linalg.solve(c, (X - mean).T)
    return -0.5 * (np.sum(sol * sol, axis=0) + 2.0 * np.log(np.diag(c)).sum() + X.shape[1] * LOG_2PI)


def _gmm_estep(X, alpha, means, covs):
    with np.errstate(divide="ignore"):
        logp = np.column_stack([np.log(alpha[k]) + _gauss_logpdf(X, means[k], covs[k]) for k in range(alpha.size)])
    mx = logp.max(axis=1, keepdims=True)
    e = np.exp(logp - mx)
    s = e.sum(axis=1, keepdims=True)
    return e / s, float((mx[:, 0] + np.log(s[:, 0])).sum())


def _gmm_mstep(X, gamma, ridge):
    mass = gamma.sum(axis=0)
    alpha = mass / X.shape[0]
    means = (gamma.T @ X) / np.maximum(mass, 1e-300)[:, None]
    d = X.shape[1]
    covs = np.empty((gamma.shape[1], d, d))
    for k in range(gamma.shape[1]):
        Y = X - means[k]
        C = (Y * gamma[:, k, None]).T @ Y / max(mass[k], 1e-300)
        covs[k] = (C + C.T) / 2 + ridge * np.eye(d)
    return alpha, means, covs


def _gmm_once(X, config: GmmConfig, rng):
    m = X.shape[0]
    idx = rng.choice(m, size=config.k, replace=False)
    # hard-assign to nearest random centre, then alternate E/M from that start
    d2 = ((X[:, None, :] - X[idx][None]) ** 2).sum(axis=2)
    gamma = one_hot(np.argmin(d2, axis=1), config.k)
    gamma = 0.99 * gamma + 0.01 / config.k
    alpha, means, covs = _gmm_mstep(X, gamma, config.covariance_ridge)
    trace = []
    prev = -np.inf
    it = 0
    for it in range(1, config.max_iterations + 1):
        gamma, ll = _gmm_estep(X, alpha, means, covs)
        trace.append(ll)
        if abs(ll - prev) <= config.tol * abs(ll):
            break
        prev = ll
        alpha, means, covs = _gmm_mstep(X, gamma, config.covariance_ridge)
    return alpha, means, covs, gamma, trace, it


def fit_gmm(data: Dataset, config: GmmConfig, seed) -> GmmModel:
    """EM for a full-covariance Gaussian mixture.

    With ``project_constant_out`` the signals are first expressed in a
    fixed orthonormal basis of the complement of the constant vector and
    the mixture lives in ``N - 1`` dimensions.
    """
    X = data.signals
    if X.shape[0] <= config.k:
        raise ValueError(f"need more than k={config.k} signals")
    basis = constant_complement_basis(X.shape[1]) if config.project_constant_out else None
    Xp = X @ basis if basis is not None else X
    best = None
    failures = []
    for r in range(config.restarts):
        rng = make_rng(derive_seed(seed, "gmm", r))
        try:
            res = _gmm_once(Xp, config, rng)
        except np.linalg.LinAlgError as exc:
            failures.append(f"restart {r}: {exc}")
            continue
        if best is None or res[4][-1] > best[4][-1]:
            best = res
    if best is None:
        raise np.linalg.LinAlgError("singular covariance in every GMM restart: " + "; ".join(failures))
    alpha, means, covs, gamma, trace, it = best
    return GmmModel(alpha, means, covs, gamma, trace, basis, it)


def gmm_predict(model: GmmModel, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(X)
    if model.basis is not None:
        X = X @ model.basis
    gamma, _ = _gmm_estep(X, model.alpha, model.means, model.covariances)
    return gamma


def _top_entries_graph(P: np.ndarray, edge_count: int) -> Graph:
    n = P.shape[0]
    if edge_count > n * (n - 1) // 2:
        raise ValueError("edge_count exceeds the number of vertex pairs")
    iu, ju = np.triu_indices(n, k=1)
    vals = np.abs(P[iu, ju])
    # stable sort on -|value| keeps (i, j) lexicographic order among ties
    order = np.argsort(-vals, kind="stable")[:edge_count]
    W = np.zeros((n, n))
    W[iu[order], ju[order]] = 1.0
    W[ju[order], iu[order]] = 1.0
    return Graph(W)


def precision_to_graph(sigma: np.ndarray, edge_count: int) -> Graph:
    """Unit-weight graph on the ``edge_count`` largest off-diagonal precision magnitudes."""
    return _top_entries_graph(np.linalg.inv(sigma), edge_count)


# --- K-means ------------------------------------------------------------------


def _farthest_point_seeds(X: np.ndarray, k: int, rng) -> np.ndarray:
    first = int(rng.integers(X.shape[0]))
    centers = [first]
    d2 = ((X - X[first]) ** 2).sum(axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(d2))
        centers.append(nxt)
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
    return X[centers].copy()


def _lloyd(X, centers, max_iter):
    trace = []
    labels = None
    for _ in range(max_iter):
        d2 = ((X[:, None, :] - centers[None]) ** 2).sum(axis=2)
        new = np.argmin(d2, axis=1)
        cost = float(d2[np.arange(X.shape[0]), new].sum())
        trace.append(cost)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for k in range(centers.shape[0]):
            members = labels == k
            if members.any():
                centers[k] = X[members].mean(axis=0)
    d2 = ((X[:, None, :] - centers[None]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    cost = float(d2[np.arange(X.shape[0]), labels].sum())
    return labels, centers, cost, trace


def fit_kmeans(data: Dataset, config: KMeansConfig, seed) -> KMeansResult:
    """Lloyd's algorithm from farthest-point seeds; best of ``restarts`` by within-cluster cost."""
    X = data.signals
    if X.shape[0] < config.k:
        raise ValueError(f"need at least k={config.k} signals")
    best = None
    for r in range(config.restarts):
        rng = make_rng(derive_seed(seed, "kmeans", r))
        labels, centers, cost, trace = _lloyd(X, _farthest_point_seeds(X, config.k, rng), config.max_iterations)
        if best is None or cost < best.cost:
            best = KMeansResult(labels, centers, cost, trace)
    return best


def kmeans_plus_graph_learning(
    data: Dataset,
    config: KMeansConfig,
    solver: SmoothSolverParams,
    seed,
    mask: np.ndarray | None = None,
) -> tuple[KMeansResult, list[Graph | None]]:
    """Hard K-means clusters, then one smooth-signal graph per cluster.

    The solver's regularisation is scaled by cluster size, as in the EM
    M-step. Clusters that end up empty (or with a single signal) get no graph.
    """
    km = fit_kmeans(data, config, seed)
    X = data.signals
    graphs: list[Graph | None] = []
    for k in range(config.k):
        members = km.labels == k
        if members.sum() < 2:
            graphs.append(None)
            continue
        Y = X - X[members].mean(axis=0)
        ws = WeightedSignals(Y, members.astype(float))
        est = learn_graph_smooth(ws, solver.scaled(ws.mass), mask)
        graphs.append(est.graph)
    return km, graphs
