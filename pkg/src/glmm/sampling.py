"""Ground-truth mixture models and synthetic datasets.

Randomness comes exclusively from ``numpy.random.Generator`` over PCG64,
seeded through ``SeedSequence`` so that child seeds for repetitions or
sub-tasks can be derived without collisions (:func:`derive_seed`).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .graph import (
    HEAT,
    SMOOTH,
    Graph,
    KernelSpec,
    is_connected,
    laplacian_from_weights,
    pseudo_inverse_eigenvalues,
    spectral_decompose,
    validate_laplacian,
)

MAX_CONNECT_ATTEMPTS = 1000


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def _key(k) -> int:
    if isinstance(k, str):
        return zlib.crc32(k.encode())
    return int(k)


def derive_seed(base: int, *keys) -> int:
    """Deterministic 64-bit child seed of ``base`` for the path ``keys`` (ints or strings)."""
    ss = np.random.SeedSequence(int(base), spawn_key=tuple(_key(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class MixtureModelSpec:
    alpha: np.ndarray
    means: np.ndarray
    laplacians: np.ndarray
    kernel: KernelSpec = field(default_factory=KernelSpec)

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        laps = np.asarray(self.laplacians, dtype=float)
        k = alpha.size
        if np.any(alpha < 0) or abs(alpha.sum() - 1.0) > 1e-12:
            raise ValueError(f"alpha must be a probability vector, got {alpha}")
        if means.shape[0] != k or laps.shape[0] != k:
            raise ValueError("alpha, means and laplacians disagree on the number of clusters")
        n = means.shape[1]
        if laps.shape[1:] != (n, n):
            raise ValueError(f"laplacians must be {k}x{n}x{n}, got {laps.shape}")
        for i, L in enumerate(laps):
            rep = validate_laplacian(L)
            if not rep:
                raise ValueError(f"cluster {i}: {rep}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "laplacians", laps)

    @property
    def k(self) -> int:
        return self.alpha.size

    @property
    def n(self) -> int:
        return self.means.shape[1]

    @property
    def graphs(self) -> list[Graph]:
        return [Graph.from_laplacian(L) for L in self.laplacians]


@dataclass(frozen=True)
class GmmSpec:
    """Plain Gaussian mixture (no graph structure)."""

    alpha: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    @property
    def k(self) -> int:
        return len(self.alpha)


@dataclass
class Dataset:
    """Signals (M x N) with optional one-hot labels (M x K)."""

    signals: np.ndarray
    labels: np.ndarray | None = None
    spec: MixtureModelSpec | GmmSpec | None = None

    def __post_init__(self):
        self.signals = np.atleast_2d(np.asarray(self.signals, dtype=float))
        if self.labels is not None:
            z = np.asarray(self.labels)
            if z.ndim == 1:
                z = one_hot(z)
            if z.shape[0] != self.signals.shape[0]:
                raise ValueError("labels and signals disagree on M")
            if np.any(z.sum(axis=1) != 1) or np.any((z != 0) & (z != 1)):
                raise ValueError("labels must be one-hot rows")
            self.labels = z.astype(float)

    @property
    def m(self) -> int:
        return self.signals.shape[0]

    @property
    def n(self) -> int:
        return self.signals.shape[1]

    @property
    def label_indices(self) -> np.ndarray | None:
        if self.labels is None:
            return None
        return np.argmax(self.labels, axis=1)

    def subset(self, idx) -> "Dataset":
        labels = None if self.labels is None else self.labels[idx]
        return Dataset(self.signals[idx], labels, self.spec)


def one_hot(labels: np.ndarray, k: int | None = None) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    if k is None:
        k = int(labels.max(initial=-1)) + 1
    z = np.zeros((labels.size, k))
    z[np.arange(labels.size), labels] = 1.0
    return z


def generate_er_connected(
    n: int,
    p: float,
    seed,
    weight_range: tuple[float, float] | None = None,
) -> Graph:
    """Connected Erdos-Renyi graph by rejection sampling.

    Edges have unit weight unless ``weight_range`` is given, in which case
    each present edge gets an i.i.d. uniform weight from that interval.
    """
    if not 0 < p <= 1:
        raise ValueError("edge probability must be in (0, 1]")
    if n < 2:
        raise ValueError("need at least two vertices")
    rng = make_rng(seed)
    iu = np.triu_indices(n, k=1)
    for _ in range(MAX_CONNECT_ATTEMPTS):
        present = rng.random(iu[0].size) < p
        w = present.astype(float)
        if weight_range is not None:
            w = w * rng.uniform(weight_range[0], weight_range[1], size=w.size)
        g = Graph.from_edge_vector(w, n)
        if is_connected(laplacian_from_weights(g)):
            return g
    raise RuntimeError(
        f"no connected ER({n}, {p}) graph in {MAX_CONNECT_ATTEMPTS} attempts; p is too small"
    )


def generate_random_means(k: int, n: int, sigma: float, seed) -> np.ndarray:
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    return make_rng(seed).normal(0.0, 1.0, size=(k, n)) * sigma


def _sqrt_covariance_factor(L: np.ndarray, kernel: KernelSpec) -> np.ndarray:
    lam, U = spectral_decompose(L)
    if kernel.kind == HEAT:
        f = np.exp(-2.0 * kernel.tau * lam)
    else:
        f = pseudo_inverse_eigenvalues(lam)
    return U * np.sqrt(f)


def sample_mixture(spec: MixtureModelSpec, m: int, seed) -> Dataset:
    """Draw ``m`` labelled signals from a graph mixture."""
    if m < 1:
        raise ValueError("m must be positive")
    rng = make_rng(seed)
    labels = rng.choice(spec.k, size=m, p=spec.alpha)
    noise = rng.standard_normal((m, spec.n))
    X = np.empty((m, spec.n))
    for k in range(spec.k):
        rows = labels == k
        if not rows.any():
            continue
        F = _sqrt_covariance_factor(spec.laplacians[k], spec.kernel)
        X[rows] = spec.means[k] + noise[rows] @ F.T
    return Dataset(X, one_hot(labels, spec.k), spec)


def random_mixture_spec(
    n: int,
    alpha,
    seed,
    p: float = 0.7,
    mean_sigma: float = 0.5,
    kernel: KernelSpec | None = None,
) -> MixtureModelSpec:
    """Ground truth used by the synthetic experiments: ER graphs plus Gaussian means."""
    alpha = np.asarray(alpha, dtype=float)
    alpha = alpha / alpha.sum()
    k = alpha.size
    graphs = [generate_er_connected(n, p, derive_seed(seed, "graph", i)) for i in range(k)]
    means = generate_random_means(k, n, mean_sigma, derive_seed(seed, "means"))
    laps = np.stack([g.laplacian for g in graphs])
    return MixtureModelSpec(alpha, means, laps, kernel or KernelSpec(SMOOTH))


def add_white_noise(d: Dataset, sigma: float, seed) -> Dataset:
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return Dataset(d.signals.copy(), d.labels, d.spec)
    noise = make_rng(seed).standard_normal(d.signals.shape) * sigma
    return Dataset(d.signals + noise, d.labels, d.spec)


def generate_wishart_gmm(n: int, k: int, seed) -> GmmSpec:
    """Covariances ``A A^T / n`` (A standard normal n x n), means ``0.5 * N(0, I)``, uniform alpha."""
    if n < 2:
        raise ValueError("n must be at least 2")
    rng = make_rng(seed)
    covs = np.empty((k, n, n))
    for i in range(k):
        A = rng.standard_normal((n, n))
        covs[i] = A @ A.T / n
    means = 0.5 * rng.standard_normal((k, n))
    return GmmSpec(np.full(k, 1.0 / k), means, covs)


def sample_gmm(spec: GmmSpec, m: int, seed) -> Dataset:
    rng = make_rng(seed)
    labels = rng.choice(spec.k, size=m, p=spec.alpha)
    noise = rng.standard_normal((m, spec.means.shape[1]))
    X = np.empty_like(noise)
    for k in range(spec.k):
        rows = labels == k
        # eigh-based factor tolerates the near-singular Wishart draws
        lam, U = np.linalg.eigh(spec.covariances[k])
        F = U * np.sqrt(np.clip(lam, 0.0, None))
        X[rows] = spec.means[k] + noise[rows] @ F.T
    return Dataset(X, one_hot(labels, spec.k), spec)


def corrupt_labels(z: np.ndarray, noise_fraction: float, k: int, seed) -> np.ndarray:
    """Reassign ``floor(noise_fraction * M)`` random signals to a different, uniformly chosen cluster."""
    if not 0 <= noise_fraction <= 1:
        raise ValueError("noise_fraction must be in [0, 1]")
    z = np.asarray(z)
    labels = np.argmax(z, axis=1) if z.ndim == 2 else z.astype(int).copy()
    m = labels.size
    n_bad = int(np.floor(noise_fraction * m))
    rng = make_rng(seed)
    out = labels.copy()
    if n_bad and k > 1:
        idx = rng.choice(m, size=n_bad, replace=False)
        r = rng.integers(0, k - 1, size=n_bad)
        old = labels[idx]
        out[idx] = np.where(r < old, r, r + 1)
    return one_hot(out, k)
