"""Graphs, combinatorial Laplacians and the spectral quantities built on them.

Everything is dense: the problems handled here have a few hundred vertices
at most, and the eigendecomposition is the dominant cost anyway.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, NamedTuple

import numpy as np

SMOOTH = "smooth"
HEAT = "heat"

RANK_TOL = 1e-9
DEFAULT_LAPLACIAN_TOL = 1e-8


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Graph:
    """Undirected weighted graph stored as a dense weight matrix.

    The constructor requires exact symmetry, a zero diagonal and
    nonnegative entries. Use :func:`read_graph` for data that only
    approximately satisfies this.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"weight matrix must be square, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weight matrix has non-finite entries")
        if np.any(w != w.T):
            raise ValueError("weight matrix is not symmetric")
        if np.any(np.diag(w) != 0):
            raise ValueError("weight matrix has a nonzero diagonal")
        if np.any(w < 0):
            raise ValueError("weight matrix has negative entries")
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def laplacian(self) -> np.ndarray:
        return laplacian_from_weights(self)

    def edges(self) -> list[tuple[int, int, float]]:
        """Edges as ``(i, j, w)`` with ``i < j``, in lexicographic order."""
        iu, ju = np.nonzero(np.triu(self.weights, k=1))
        return [(int(i), int(j), float(self.weights[i, j])) for i, j in zip(iu, ju)]

    @property
    def num_edges(self) -> int:
        return int(np.count_nonzero(np.triu(self.weights, k=1)))

    @classmethod
    def from_edge_vector(cls, w: np.ndarray, n: int) -> "Graph":
        """Build from upper-triangular weights in ``np.triu_indices(n, 1)`` order."""
        W = np.zeros((n, n))
        iu = np.triu_indices(n, k=1)
        W[iu] = w
        W = W + W.T
        return cls(W)

    @classmethod
    def from_laplacian(cls, L: np.ndarray, tol: float = DEFAULT_LAPLACIAN_TOL) -> "Graph":
        """Recover weights ``W = -offdiag(L)``; tiny positive off-diagonals (< tol) are clipped."""
        L = np.asarray(L, dtype=float)
        W = -(L + L.T) / 2
        np.fill_diagonal(W, 0.0)
        if W.min(initial=0.0) < -tol:
            raise ValueError("matrix has positive off-diagonal entries; not a Laplacian")
        return cls(np.maximum(W, 0.0))


class SpectralDecomposition(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass(frozen=True)
class KernelSpec:
    """Signal model: ``smooth`` (covariance L^+) or ``heat`` (covariance exp(-2 tau L))."""

    kind: Literal["smooth", "heat"] = SMOOTH
    tau: float | None = None

    def __post_init__(self):
        if self.kind not in (SMOOTH, HEAT):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == HEAT and (self.tau is None or not self.tau > 0):
            raise ValueError("heat kernel requires tau > 0")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "tau": self.tau}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(kind=d["kind"], tau=d.get("tau"))


@dataclass
class LaplacianReport:
    """Outcome of :func:`validate_laplacian`; ``violations`` maps a condition to its worst magnitude."""

    tol: float
    violations: dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        if self.ok:
            return "valid Laplacian"
        parts = ", ".join(f"{k} (worst {v:.3g})" for k, v in self.violations.items())
        return f"invalid Laplacian: {parts}"


def laplacian_from_weights(g: Graph | np.ndarray) -> np.ndarray:
    W = g.weights if isinstance(g, Graph) else np.asarray(g, dtype=float)
    L = -W.copy()
    np.fill_diagonal(L, W.sum(axis=1))
    return L


def validate_laplacian(m: np.ndarray, tol: float = DEFAULT_LAPLACIAN_TOL) -> LaplacianReport:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    report = LaplacianReport(tol=tol)
    if m.size == 0:
        return report
    asym = float(np.max(np.abs(m - m.T)))
    if asym > tol:
        report.violations["symmetry"] = asym
    off = m[~np.eye(m.shape[0], dtype=bool)]
    if off.size and off.max() > tol:
        report.violations["off_diagonal_sign"] = float(off.max())
    rows = float(np.max(np.abs(m.sum(axis=1))))
    if rows > tol:
        report.violations["row_sums"] = rows
    return report


def smoothness(x: np.ndarray, L: np.ndarray) -> float:
    """Laplacian quadratic form ``x^T L x``."""
    x = np.asarray(x, dtype=float)
    L = np.asarray(L, dtype=float)
    if x.ndim != 1 or L.shape != (x.size, x.size):
        raise ValueError(f"signal of length {x.size} does not match Laplacian {L.shape}")
    return float(x @ L @ x)


def spectral_decompose(L: np.ndarray) -> SpectralDecomposition:
    L = np.asarray(L, dtype=float)
    if L.shape[0] != L.shape[1]:
        raise ValueError("matrix must be square")
    if not np.all(np.isfinite(L)):
        raise np.linalg.LinAlgError("matrix has non-finite entries")
    # eigh returns ascending eigenvalues; LinAlgError propagates on non-convergence
    lam, U = np.linalg.eigh((L + L.T) / 2)
    return SpectralDecomposition(lam, U)


def kernel_covariance(L: np.ndarray, kernel: KernelSpec) -> np.ndarray:
    lam, U = spectral_decompose(L)
    if kernel.kind == HEAT:
        f = np.exp(-2.0 * kernel.tau * lam)
    else:
        f = pseudo_inverse_eigenvalues(lam)
    C = (U * f) @ U.T
    return (C + C.T) / 2


def pseudo_inverse_eigenvalues(lam: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Invert eigenvalues above ``rank_tol * max(lam)``, zero the rest."""
    cutoff = rank_tol * max(float(np.max(lam, initial=0.0)), 0.0)
    out = np.zeros_like(lam)
    keep = lam > cutoff
    out[keep] = 1.0 / lam[keep]
    return out


def is_connected(L: np.ndarray, tol: float = 1e-8) -> bool:
    """True when the second-smallest Laplacian eigenvalue exceeds ``tol``."""
    L = np.asarray(L, dtype=float)
    if L.shape[0] < 2:
        return True
    lam = np.linalg.eigvalsh((L + L.T) / 2)
    return bool(lam[1] > tol)


def connected_components(W: np.ndarray) -> int:
    """Number of connected components of the support of ``W`` (breadth-first search)."""
    W = np.asarray(W)
    n = W.shape[0]
    seen = np.zeros(n, dtype=bool)
    count = 0
    for s in range(n):
        if seen[s]:
            continue
        count += 1
        seen[s] = True
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in np.flatnonzero(W[u] > 0):
                if not seen[v]:
                    seen[v] = True
                    queue.append(v)
    return count


def threshold_graph(g: Graph, theta: float) -> Graph:
    if theta < 0:
        raise ValueError("threshold must be nonnegative")
    W = np.where(g.weights < theta, 0.0, g.weights)
    return Graph(W)


def constant_complement_basis(n: int) -> np.ndarray:
    """Fixed orthonormal basis (n x n-1) of the subspace orthogonal to the constant vector."""
    # Householder reflection mapping e_1 to 1/sqrt(n); its remaining columns span 1-perp
    v = np.full(n, 1.0 / np.sqrt(n))
    v[0] -= 1.0
    nv = v @ v
    H = np.eye(n) if nv == 0 else np.eye(n) - 2.0 * np.outer(v, v) / nv
    return H[:, 1:]


def make_edge_mask(allowed: np.ndarray) -> np.ndarray:
    """Validate a boolean mask of allowed edges and return a read-only copy."""
    a = np.asarray(allowed, dtype=bool)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("edge mask must be square")
    if np.any(a != a.T):
        raise ValueError("edge mask must be symmetric")
    if np.any(np.diag(a)):
        raise ValueError("edge mask diagonal must be False")
    a = a.copy()
    a.setflags(write=False)
    return a


def hop_mask(adjacency: np.ndarray, hops: int) -> np.ndarray:
    """Mask allowing edges between vertices at most ``hops`` apart in ``adjacency``."""
    A = (np.asarray(adjacency) != 0).astype(int)
    n = A.shape[0]
    reach = np.eye(n, dtype=int)
    step = np.eye(n, dtype=int)
    for _ in range(hops):
        step = (step @ A > 0).astype(int)
        reach |= step
    allowed = reach.astype(bool)
    np.fill_diagonal(allowed, False)
    return make_edge_mask(allowed)


def grid_adjacency(rows: int, cols: int) -> np.ndarray:
    """4-neighbour adjacency of a ``rows x cols`` pixel grid (row-major vertex order)."""
    n = rows * cols
    A = np.zeros((n, n))
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                A[i, i + 1] = A[i + 1, i] = 1
            if r + 1 < rows:
                A[i, i + cols] = A[i + cols, i] = 1
    return A


# --- file formats -----------------------------------------------------------


def write_graph_dense(g: Graph, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in g.weights:
            writer.writerow([repr(float(v)) for v in row])


def write_graph_edges(g: Graph, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "weight"])
        for i, j, w in g.edges():
            writer.writerow([i, j, repr(w)])


def read_graph_dense(path: str | Path) -> Graph:
    W = np.loadtxt(path, delimiter=",", ndmin=2)
    return _symmetrized(W)


def read_graph_edges(path: str | Path, n: int | None = None) -> Graph:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec:
                continue
            if rec[0].strip() == "i":
                continue
            rows.append((int(rec[0]), int(rec[1]), float(rec[2])))
    if n is None:
        n = 1 + max((max(i, j) for i, j, _ in rows), default=-1)
    W = np.zeros((n, n))
    for i, j, w in rows:
        W[i, j] = W[j, i] = w
    return _symmetrized(W)


def read_graph(path: str | Path, n: int | None = None) -> Graph:
    """Read either format; edge lists are recognised by their ``i,j,weight`` header."""
    with open(path) as fh:
        first = fh.readline()
    if first.split(",")[0].strip() == "i":
        return read_graph_edges(path, n)
    return read_graph_dense(path)


def _symmetrized(W: np.ndarray) -> Graph:
    W = (W + W.T) / 2
    np.fill_diagonal(W, 0.0)
    return Graph(np.maximum(W, 0.0))
