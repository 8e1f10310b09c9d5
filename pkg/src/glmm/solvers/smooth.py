"""Graph learning from smooth signals with a log-degree barrier.

Solves, over nonnegative edge weights ``w`` (upper triangle of ``W``)::

    min  sum_m g_m y_m^T L y_m  -  beta1 * sum_i log d_i  +  beta2 * |W|_F^2

Using ``y^T L y = 1/2 sum_ij W_ij (y_i - y_j)^2`` the data term is the
linear function ``z.w`` with ``z`` the upper triangle of
:func:`pairwise_distance_matrix`, and ``|W|_F^2 = 2 |w|^2``. The log
barrier on the degrees ``d = S w`` is handled through its conjugate in a
forward-backward-forward primal-dual iteration; every step costs
``O(#edges)`` after the ``O(M N^2)`` distance computation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .common import (
    GraphEstimate,
    WeightedSignals,
    edge_index,
    graph_from_edges,
    warn_not_converged,
)


@dataclass(frozen=True)
class SmoothSolverParams:
    beta1: float = 1.0
    beta2: float = 0.5
    max_iterations: int = 3000
    tol: float = 1e-5
    step_scale: float = 0.9

    def __post_init__(self):
        if not self.beta1 > 0:
            raise ValueError("beta1 must be positive")
        if self.beta2 < 0:
            raise ValueError("beta2 must be nonnegative")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 < self.step_scale <= 1:
            raise ValueError("step_scale must be in (0, 1]")

    def scaled(self, factor: float) -> "SmoothSolverParams":
        """Same solver with both regularisation weights multiplied by ``factor``."""
        return SmoothSolverParams(
            self.beta1 * factor, self.beta2 * factor, self.max_iterations, self.tol, self.step_scale
        )


def weighted_gram(ws: WeightedSignals) -> np.ndarray:
    Y = ws.deviations
    G = (Y * ws.weights[:, None]).T @ Y
    return (G + G.T) / 2


def pairwise_distance_matrix(ws: WeightedSignals) -> np.ndarray:
    """``Z_ij = sum_m g_m (y_mi - y_mj)^2``."""
    G = weighted_gram(ws)
    g = np.diag(G)
    Z = g[:, None] + g[None, :] - 2.0 * G
    Z = np.maximum((Z + Z.T) / 2, 0.0)
    np.fill_diagonal(Z, 0.0)
    return Z


def smooth_objective(W: np.ndarray, Z: np.ndarray, beta1: float, beta2: float) -> float:
    """Objective in matrix form; ``inf`` when some vertex has zero degree."""
    d = W.sum(axis=1)
    if np.any(d <= 0):
        return np.inf
    return float(0.5 * np.sum(W * Z) - beta1 * np.log(d).sum() + beta2 * np.sum(W * W))


def learn_graph_smooth(
    ws: WeightedSignals,
    params: SmoothSolverParams | None = None,
    mask: np.ndarray | None = None,
    warm_start: dict | None = None,
) -> GraphEstimate:
    """Learn one graph from weighted smooth signals.

    Pairs excluded by ``mask`` are not optimisation variables and come out
    exactly zero. ``warm_start`` takes the ``state`` of a previous
    :class:`GraphEstimate` on the same vertex set and mask.
    """
    p = params or SmoothSolverParams()
    n = ws.n
    ei, ej = edge_index(n, mask)
    if ei.size == 0:
        raise ValueError("no admissible edges")
    covered = np.bincount(ei, minlength=n) + np.bincount(ej, minlength=n)
    if np.any(covered == 0):
        raise ValueError(f"mask isolates vertices {np.flatnonzero(covered == 0).tolist()}")
    Z = pairwise_distance_matrix(ws)
    z = Z[ei, ej]
    if not np.any(z > 0):
        raise ValueError("all pairwise distances are zero; signals carry no graph information")

    # substitute w = a u, with a the per-vertex degree of the best uniform graph, and
    # divide by beta1: the problem in u has O(1) data and penalty terms, beta1 = 1
    # and uniform u = 1/(n-1) as a natural start, whatever the signal scale
    n1 = max(n - 1, 1)
    zbar = float(np.mean(z))
    a = 4.0 * p.beta1 / (zbar + np.sqrt(zbar * zbar + 32.0 * p.beta1 * p.beta2 / n1))
    zn = a * z / p.beta1
    b2 = p.beta2 * a * a / p.beta1
    lip = 4.0 * b2 + np.sqrt(2.0 * (n - 1))
    step = p.step_scale * (1.0 - 1e-3) / lip

    if warm_start is not None and np.shape(warm_start.get("u")) == ei.shape:
        u0 = np.asarray(warm_start["u"], dtype=float)
        v0 = np.asarray(warm_start["v"], dtype=float)
    else:
        u0 = np.full(ei.size, 1.0 / n1)
        d0 = np.bincount(ei, u0, n) + np.bincount(ej, u0, n)
        v0 = -1.0 / d0

    P, u, v, iters, trace = kernels.smooth_primal_dual(
        zn, ei, ej, n, 1.0, b2, step, p.max_iterations, p.tol, u0, v0
    )
    P = a * P
    trace = p.beta1 * trace - p.beta1 * n * np.log(a)
    converged = iters < p.max_iterations
    if not converged:
        warn_not_converged("learn_graph_smooth", iters)
    return GraphEstimate(
        graph=graph_from_edges(P, ei, ej, n),
        objective_trace=trace,
        iterations=int(iters),
        converged=converged,
        state={"u": u, "v": v},
    )
