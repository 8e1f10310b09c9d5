"""Graph learning under the heat-kernel model ``cov = exp(-2 tau L)``.

The covariance-matching problem is posed in the log domain::

    min_{W in W}  |log(Sigma) + 2 tau L(W)|_F^2 + beta |W|_1

which is a convex quadratic in the edge weights plus an l1 term, solved
with FISTA (restarted whenever the objective would increase).
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

LIPSCHITZ_SAFETY = 0.95


@dataclass(frozen=True)
class HeatSolverParams:
    tau: float = 1.0
    beta: float = 0.1
    max_iterations: int = 3000
    tol: float = 1e-8
    eig_floor: float = 1e-12

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if not self.eig_floor > 0:
            raise ValueError("eig_floor must be positive")


def weighted_sample_covariance(ws: WeightedSignals) -> np.ndarray:
    """``sum_m g_m y_m y_m^T / sum_m g_m`` (deviations are not re-centred)."""
    Y = ws.deviations
    S = (Y * ws.weights[:, None]).T @ Y / ws.mass
    return (S + S.T) / 2


def matrix_log_psd(S: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """Matrix logarithm of a symmetric PSD matrix with eigenvalues clamped below at ``floor``."""
    S = np.asarray(S, dtype=float)
    lam, U = np.linalg.eigh((S + S.T) / 2)
    A = (U * np.log(np.maximum(lam, floor))) @ U.T
    return (A + A.T) / 2


def heat_matching_objective(W: np.ndarray, log_cov: np.ndarray, tau: float, beta: float = 0.0) -> float:
    """Dense evaluation of the log-domain objective (reference for tests and diagnostics)."""
    L = np.diag(W.sum(axis=1)) - W
    R = log_cov + 2.0 * tau * L
    return float(np.sum(R * R) + beta * np.abs(W).sum())


class HeatProblem:
    """Edge-space form of the log-domain objective for one covariance."""

    def __init__(self, log_cov: np.ndarray, tau: float, beta: float, mask: np.ndarray | None = None):
        A = np.asarray(log_cov, dtype=float)
        self.n = A.shape[0]
        self.tau = float(tau)
        self.beta = float(beta)
        self.ei, self.ej = edge_index(self.n, mask)
        self.a_off = A[self.ei, self.ej].copy()
        self.a_diag = np.diag(A).copy()
        free = np.zeros((self.n, self.n), dtype=bool)
        free[self.ei, self.ej] = True
        fixed = np.triu(~free, k=1)
        self.const = 2.0 * float(np.sum(A[fixed] ** 2))

    def objective(self, w: np.ndarray) -> float:
        return kernels.heat_objective(
            w, self.a_off, self.a_diag, self.const, self.ei, self.ej, self.n, self.tau, self.beta
        )

    def gradient(self, w: np.ndarray) -> np.ndarray:
        """Gradient of the smooth (Frobenius) part only."""
        return kernels.heat_gradient(w, self.a_off, self.a_diag, self.ei, self.ej, self.n, self.tau)

    def hessian_apply(self, w: np.ndarray) -> np.ndarray:
        # constant Hessian: 8 tau^2 S^T S + 16 tau^2 I
        d = np.bincount(self.ei, w, self.n) + np.bincount(self.ej, w, self.n)
        return 8.0 * self.tau**2 * (d[self.ei] + d[self.ej]) + 16.0 * self.tau**2 * w

    def lipschitz(self, iterations: int = 500, rtol: float = 1e-10) -> float:
        """Largest Hessian eigenvalue by power iteration."""
        x = np.ones(self.ei.size) / np.sqrt(max(self.ei.size, 1))
        lam = 0.0
        for _ in range(iterations):
            y = self.hessian_apply(x)
            new = float(np.linalg.norm(y))
            if new == 0:
                return 0.0
            x = y / new
            if abs(new - lam) <= rtol * new:
                lam = new
                break
            lam = new
        return lam


def learn_graph_heat(
    ws: WeightedSignals,
    params: HeatSolverParams | None = None,
    mask: np.ndarray | None = None,
    warm_start: dict | None = None,
) -> GraphEstimate:
    p = params or HeatSolverParams()
    n = ws.n
    A = matrix_log_psd(weighted_sample_covariance(ws), p.eig_floor)
    prob = HeatProblem(A, p.tau, p.beta, mask)
    if prob.ei.size == 0:
        raise ValueError("no admissible edges")
    step = LIPSCHITZ_SAFETY / prob.lipschitz()

    if warm_start is not None and np.shape(warm_start.get("w")) == prob.ei.shape:
        w0 = np.asarray(warm_start["w"], dtype=float)
    else:
        # entrywise inversion of log(Sigma) = -2 tau L, clipped to the feasible set
        w0 = np.maximum(prob.a_off / (2.0 * p.tau), 0.0)

    w, iters, trace = kernels.heat_fista(
        prob.a_off, prob.a_diag, prob.const, prob.ei, prob.ej, n,
        p.tau, p.beta, step, p.max_iterations, p.tol, w0,
    )
    converged = iters < p.max_iterations
    if not converged:
        warn_not_converged("learn_graph_heat", iters)
    return GraphEstimate(
        graph=graph_from_edges(w, prob.ei, prob.ej, n),
        objective_trace=trace,
        iterations=int(iters),
        converged=converged,
        state={"w": w},
    )
