from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..graph import Graph, laplacian_from_weights


class ConvergenceWarning(UserWarning):
    """A solver hit its iteration budget; the best iterate is returned."""


@dataclass(frozen=True)
class WeightedSignals:
    """Cluster deviations ``y_m = x_m - mu_k`` (rows) with their responsibilities."""

    deviations: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        Y = np.atleast_2d(np.asarray(self.deviations, dtype=float))
        g = np.asarray(self.weights, dtype=float).ravel()
        if g.size != Y.shape[0]:
            raise ValueError(f"{g.size} weights for {Y.shape[0]} signals")
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ValueError("weights must be finite and nonnegative")
        if not np.any(g > 0):
            raise ValueError("at least one weight must be positive")
        if not np.all(np.isfinite(Y)):
            raise ValueError("deviations contain non-finite values")
        object.__setattr__(self, "deviations", Y)
        object.__setattr__(self, "weights", g)

    @property
    def n(self) -> int:
        return self.deviations.shape[1]

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @classmethod
    def unweighted(cls, deviations: np.ndarray) -> "WeightedSignals":
        Y = np.atleast_2d(deviations)
        return cls(Y, np.ones(Y.shape[0]))


@dataclass
class GraphEstimate:
    """Solver output: the learned graph plus diagnostics and warm-start state."""

    graph: Graph
    objective_trace: np.ndarray
    iterations: int
    converged: bool
    state: dict = field(default_factory=dict)

    @property
    def laplacian(self) -> np.ndarray:
        return laplacian_from_weights(self.graph)

    def __iter__(self):
        # allows ``graph, L = learn_graph_...(...)``
        yield self.graph
        yield self.laplacian


def edge_index(n: int, mask: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Upper-triangular vertex pairs that are free variables, in lexicographic order."""
    ei, ej = np.triu_indices(n, k=1)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (n, n):
            raise ValueError(f"mask shape {mask.shape} does not match {n} vertices")
        keep = mask[ei, ej]
        ei, ej = ei[keep], ej[keep]
    return ei.astype(np.int_), ej.astype(np.int_)


def graph_from_edges(w: np.ndarray, ei: np.ndarray, ej: np.ndarray, n: int) -> Graph:
    W = np.zeros((n, n))
    W[ei, ej] = w
    W[ej, ei] = w
    return Graph(W)


def warn_not_converged(name: str, iterations: int) -> None:
    warnings.warn(
        f"{name} did not converge in {iterations} iterations; returning last feasible iterate",
        ConvergenceWarning,
        stacklevel=3,
    )
