"""Expectation-maximisation for graph Laplacian mixture models.

Each cluster ``k`` has a weight ``alpha_k``, a mean ``mu_k`` and a
Laplacian ``L_k``; signals in the cluster are Gaussian with covariance
``L_k^+`` (smooth model) or ``exp(-2 tau L_k)`` (heat model). The E-step
computes responsibilities in the log domain; the M-step updates means
and weights in closed form and learns each graph with the solver that
matches the kernel.

The smooth model is degenerate along the constant vector, so its
densities are evaluated on the orthogonal complement of that vector,
with a small ``epsilon`` added to the projected spectrum.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .graph import (
    HEAT,
    SMOOTH,
    Graph,
    KernelSpec,
    constant_complement_basis,
    laplacian_from_weights,
    validate_laplacian,
)
from .sampling import Dataset, derive_seed, generate_er_connected, make_rng
from .solvers import (
    HeatSolverParams,
    SmoothSolverParams,
    WeightedSignals,
    learn_graph_heat,
    learn_graph_smooth,
)

log = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))
EPSILON_RELATIVE = 1e-6


class FitError(RuntimeError):
    """Every restart failed; ``diagnostics`` holds one message per restart."""

    def __init__(self, message: str, diagnostics: list[str]):
        super().__init__(message + "\n" + "\n".join(diagnostics))
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class FitConfig:
    k: int
    kernel: KernelSpec = field(default_factory=KernelSpec)
    epsilon: float | None = None
    max_iterations: int = 100
    convergence_tol: float = 1e-4
    restarts: int = 1
    smooth: SmoothSolverParams = field(default_factory=SmoothSolverParams)
    heat: HeatSolverParams = field(default_factory=HeatSolverParams)
    mask: np.ndarray | None = None
    min_cluster_mass: float = 1.0
    scale_by_mass: bool = True
    warm_start: bool = True
    init_edge_probability: float = 0.7
    init_weight_range: tuple[float, float] = (0.1, 2.0)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if not self.convergence_tol > 0:
            raise ValueError("convergence_tol must be positive")
        if self.kernel.kind == HEAT and self.heat.tau != self.kernel.tau:
            object.__setattr__(self, "heat", dataclasses.replace(self.heat, tau=self.kernel.tau))

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "kernel": self.kernel.to_dict(),
            "epsilon": self.epsilon,
            "max_iterations": self.max_iterations,
            "convergence_tol": self.convergence_tol,
            "restarts": self.restarts,
            "smooth": dataclasses.asdict(self.smooth),
            "heat": dataclasses.asdict(self.heat),
            "mask": None if self.mask is None else np.argwhere(np.triu(self.mask, 1)).tolist(),
            "min_cluster_mass": self.min_cluster_mass,
            "scale_by_mass": self.scale_by_mass,
            "warm_start": self.warm_start,
            "init_edge_probability": self.init_edge_probability,
            "init_weight_range": list(self.init_weight_range),
        }


@dataclass
class GroupPrior:
    """Per-group mixing weights: signal ``m`` uses row ``prior[group_of[m]]``."""

    group_of: np.ndarray
    prior: np.ndarray
    frozen: bool = False

    def __post_init__(self):
        self.group_of = np.asarray(self.group_of, dtype=int)
        self.prior = np.atleast_2d(np.asarray(self.prior, dtype=float))
        if np.any(self.prior < 0) or np.any(np.abs(self.prior.sum(axis=1) - 1) > 1e-9):
            raise ValueError("prior rows must lie on the probability simplex")
        if self.group_of.min(initial=0) < 0 or self.group_of.max(initial=0) >= self.prior.shape[0]:
            raise ValueError("group index out of range")

    @classmethod
    def from_labels(cls, labels: np.ndarray, k: int, strength: float, frozen: bool = False) -> "GroupPrior":
        """One group per (possibly noisy) label with ``strength`` on its own cluster.

        The remaining mass is spread evenly over the other clusters;
        ``strength = 1`` is a hard assignment and ``strength = 1/k`` is flat.
        """
        labels = np.asarray(labels)
        if labels.ndim == 2:
            labels = np.argmax(labels, axis=1)
        if k == 1:
            prior = np.ones((1, 1))
        else:
            prior = np.full((k, k), (1.0 - strength) / (k - 1))
            np.fill_diagonal(prior, strength)
        return cls(labels.astype(int), prior, frozen)

    def log_weights(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.prior)[self.group_of]


@dataclass
class MixtureState:
    alpha: np.ndarray
    means: np.ndarray
    laplacians: np.ndarray
    prior: GroupPrior | None = None
    solver_state: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.means.shape[0]

    def log_mixing(self, m: int) -> np.ndarray:
        """``(m, K)`` log prior cluster probabilities."""
        if self.prior is not None:
            return self.prior.log_weights()
        with np.errstate(divide="ignore"):
            return np.broadcast_to(np.log(self.alpha), (m, self.k))


@dataclass
class FittedModel:
    alpha: np.ndarray
    means: np.ndarray
    laplacians: np.ndarray
    gamma: np.ndarray
    kernel: KernelSpec
    objective_trace: list[float]
    iterations_used: int
    epsilon: float | None = None
    prior: GroupPrior | None = None
    config: FitConfig | None = None
    seed: int | None = None
    converged: bool = False
    restart_objectives: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.means.shape[0]

    @property
    def graphs(self) -> list[Graph]:
        return [Graph.from_laplacian(L) for L in self.laplacians]

    @property
    def hard_labels(self) -> np.ndarray:
        return np.argmax(self.gamma, axis=1)

    def state(self) -> MixtureState:
        return MixtureState(self.alpha, self.means, self.laplacians, self.prior)


# --- densities ----------------------------------------------------------------


def default_epsilon(projected_eigenvalues: np.ndarray) -> float:
    pos = projected_eigenvalues[projected_eigenvalues > 1e-12]
    return EPSILON_RELATIVE * (float(pos.mean()) if pos.size else 1.0)


def cluster_log_density(
    X: np.ndarray,
    mean: np.ndarray,
    L: np.ndarray,
    kernel: KernelSpec,
    epsilon: float | None = None,
) -> np.ndarray:
    """Per-signal log density of one cluster.

    Smooth: the ``N-1`` dimensional Gaussian of the projection onto the
    complement of the constant vector, with precision equal to the
    projected Laplacian plus ``epsilon``. Heat: the exact ``N``
    dimensional Gaussian with covariance ``exp(-2 tau L)``.
    """
    Y = np.atleast_2d(X) - mean
    n = Y.shape[1]
    if kernel.kind == SMOOTH:
        Q = constant_complement_basis(n)
        Lp = Q.T @ L @ Q
        lam, V = np.linalg.eigh((Lp + Lp.T) / 2)
        lam = np.maximum(lam, 0.0)
        eps = default_epsilon(lam) if epsilon is None else epsilon
        prec = lam + eps
        proj = Y @ (Q @ V)
        quad = (proj * proj) @ prec
        return 0.5 * (np.log(prec).sum() - quad - (n - 1) * LOG_2PI)
    lam, U = np.linalg.eigh((L + L.T) / 2)
    proj = Y @ U
    with np.errstate(over="ignore"):
        quad = (proj * proj) @ np.exp(2.0 * kernel.tau * lam)
    return 0.5 * (2.0 * kernel.tau * lam.sum() - quad - n * LOG_2PI)


def _log_joint(state: MixtureState, X: np.ndarray, kernel: KernelSpec, epsilon) -> np.ndarray:
    if not np.all(np.isfinite(X)):
        raise ValueError("signals contain non-finite values")
    if X.shape[1] != state.means.shape[1]:
        raise ValueError(f"signals have dimension {X.shape[1]}, model expects {state.means.shape[1]}")
    dens = np.column_stack(
        [cluster_log_density(X, state.means[k], state.laplacians[k], kernel, epsilon) for k in range(state.k)]
    )
    return state.log_mixing(X.shape[0]) + dens


def _normalize_log(logp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise softmax and log-normaliser with max subtraction."""
    mx = logp.max(axis=1, keepdims=True)
    dead = ~np.isfinite(mx[:, 0])
    if dead.any():
        # no cluster gives the signal finite density; fall back to a flat split
        logp = logp.copy()
        logp[dead] = 0.0
        mx[dead] = 0.0
    with np.errstate(invalid="ignore"):
        e = np.exp(logp - mx)
    s = e.sum(axis=1, keepdims=True)
    gamma = e / s
    lse = (mx + np.log(s))[:, 0]
    lse[dead] = -np.inf
    return gamma, lse


def e_step(state: MixtureState, data: Dataset | np.ndarray, kernel: KernelSpec, epsilon=None) -> np.ndarray:
    X = data.signals if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data, dtype=float))
    gamma, _ = _normalize_log(_log_joint(state, X, kernel, epsilon))
    return gamma


def surrogate_objective(state: MixtureState, data: Dataset | np.ndarray, kernel: KernelSpec, epsilon=None) -> float:
    """Observed-data log-likelihood (graph prior excluded)."""
    X = data.signals if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data, dtype=float))
    _, lse = _normalize_log(_log_joint(state, X, kernel, epsilon))
    return float(lse.sum())


# --- M-step -------------------------------------------------------------------


def m_step_means(gamma: np.ndarray, data: Dataset | np.ndarray) -> np.ndarray:
    X = data.signals if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    mass = gamma.sum(axis=0)
    if np.any(mass <= 0):
        raise ValueError(f"empty clusters {np.flatnonzero(mass <= 0).tolist()}")
    return (gamma.T @ X) / mass[:, None]


def m_step_weights(gamma: np.ndarray) -> np.ndarray:
    # divisor is the number of signals M so that the weights sum to one
    return gamma.sum(axis=0) / gamma.shape[0]


def m_step_prior(gamma: np.ndarray, prior: GroupPrior) -> GroupPrior:
    if prior.frozen:
        return prior
    g = prior.prior.shape[0]
    counts = np.bincount(prior.group_of, minlength=g).astype(float)
    sums = np.zeros((g, gamma.shape[1]))
    np.add.at(sums, prior.group_of, gamma)
    new = prior.prior.copy()
    has = counts > 0
    new[has] = sums[has] / counts[has, None]
    new /= new.sum(axis=1, keepdims=True)
    return GroupPrior(prior.group_of, new, prior.frozen)


def m_step_graphs(
    gamma: np.ndarray,
    data: Dataset | np.ndarray,
    means: np.ndarray,
    config: FitConfig,
    warm: list | None = None,
) -> tuple[np.ndarray, list]:
    """Learn one Laplacian per cluster; returns ``(laplacians, solver_states)``."""
    X = data.signals if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    laps = np.empty((means.shape[0], X.shape[1], X.shape[1]))
    states = []
    for k in range(means.shape[0]):
        ws = WeightedSignals(X - means[k], gamma[:, k])
        ws_state = warm[k] if (warm and config.warm_start and k < len(warm)) else None
        try:
            if config.kernel.kind == SMOOTH:
                params = config.smooth.scaled(ws.mass) if config.scale_by_mass else config.smooth
                est = learn_graph_smooth(ws, params, config.mask, ws_state)
            else:
                est = learn_graph_heat(ws, config.heat, config.mask, ws_state)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise type(exc)(f"cluster {k}: {exc}") from exc
        L = est.laplacian
        rep = validate_laplacian(L)
        if not rep:
            raise ValueError(f"cluster {k}: solver returned {rep}")
        laps[k] = L
        states.append(est.state)
    return laps, states


# --- driver -------------------------------------------------------------------


def random_laplacian(n: int, seed, p: float = 0.7, weight_range=(0.1, 2.0)) -> np.ndarray:
    return laplacian_from_weights(generate_er_connected(n, p, seed, weight_range=weight_range))


def initialize(data: Dataset, config: FitConfig, seed, prior: GroupPrior | None = None) -> MixtureState:
    X = data.signals
    m, n = X.shape
    if m < config.k:
        raise ValueError(f"need at least k={config.k} signals, got {m}")
    rng = make_rng(seed)
    idx = rng.choice(m, size=config.k, replace=False)
    base = int(rng.integers(0, 2**63 - 1))
    laps = np.stack(
        [
            random_laplacian(n, derive_seed(base, "init-graph", k), config.init_edge_probability, config.init_weight_range)
            for k in range(config.k)
        ]
    )
    return MixtureState(np.full(config.k, 1.0 / config.k), X[idx].copy(), laps, prior)


def _rescue_degenerate(state: MixtureState, gamma: np.ndarray, X: np.ndarray, config: FitConfig, rng) -> list[int]:
    mass = gamma.sum(axis=0)
    dead = np.flatnonzero(mass < config.min_cluster_mass)
    for k in dead:
        worst = int(np.argmin(gamma.max(axis=1)))
        state.means[k] = X[worst]
        state.laplacians[k] = random_laplacian(
            X.shape[1], int(rng.integers(0, 2**63 - 1)), config.init_edge_probability, config.init_weight_range
        )
        if state.prior is None:
            state.alpha[k] = 1.0 / config.k
        if state.solver_state and k < len(state.solver_state):
            state.solver_state[k] = None
    if dead.size and state.prior is None:
        state.alpha /= state.alpha.sum()
    return dead.tolist()


def _m_step(gamma: np.ndarray, X: np.ndarray, state: MixtureState, config: FitConfig, rng) -> MixtureState:
    mass = gamma.sum(axis=0)
    live = mass >= config.min_cluster_mass
    new = MixtureState(
        m_step_weights(gamma),
        state.means.copy(),
        state.laplacians.copy(),
        None if state.prior is None else m_step_prior(gamma, state.prior),
        list(state.solver_state) if state.solver_state else [None] * config.k,
    )
    if live.any():
        new.means[live] = m_step_means(gamma[:, live], X)
        laps, states = m_step_graphs(
            gamma[:, live], X, new.means[live], config, [new.solver_state[k] for k in np.flatnonzero(live)]
        )
        new.laplacians[live] = laps
        for j, k in enumerate(np.flatnonzero(live)):
            new.solver_state[k] = states[j]
    if not live.all():
        log.debug("rescuing clusters %s", np.flatnonzero(~live).tolist())
        _rescue_degenerate(new, gamma, X, config, rng)
    return new


def _run_once(data: Dataset, config: FitConfig, seed: int, prior: GroupPrior | None) -> FittedModel:
    X = data.signals
    rng = make_rng(derive_seed(seed, "rescue"))
    state = initialize(data, config, seed, prior)
    eps = config.epsilon
    gamma, lse = _normalize_log(_log_joint(state, X, config.kernel, eps))
    trace = [float(lse.sum())]
    converged = False
    it = 0
    for it in range(1, config.max_iterations + 1):
        state = _m_step(gamma, X, state, config, rng)
        new_gamma, lse = _normalize_log(_log_joint(state, X, config.kernel, eps))
        trace.append(float(lse.sum()))
        delta = float(np.max(np.abs(new_gamma - gamma)))
        gamma = new_gamma
        if delta < config.convergence_tol:
            converged = True
            break
    alpha = state.alpha if state.prior is None else gamma.mean(axis=0)
    return FittedModel(
        alpha=alpha,
        means=state.means,
        laplacians=state.laplacians,
        gamma=gamma,
        kernel=config.kernel,
        objective_trace=trace,
        iterations_used=it,
        epsilon=eps,
        prior=state.prior,
        config=config,
        seed=seed,
        converged=converged,
    )


def fit(
    data: Dataset,
    config: FitConfig,
    seed: int,
    prior: GroupPrior | None = None,
    score: Callable[[FittedModel], float] | None = None,
) -> FittedModel:
    """Fit a graph Laplacian mixture with ``config.restarts`` random restarts.

    The restart with the highest final log-likelihood is returned, or the
    highest ``score(model)`` when a scorer is given.
    """
    X = data.signals
    if not np.all(np.isfinite(X)):
        raise ValueError("signals contain non-finite values")
    if prior is not None and prior.group_of.size != data.m:
        raise ValueError("group prior does not cover every signal")
    best, best_score = None, -np.inf
    objectives, failures = [], []
    for r in range(config.restarts):
        rseed = derive_seed(seed, "restart", r)
        try:
            model = _run_once(data, config, rseed, prior)
        except (ValueError, np.linalg.LinAlgError, FloatingPointError, RuntimeError) as exc:
            failures.append(f"restart {r} (seed {rseed}): {type(exc).__name__}: {exc}")
            objectives.append(float("nan"))
            continue
        final = model.objective_trace[-1]
        objectives.append(final)
        s = score(model) if score is not None else final
        if best is None or s > best_score:
            best, best_score = model, s
    if best is None:
        raise FitError(f"all {config.restarts} restarts failed", failures)
    best.restart_objectives = objectives
    best.seed = seed
    return best


def predict(model: FittedModel, signals: Dataset | np.ndarray, groups: np.ndarray | None = None) -> np.ndarray:
    """Responsibilities of new signals under a trained model (no parameter update).

    With a group prior, pass ``groups`` to reuse it; otherwise the fitted
    overall mixing weights are used.
    """
    X = signals.signals if isinstance(signals, Dataset) else np.atleast_2d(np.asarray(signals, dtype=float))
    prior = None
    if model.prior is not None and groups is not None:
        prior = GroupPrior(groups, model.prior.prior, model.prior.frozen)
    state = MixtureState(model.alpha, model.means, model.laplacians, prior)
    return e_step(state, X, model.kernel, model.epsilon)
