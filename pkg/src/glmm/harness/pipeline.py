"""Method dispatch shared by the CLI and the experiment runner.

Every method produces a JSON-ready model dict; metrics are always computed
from that dict so a report written by ``fit`` equals the one ``eval``
recomputes from the saved files.
"""

from __future__ import annotations

import dataclasses
from typing import Any, Callable

import numpy as np

from .. import io
from ..baselines import GmmConfig, KMeansConfig, fit_gmm, gmm_predict, kmeans_plus_graph_learning
from ..em import FitConfig, FittedModel, GroupPrior, fit, predict
from ..graph import HEAT, SMOOTH, Graph, KernelSpec
from ..metrics import MetricReport, clustering_nmse, evaluate
from ..sampling import Dataset, one_hot
from ..solvers import HeatSolverParams, SmoothSolverParams

METHODS = ("glmm", "ghmm", "gmm", "kmeans_gl")


def _pick(cls, h: dict, **fixed):
    keys = {f.name for f in dataclasses.fields(cls)} - set(fixed)
    return cls(**{k: v for k, v in h.items() if k in keys}, **fixed)


def glmm_config(k: int, hyper: dict, kernel: KernelSpec, mask: np.ndarray | None = None) -> FitConfig:
    return FitConfig(
        k=k,
        kernel=kernel,
        restarts=int(hyper.get("restarts", 1)),
        max_iterations=int(hyper.get("em_max_iterations", 100)),
        smooth=_pick(SmoothSolverParams, hyper),
        heat=_pick(HeatSolverParams, hyper, tau=kernel.tau) if kernel.kind == HEAT else HeatSolverParams(),
        mask=mask,
    )


def label_score(labels: np.ndarray) -> Callable[[FittedModel], float]:
    """Restart scorer that prefers the lowest training clustering error."""
    return lambda model: -clustering_nmse(model.gamma, labels)


def fit_method(
    method: str,
    data: Dataset,
    k: int,
    hyper: dict[str, Any],
    seed: int,
    *,
    tau: float | None = None,
    prior: GroupPrior | None = None,
    mask: np.ndarray | None = None,
    select_by_labels: bool = False,
) -> dict:
    """Run one method and return its serialisable model dict."""
    if method in ("glmm", "ghmm"):
        if method == "ghmm" and tau is None:
            raise ValueError("ghmm needs a heat parameter tau")
        kernel = KernelSpec(SMOOTH) if method == "glmm" else KernelSpec(HEAT, tau)
        score = None
        if select_by_labels:
            if data.labels is None:
                raise ValueError("restart selection by labels needs a labelled dataset")
            score = label_score(data.labels)
        model = fit(data, glmm_config(k, hyper, kernel, mask), seed, prior=prior, score=score)
        out = io.model_to_dict(model)
        out["method"] = method
        return out
    if method == "gmm":
        cfg = GmmConfig(
            k=k,
            restarts=int(hyper.get("restarts", 1)),
            covariance_ridge=float(hyper.get("ridge", 1e-6)),
            max_iterations=int(hyper.get("em_max_iterations", 200)),
        )
        out = io.gmm_to_dict(fit_gmm(data, cfg, seed))
        out["seed"] = seed
        out["method"] = method
        return out
    if method == "kmeans_gl":
        km_cfg = KMeansConfig(k=k, restarts=int(hyper.get("restarts", 1)))
        km, graphs = kmeans_plus_graph_learning(data, km_cfg, _pick(SmoothSolverParams, hyper), seed, mask)
        out = io.kmeans_to_dict(km.labels, km.centers, graphs, seed)
        out["objective_trace"] = km.cost_trace
        out["method"] = method
        return out
    raise ValueError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")


def predict_model(d: dict, signals: np.ndarray, groups: np.ndarray | None = None) -> np.ndarray:
    X = np.atleast_2d(np.asarray(signals, dtype=float))
    kind = d.get("type")
    if kind == "glmm":
        model = io.model_from_dict(d)
        if X.shape[1] != model.means.shape[1]:
            raise ValueError(f"signals have {X.shape[1]} entries, model expects {model.means.shape[1]}")
        return predict(model, X, groups)
    if kind == "gmm":
        model = io.gmm_from_dict(d)
        n = model.means.shape[1] + (1 if model.basis is not None else 0)
        if X.shape[1] != n:
            raise ValueError(f"signals have {X.shape[1]} entries, model expects {n}")
        return gmm_predict(model, X)
    if kind == "kmeans_gl":
        centers = np.asarray(d["centers"])
        if X.shape[1] != centers.shape[1]:
            raise ValueError(f"signals have {X.shape[1]} entries, model expects {centers.shape[1]}")
        d2 = ((X[:, None, :] - centers[None]) ** 2).sum(axis=2)
        return one_hot(np.argmin(d2, axis=1), centers.shape[0])
    raise ValueError(f"unknown model type {kind!r}")


def model_responsibilities(d: dict, data: Dataset) -> np.ndarray:
    """Responsibilities used for evaluation.

    Models fitted with a group prior report their stored training
    responsibilities (the groups are not part of a dataset); everything
    else is re-predicted from the parameters.
    """
    if d.get("prior") is not None:
        gamma = np.asarray(d["gamma"])
        if gamma.shape[0] != data.m:
            raise ValueError("group-prior model can only be evaluated on its training signals")
        return gamma
    return predict_model(d, data.signals)


def evaluate_model(
    d: dict,
    data: Dataset,
    truth: list[Graph] | None = None,
    threshold: float | None = None,
) -> MetricReport:
    """Align clusters to labels and score graphs against ``truth`` (if given)."""
    gamma = model_responsibilities(d, data)
    z = data.labels
    if z is not None and z.shape[1] != gamma.shape[1]:
        raise ValueError(f"model has {gamma.shape[1]} clusters, labels have {z.shape[1]}")
    if truth is not None and len(truth) != gamma.shape[1]:
        raise ValueError(f"model has {gamma.shape[1]} clusters, {len(truth)} truth graphs given")
    if truth is not None and truth[0].n != data.n:
        raise ValueError("truth graphs and signals differ in dimension")
    if d.get("type") == "gmm" and truth is not None:
        report = evaluate(gamma, z)
        perm = report.aligned_permutation if z is not None else list(range(len(truth)))
        model = io.gmm_from_dict(d)
        learned: list[Graph | None] = [None] * len(truth)
        for kk, g_true in enumerate(truth):
            learned[perm[kk]] = model.graphs(g_true.num_edges)[perm[kk]]
        return evaluate(gamma, z, learned, truth, threshold)
    learned = io.graphs_from_model_dict(d) if truth is not None else None
    return evaluate(gamma, z, learned, truth, threshold)
