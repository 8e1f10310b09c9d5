"""On-disk formats for datasets, ground-truth specs and fitted models.

Dataset directory layout::

    signals.csv      M rows x N columns, no header
    labels.csv       M rows, one 0-based cluster index each (optional)
    spec.json        alpha, means, kernel, graph file names (optional)
    graph_<k>.csv    dense N x N weight matrices referenced by spec.json

All floats are written with ``%.17g`` so they round-trip exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .baselines import GmmModel
from .em import FitConfig, FittedModel, GroupPrior
from .graph import Graph, KernelSpec, read_graph, write_graph_dense
from .sampling import Dataset, GmmSpec, MixtureModelSpec, one_hot
from .solvers import HeatSolverParams, SmoothSolverParams

FLOAT_FMT = "%.17g"


def write_matrix_csv(a: np.ndarray, path: str | Path) -> None:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    np.savetxt(path, a, delimiter=",", fmt=FLOAT_FMT)


def read_matrix_csv(path: str | Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def write_labels_csv(labels: np.ndarray, path: str | Path) -> None:
    labels = np.asarray(labels)
    if labels.ndim == 2:
        labels = np.argmax(labels, axis=1)
    np.savetxt(path, labels.astype(int).reshape(-1, 1), fmt="%d")


def read_labels_csv(path: str | Path) -> np.ndarray:
    return np.loadtxt(path, dtype=int, ndmin=1).ravel()


def _floats(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def write_dataset(d: Dataset, directory: str | Path) -> dict[str, Path]:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    files = {"signals": out / "signals.csv"}
    write_matrix_csv(d.signals, files["signals"])
    if d.labels is not None:
        files["labels"] = out / "labels.csv"
        write_labels_csv(d.labels, files["labels"])
    if isinstance(d.spec, MixtureModelSpec):
        refs = []
        for k, g in enumerate(d.spec.graphs):
            name = f"graph_{k}.csv"
            write_graph_dense(g, out / name)
            files[f"graph_{k}"] = out / name
            refs.append(name)
        spec = {
            "type": "graph_mixture",
            "alpha": _floats(d.spec.alpha),
            "means": _floats(d.spec.means),
            "graphs": refs,
            "kernel": d.spec.kernel.kind,
            "tau": d.spec.kernel.tau,
        }
        files["spec"] = out / "spec.json"
        files["spec"].write_text(json.dumps(spec, indent=2) + "\n")
    elif isinstance(d.spec, GmmSpec):
        spec = {
            "type": "gmm",
            "alpha": _floats(d.spec.alpha),
            "means": _floats(d.spec.means),
            "covariances": _floats(d.spec.covariances),
        }
        files["spec"] = out / "spec.json"
        files["spec"].write_text(json.dumps(spec, indent=2) + "\n")
    return files


def read_spec(path: str | Path) -> MixtureModelSpec | GmmSpec:
    path = Path(path)
    spec = json.loads(path.read_text())
    if spec.get("type") == "gmm":
        return GmmSpec(np.array(spec["alpha"]), np.array(spec["means"]), np.array(spec["covariances"]))
    graphs = [read_graph(path.parent / ref) for ref in spec["graphs"]]
    kernel = KernelSpec(spec["kernel"], spec.get("tau"))
    return MixtureModelSpec(
        np.array(spec["alpha"]), np.array(spec["means"]), np.stack([g.laplacian for g in graphs]), kernel
    )


def read_dataset(directory: str | Path) -> Dataset:
    """Read a dataset directory, or a bare signals CSV file."""
    p = Path(directory)
    if p.is_file():
        return Dataset(read_matrix_csv(p))
    X = read_matrix_csv(p / "signals.csv")
    spec = read_spec(p / "spec.json") if (p / "spec.json").exists() else None
    labels = None
    if (p / "labels.csv").exists():
        lab = read_labels_csv(p / "labels.csv")
        k = spec.k if spec is not None else None
        labels = one_hot(lab, k)
    return Dataset(X, labels, spec)


def truth_graphs(d: Dataset) -> list[Graph] | None:
    if isinstance(d.spec, MixtureModelSpec):
        return d.spec.graphs
    return None


# --- models -------------------------------------------------------------------


def _graph_to_json(g: Graph) -> dict:
    return {"n": g.n, "edges": [[i, j, w] for i, j, w in g.edges()]}


def _graph_from_json(d: dict) -> Graph:
    W = np.zeros((d["n"], d["n"]))
    for i, j, w in d["edges"]:
        W[i, j] = W[j, i] = w
    return Graph(W)


def model_to_dict(model: FittedModel) -> dict:
    out = {
        "type": "glmm",
        "kernel": model.kernel.to_dict(),
        "alpha": _floats(model.alpha),
        "means": _floats(model.means),
        "graphs": [_graph_to_json(g) for g in model.graphs],
        "gamma": _floats(model.gamma),
        "epsilon": model.epsilon,
        "objective_trace": [float(v) for v in model.objective_trace],
        "iterations_used": int(model.iterations_used),
        "converged": bool(model.converged),
        "restart_objectives": [float(v) for v in model.restart_objectives],
        "seed": model.seed,
        "config": None if model.config is None else model.config.to_dict(),
    }
    if model.prior is not None:
        out["prior"] = {
            "group_of": model.prior.group_of.tolist(),
            "prior": _floats(model.prior.prior),
            "frozen": model.prior.frozen,
        }
    return out


def _config_from_dict(d: dict) -> FitConfig:
    n_mask = None
    mask = None
    if d.get("mask") is not None:
        pairs = np.array(d["mask"], dtype=int).reshape(-1, 2)
        n_mask = d.get("n")
        if n_mask is not None:
            mask = np.zeros((n_mask, n_mask), dtype=bool)
            mask[pairs[:, 0], pairs[:, 1]] = True
            mask |= mask.T
    return FitConfig(
        k=d["k"],
        kernel=KernelSpec.from_dict(d["kernel"]),
        epsilon=d.get("epsilon"),
        max_iterations=d["max_iterations"],
        convergence_tol=d["convergence_tol"],
        restarts=d["restarts"],
        smooth=SmoothSolverParams(**d["smooth"]),
        heat=HeatSolverParams(**d["heat"]),
        mask=mask,
        min_cluster_mass=d["min_cluster_mass"],
        scale_by_mass=d["scale_by_mass"],
        warm_start=d["warm_start"],
        init_edge_probability=d["init_edge_probability"],
        init_weight_range=tuple(d["init_weight_range"]),
    )


def model_from_dict(d: dict) -> FittedModel:
    if d.get("type", "glmm") != "glmm":
        raise ValueError(f"not a graph mixture model: type {d.get('type')!r}")
    graphs = [_graph_from_json(g) for g in d["graphs"]]
    prior = None
    if "prior" in d:
        p = d["prior"]
        prior = GroupPrior(np.array(p["group_of"]), np.array(p["prior"]), p["frozen"])
    config = None
    if d.get("config") is not None:
        cfg = dict(d["config"])
        cfg.setdefault("n", graphs[0].n if graphs else None)
        config = _config_from_dict(cfg)
    return FittedModel(
        alpha=np.array(d["alpha"]),
        means=np.array(d["means"]),
        laplacians=np.stack([g.laplacian for g in graphs]),
        gamma=np.array(d["gamma"]),
        kernel=KernelSpec.from_dict(d["kernel"]),
        objective_trace=list(d["objective_trace"]),
        iterations_used=d["iterations_used"],
        epsilon=d.get("epsilon"),
        prior=prior,
        config=config,
        seed=d.get("seed"),
        converged=d.get("converged", False),
        restart_objectives=list(d.get("restart_objectives", [])),
    )


def gmm_to_dict(model: GmmModel) -> dict:
    return {
        "type": "gmm",
        "alpha": _floats(model.alpha),
        "means": _floats(model.means),
        "covariances": _floats(model.covariances),
        "projected": model.basis is not None,
        "gamma": _floats(model.gamma),
        "objective_trace": [float(v) for v in model.log_likelihood_trace],
        "iterations_used": int(model.iterations_used),
    }


def gmm_from_dict(d: dict) -> GmmModel:
    from .graph import constant_complement_basis

    means = np.array(d["means"])
    basis = constant_complement_basis(means.shape[1] + 1) if d.get("projected") else None
    return GmmModel(
        np.array(d["alpha"]), means, np.array(d["covariances"]), np.array(d["gamma"]),
        list(d["objective_trace"]), basis, d.get("iterations_used", 0),
    )


def kmeans_to_dict(labels, centers, graphs: list[Graph | None], seed=None) -> dict:
    k = len(graphs)
    return {
        "type": "kmeans_gl",
        "centers": _floats(centers),
        "gamma": _floats(one_hot(labels, k)),
        "graphs": [None if g is None else _graph_to_json(g) for g in graphs],
        "seed": seed,
    }


def save_json(obj: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def load_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def graphs_from_model_dict(d: dict) -> list[Graph | None] | None:
    if "graphs" not in d:
        return None
    return [None if g is None else _graph_from_json(g) for g in d["graphs"]]


def write_trace_csv(trace, path: str | Path, name: str = "objective") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", name])
        for i, v in enumerate(trace):
            w.writerow([i, repr(float(v))])
