"""Command-line entry point: ``glmm <command> [options]``.

Commands
--------
generate    draw a synthetic dataset (signals, labels, graphs, spec)
fit         fit a method to a dataset; writes model, traces and metrics
predict     responsibilities of new signals under a saved model
eval        metrics of a saved model against a labelled dataset
reproduce   run a seeded experiment scenario; long-format CSV + summary
gridsearch  rank hyperparameter candidates for one method on a scenario

Every command accepts ``--config FILE`` (JSON object whose keys are the
long option names with ``-`` replaced by ``_``); explicit flags override
the file. Relative output paths are placed under ``$GLMM_OUTPUT_ROOT``
when that variable is set.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from .. import io
from ..em import FitError, GroupPrior
from ..graph import HEAT, SMOOTH, KernelSpec, grid_adjacency, hop_mask, read_graph
from ..sampling import (
    add_white_noise,
    derive_seed,
    generate_wishart_gmm,
    random_mixture_spec,
    sample_gmm,
    sample_mixture,
)
from ..solvers import ConvergenceWarning
from .experiments import (
    SCENARIOS,
    ExperimentConfig,
    grid_search,
    load_hyperparameters,
    run_experiment,
    select_sparsest,
)
from .pipeline import METHODS, evaluate_model, fit_method, predict_model

OUTPUT_ROOT_ENV = "GLMM_OUTPUT_ROOT"
log = logging.getLogger("glmm")


def output_path(path: str | Path) -> Path:
    p = Path(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not p.is_absolute():
        p = Path(root) / p
    return p


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    cfg = json.loads(Path(path).read_text())
    if not isinstance(cfg, dict):
        raise ValueError(f"config {path}: top level must be a JSON object")
    return cfg


# --- generate ----------------------------------------------------------------------


def cmd_generate(args) -> int:
    out = output_path(args.out)
    if args.kind == "graph":
        if args.alpha is None:
            raise ValueError("alpha: required for graph mixtures")
        kernel = KernelSpec(args.kernel, args.tau)
        spec = random_mixture_spec(
            args.n, args.alpha, derive_seed(args.seed, "spec"), args.p, args.mean_sigma, kernel
        )
        data = sample_mixture(spec, args.m, derive_seed(args.seed, "data"))
    else:
        spec = generate_wishart_gmm(args.n, args.k, derive_seed(args.seed, "spec"))
        data = sample_gmm(spec, args.m, derive_seed(args.seed, "data"))
    if args.noise > 0:
        data = add_white_noise(data, args.noise, derive_seed(args.seed, "noise"))
    files = io.write_dataset(data, out)
    print(json.dumps({k: str(v) for k, v in sorted(files.items())}, indent=2))
    return 0


# --- fit / predict / eval -------------------------------------------------------------


def _truth_from_args(args, data) -> list | None:
    if getattr(args, "truth", None):
        return [read_graph(p, data.n) for p in args.truth]
    return io.truth_graphs(data)


def _mask_from_args(args, n: int) -> np.ndarray | None:
    if args.mask_hops is None:
        return None
    if args.grid_shape is None:
        raise ValueError("mask_hops: needs --grid-shape ROWS COLS describing the vertex grid")
    rows, cols = args.grid_shape
    if rows * cols != n:
        raise ValueError(f"grid_shape: {rows}x{cols} does not match {n} vertices")
    return hop_mask(grid_adjacency(rows, cols), args.mask_hops)


def _hyper_from_args(args) -> dict:
    hyper = dict(load_hyperparameters()["scenarios"]["default"].get(args.method, {}))
    for key in ("beta1", "beta2", "beta", "restarts", "tol", "ridge"):
        val = getattr(args, key, None)
        if val is not None:
            hyper[key] = val
    if args.max_iterations is not None:
        hyper["em_max_iterations"] = args.max_iterations
    return hyper


def cmd_fit(args) -> int:
    data = io.read_dataset(args.data)
    k = args.k
    if k is None:
        if data.labels is None:
            raise ValueError("k: required when the dataset has no labels")
        k = data.labels.shape[1]
    tau = args.tau
    if args.method == "ghmm" and tau is None and data.spec is not None:
        tau = getattr(getattr(data.spec, "kernel", None), "tau", None)
    prior = None
    if args.prior_strength is not None:
        if data.labels is None:
            raise ValueError("prior_strength: needs labels to form groups")
        prior = GroupPrior.from_labels(data.labels, k, args.prior_strength, frozen=args.freeze_prior)
    mask = _mask_from_args(args, data.n)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore" if args.quiet else "default", ConvergenceWarning)
        model = fit_method(
            args.method, data, k, _hyper_from_args(args), args.seed,
            tau=tau, prior=prior, mask=mask, select_by_labels=args.select_by_labels,
        )
    out = output_path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.save_json(model, out / "model.json")
    _write_responsibilities(np.asarray(model["gamma"]), out / "responsibilities.csv")
    io.write_trace_csv(model.get("objective_trace", []), out / "trace.csv")
    summary = {"model": str(out / "model.json")}
    if data.labels is not None:
        report = evaluate_model(model, data, _truth_from_args(args, data), args.threshold)
        (out / "metrics.json").write_text(report.to_json() + "\n")
        summary["metrics"] = report.to_dict()
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _write_responsibilities(gamma: np.ndarray, path: Path) -> None:
    k = gamma.shape[1]
    with open(path, "w") as fh:
        fh.write(",".join([f"gamma_{j}" for j in range(k)] + ["label"]) + "\n")
        for row in gamma:
            fh.write(",".join([io.FLOAT_FMT % v for v in row] + [str(int(np.argmax(row)))]) + "\n")


def cmd_predict(args) -> int:
    model = io.load_json(args.model)
    X = io.read_dataset(args.signals).signals
    gamma = predict_model(model, X)
    out = output_path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_responsibilities(gamma, out)
    print(str(out))
    return 0


def cmd_eval(args) -> int:
    model = io.load_json(args.model)
    data = io.read_dataset(args.data)
    report = evaluate_model(model, data, _truth_from_args(args, data), args.threshold)
    text = report.to_json() + "\n"
    if args.out:
        out = output_path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
    print(text, end="")
    return 0


# --- experiments ------------------------------------------------------------------------


def _experiment_config(args) -> ExperimentConfig:
    params = dict(args.params or {})
    for key in ("tau_grid", "noise_grid", "prior_grid"):
        val = getattr(args, key, None)
        if val is not None:
            params[key] = val
    if getattr(args, "dims_grid", None) is not None:
        params["dims_grid"] = [int(v) for v in args.dims_grid]
    return ExperimentConfig(
        scenario=args.scenario,
        repetitions=args.repetitions,
        base_seed=args.base_seed,
        methods=args.methods,
        params=params,
        hyperparameters=args.hyperparameters or {},
        output_dir=args.out,
        jobs=args.jobs,
    )


def cmd_reproduce(args) -> int:
    cfg = _experiment_config(args)
    res = run_experiment(cfg)
    csv_path, json_path = res.write(output_path(args.out))
    print(json.dumps({"rows": len(res.rows), "failures": len(res.failures), "csv": str(csv_path),
                      "summary": str(json_path)}, indent=2))
    return 0


def cmd_gridsearch(args) -> int:
    cfg = _experiment_config(args)
    grid = {}
    for item in args.grid:
        key, _, values = item.partition("=")
        if not values:
            raise ValueError(f"grid: expected KEY=V1,V2,... got {item!r}")
        grid[key] = [int(v) if key == "restarts" else float(v) for v in values.split(",")]
    ranked = grid_search(cfg, args.method, grid, args.metric, minimize=not args.maximize)
    selected = select_sparsest(ranked, args.sparse_within_se) if args.sparse_within_se is not None else ranked[0]
    result = {
        "selected": selected,
        "selection_rule": (
            "best score" if args.sparse_within_se is None
            else f"smallest beta1*beta2 within {args.sparse_within_se} standard errors of the best"
        ),
        "scenario": cfg.scenario, "method": args.method, "metric": args.metric,
        "maximize": bool(args.maximize), "repetitions": cfg.repetitions, "base_seed": cfg.base_seed,
        "grid": grid, "ranked": ranked,
    }
    out = output_path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    print(json.dumps({"selected": selected, "written": str(out)}, indent=2, sort_keys=True))
    return 0


# --- parser -------------------------------------------------------------------------------


def _add_hyper(p: argparse.ArgumentParser) -> None:
    p.add_argument("--beta1", type=float, help="log-degree barrier weight (smooth learner)")
    p.add_argument("--beta2", type=float, help="Frobenius penalty weight (smooth learner)")
    p.add_argument("--beta", type=float, help="l1 weight (heat learner)")
    p.add_argument("--tol", type=float, help="graph solver tolerance")
    p.add_argument("--ridge", type=float, help="GMM covariance ridge")
    p.add_argument("--restarts", type=int)
    p.add_argument("--max-iterations", type=int, help="EM iteration cap")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glmm", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="draw a synthetic dataset")
    g.add_argument("--config")
    g.add_argument("--kind", choices=["graph", "wishart"], default="graph")
    g.add_argument("--n", type=int, default=15)
    g.add_argument("--m", type=int, default=150)
    g.add_argument("--k", type=int, default=2, help="clusters (wishart only)")
    g.add_argument("--alpha", type=_floats, default=[0.5, 0.5])
    g.add_argument("--p", type=float, default=0.7)
    g.add_argument("--mean-sigma", type=float, default=0.5)
    g.add_argument("--kernel", choices=[SMOOTH, HEAT], default=SMOOTH)
    g.add_argument("--tau", type=float)
    g.add_argument("--noise", type=float, default=0.0, help="white noise std added to signals")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="fit a method to a dataset")
    f.add_argument("data", help="dataset directory or signals CSV")
    f.add_argument("--config")
    f.add_argument("--method", choices=METHODS, default="glmm")
    f.add_argument("--k", type=int)
    f.add_argument("--tau", type=float, help="heat parameter for ghmm (default: from the dataset model file)")
    _add_hyper(f)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--select-by-labels", action="store_true",
                   help="pick the restart with the lowest training clustering error")
    f.add_argument("--prior-strength", type=float, help="group prior from the dataset labels")
    f.add_argument("--freeze-prior", action="store_true")
    f.add_argument("--mask-hops", type=int, help="only allow edges within this many grid hops")
    f.add_argument("--grid-shape", type=int, nargs=2, metavar=("ROWS", "COLS"))
    f.add_argument("--truth", nargs="+", help="ground-truth graph files (default: from the dataset model file)")
    f.add_argument("--threshold", type=float, help="edge threshold for F-measure")
    f.add_argument("--quiet", action="store_true", help="silence solver convergence warnings")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="responsibilities of new signals")
    p.add_argument("model")
    p.add_argument("signals", help="signals CSV or dataset directory")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    e = sub.add_parser("eval", help="metrics of a saved model")
    e.add_argument("model")
    e.add_argument("data")
    e.add_argument("--config")
    e.add_argument("--truth", nargs="+")
    e.add_argument("--threshold", type=float)
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    for name, func in (("reproduce", cmd_reproduce), ("gridsearch", cmd_gridsearch)):
        r = sub.add_parser(name, help="run an experiment scenario" if name == "reproduce" else "hyperparameter sweep")
        r.add_argument("scenario", choices=SCENARIOS)
        r.add_argument("--config")
        r.add_argument("--repetitions", type=int, default=20)
        r.add_argument("--base-seed", type=int, default=0)
        r.add_argument("--methods", nargs="+", choices=METHODS)
        r.add_argument("--tau-grid", type=_floats)
        r.add_argument("--noise-grid", type=_floats)
        r.add_argument("--prior-grid", type=_floats)
        r.add_argument("--dims-grid", type=_floats)
        r.add_argument("--jobs", type=int, default=1)
        r.set_defaults(params=None, hyperparameters=None)
        if name == "gridsearch":
            r.add_argument("--method", choices=METHODS, required=True)
            r.add_argument("--grid", nargs="+", required=True, metavar="KEY=V1,V2")
            r.add_argument("--metric", default="nmse")
            r.add_argument("--maximize", action="store_true")
            r.add_argument("--sparse-within-se", type=float,
                           help="prefer the sparsest candidate within this many standard errors of the best")
            r.add_argument("--out", default="gridsearch.json")
        else:
            r.add_argument("--out", default="results")
        r.set_defaults(func=func)
    return parser


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = _load_config(getattr(args, "config", None))
    if cfg:
        # config values become defaults, so flags given explicitly still win
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions} | set(sub._defaults)
        unknown = set(cfg) - known
        if unknown:
            raise SystemExit(f"glmm {args.command}: unknown config keys {sorted(unknown)}")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def main(argv: list[str] | None = None) -> int:
    try:
        args = parse_args(argv)
    except ValueError as exc:
        print(f"glmm: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except FitError as exc:
        print(f"glmm {args.command}: fit failed: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, KeyError) as exc:
        print(f"glmm {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
