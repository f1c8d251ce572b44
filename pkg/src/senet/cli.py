"""Command-line front end: ``senet {fit,path,tune,simulate,graph,diagnose}``.

Exit status: 0 on success, 2 when a fit did not converge or a diagnostic
check failed (output is still written), 1 on input errors. Output files are
written to a temporary file and renamed, so an input error never leaves a
partial file behind.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from .adaptive import AdaptiveConfig, adaptive_fit, compute_weights, initial_estimate
from .diagnostics import (
    constraint_bounds,
    decorrelated_matrices,
    df_heuristic,
    irrepresentable_check,
    kkt_residual,
)
from .errors import InvalidDimensionError, InvalidParameterError
from .graph import (
    build_knn,
    identity_penalty,
    laplacian_of,
    parse_graph_spec,
    zero_penalty,
)
from .model import get_family, read_csv, standardize
from .simulate import SCENARIOS, SimSpec, run_benchmark, write_coefficients_csv
from .solver import FitConfig, FitResult, fit, fit_config_dict, solve_path
from .tuning import CRITERIA, RULES, cross_validate

log = logging.getLogger("senet")

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2
THREADS_ENV = "SENET_THREADS"


# --- helpers -----------------------------------------------------------------

def _write_atomic(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(obj, out) -> None:
    text = json.dumps(obj, indent=2, allow_nan=False)
    if out:
        _write_atomic(out, text + "\n")
    else:
        print(text)


def _read_vector(spec: str) -> np.ndarray:
    """Comma/whitespace separated numbers, inline or from a file."""
    path = Path(spec)
    text = path.read_text() if path.exists() else spec
    try:
        vals = [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise InvalidParameterError(f"cannot parse numbers from {spec!r}") from exc
    if not vals:
        raise InvalidParameterError(f"no numbers in {spec!r}")
    return np.array(vals)


def _read_grid(spec: str) -> list[float]:
    return [float(v) for v in _read_vector(spec)]


def _penalty(spec: str, p: int, coords: str | None = None):
    if spec == "zero":
        return zero_penalty(p)
    if spec.startswith("knn:"):
        if coords is None:
            raise InvalidParameterError("knn graphs need --coords")
        try:
            k = int(spec[4:])
        except ValueError as exc:
            raise InvalidParameterError(f"bad knn spec {spec!r}, expected knn:K") from exc
        graph = build_knn(np.loadtxt(coords, ndmin=2), k)
    else:
        graph = parse_graph_spec(spec, p)
    if graph is None:
        return identity_penalty(p)
    if graph.n_vertices != p:
        raise InvalidDimensionError(f"graph has {graph.n_vertices} vertices but data has {p} features")
    return laplacian_of(graph)


def _load_data(args):
    fam = get_family(args.family, args.dispersion)
    raw = read_csv(args.data)
    fam.check_response(raw.y)
    center_y = fam.name == "gaussian" and not args.no_intercept
    return raw, fam, standardize(raw, center_response=center_y)


def _fit_config(args, **extra) -> FitConfig:
    return FitConfig(
        lambda1=getattr(args, "lambda1", 0.0),
        lambda2=getattr(args, "lambda2", 0.0),
        max_sweeps=args.max_sweeps,
        tol=args.tol,
        irls_max_iter=args.irls_max_iter,
        fit_intercept=not args.no_intercept,
        **extra,
    )


def _adaptive_config(args) -> AdaptiveConfig:
    init = args.init
    if init.startswith("file:"):
        init = _read_vector(init[5:])
    return AdaptiveConfig(gamma=args.gamma, init=init, init_lambda2=args.init_lambda2)


def _inputs(args) -> dict:
    return {
        "data": str(args.data),
        "graph": args.graph,
        "coords": getattr(args, "coords", None),
        "family": args.family,
        "dispersion": args.dispersion,
        "standardized": True,
    }


def _fit_record(res: FitResult, lam, cfg: FitConfig, args) -> dict:
    t1, t2 = constraint_bounds(res.beta, lam)
    rec = res.to_json()
    used = replace(cfg, lambda1=res.lambda1, lambda2=res.lambda2, weights=tuple(res.weights))
    rec.update(t1=t1, t2=t2, config=fit_config_dict(used), inputs=_inputs(args))
    return rec


# --- subcommands -------------------------------------------------------------

def cmd_fit(args) -> int:
    raw, fam, data = _load_data(args)
    lam = _penalty(args.graph, data.p, args.coords)
    extra = {}
    if args.weights:
        extra["weights"] = tuple(_read_vector(args.weights))
    cfg = _fit_config(args, **extra)
    if args.adaptive:
        res = adaptive_fit(data, fam, lam, cfg, _adaptive_config(args))
    else:
        res = fit(data, fam, lam, cfg)
    _emit(_fit_record(res, lam, cfg, args), args.out)
    if not res.converged:
        log.warning("fit did not converge: %s", "; ".join(res.log[-3:]))
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_path(args) -> int:
    raw, fam, data = _load_data(args)
    lam = _penalty(args.graph, data.p, args.coords)
    cfg = _fit_config(args)
    if args.adaptive:
        init = initial_estimate(data, fam, lam, _adaptive_config(args), cfg.fit_intercept)
        cfg = replace(cfg, weights=tuple(compute_weights(init, args.gamma)))
    grid = _read_grid(args.lambda1_grid) if args.lambda1_grid else None
    path = solve_path(data, fam, lam, args.lambda2, args.grid_size, cfg, args.min_ratio, grid)
    out = path.to_json()
    for rec, res in zip(out["results"], path.results):
        rec["t1"], rec["t2"] = constraint_bounds(res.beta, lam)
    out["inputs"] = _inputs(args)
    _emit(out, args.out)
    return EXIT_OK if all(r.converged for r in path.results) else EXIT_NOT_CONVERGED


def cmd_tune(args) -> int:
    raw, fam, data = _load_data(args)
    lam = _penalty(args.graph, data.p, args.coords)
    cfg = _fit_config(args)
    if args.adaptive:
        # weights come from the full-data initial estimator and stay fixed across folds
        init = initial_estimate(data, fam, lam, _adaptive_config(args), cfg.fit_intercept)
        cfg = replace(cfg, weights=tuple(compute_weights(init, args.gamma)))
    l1_grid = _read_grid(args.lambda1_grid) if args.lambda1_grid else None
    cv = cross_validate(raw, fam, lam, _read_grid(args.lambda2_grid), l1_grid, args.folds, args.seed,
                        args.criterion, cfg, args.path_size, args.min_ratio, args.rule)
    final = fit(data, fam, lam, replace(cfg, lambda1=cv.lambda1, lambda2=cv.lambda2))
    out = cv.to_json()
    out["fit"] = _fit_record(final, lam, cfg, args)
    _emit(out, args.out)
    print(f"selected lambda1={cv.lambda1:.6g} lambda2={cv.lambda2:.6g}", file=sys.stderr)
    return EXIT_OK if final.converged else EXIT_NOT_CONVERGED


def cmd_simulate(args) -> int:
    spec_kw = json.loads(Path(args.config).read_text()) if args.config else {}
    for key in ("scenario", "replicates", "seed", "noise_sd"):
        val = getattr(args, key)
        if val is not None:
            spec_kw[key] = val
    if args.methods:
        spec_kw["methods"] = tuple(m.strip() for m in args.methods.split(","))
    spec = SimSpec.from_json(spec_kw)
    jobs = args.jobs if args.jobs is not None else int(os.environ.get(THREADS_ENV, "1"))
    report = run_benchmark(spec, keep_coefficients=bool(args.coef_csv), n_jobs=max(jobs, 1))
    _emit(report.to_json(), args.out)
    if args.coef_csv:
        write_coefficients_csv(report, args.coef_csv)
    print(report.table(), file=sys.stderr if not args.out else sys.stdout)
    return EXIT_NOT_CONVERGED if report.failures else EXIT_OK


def cmd_graph(args) -> int:
    if args.spec.startswith("knn:"):
        if not args.coords:
            raise InvalidParameterError("knn graphs need --coords")
        graph = build_knn(np.loadtxt(args.coords, ndmin=2), int(args.spec[4:]))
    else:
        if args.spec == "path" and args.p is None:
            raise InvalidParameterError("path graphs need --p")
        graph = parse_graph_spec(args.spec, args.p or 0)
        if graph is None:
            raise InvalidParameterError("identity is not a graph")
    if args.out:
        text = json.dumps(graph.to_json(), indent=2) + "\n"
        _write_atomic(args.out, text)
    else:
        print(json.dumps(graph.to_json()))
    print(f"{graph.n_vertices} vertices, {graph.n_edges} edges", file=sys.stderr)
    return EXIT_OK


def _diag_kkt(args, rec, res, data, fam, lam) -> tuple[dict, bool]:
    cfg = FitConfig(lambda1=res.lambda1, lambda2=res.lambda2, weights=tuple(res.weights),
                    fit_intercept=res.fit_intercept)
    value = kkt_residual(res, data, fam, lam, cfg)
    tol = cfg.kkt_tolerance(fam)
    out = {"check": "kkt", "kkt_residual": value, "stored": res.kkt_residual,
           "difference": abs(value - res.kkt_residual), "tolerance": tol}
    return out, value <= tol


def cmd_diagnose(args) -> int:
    rec = json.loads(Path(args.fit).read_text()) if args.fit else None
    inputs = (rec or {}).get("inputs", {})
    data_path = args.data or inputs.get("data")
    graph = args.graph or inputs.get("graph") or "identity"
    coords = args.coords or inputs.get("coords")
    family = args.family or (rec or {}).get("family", "gaussian")
    dispersion = args.dispersion if args.dispersion is not None else (rec or {}).get("dispersion", 1.0)
    res = FitResult.from_json(rec) if rec else None
    fam = get_family(family, dispersion)
    data = None
    if data_path:
        raw = read_csv(data_path)
        fit_intercept = res.fit_intercept if res else True
        data = standardize(raw, center_response=fam.name == "gaussian" and fit_intercept)
    p = data.p if data is not None else None
    if p is None and args.beta_star:
        p = _read_vector(args.beta_star).size
    if p is None:
        raise InvalidParameterError("diagnose needs --data or --beta-star")
    lam = _penalty(graph, p, coords)
    lambda2 = args.lambda2 if args.lambda2 is not None else (res.lambda2 if res else 0.0)

    ok = True
    if args.check == "kkt":
        if res is None or data is None:
            raise InvalidParameterError("kkt check needs --fit and data")
        out, ok = _diag_kkt(args, rec, res, data, fam, lam)
        rows = [("kkt residual", out["kkt_residual"]), ("stored", out["stored"]),
                ("difference", out["difference"]), ("tolerance", out["tolerance"])]
    elif args.check == "df":
        if res is None or data is None:
            raise InvalidParameterError("df check needs --fit and data")
        df = df_heuristic(res, data, lam)
        t1, t2 = constraint_bounds(res.beta, lam)
        out = {"check": "df", "df": df, "t1": t1, "t2": t2, "n_active": len(res.active_set)}
        rows = [(k, v) for k, v in out.items() if k != "check"]
    elif args.check == "irrepresentable":
        if not args.beta_star:
            raise InvalidParameterError("irrepresentable check needs --beta-star")
        beta_star = _read_vector(args.beta_star)
        if args.gram:
            C = np.loadtxt(args.gram, ndmin=2)
        elif data is not None:
            C = data.X.T @ data.X
        else:
            raise InvalidParameterError("irrepresentable check needs --gram or data")
        r = irrepresentable_check(C, lam, beta_star, lambda2)
        ok = r.satisfied
        out = {"check": "irrepresentable", "satisfied": r.satisfied, "margin": r.margin,
               "lhs": r.lhs.tolist(), "notice": r.notice, "R": lambda2}
        rows = [("satisfied", r.satisfied), ("margin", r.margin), ("max lhs", float(r.lhs.max()) if r.lhs.size else 0.0)]
        if r.notice:
            rows.append(("notice", r.notice))
    else:
        if data is None:
            raise InvalidParameterError("decorrelation check needs data")
        Ct, V, R = decorrelated_matrices(data, lam, lambda2)
        v = np.sqrt(np.diag(V))
        err = float(np.max(np.abs(Ct - v[:, None] * R * v[None, :])))
        off = np.abs(R - np.diag(np.diag(R)))
        out = {"check": "decorrelation", "lambda2": lambda2, "factorization_error": err,
               "max_offdiag_R": float(off.max()) if off.size else 0.0,
               "V": np.diag(V).tolist()}
        rows = [("lambda2", lambda2), ("factorization error", err), ("max |R_jk|, j!=k", out["max_offdiag_R"])]

    width = max(len(k) for k, _ in rows)
    for k, v in rows:
        print(f"{k:<{width}}  {v}")
    if args.out:
        _emit(out, args.out)
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


# --- parser ------------------------------------------------------------------

def _add_data_args(p, graph_required: bool = True) -> None:
    p.add_argument("--data", required=True, help="CSV with a header and a 'y' column")
    p.add_argument("--family", default="gaussian", choices=("gaussian", "binomial", "poisson"))
    p.add_argument("--dispersion", type=float, default=1.0, help="gaussian dispersion phi")
    p.add_argument("--graph", default="identity",
                   help="path | grid:RxC | knn:K | identity | zero | graph JSON file")
    p.add_argument("--coords", help="vertex coordinates (one row per feature) for knn:K")
    p.add_argument("--no-intercept", action="store_true")
    p.add_argument("--max-sweeps", type=int, default=10000)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--irls-max-iter", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output JSON path (stdout if omitted)")


def _add_adaptive_args(p) -> None:
    p.add_argument("--adaptive", action="store_true", help="two-step adaptive weights")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--init", default="ridge", help="ridge | ridge-structured | file:<path>")
    p.add_argument("--init-lambda2", type=float, default=1.0, help="ridge parameter of the initial fit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="senet", description="Structured elastic net")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit at fixed (lambda1, lambda2)")
    _add_data_args(p)
    p.add_argument("--lambda1", type=float, required=True)
    p.add_argument("--lambda2", type=float, default=0.0)
    p.add_argument("--weights", help="l1 weights, inline or file")
    _add_adaptive_args(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("path", help="lambda1 path at fixed lambda2")
    _add_data_args(p)
    p.add_argument("--lambda2", type=float, default=0.0)
    p.add_argument("--grid-size", type=int, default=50)
    p.add_argument("--min-ratio", type=float, default=1e-3)
    p.add_argument("--lambda1-grid", help="explicit decreasing lambda1 values")
    _add_adaptive_args(p)
    p.set_defaults(func=cmd_path)

    p = sub.add_parser("tune", help="K-fold cross-validation over (lambda1, lambda2)")
    _add_data_args(p)
    p.add_argument("--lambda2-grid", default="0.01,0.1,1,10,100")
    p.add_argument("--lambda1-grid")
    p.add_argument("--path-size", type=int, default=20)
    p.add_argument("--min-ratio", type=float, default=1e-3)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--criterion", default="deviance", choices=CRITERIA)
    p.add_argument("--rule", default="min", choices=RULES)
    _add_adaptive_args(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("simulate", help="benchmark scenarios")
    p.add_argument("--scenario", choices=SCENARIOS)
    p.add_argument("--config", help="SimSpec JSON")
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--noise-sd", type=float)
    p.add_argument("--methods", help="comma separated subset of methods")
    p.add_argument("--jobs", type=int, help=f"worker processes (default ${THREADS_ENV} or 1)")
    p.add_argument("--coef-csv", help="dump per-replicate coefficients")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("graph", help="build a graph and write it as JSON")
    p.add_argument("spec", help="path | grid:RxC | knn:K")
    p.add_argument("--p", type=int, help="number of vertices for path")
    p.add_argument("--coords")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("diagnose", help="KKT, irrepresentable, df and decorrelation checks")
    p.add_argument("--check", required=True, choices=("kkt", "irrepresentable", "df", "decorrelation"))
    p.add_argument("--fit", help="fit JSON written by 'senet fit'")
    p.add_argument("--data")
    p.add_argument("--graph")
    p.add_argument("--coords")
    p.add_argument("--family", choices=("gaussian", "binomial", "poisson"))
    p.add_argument("--dispersion", type=float)
    p.add_argument("--beta-star", help="true coefficients, inline or file")
    p.add_argument("--gram", help="C matrix file (defaults to X'X of the standardized data)")
    p.add_argument("--lambda2", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:  # SenetError and JSON errors are ValueErrors
        print(f"senet {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
