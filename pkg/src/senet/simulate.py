"""Synthetic data generators and the benchmark / consistency harness.

Noise parameters are standard deviations. The signal-regression defaults use
variance 5 for the response noise and variance 0.25 for the signal jitter, and
the surface scenario uses sd 0.25.
"""

from __future__ import annotations

import json
import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .adaptive import compute_weights
from .diagnostics import selection_metrics
from .errors import InvalidParameterError, SenetError
from .graph import PenaltyMatrix, build_grid, build_path, identity_penalty, laplacian_of
from .model import GAUSSIAN, Dataset, GlmFamily, standardize
from .solver import FitConfig, FitResult, fit, solve_path, solve_ridge

log = logging.getLogger(__name__)

METHODS = ("ridge", "gridge", "lasso", "enet", "senet", "ada_senet")
SPARSE_METHODS = ("lasso", "enet", "senet", "ada_senet")
SCENARIOS = ("bump", "block", "surface")
DEFAULT_LAMBDA2_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)
DEFAULT_RIDGE_GRID = tuple(float(v) for v in np.logspace(-3, 4, 29))
SIGNAL_NOISE_SD = math.sqrt(5.0)
SIGNAL_TAU_SD = 0.5
SURFACE_NOISE_SD = 0.25


def make_rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def signal_curve(b, m, T: int = 100) -> np.ndarray:
    """Noise-free signal ``sum_k b_k sin(t pi (5 - b_k) / 50 - m_k)`` for t = 1..T."""
    t = np.arange(1, T + 1)[:, None]
    b = np.asarray(b, dtype=float)[None, :]
    m = np.asarray(m, dtype=float)[None, :]
    return np.sum(b * np.sin(t * np.pi * (5.0 - b) / 50.0 - m), axis=1)


def gen_signals(n: int, T: int = 100, seed=None, tau_sd: float = SIGNAL_TAU_SD) -> np.ndarray:
    """``n`` random signals, each a sum of five sinusoids plus gaussian jitter."""
    rng = _as_rng(seed)
    b = rng.uniform(0.0, 5.0, size=(n, 5))
    m = rng.uniform(0.0, 2 * np.pi, size=(n, 5))
    t = np.arange(1, T + 1)[None, :, None]
    X = np.sum(b[:, None, :] * np.sin(t * np.pi * (5.0 - b[:, None, :]) / 50.0 - m[:, None, :]), axis=2)
    if tau_sd > 0:
        X = X + rng.normal(0.0, tau_sd, size=(n, T))
    return X


def beta_bump(T: int = 100) -> np.ndarray:
    if T != 100:
        raise InvalidParameterError("the bump coefficient function is defined for T = 100 only")
    beta = np.zeros(T)
    for t in range(21, 40):
        beta[t - 1] = -((30 - t) ** 2 + 100) / 200
    for t in range(61, 81):
        beta[t - 1] = ((70 - t) ** 2 - 100) / 200
    return beta


def beta_block() -> np.ndarray:
    return np.concatenate([
        np.zeros(20), np.full(10, 0.5), np.full(10, 1.0),
        np.full(10, 0.5), np.full(10, 0.25), np.zeros(40),
    ])


def _truncated_gaussian(t, u, ct, cu, M):
    dt, du = t - ct, u - cu
    q = M[0][0] * dt * dt + (M[0][1] + M[1][0]) * dt * du + M[1][1] * du * du
    return np.maximum(0.0, np.exp(-q) - 0.2)


def beta_surface() -> np.ndarray:
    """20 x 20 surface; entry ``[t-1, u-1]`` holds the value at ``(t, u)``."""
    t, u = np.meshgrid(np.arange(1, 21), np.arange(1, 21), indexing="ij")
    plateau = 0.5 * (np.isin(t, (10, 11, 12)) & np.isin(u, (3, 4)))
    g1 = _truncated_gaussian(t, u, 3, 8, ((3.0, 0.0), (0.0, 0.25)))
    g2 = _truncated_gaussian(t, u, 7, 17, ((0.75, 0.0), (0.0, 0.75)))
    g3 = _truncated_gaussian(t, u, 15, 14, ((0.5, -0.25), (-0.25, 0.5)))
    return plateau + g1 + g2 + g3


def surface_regions() -> dict[str, np.ndarray]:
    """Boolean masks (flattened row-major) for the plateau, the three bumps, and the rest."""
    t, u = np.meshgrid(np.arange(1, 21), np.arange(1, 21), indexing="ij")
    masks = {
        "B": np.isin(t, (10, 11, 12)) & np.isin(u, (3, 4)),
        "G1": _truncated_gaussian(t, u, 3, 8, ((3.0, 0.0), (0.0, 0.25))) > 0,
        "G2": _truncated_gaussian(t, u, 7, 17, ((0.75, 0.0), (0.0, 0.75))) > 0,
        "G3": _truncated_gaussian(t, u, 15, 14, ((0.5, -0.25), (-0.25, 0.5))) > 0,
    }
    rest = ~(masks["B"] | masks["G1"] | masks["G2"] | masks["G3"])
    masks["zero"] = rest
    return {k: v.ravel() for k, v in masks.items()}


def gen_response(design, beta_star, noise_sd: float, seed=None) -> np.ndarray:
    X = np.asarray(design, dtype=float)
    b = np.asarray(beta_star, dtype=float)
    if X.shape[1] != b.size:
        raise InvalidParameterError("design and coefficient dimensions differ")
    mean = X @ b
    if noise_sd == 0:
        return mean
    return mean + _as_rng(seed).normal(0.0, noise_sd, size=mean.shape)


@dataclass
class SimSpec:
    scenario: str = "bump"
    n_train: int = 200
    n_valid: int = 100
    n_test: int = 200
    noise_sd: float | None = None
    replicates: int = 10
    seed: int = 0
    methods: tuple[str, ...] | None = None
    lambda2_grid: tuple[float, ...] = DEFAULT_LAMBDA2_GRID
    ridge_grid: tuple[float, ...] = DEFAULT_RIDGE_GRID
    path_size: int = 50
    path_min_ratio: float = 1e-3
    standardize: bool = True
    ada_init: str | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise InvalidParameterError(f"unknown scenario {self.scenario!r}")
        for name in ("n_train", "n_valid", "n_test", "replicates"):
            if getattr(self, name) < 1:
                raise InvalidParameterError(f"{name} must be >= 1")
        if self.methods is None:
            # the elastic net is a rescaled lasso under the orthogonal surface design
            self.methods = tuple(m for m in METHODS if not (self.scenario == "surface" and m == "enet"))
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise InvalidParameterError(f"unknown methods {bad}")
        self.methods = tuple(self.methods)
        self.lambda2_grid = tuple(float(v) for v in self.lambda2_grid)
        self.ridge_grid = tuple(float(v) for v in self.ridge_grid)
        if self.noise_sd is None:
            self.noise_sd = SURFACE_NOISE_SD if self.scenario == "surface" else SIGNAL_NOISE_SD
        if self.noise_sd < 0:
            raise InvalidParameterError("noise_sd must be nonnegative")
        if self.ada_init is None:
            # plain ridge weights on an identity design reduce to the garrote
            self.ada_init = "ridge-structured" if self.scenario == "surface" else "ridge"
        if self.ada_init not in ("ridge", "ridge-structured"):
            raise InvalidParameterError(f"unknown adaptive initial estimator {self.ada_init!r}")

    @classmethod
    def from_json(cls, obj: dict) -> "SimSpec":
        known = cls.__dataclass_fields__
        unknown = set(obj) - set(known)
        if unknown:
            raise InvalidParameterError(f"unknown SimSpec fields {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def load(cls, path) -> "SimSpec":
        return cls.from_json(json.loads(Path(path).read_text()))

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class MethodSummary:
    n: int
    mean: dict[str, float | None]
    se: dict[str, float | None]


@dataclass
class BenchmarkReport:
    spec: dict
    summaries: dict[str, MethodSummary]
    records: list[dict]
    failures: list[dict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    elapsed: float = 0.0

    def to_json(self) -> dict:
        return {
            "spec": self.spec,
            "notes": self.notes,
            "summaries": {k: asdict(v) for k, v in self.summaries.items()},
            "records": self.records,
            "failures": self.failures,
            "elapsed_seconds": self.elapsed,
        }

    def table(self) -> str:
        pe_label = "PE x100" if self.spec["scenario"] == "surface" else "PE"
        scale = 100.0 if self.spec["scenario"] == "surface" else 1.0
        head = f"{'Method':<10} {'L1':>16} {pe_label:>16} {'Sensitivity':>16} {'Specificity':>16}"
        lines = [f"# scenario={self.spec['scenario']} replicates={self.spec['replicates']}"]
        lines += [f"# {n}" for n in self.notes]
        lines += [head, "-" * len(head)]
        for name, s in self.summaries.items():
            cells = []
            for key, k in (("l1", 1.0), ("pe", scale), ("sensitivity", 1.0), ("specificity", 1.0)):
                m, e = s.mean.get(key), s.se.get(key)
                cells.append("" if m is None else f"{m * k:.4g} ({e * k:.2g})")
            lines.append(f"{name:<10} " + " ".join(f"{c:>16}" for c in cells))
        return "\n".join(lines)


@dataclass
class _Split:
    train: Dataset
    X_valid: np.ndarray
    y_valid: np.ndarray
    X_test: np.ndarray | None
    y_test: np.ndarray | None
    beta_star: np.ndarray
    penalty: PenaltyMatrix
    fit_intercept: bool


def _make_split(spec: SimSpec, replicate: int) -> _Split:
    rng = make_rng(spec.seed, replicate)
    if spec.scenario == "surface":
        beta_star = beta_surface().ravel()
        p = beta_star.size
        X = np.eye(p)
        y_train = gen_response(X, beta_star, spec.noise_sd, rng)
        y_valid = gen_response(X, beta_star, spec.noise_sd, rng)
        return _Split(Dataset(X, y_train), X, y_valid, None, None, beta_star,
                      laplacian_of(build_grid(20, 20)), fit_intercept=False)
    beta_star = beta_bump() if spec.scenario == "bump" else beta_block()
    n = spec.n_train + spec.n_valid + spec.n_test
    X = gen_signals(n, beta_star.size, rng)
    y = gen_response(X, beta_star, spec.noise_sd, rng)
    a, b = spec.n_train, spec.n_train + spec.n_valid
    train = Dataset(X[:a], y[:a])
    if spec.standardize:
        train = standardize(train, center_response=True)
    return _Split(train, X[a:b], y[a:b], X[b:], y[b:], beta_star,
                  laplacian_of(build_path(beta_star.size)), fit_intercept=True)


def _val_error(split: _Split, beta0_raw: float, beta_raw) -> float:
    pred = beta0_raw + split.X_valid @ beta_raw
    return float(np.mean((split.y_valid - pred) ** 2))


def _best_on_path(split: _Split, lam: PenaltyMatrix, lambda2: float, spec: SimSpec,
                  weights=None) -> tuple[float, FitResult]:
    cfg = FitConfig(lambda2=lambda2, fit_intercept=split.fit_intercept,
                    weights=None if weights is None else tuple(weights))
    path = solve_path(split.train, GAUSSIAN, lam, lambda2, spec.path_size, cfg, spec.path_min_ratio)
    best = None
    for res in path.results:
        err = _val_error(split, res.beta0_raw, res.beta_raw)
        # ties go to the larger lambda1, which comes first on the path
        if best is None or err < best[0]:
            best = (err, res)
    return best


def _tune_ridge(split: _Split, lam: PenaltyMatrix | None, spec: SimSpec) -> tuple[float, FitResult]:
    best = None
    for l2 in spec.ridge_grid:
        res = solve_ridge(split.train, lam, l2, split.fit_intercept)
        err = _val_error(split, res.beta0_raw, res.beta_raw)
        if best is None or err < best[0]:
            best = (err, res)
    return best


def _tune_two(split: _Split, lam: PenaltyMatrix, grid, spec: SimSpec, weights=None):
    best = None
    for l2 in grid:
        cand = _best_on_path(split, lam, l2, spec, weights)
        if best is None or cand[0] < best[0]:
            best = cand
    return best


def _fit_method(method: str, split: _Split, spec: SimSpec, cache: dict) -> FitResult:
    p = split.beta_star.size
    ident = identity_penalty(p)
    if method == "ridge" or (method == "ada_senet" and spec.ada_init == "ridge" and "ridge" not in cache):
        cache["ridge"] = _tune_ridge(split, None, spec)[1]
    if method == "gridge" or (method == "ada_senet" and spec.ada_init == "ridge-structured"
                              and "gridge" not in cache):
        cache["gridge"] = _tune_ridge(split, split.penalty, spec)[1]
    if method == "ridge":
        return cache["ridge"]
    if method == "gridge":
        return cache["gridge"]
    if method == "lasso":
        return _best_on_path(split, ident, 0.0, spec)[1]
    if method == "enet":
        return _tune_two(split, ident, spec.lambda2_grid, spec)[1]
    if method == "senet":
        return _tune_two(split, split.penalty, spec.lambda2_grid, spec)[1]
    if method == "ada_senet":
        init = cache["ridge" if spec.ada_init == "ridge" else "gridge"]
        weights = compute_weights(init.beta, 1.0)
        res = _tune_two(split, split.penalty, spec.lambda2_grid, spec, weights)[1]
        res.meta.update(adaptive=True, init=spec.ada_init, init_lambda2=init.lambda2)
        return res
    raise InvalidParameterError(f"unknown method {method!r}")


def _evaluate(method: str, res: FitResult, split: _Split) -> dict:
    sel = selection_metrics(res.beta_raw, split.beta_star)
    if split.X_test is None:
        pe = float(np.mean((res.beta_raw - split.beta_star) ** 2))
    else:
        pred = res.beta0_raw + split.X_test @ res.beta_raw
        pe = float(np.mean((split.y_test - pred) ** 2))
    sparse = method in SPARSE_METHODS
    return {
        "l1": sel.l1_error,
        "pe": pe,
        "sensitivity": sel.sensitivity if sparse else None,
        "specificity": sel.specificity if sparse else None,
        "n_selected": sel.n_selected,
        "lambda1": res.lambda1,
        "lambda2": res.lambda2,
        "converged": res.converged,
        "kkt_residual": res.kkt_residual,
    }


def run_replicate(spec: SimSpec, replicate: int, keep_coefficients: bool = False) -> tuple[list[dict], list[dict]]:
    split = _make_split(spec, replicate)
    records, failures = [], []
    cache: dict = {}
    for method in spec.methods:
        try:
            res = _fit_method(method, split, spec, cache)
        except SenetError as exc:
            failures.append({"replicate": replicate, "method": method, "error": str(exc)})
            warnings.warn(f"{method} failed in replicate {replicate}: {exc}", RuntimeWarning)
            continue
        rec = {"replicate": replicate, "method": method, **_evaluate(method, res, split)}
        if keep_coefficients:
            rec["beta_raw"] = res.beta_raw.tolist()
        records.append(rec)
    return records, failures


def _summarize(records: list[dict], methods: Sequence[str]) -> dict[str, MethodSummary]:
    out = {}
    for m in methods:
        rows = [r for r in records if r["method"] == m]
        mean, se = {}, {}
        for key in ("l1", "pe", "sensitivity", "specificity"):
            vals = np.array([r[key] for r in rows if r[key] is not None], dtype=float)
            if vals.size == 0:
                mean[key] = se[key] = None
                continue
            mean[key] = float(vals.mean())
            se[key] = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
        out[m] = MethodSummary(len(rows), mean, se)
    return out


def run_benchmark(spec: SimSpec, keep_coefficients: bool = False, n_jobs: int = 1) -> BenchmarkReport:
    """Replicate the tuning/evaluation protocol and aggregate per method.

    Each replicate draws its data from ``SeedSequence([seed, replicate])``, so
    results do not depend on ``n_jobs``.
    """
    start = time.perf_counter()
    methods = list(spec.methods)
    notes_extra = [f"ada_senet weights from the validation-tuned {spec.ada_init} fit, gamma = 1"]
    if spec.scenario == "surface" and "enet" in methods:
        notes_extra.append("enet coincides with scaled lasso under the orthogonal surface design")
    if n_jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(n_jobs) as pool:
            parts = list(pool.map(run_replicate, [spec] * spec.replicates,
                                  range(spec.replicates), [keep_coefficients] * spec.replicates))
    else:
        parts = [run_replicate(spec, r, keep_coefficients) for r in range(spec.replicates)]
    records = [r for recs, _ in parts for r in recs]
    failures = [f for _, fails in parts for f in fails]
    notes = [
        "methods limited to implemented estimators (no fused lasso, P-splines)",
        f"noise sd {spec.noise_sd:.6g}; lambda2 grid {list(spec.lambda2_grid)}; "
        f"ridge grid {len(spec.ridge_grid)} log-spaced values in "
        f"[{min(spec.ridge_grid):g}, {max(spec.ridge_grid):g}]; lambda1 path {spec.path_size} points",
        "L1 is the mean absolute coefficient error; hyperparameters chosen on the validation set",
        *notes_extra,
    ]
    return BenchmarkReport(
        spec=spec.to_json(),
        summaries=_summarize(records, methods),
        records=records,
        failures=failures,
        notes=notes,
        elapsed=time.perf_counter() - start,
    )


def write_coefficients_csv(report: BenchmarkReport, path) -> None:
    rows = [r for r in report.records if "beta_raw" in r]
    with Path(path).open("w") as fh:
        for r in rows:
            fh.write(",".join([str(r["replicate"]), r["method"], *(repr(v) for v in r["beta_raw"])]) + "\n")


# --- consistency Monte Carlo -------------------------------------------------

Rate = Callable[[int], float] | tuple[float, float]


def _rate(rule: Rate, n: int) -> float:
    if callable(rule):
        return float(rule(n))
    coef, power = rule
    return float(coef) * float(n) ** float(power)


def _draw_response(fam: GlmFamily, f, rng, noise_sd: float):
    if fam.name == "gaussian":
        return f + rng.normal(0.0, noise_sd, size=f.shape)
    if fam.name == "binomial":
        return (rng.random(f.shape) < fam.mean(f)).astype(float)
    return rng.poisson(fam.mean(f)).astype(float)


@dataclass
class ConsistencyRow:
    n: int
    lambda1: float
    lambda2: float
    median_error: float
    sqrt_n_median_error: float
    false_selection_plain: float
    false_selection_adaptive: float
    missed_adaptive: float
    bias_adaptive: list[float]
    median_error_adaptive: float


@dataclass
class ConsistencyReport:
    rows: list[ConsistencyRow]
    sqrt_n_bounded: bool
    adaptive_fs_decreasing: bool
    adaptive_fs_below_5pct: bool
    settings: dict

    def to_json(self) -> dict:
        return {
            "rows": [asdict(r) for r in self.rows],
            "sqrt_n_bounded": self.sqrt_n_bounded,
            "adaptive_fs_decreasing": self.adaptive_fs_decreasing,
            "adaptive_fs_below_5pct": self.adaptive_fs_below_5pct,
            "settings": self.settings,
        }


def verify_consistency(family: GlmFamily, beta_star, C_target, lam: PenaltyMatrix,
                       n_grid: Sequence[int], replicates: int,
                       rates: tuple[Rate, Rate],
                       seed: int = 0,
                       adaptive_rate: Rate | None = None,
                       init_rate: Rate = (1.0, 0.0),
                       noise_sd: float = 1.0,
                       sqrt_n_factor: float = 3.0) -> ConsistencyReport:
    """Monte Carlo check of root-n consistency and adaptive selection consistency.

    Designs have rows ``N(0, C_target)``; fits use no intercept and no
    standardization, so ``X'X / n`` tends to ``C_target``. ``rates`` gives the
    plain estimator's ``(lambda1_n, lambda2_n)``; the adaptive estimator uses
    ``adaptive_rate`` for lambda1 (default: the plain lambda1 rule) and a ridge
    initial estimator with parameter ``init_rate``.
    """
    beta_star = np.asarray(beta_star, dtype=float)
    C = np.asarray(C_target, dtype=float)
    p = beta_star.size
    try:
        chol = np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        raise InvalidParameterError("C_target must be strictly positive definite") from None
    if np.linalg.eigvalsh(C)[0] <= 0:
        raise InvalidParameterError("C_target must be strictly positive definite")
    A = beta_star != 0
    l1_rule, l2_rule = rates
    ada_rule = adaptive_rate if adaptive_rate is not None else l1_rule
    ident = identity_penalty(p)
    rows = []
    for n in n_grid:
        l1, l2 = _rate(l1_rule, n), _rate(l2_rule, n)
        l1a, l2i = _rate(ada_rule, n), _rate(init_rate, n)
        errs, errs_a, fs, fs_a, miss_a, bA = [], [], [], [], [], []
        for r in range(replicates):
            rng = make_rng(seed, n, r)
            X = rng.normal(size=(n, p)) @ chol.T
            y = _draw_response(family, X @ beta_star, rng, noise_sd)
            data = Dataset(X, y)
            cfg = FitConfig(lambda1=l1, lambda2=l2, fit_intercept=False)
            plain = fit(data, family, lam, cfg)
            if family.name == "gaussian":
                init = solve_ridge(data, ident, l2i, fit_intercept=False).beta
            else:
                init = fit(data, family, ident, FitConfig(lambda2=max(l2i, 1e-8), fit_intercept=False)).beta
            w = compute_weights(init, 1.0)
            ada = fit(data, family, lam, FitConfig(lambda1=l1a, lambda2=l2, weights=tuple(w),
                                                   fit_intercept=False))
            errs.append(np.linalg.norm(plain.beta - beta_star))
            errs_a.append(np.linalg.norm(ada.beta - beta_star))
            fs.append(bool(np.any(plain.beta[~A] != 0)))
            fs_a.append(bool(np.any(ada.beta[~A] != 0)))
            miss_a.append(bool(np.any(ada.beta[A] == 0)))
            bA.append(ada.beta[A] - beta_star[A])
        med = float(np.median(errs))
        rows.append(ConsistencyRow(
            n=int(n), lambda1=l1, lambda2=l2,
            median_error=med, sqrt_n_median_error=math.sqrt(n) * med,
            false_selection_plain=float(np.mean(fs)),
            false_selection_adaptive=float(np.mean(fs_a)),
            missed_adaptive=float(np.mean(miss_a)),
            bias_adaptive=np.mean(bA, axis=0).tolist(),
            median_error_adaptive=float(np.median(errs_a)),
        ))
    scaled = [r.sqrt_n_median_error for r in rows]
    bounded = max(scaled) <= sqrt_n_factor * min(scaled) if min(scaled) > 0 else False
    fsa = [r.false_selection_adaptive for r in rows]
    decreasing = fsa[-1] <= fsa[0] and (fsa[0] == 0 or fsa[-1] < fsa[0])
    return ConsistencyReport(
        rows=rows,
        sqrt_n_bounded=bool(bounded),
        adaptive_fs_decreasing=bool(decreasing),
        adaptive_fs_below_5pct=bool(fsa[-1] < 0.05),
        settings={
            "family": family.name, "p": p, "replicates": replicates, "seed": seed,
            "n_grid": [int(v) for v in n_grid], "noise_sd": noise_sd,
        },
    )
