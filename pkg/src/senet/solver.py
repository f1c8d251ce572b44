"""Structured elastic net estimation.

All fits minimize the penalized deviance

    sum_i dev(y_i, f_i) + lambda1 * sum_j w_j |beta_j| + lambda2 * beta' L beta,

where ``dev = 2 (b(f) - y f) / phi`` up to a constant. For the gaussian family
with ``phi = 1`` this is ``||y - beta0 - X beta||^2`` plus the penalty, so the
coordinate soft-threshold level is ``lambda1 * w_j / 2``.

The quadratic part is handled as a lasso on augmented data (``X`` stacked over
``sqrt(lambda2) Q``); the coordinate descent kernel works on its Gram matrix.
Non-gaussian families wrap that in an IRLS loop.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import sparse

from ._cd import coordinate_descent, coordinate_descent_sparse
from .errors import (
    InvalidDimensionError,
    InvalidParameterError,
    NonUniqueSolutionError,
    SingularSystemError,
    SizeLimitError,
)
from .graph import PenaltyMatrix, identity_penalty
from .model import GAUSSIAN, Dataset, GlmFamily, get_family, irls_working_quantities, unit_deviance

log = logging.getLogger(__name__)

KKT_TOL_GAUSSIAN = 1e-6
KKT_TOL_GLM = 1e-5
SEPARATION_NORM = 1e6
ORACLE_MAX_P = 8
_REFINEMENTS = 6


@dataclass(frozen=True)
class FitConfig:
    lambda1: float = 0.0
    lambda2: float = 0.0
    weights: tuple[float, ...] | None = None
    max_sweeps: int = 10000
    tol: float = 1e-8
    irls_max_iter: int = 50
    irls_tol: float = 1e-8
    fit_intercept: bool = True
    kkt_tol: float | None = None

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise InvalidParameterError("lambda1 and lambda2 must be nonnegative")
        if self.tol <= 0 or self.irls_tol <= 0:
            raise InvalidParameterError("tolerances must be positive")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise InvalidParameterError("l1 weights must be finite and positive")
            object.__setattr__(self, "weights", tuple(float(v) for v in w))

    def weight_vector(self, p: int) -> np.ndarray:
        if self.weights is None:
            return np.ones(p)
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (p,):
            raise InvalidDimensionError(f"got {w.size} l1 weights for p={p}")
        return w

    def kkt_tolerance(self, fam: GlmFamily) -> float:
        if self.kkt_tol is not None:
            return self.kkt_tol
        return KKT_TOL_GAUSSIAN if fam.name == "gaussian" else KKT_TOL_GLM


@dataclass
class FitResult:
    """Estimated coefficients on the fitting scale plus a raw-scale mirror."""

    beta0: float
    beta: np.ndarray
    beta0_raw: float
    beta_raw: np.ndarray
    objective: float
    kkt_residual: float
    converged: bool
    lambda1: float
    lambda2: float
    weights: np.ndarray
    family: str = "gaussian"
    dispersion: float = 1.0
    fit_intercept: bool = True
    sweeps_used: int = 0
    irls_iters: int = 0
    log: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def active_set(self) -> tuple[int, ...]:
        return tuple(int(j) for j in np.flatnonzero(self.beta))

    def to_json(self) -> dict:
        return {
            "beta0": self.beta0,
            "beta": [float(v) for v in self.beta],
            "beta0_raw": self.beta0_raw,
            "beta_raw": [float(v) for v in self.beta_raw],
            "active_set": list(self.active_set),
            "objective": self.objective,
            "kkt_residual": self.kkt_residual,
            "converged": self.converged,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "weights": [float(v) for v in self.weights],
            "family": self.family,
            "dispersion": self.dispersion,
            "fit_intercept": self.fit_intercept,
            "sweeps_used": self.sweeps_used,
            "irls_iters": self.irls_iters,
            "log": list(self.log),
            "meta": _jsonable(self.meta),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FitResult":
        return cls(
            beta0=float(obj["beta0"]),
            beta=np.asarray(obj["beta"], dtype=float),
            beta0_raw=float(obj["beta0_raw"]),
            beta_raw=np.asarray(obj["beta_raw"], dtype=float),
            objective=float(obj["objective"]),
            kkt_residual=float(obj["kkt_residual"]),
            converged=bool(obj["converged"]),
            lambda1=float(obj["lambda1"]),
            lambda2=float(obj["lambda2"]),
            weights=np.asarray(obj["weights"], dtype=float),
            family=obj.get("family", "gaussian"),
            dispersion=float(obj.get("dispersion", 1.0)),
            fit_intercept=bool(obj.get("fit_intercept", True)),
            sweeps_used=int(obj.get("sweeps_used", 0)),
            irls_iters=int(obj.get("irls_iters", 0)),
            log=list(obj.get("log", [])),
            meta=dict(obj.get("meta", {})),
        )

    def config(self) -> FitConfig:
        return FitConfig(
            lambda1=self.lambda1,
            lambda2=self.lambda2,
            weights=tuple(self.weights),
            fit_intercept=self.fit_intercept,
        )


@dataclass
class CoefPath:
    lambda2: float
    lambda1_grid: np.ndarray
    results: list[FitResult]
    warm_start: str = "previous grid point"

    def to_json(self) -> dict:
        return {
            "lambda2": self.lambda2,
            "lambda1_grid": [float(v) for v in self.lambda1_grid],
            "warm_start": self.warm_start,
            "results": [r.to_json() for r in self.results],
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _check_dims(data: Dataset, lam: PenaltyMatrix) -> None:
    if lam.dim != data.p:
        raise InvalidDimensionError(f"penalty has dimension {lam.dim} but data has p={data.p}")


def augment_data(data: Dataset, lam: PenaltyMatrix, lambda2: float):
    """Stack ``sqrt(lambda2) Q`` under ``X`` and zeros under ``y``."""
    _check_dims(data, lam)
    if lambda2 < 0:
        raise InvalidParameterError("lambda2 must be nonnegative")
    X_aug = np.vstack([data.X, np.sqrt(lambda2) * lam.factor])
    y_aug = np.concatenate([data.y, np.zeros(lam.rank)])
    return X_aug, y_aug


def penalized_objective(fam: GlmFamily, data: Dataset, lam: PenaltyMatrix, cfg: FitConfig,
                        beta0: float, beta) -> float:
    beta = np.asarray(beta, dtype=float)
    f = beta0 + data.X @ beta
    w = cfg.weight_vector(data.p)
    return float(
        np.sum(unit_deviance(fam, data.y, f))
        + cfg.lambda1 * np.sum(w * np.abs(beta))
        + cfg.lambda2 * beta @ lam.lambda_matrix @ beta
    )


def _kkt_from_gradient(grad, beta, thresh2, intercept_grad=0.0) -> float:
    """Max violation of the stationarity system; ``thresh2 = lambda1 * w``."""
    nz = beta != 0
    viol = np.where(
        nz,
        np.abs(grad + thresh2 * np.sign(beta)),
        np.maximum(np.abs(grad) - thresh2, 0.0),
    )
    out = float(viol.max()) if viol.size else 0.0
    return max(out, abs(float(intercept_grad)))


def _true_kkt(fam, data, lam, cfg, beta0, beta) -> float:
    f = beta0 + data.X @ beta
    r = data.y - fam.mean(f)
    grad = -2.0 / fam.dispersion * (data.X.T @ r) + 2.0 * cfg.lambda2 * (lam.lambda_matrix @ beta)
    ig = 2.0 / fam.dispersion * r.sum() if cfg.fit_intercept else 0.0
    return _kkt_from_gradient(grad, beta, cfg.lambda1 * cfg.weight_vector(data.p), ig)


def _weighted_gram(X, w, z, lam, lambda2, fit_intercept):
    """Gram form of the weighted augmented least-squares problem.

    With an intercept the data rows are centered with weights ``w``; the
    intercept is then ``zbar - xbar @ beta``.
    """
    if fit_intercept:
        sw = w.sum()
        xbar = (w @ X) / sw
        zbar = float(w @ z / sw)
    else:
        xbar = np.zeros(X.shape[1])
        zbar = 0.0
    Xc = X - xbar
    G = Xc.T @ (w[:, None] * Xc) + lambda2 * lam.lambda_matrix
    b = Xc.T @ (w * (z - zbar))
    return np.ascontiguousarray(G), b, xbar, zbar


SPARSE_MIN_DIM = 64
SPARSE_MAX_DENSITY = 0.1
POLISH_MAX_ACTIVE = 2000


def _run_cd(G, b, thresh, beta, cfg: FitConfig, tol=None):
    beta = np.ascontiguousarray(beta, dtype=float)
    tol = cfg.tol if tol is None else tol
    p = G.shape[0]
    nnz = np.count_nonzero(G) if p >= SPARSE_MIN_DIM else p * p
    if nnz <= SPARSE_MAX_DENSITY * p * p:
        S = sparse.csr_matrix(G)
        sweeps, ok = coordinate_descent_sparse(S.indptr.astype(np.int64), S.indices.astype(np.int64),
                                               S.data, np.ascontiguousarray(np.diag(G)), b, thresh,
                                               beta, cfg.max_sweeps, tol)
    else:
        sweeps, ok = coordinate_descent(G, b, thresh, beta, cfg.max_sweeps, tol)
    if ok:
        beta = _polish(G, b, thresh, beta)
    return beta, int(sweeps), bool(ok)


def _polish(G, b, thresh, beta):
    # Solve the stationarity equations on the active set exactly; CD stalls to
    # within its step tolerance along weakly curved directions.
    A = np.flatnonzero(beta)
    if A.size == 0 or A.size > POLISH_MAX_ACTIVE:
        return beta
    sA = np.sign(beta[A])
    try:
        bA = np.linalg.solve(G[np.ix_(A, A)], b[A] - thresh[A] * sA)
    except np.linalg.LinAlgError:
        return beta
    if not np.all(np.isfinite(bA)) or np.any(np.sign(bA) != sA):
        return beta
    cand = np.zeros_like(beta)
    cand[A] = bA
    if _quadratic_kkt(G, b, cand, thresh) <= _quadratic_kkt(G, b, beta, thresh):
        return cand
    return beta


def _quadratic_kkt(G, b, beta, thresh):
    grad = 2.0 * (G @ beta - b)
    return _kkt_from_gradient(grad, beta, 2.0 * thresh)


def _check_unique(G: np.ndarray, cfg: FitConfig) -> None:
    if cfg.lambda1 == 0 and np.linalg.matrix_rank(G) < G.shape[0]:
        raise NonUniqueSolutionError(
            "lambda1 = 0 and the augmented design is rank deficient; the minimizer is not unique"
        )


def _result(data, fam, lam, cfg, beta0, beta, kkt, converged, sweeps, irls_iters, notes, meta=None):
    beta = np.where(beta == 0, 0.0, beta)
    b0_raw, b_raw = data.to_raw_coefficients(beta0, beta)
    return FitResult(
        beta0=float(beta0),
        beta=beta,
        beta0_raw=b0_raw,
        beta_raw=b_raw,
        objective=penalized_objective(fam, data, lam, cfg, beta0, beta),
        kkt_residual=float(kkt),
        converged=bool(converged),
        lambda1=cfg.lambda1,
        lambda2=cfg.lambda2,
        weights=cfg.weight_vector(data.p).copy(),
        family=fam.name,
        dispersion=fam.dispersion,
        fit_intercept=cfg.fit_intercept,
        sweeps_used=sweeps,
        irls_iters=irls_iters,
        log=notes,
        meta=meta or {},
    )


def solve_gaussian(data: Dataset, lam: PenaltyMatrix, cfg: FitConfig, beta_init=None,
                   fam: GlmFamily = GAUSSIAN) -> FitResult:
    """Squared-error structured elastic net by coordinate descent on augmented data."""
    _check_dims(data, lam)
    if fam.name != "gaussian":
        raise InvalidParameterError("solve_gaussian needs the gaussian family")
    p = data.p
    w = np.full(data.n, 1.0 / fam.dispersion)
    G, b, xbar, ybar = _weighted_gram(data.X, w, data.y, lam, cfg.lambda2, cfg.fit_intercept)
    _check_unique(G, cfg)
    thresh = 0.5 * cfg.lambda1 * cfg.weight_vector(p)
    beta = np.zeros(p) if beta_init is None else np.array(beta_init, dtype=float)
    beta, sweeps, ok = _run_cd(G, b, thresh, beta, cfg)
    tol_kkt = cfg.kkt_tolerance(fam)
    kkt = _quadratic_kkt(G, b, beta, thresh)
    tol = cfg.tol
    for _ in range(_REFINEMENTS):
        if kkt <= tol_kkt or sweeps >= cfg.max_sweeps:
            break
        tol /= 100.0
        beta, more, ok = _run_cd(G, b, thresh, beta, replace(cfg, max_sweeps=cfg.max_sweeps - sweeps), tol)
        sweeps += more
        kkt = _quadratic_kkt(G, b, beta, thresh)
    beta0 = ybar - xbar @ beta if cfg.fit_intercept else 0.0
    kkt = _true_kkt(fam, data, lam, cfg, beta0, beta)
    notes = [] if ok else [f"coordinate descent stopped after {sweeps} sweeps"]
    return _result(data, fam, lam, cfg, beta0, beta, kkt, ok and kkt <= tol_kkt, sweeps, 1, notes)


def _null_intercept(fam: GlmFamily, y, notes) -> float:
    ybar = float(np.mean(y))
    if fam.name == "binomial":
        if ybar <= 0.0 or ybar >= 1.0:
            notes.append("response is constant; intercept clamped")
        ybar = min(max(ybar, 1e-10), 1 - 1e-10)
    elif fam.name == "poisson" and ybar <= 0:
        notes.append("all-zero poisson response; intercept clamped")
        ybar = 1e-10
    return float(fam.link(ybar))


def solve_glm(data: Dataset, fam: GlmFamily, lam: PenaltyMatrix, cfg: FitConfig,
              beta_init=None, beta0_init: float | None = None) -> FitResult:
    """IRLS outer loop around the weighted augmented coordinate descent solve."""
    _check_dims(data, lam)
    fam.check_response(data.y)
    p = data.p
    notes: list[str] = []
    thresh = 0.5 * cfg.lambda1 * cfg.weight_vector(p)
    beta = np.zeros(p) if beta_init is None else np.array(beta_init, dtype=float)
    if beta0_init is not None:
        beta0 = float(beta0_init)
    elif cfg.fit_intercept:
        beta0 = _null_intercept(fam, data.y, notes)
    else:
        beta0 = 0.0
    obj = penalized_objective(fam, data, lam, cfg, beta0, beta)
    tol_kkt = cfg.kkt_tolerance(fam)
    cd_tol = cfg.tol
    sweeps_total = 0
    rises = 0
    converged = False
    it = 0
    separated = False
    for it in range(1, cfg.irls_max_iter + 1):
        w, z, floored = irls_working_quantities(fam, beta0, beta, data)
        if floored.any():
            notes.append(f"iter {it}: {int(floored.sum())} IRLS weights floored")
        if fam.dispersion != 1.0:
            # Newton step on the deviance scale needs z - f = (y - mu) / b''
            f = beta0 + data.X @ beta
            z = f + (z - f) / fam.dispersion
        G, b, xbar, zbar = _weighted_gram(data.X, w, z, lam, cfg.lambda2, cfg.fit_intercept)
        new_beta, sweeps, _ = _run_cd(G, b, thresh, beta.copy(), cfg, cd_tol)
        sweeps_total += sweeps
        new_beta0 = zbar - xbar @ new_beta if cfg.fit_intercept else 0.0
        new_obj = penalized_objective(fam, data, lam, cfg, new_beta0, new_beta)
        if new_obj > obj * (1 + 1e-12) + 1e-12:
            rises += 1
            step = 1.0
            for _ in range(30):
                step *= 0.5
                tb = beta + step * (new_beta - beta)
                tb0 = beta0 + step * (new_beta0 - beta0)
                tobj = penalized_objective(fam, data, lam, cfg, tb0, tb)
                if tobj <= obj:
                    break
            new_beta, new_beta0, new_obj = tb, tb0, tobj
            notes.append(f"iter {it}: step halving applied")
        else:
            rises = 0
        delta = abs(new_obj - obj) / (abs(new_obj) + 0.1)
        beta, beta0, obj = new_beta, float(new_beta0), new_obj
        if np.linalg.norm(beta) > SEPARATION_NORM:
            separated = True
            notes.append(f"iter {it}: coefficient norm exceeds {SEPARATION_NORM:g}; possible separation")
            break
        if rises >= 3:
            notes.append("IRLS diverging")
            break
        if delta < cfg.irls_tol:
            kkt = _true_kkt(fam, data, lam, cfg, beta0, beta)
            if kkt <= tol_kkt:
                converged = True
                break
            cd_tol = max(cd_tol / 100.0, 1e-20)
    kkt = _true_kkt(fam, data, lam, cfg, beta0, beta)
    converged = converged and kkt <= tol_kkt and not separated
    if not converged:
        notes.append(f"not converged after {it} IRLS iterations (kkt {kkt:.3g})")
    meta = {"separation": True} if separated else {}
    return _result(data, fam, lam, cfg, beta0, beta, kkt, converged, sweeps_total, it, notes, meta)


def fit(data: Dataset, fam: GlmFamily, lam: PenaltyMatrix, cfg: FitConfig,
        beta_init=None, beta0_init=None) -> FitResult:
    """Dispatch: closed-form-quadratic gaussian path, IRLS otherwise."""
    if fam.name == "gaussian":
        return solve_gaussian(data, lam, cfg, beta_init, fam=fam)
    return solve_glm(data, fam, lam, cfg, beta_init, beta0_init)


def lambda1_max(data: Dataset, fam: GlmFamily, weights=None, fit_intercept: bool = True) -> float:
    """Smallest lambda1 whose solution has every penalized coefficient at zero."""
    w = np.ones(data.p) if weights is None else np.asarray(weights, dtype=float)
    if fit_intercept:
        mu0 = fam.mean(_null_intercept(fam, data.y, []))
    else:
        mu0 = fam.mean(0.0)
    grad = 2.0 / fam.dispersion * np.abs(data.X.T @ (data.y - mu0))
    return float(np.max(grad / w)) * (1 + 1e-12)


def solve_path(data: Dataset, fam: GlmFamily, lam: PenaltyMatrix, lambda2: float,
               grid_size: int = 50, cfg: FitConfig | None = None,
               min_ratio: float = 1e-3, lambda1_grid=None) -> CoefPath:
    """Warm-started fits on a log-spaced lambda1 grid from lambda1_max down.

    An explicit strictly decreasing ``lambda1_grid`` overrides ``grid_size``
    and ``min_ratio`` (cross-validation uses one grid for every fold).
    """
    cfg = replace(cfg or FitConfig(), lambda2=lambda2)
    if lambda1_grid is not None:
        grid = np.asarray(lambda1_grid, dtype=float)
        if grid.ndim != 1 or grid.size == 0 or np.any(grid < 0) or np.any(np.diff(grid) >= 0):
            raise InvalidParameterError("lambda1_grid must be a nonempty strictly decreasing nonnegative sequence")
    else:
        if grid_size < 2:
            raise InvalidParameterError("grid_size must be >= 2")
        lmax = lambda1_max(data, fam, cfg.weight_vector(data.p), cfg.fit_intercept)
        if lmax <= 0:
            lmax = 1e-10
        grid = np.geomspace(lmax, lmax * min_ratio, grid_size)
    results = []
    beta, beta0 = None, None
    for l1 in grid:
        res = fit(data, fam, lam, replace(cfg, lambda1=float(l1)), beta, beta0)
        results.append(res)
        beta, beta0 = res.beta, res.beta0
    return CoefPath(lambda2=lambda2, lambda1_grid=grid, results=results)


def solve_ridge(data: Dataset, lam: PenaltyMatrix | None, lambda2: float,
                fit_intercept: bool = True) -> FitResult:
    """Closed form ``(X'X + lambda2 L)^-1 X'y`` (identity ``L`` when ``lam`` is None)."""
    lam = identity_penalty(data.p) if lam is None else lam
    _check_dims(data, lam)
    if lambda2 < 0:
        raise InvalidParameterError("lambda2 must be nonnegative")
    w = np.ones(data.n)
    G, b, xbar, ybar = _weighted_gram(data.X, w, data.y, lam, lambda2, fit_intercept)
    evals = np.linalg.eigvalsh(G)
    if evals[0] <= 1e-12 * max(evals[-1], 1.0):
        raise SingularSystemError("ridge system is singular")
    chol = np.linalg.cholesky(G)
    beta = np.linalg.solve(chol.T, np.linalg.solve(chol, b))
    beta0 = ybar - xbar @ beta if fit_intercept else 0.0
    cfg = FitConfig(lambda1=0.0, lambda2=lambda2, fit_intercept=fit_intercept)
    kkt = _true_kkt(GAUSSIAN, data, lam, cfg, beta0, beta)
    return _result(data, GAUSSIAN, lam, cfg, beta0, beta, kkt, True, 0, 0, [], {"method": "ridge"})


def brute_force_oracle(data: Dataset, lam: PenaltyMatrix, cfg: FitConfig) -> FitResult:
    """Exact gaussian solution by enumerating all 3^p sign patterns.

    Each pattern fixes the active set and the subgradient on it, which turns
    stationarity into a linear system; a candidate is kept when its signs agree
    with the pattern and the zero coordinates satisfy the subgradient bound.
    """
    _check_dims(data, lam)
    p = data.p
    if p > ORACLE_MAX_P:
        raise SizeLimitError(f"oracle supports p <= {ORACLE_MAX_P}, got {p}")
    X = data.X
    y = data.y
    if cfg.fit_intercept:
        xbar, ybar = X.mean(axis=0), float(y.mean())
    else:
        xbar, ybar = np.zeros(p), 0.0
    Xc, yc = X - xbar, y - ybar
    G = Xc.T @ Xc + cfg.lambda2 * lam.lambda_matrix
    b = Xc.T @ yc
    t = 0.5 * cfg.lambda1 * cfg.weight_vector(p)
    best, best_obj = None, np.inf
    for pattern in itertools.product((-1, 0, 1), repeat=p):
        s = np.array(pattern, dtype=float)
        S = np.flatnonzero(s)
        beta = np.zeros(p)
        if S.size:
            A = G[np.ix_(S, S)]
            rhs = b[S] - t[S] * s[S]
            try:
                sol = np.linalg.solve(A, rhs)
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(A, rhs, rcond=None)[0]
                if np.linalg.norm(A @ sol - rhs) > 1e-9 * (1 + np.linalg.norm(rhs)):
                    continue
            if np.any(sol * s[S] <= 0):
                continue
            beta[S] = sol
        Z = np.flatnonzero(s == 0)
        if Z.size:
            c = b[Z] - G[Z] @ beta
            if np.any(np.abs(c) > t[Z] * (1 + 1e-9) + 1e-12):
                continue
        obj = float(beta @ G @ beta - 2 * b @ beta + 2 * t @ np.abs(beta))
        if best is None or obj < best_obj - 1e-14 * (1 + abs(best_obj)):
            best, best_obj = beta, obj
    if best is None:
        raise SingularSystemError("no sign pattern satisfied the optimality system")
    beta0 = ybar - xbar @ best if cfg.fit_intercept else 0.0
    kkt = _true_kkt(GAUSSIAN, data, lam, cfg, beta0, best)
    return _result(data, GAUSSIAN, lam, cfg, beta0, best, kkt, True, 0, 0, [], {"method": "oracle"})


def family_of(res: FitResult) -> GlmFamily:
    return get_family(res.family, res.dispersion)


def fit_config_dict(cfg: FitConfig) -> dict:
    return _jsonable(asdict(cfg))
