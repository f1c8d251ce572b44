"""Optimality certificates, theory checks, and selection metrics."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidDimensionError, InvalidPenaltyError, SingularSystemError
from .graph import PenaltyMatrix
from .model import Dataset, GlmFamily
from .solver import FitConfig, FitResult

ZERO_TOL = 1e-10


def kkt_residual(fit: FitResult, data: Dataset, fam: GlmFamily, lam: PenaltyMatrix,
                 cfg: FitConfig | None = None) -> float:
    """Largest violation of the stationarity conditions at ``fit``.

    Active coordinates need ``g_j + lambda1 w_j sign(beta_j) = 0`` and zero
    coordinates ``|g_j| <= lambda1 w_j``, where
    ``g = -2/phi X'(y - mu) + 2 lambda2 L beta`` is the gradient of the smooth
    part. With an intercept, ``sum(y - mu) = 0`` is checked as well.
    """
    cfg = cfg or fit.config()
    beta = np.asarray(fit.beta, dtype=float)
    f = fit.beta0 + data.X @ beta
    resid = data.y - fam.mean(f)
    g = -2.0 / fam.dispersion * (data.X.T @ resid) + 2.0 * cfg.lambda2 * (lam.lambda_matrix @ beta)
    lw = cfg.lambda1 * cfg.weight_vector(data.p)
    worst = 0.0
    for j in range(data.p):
        if beta[j] != 0:
            v = abs(g[j] + lw[j] * math.copysign(1.0, beta[j]))
        else:
            v = max(abs(g[j]) - lw[j], 0.0)
        worst = max(worst, v)
    if cfg.fit_intercept:
        worst = max(worst, abs(2.0 / fam.dispersion * resid.sum()))
    return float(worst)


@dataclass(frozen=True)
class GroupingCheck:
    bound: float
    gap: float
    satisfied: bool
    applicable: bool


def grouping_matrix(s: int) -> np.ndarray:
    return 0.5 * np.array([[1.0, s], [s, 1.0]])


def grouping_bound(fit: FitResult, rho: float, s: int, lambda2: float, y_norm: float,
                   dispersion: float = 1.0, lam: PenaltyMatrix | None = None) -> GroupingCheck:
    """Two-coefficient grouping bound for the penalty ``0.5 [[1, s], [s, 1]]``.

    On the deviance scale used by the solver the bound reads
    ``|b1 + s b2| <= sqrt(2 (1 + s rho)) ||y|| / (phi lambda2)``; it is the
    half-likelihood version ``(2 lambda2')^-1 ...`` with ``lambda2' = lambda2 / 2``.
    It applies only when ``-s b1 b2 > 0``.
    """
    if s not in (-1, 1):
        raise InvalidPenaltyError("s must be -1 or +1")
    beta = np.asarray(fit.beta, dtype=float)
    if beta.shape != (2,):
        raise InvalidPenaltyError("grouping bound needs a two-coefficient fit")
    if lam is not None and not np.allclose(lam.lambda_matrix, grouping_matrix(s), atol=1e-12):
        raise InvalidPenaltyError("penalty must be 0.5 * [[1, s], [s, 1]]")
    if lambda2 <= 0:
        raise InvalidPenaltyError("grouping bound needs lambda2 > 0")
    bound = math.sqrt(max(2.0 * (1.0 + s * rho), 0.0)) * y_norm / (dispersion * lambda2)
    gap = abs(beta[0] + s * beta[1])
    applicable = bool(-s * beta[0] * beta[1] > 0)
    satisfied = gap <= bound * (1 + 1e-9) + 1e-12
    return GroupingCheck(bound, gap, bool(satisfied), applicable)


def decorrelated_matrices(data: Dataset, lam: PenaltyMatrix, lambda2: float):
    """Penalized Gram matrix and its scale/correlation split.

    Returns ``(C_tilde, V, R)`` with ``C_tilde = X'X + lambda2 L``,
    ``V = diag(1 + lambda2 sum_k |l_jk|)`` and
    ``R_jk = (rho_jk + lambda2 l_jk) / sqrt(V_j V_k)``, so that
    ``C_tilde = V^1/2 R V^1/2``.
    """
    if lam.dim != data.p:
        raise InvalidDimensionError("penalty and data dimensions differ")
    C = data.X.T @ data.X
    L = lam.lambda_matrix
    C_tilde = C + lambda2 * L
    v = 1.0 + lambda2 * np.abs(L).sum(axis=1)
    R = C_tilde / np.sqrt(np.outer(v, v))
    return C_tilde, np.diag(v), R


@dataclass(frozen=True)
class IrrepresentableResult:
    lhs: np.ndarray
    satisfied: bool
    margin: float
    notice: str = ""


def irrepresentable_check(C, lam, beta_star, R: float) -> IrrepresentableResult:
    """Evaluate ``|-C_{A^c A} C_A^-1 (s_A + 2R L_A b_A) + 2R L_{A^c A} b_A|`` componentwise.

    The condition holds when every component is at most one; ``margin`` is one
    minus the largest component.
    """
    C = np.asarray(C, dtype=float)
    L = lam.lambda_matrix if isinstance(lam, PenaltyMatrix) else np.asarray(lam, dtype=float)
    b = np.asarray(beta_star, dtype=float)
    p = b.size
    if C.shape != (p, p) or L.shape != (p, p):
        raise InvalidDimensionError("C, penalty and beta_star dimensions differ")
    A = np.flatnonzero(b)
    Ac = np.flatnonzero(b == 0)
    if A.size == 0 or Ac.size == 0:
        which = "active" if A.size == 0 else "inactive"
        return IrrepresentableResult(np.zeros(Ac.size), True, 1.0, f"empty {which} set; trivially satisfied")
    CA = C[np.ix_(A, A)]
    try:
        cond = np.linalg.cond(CA)
    except np.linalg.LinAlgError:
        cond = np.inf
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularSystemError("C_A is singular")
    sA = np.sign(b[A])
    bA = b[A]
    inner = sA + 2.0 * R * (L[np.ix_(A, A)] @ bA)
    lhs = np.abs(-C[np.ix_(Ac, A)] @ np.linalg.solve(CA, inner) + 2.0 * R * (L[np.ix_(Ac, A)] @ bA))
    margin = 1.0 - float(lhs.max())
    return IrrepresentableResult(lhs, bool(np.all(lhs <= 1.0)), margin)


def df_heuristic(fit: FitResult, data: Dataset, lam: PenaltyMatrix, cfg: FitConfig | None = None) -> float:
    """Heuristic effective degrees of freedom of a gaussian fit.

    The l1 term is rewritten as a ridge term ``(lambda1/2) w_j / |beta_j|`` on
    the active set, and df is the trace of the resulting hat matrix (plus one
    for an intercept). Only a heuristic; model selection uses held-out loss.
    """
    cfg = cfg or fit.config()
    beta = np.asarray(fit.beta, dtype=float)
    A = np.flatnonzero(np.abs(beta) > 0)
    extra = 1.0 if cfg.fit_intercept else 0.0
    if A.size == 0:
        return extra
    X = data.X - data.X.mean(axis=0) if cfg.fit_intercept else data.X
    XA = X[:, A]
    w = cfg.weight_vector(data.p)[A]
    M = XA.T @ XA + np.diag(0.5 * cfg.lambda1 * w / np.abs(beta[A])) + cfg.lambda2 * lam.submatrix(A)
    H = XA @ np.linalg.solve(M, XA.T)
    return float(np.trace(H) + extra)


def constraint_bounds(beta, lam: PenaltyMatrix) -> tuple[float, float]:
    """Constraint-form bounds ``(t1, t2) = (||beta||_1, beta' L beta)`` at a solution."""
    beta = np.asarray(beta, dtype=float)
    return float(np.abs(beta).sum()), float(beta @ lam.lambda_matrix @ beta)


@dataclass(frozen=True)
class SelectionReport:
    """Selection quality of an estimate against the truth.

    ``l1_error`` is the mean absolute coefficient error ``||b_hat - b*||_1 / p``.
    Sensitivity/specificity are ``None`` when their denominator is empty.
    """

    sensitivity: float | None
    specificity: float | None
    l1_error: float
    prediction_error: float | None
    n_selected: int
    n_true: int

    def to_json(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def selection_metrics(beta_hat, beta_star, tol: float = ZERO_TOL,
                      prediction_error: float | None = None) -> SelectionReport:
    bh = np.asarray(beta_hat, dtype=float)
    bs = np.asarray(beta_star, dtype=float)
    if bh.shape != bs.shape:
        raise InvalidDimensionError("beta_hat and beta_star lengths differ")
    sel = np.abs(bh) > tol
    true = bs != 0
    sens = float(np.sum(sel & true) / true.sum()) if true.any() else None
    spec = float(np.sum(~sel & ~true) / (~true).sum()) if (~true).any() else None
    l1 = float(np.abs(bh - bs).sum() / bs.size) if bs.size else 0.0
    return SelectionReport(sens, spec, l1, prediction_error, int(sel.sum()), int(true.sum()))
