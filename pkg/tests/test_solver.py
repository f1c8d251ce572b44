import math

import numpy as np
import pytest

from helpers import random_data
from senet import solver
from senet._cd import coordinate_descent, coordinate_descent_sparse
from senet.diagnostics import grouping_matrix, kkt_residual
from senet.errors import (
    InvalidDimensionError,
    InvalidParameterError,
    NonUniqueSolutionError,
    SingularSystemError,
    SizeLimitError,
)
from senet.graph import build_path, identity_penalty, laplacian_of, penalty_from_matrix, zero_penalty
from senet.model import BINOMIAL, GAUSSIAN, POISSON, Dataset, get_family, standardize
from senet.solver import (
    FitConfig,
    FitResult,
    augment_data,
    brute_force_oracle,
    fit,
    lambda1_max,
    penalized_objective,
    solve_gaussian,
    solve_glm,
    solve_path,
    solve_ridge,
)


def soft(c, t):
    return np.sign(c) * np.maximum(np.abs(c) - t, 0.0)


def orthonormal_data(rng, n=30, p=5):
    Q, _ = np.linalg.qr(rng.normal(size=(n, p)))
    y = Q @ rng.normal(0, 2, size=p) + 0.3 * rng.normal(size=n)
    return Dataset(Q, y)


def test_augment_examples():
    rng = np.random.default_rng(0)
    data = random_data(rng, 10, 2)
    Xa, ya = augment_data(data, identity_penalty(2), 0.0)
    np.testing.assert_array_equal(Xa[:10], data.X)
    assert not Xa[10:].any() and not ya[10:].any()
    Xa, ya = augment_data(data, identity_penalty(2), 4.0)
    np.testing.assert_array_equal(Xa[10:], 2 * np.eye(2))
    with pytest.raises(InvalidDimensionError):
        augment_data(data, identity_penalty(3), 1.0)


@pytest.mark.parametrize("l1, l2", [(0.5, 0.0), (1.0, 2.0), (3.0, 0.5), (0.0, 1.0)])
def test_orthonormal_closed_form(l1, l2):
    data = orthonormal_data(np.random.default_rng(1))
    res = fit(data, GAUSSIAN, identity_penalty(5), FitConfig(lambda1=l1, lambda2=l2, fit_intercept=False))
    expected = soft(data.X.T @ data.y, l1 / 2) / (1 + l2)
    np.testing.assert_allclose(res.beta, expected, atol=1e-12)
    assert res.converged


@pytest.mark.parametrize("s", [-1, 1])
@pytest.mark.parametrize("fam", [GAUSSIAN, BINOMIAL])
def test_exact_collinearity_groups(s, fam):
    rng = np.random.default_rng(2)
    x1 = rng.normal(size=40)
    f = 2 * x1
    y = (rng.random(40) < 1 / (1 + np.exp(-f))).astype(float) if fam is BINOMIAL else f + rng.normal(size=40)
    data = standardize(Dataset(np.c_[x1, -s * x1], y), center_response=fam is GAUSSIAN)
    res = fit(data, fam, penalty_from_matrix(grouping_matrix(s)), FitConfig(lambda1=0.3, lambda2=0.7))
    assert res.converged
    assert abs(res.beta[0] + s * res.beta[1]) <= 1e-8
    assert res.beta[0] != 0


def test_glm_gaussian_matches_closed_form_solver():
    rng = np.random.default_rng(3)
    data = random_data(rng, 40, 6)
    lam = laplacian_of(build_path(6))
    cfg = FitConfig(lambda1=2.0, lambda2=1.5)
    a = solve_gaussian(data, lam, cfg)
    b = solve_glm(data, GAUSSIAN, lam, cfg)
    np.testing.assert_allclose(a.beta, b.beta, atol=1e-9)
    assert a.beta0 == pytest.approx(b.beta0, abs=1e-9)


def test_binomial_huge_lambda1_gives_null_model():
    rng = np.random.default_rng(4)
    data = random_data(rng, 50, 4, "binomial")
    bound = 2 * np.max(np.abs(data.X.T @ (data.y - data.y.mean())))
    res = fit(data, BINOMIAL, laplacian_of(build_path(4)), FitConfig(lambda1=1.01 * bound, lambda2=1.0))
    assert not res.beta.any()
    ybar = data.y.mean()
    assert res.beta0 == pytest.approx(math.log(ybar / (1 - ybar)), abs=1e-8)


def _grid_oracle(objective, center, half_width, rounds=12, points=41):
    best = np.asarray(center, dtype=float)
    width = half_width
    for _ in range(rounds):
        axes = [np.linspace(c - width, c + width, points) for c in best]
        B1, B2 = np.meshgrid(*axes, indexing="ij")
        vals = np.vectorize(lambda u, v: objective(np.array([u, v])))(B1, B2)
        i, j = np.unravel_index(np.argmin(vals), vals.shape)
        best = np.array([B1[i, j], B2[i, j]])
        width *= 0.25
    return best


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_binomial_p2_matches_grid_oracle(seed):
    rng = np.random.default_rng(10 + seed)
    data = random_data(rng, 40, 2, "binomial", scale=1.5)
    lam = penalty_from_matrix(grouping_matrix(1))
    cfg = FitConfig(lambda1=0.8, lambda2=2.0, fit_intercept=False)
    res = fit(data, BINOMIAL, lam, cfg)
    best = _grid_oracle(lambda b: penalized_objective(BINOMIAL, data, lam, cfg, 0.0, b), [0.0, 0.0], 8.0)
    np.testing.assert_allclose(res.beta, best, atol=1e-3)


def test_poisson_kkt_and_objective_beats_perturbations():
    rng = np.random.default_rng(5)
    data = random_data(rng, 80, 5, "poisson", scale=0.4)
    lam = laplacian_of(build_path(5))
    cfg = FitConfig(lambda1=1.0, lambda2=0.5)
    res = fit(data, POISSON, lam, cfg)
    assert res.converged and res.kkt_residual <= 1e-5
    base = penalized_objective(POISSON, data, lam, cfg, res.beta0, res.beta)
    for _ in range(20):
        d = rng.normal(scale=1e-3, size=5)
        assert penalized_objective(POISSON, data, lam, cfg, res.beta0, res.beta + d) >= base - 1e-12


def test_dispersion_rescales_penalties():
    rng = np.random.default_rng(6)
    data = random_data(rng, 30, 4)
    lam = laplacian_of(build_path(4))
    a = fit(data, get_family("gaussian", 2.0), lam, FitConfig(lambda1=1.0, lambda2=0.5))
    b = fit(data, GAUSSIAN, lam, FitConfig(lambda1=2.0, lambda2=1.0))
    np.testing.assert_allclose(a.beta, b.beta, atol=1e-10)


def test_path_properties():
    rng = np.random.default_rng(7)
    data = random_data(rng, 30, 5)
    path = solve_path(data, GAUSSIAN, zero_penalty(5), 0.0, grid_size=12)
    assert path.results[0].active_set == ()
    assert path.lambda1_grid[-1] == pytest.approx(1e-3 * path.lambda1_grid[0])
    for l1, res in zip(path.lambda1_grid, path.results):
        ref = brute_force_oracle(data, zero_penalty(5), FitConfig(lambda1=float(l1)))
        assert res.objective == pytest.approx(ref.objective, rel=1e-9, abs=1e-12)
        np.testing.assert_allclose(res.beta, ref.beta, atol=1e-7)


def test_orthonormal_path_active_set_grows():
    data = orthonormal_data(np.random.default_rng(8), p=6)
    path = solve_path(data, GAUSSIAN, identity_penalty(6), 1.0, grid_size=20, cfg=FitConfig(fit_intercept=False))
    sizes = [len(r.active_set) for r in path.results]
    assert sizes == sorted(sizes) and sizes[-1] == 6


def test_path_grid_validation():
    data = random_data(np.random.default_rng(9), 20, 3)
    with pytest.raises(InvalidParameterError):
        solve_path(data, GAUSSIAN, zero_penalty(3), 0.0, grid_size=1)
    with pytest.raises(InvalidParameterError):
        solve_path(data, GAUSSIAN, zero_penalty(3), 0.0, lambda1_grid=[0.1, 0.5])
    p = solve_path(data, GAUSSIAN, zero_penalty(3), 0.0, lambda1_grid=[0.5, 0.1])
    assert [r.lambda1 for r in p.results] == [0.5, 0.1]


def test_lambda1_max_is_tight():
    rng = np.random.default_rng(11)
    for fam in (GAUSSIAN, BINOMIAL, POISSON):
        data = random_data(rng, 40, 4, fam.name, scale=0.5)
        lmax = lambda1_max(data, fam)
        lam = zero_penalty(4)
        assert not fit(data, fam, lam, FitConfig(lambda1=lmax)).beta.any()
        assert fit(data, fam, lam, FitConfig(lambda1=0.95 * lmax)).beta.any()


def test_ridge_examples():
    rng = np.random.default_rng(12)
    data = orthonormal_data(rng)
    res = solve_ridge(data, None, 3.0, fit_intercept=False)
    np.testing.assert_allclose(res.beta, data.X.T @ data.y / 4.0, atol=1e-12)
    X = rng.normal(size=(4, 4))
    y = rng.normal(size=4)
    ols = solve_ridge(Dataset(X, y), None, 0.0, fit_intercept=False)
    np.testing.assert_allclose(ols.beta, np.linalg.solve(X, y), atol=1e-10)
    d3 = random_data(rng, 15, 3)
    lam = laplacian_of(build_path(3))
    r3 = solve_ridge(d3, lam, 0.7)
    Xc = d3.X - d3.X.mean(axis=0)
    resid = (Xc.T @ Xc + 0.7 * lam.lambda_matrix) @ r3.beta - Xc.T @ (d3.y - d3.y.mean())
    assert np.max(np.abs(resid)) < 1e-10
    with pytest.raises(SingularSystemError):
        solve_ridge(Dataset(np.c_[X[:, 0], X[:, 0]], y), None, 0.0, fit_intercept=False)


def test_oracle_examples():
    rng = np.random.default_rng(13)
    data = random_data(rng, 20, 4)
    lam = laplacian_of(build_path(4))
    ridge = solve_ridge(data, lam, 0.9)
    orc = brute_force_oracle(data, lam, FitConfig(lambda1=0.0, lambda2=0.9))
    np.testing.assert_allclose(orc.beta, ridge.beta, atol=1e-10)
    d1 = random_data(rng, 12, 1)
    l1, l2, L11 = 0.4, 0.3, 2.0
    one = brute_force_oracle(d1, penalty_from_matrix([[L11]]), FitConfig(lambda1=l1, lambda2=l2, fit_intercept=False))
    x, y = d1.X[:, 0], d1.y
    assert one.beta[0] == pytest.approx(soft(x @ y, l1 / 2) / (x @ x + l2 * L11), abs=1e-12)
    assert orc.kkt_residual <= 1e-9
    with pytest.raises(SizeLimitError):
        brute_force_oracle(random_data(rng, 20, 9), zero_penalty(9), FitConfig(lambda1=1.0))


def test_non_unique_and_non_convergence():
    rng = np.random.default_rng(14)
    data = random_data(rng, 5, 8)
    with pytest.raises(NonUniqueSolutionError):
        fit(data, GAUSSIAN, zero_penalty(8), FitConfig())
    # the quadratic penalty restores uniqueness
    assert fit(data, GAUSSIAN, identity_penalty(8), FitConfig(lambda2=0.1)).converged
    slow = fit(random_data(rng, 30, 6), GAUSSIAN, zero_penalty(6),
               FitConfig(lambda1=0.01, max_sweeps=1, tol=1e-14))
    assert not slow.converged and slow.log


def test_binomial_separation(monkeypatch):
    x = np.linspace(-1, 1, 20)
    data = standardize(Dataset(x[:, None], (x > 0).astype(float)), center_response=False)
    # a positive l1 penalty keeps the minimizer finite even under complete separation
    res = fit(data, BINOMIAL, zero_penalty(1), FitConfig(lambda1=1e-6))
    assert res.converged and res.beta[0] > 100
    assert any("floored" in m for m in res.log)
    monkeypatch.setattr(solver, "SEPARATION_NORM", 50.0)
    flagged = fit(data, BINOMIAL, zero_penalty(1), FitConfig(lambda1=1e-6))
    assert not flagged.converged and flagged.meta["separation"]


def test_uniqueness_from_random_starts():
    rng = np.random.default_rng(15)
    data = random_data(rng, 8, 12)
    lam = laplacian_of(build_path(12))
    cfg = FitConfig(lambda1=0.2, lambda2=0.5)
    ref = fit(data, GAUSSIAN, lam, cfg)
    for _ in range(5):
        other = fit(data, GAUSSIAN, lam, cfg, beta_init=rng.normal(0, 3, size=12))
        np.testing.assert_allclose(other.beta, ref.beta, atol=1e-6)


def test_selects_more_than_n():
    rng = np.random.default_rng(16)
    n, p = 10, 40
    X = rng.normal(size=(n, p))
    y = X @ np.r_[np.ones(25), np.zeros(15)] + 0.1 * rng.normal(size=n)
    data = standardize(Dataset(X, y))
    res = fit(data, GAUSSIAN, laplacian_of(build_path(p)), FitConfig(lambda1=0.05, lambda2=50.0))
    assert res.converged and len(res.active_set) > n


def test_sparse_kernel_matches_dense():
    rng = np.random.default_rng(17)
    p = 120
    lam = laplacian_of(build_path(p)).lambda_matrix
    G = 3.0 * lam + np.diag(rng.uniform(0.5, 2, size=p))
    b = rng.normal(size=p)
    thresh = np.full(p, 0.3)
    dense = np.zeros(p)
    coordinate_descent(G, b, thresh, dense, 100000, 1e-13)
    from scipy import sparse
    S = sparse.csr_matrix(G)
    sp = np.zeros(p)
    coordinate_descent_sparse(S.indptr.astype(np.int64), S.indices.astype(np.int64), S.data,
                              np.ascontiguousarray(np.diag(G)), b, thresh, sp, 100000, 1e-13)
    np.testing.assert_allclose(sp, dense, atol=1e-10)


def test_weights_and_config_validation():
    with pytest.raises(InvalidParameterError):
        FitConfig(lambda1=-1.0)
    with pytest.raises(InvalidParameterError):
        FitConfig(weights=(1.0, 0.0))
    data = random_data(np.random.default_rng(18), 10, 3)
    with pytest.raises(InvalidDimensionError):
        fit(data, GAUSSIAN, zero_penalty(3), FitConfig(lambda1=1.0, weights=(1.0, 1.0)))
    with pytest.raises(InvalidDimensionError):
        fit(data, GAUSSIAN, zero_penalty(4), FitConfig(lambda1=1.0))


def test_fit_result_json_round_trip():
    rng = np.random.default_rng(19)
    data = random_data(rng, 25, 4, "binomial")
    lam = laplacian_of(build_path(4))
    res = fit(data, BINOMIAL, lam, FitConfig(lambda1=0.5, lambda2=1.0))
    back = FitResult.from_json(res.to_json())
    np.testing.assert_array_equal(back.beta, res.beta)
    assert kkt_residual(back, data, BINOMIAL, lam) == res.kkt_residual


def test_raw_scale_predictions_match():
    rng = np.random.default_rng(20)
    raw = Dataset(rng.normal(5, 3, size=(30, 3)), rng.normal(2, 1, size=30))
    data = standardize(raw)
    res = fit(data, GAUSSIAN, zero_penalty(3), FitConfig(lambda1=0.1))
    np.testing.assert_allclose(res.beta0_raw + raw.X @ res.beta_raw,
                               res.beta0 + data.y_center + data.X @ res.beta, atol=1e-10)
