import mpmath
import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from cabinpds.errors import DataError, DomainError, StandardizationError
from cabinpds.lasso import (
    CenteredDesign,
    LassoProblem,
    PluginSettings,
    kkt_violation,
    lambda_max,
    lasso_fit,
    plugin_fit,
    plugin_lambda,
    selected_support,
    standardize,
)
from oracles import enumerate_lasso, fista


def random_problem(rng, p=None, unpenalized=None):
    n = int(rng.integers(20, 60))
    p = int(rng.integers(2, 11)) if p is None else p
    cov = 0.4 ** np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
    X = rng.multivariate_normal(np.zeros(p), cov, size=n)
    beta = rng.normal(size=p) * (rng.random(p) < 0.5)
    y = X @ beta + rng.normal(size=n)
    unpen = tuple(rng.choice(p, size=int(rng.integers(0, 3)), replace=False)) if unpenalized is None else unpenalized
    psi = rng.uniform(0.5, 2.0, p)
    lam = float(rng.uniform(0.05, 0.8)) * lambda_max(X, y, psi)
    return LassoProblem(X, y, lam, psi, unpen)


def test_orthonormal_soft_threshold():
    n = 4
    X = np.sqrt(n) * np.eye(n)[:, :2]  # X'X/n = I
    y = X @ np.array([1.0, -0.2])      # univariate projections z = (1.0, -0.2)
    # threshold lam * psi / n = 0.3
    sol = lasso_fit(LassoProblem(X, y, lam=0.3 * n))
    np.testing.assert_allclose(sol.coef, [0.7, 0.0], atol=1e-12)
    assert sol.active == (0,)


def test_zero_penalty_is_ols():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(80, 6))
    y = rng.normal(size=80)
    sol = lasso_fit(LassoProblem(X, y, 0.0), tolerance=1e-12)
    np.testing.assert_allclose(sol.coef, np.linalg.lstsq(X, y, rcond=None)[0], atol=1e-9)


def test_lambda_max_zeroes_everything():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(40, 5))
    y = rng.normal(size=40)
    psi = rng.uniform(0.5, 2, 5)
    sol = lasso_fit(LassoProblem(X, y, lambda_max(X, y, psi), psi))
    assert np.all(sol.coef == 0.0) and sol.active == ()
    sol = lasso_fit(LassoProblem(X, y, 0.99 * lambda_max(X, y, psi), psi))
    assert len(sol.active) == 1


def test_unpenalized_column_is_never_shrunk():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(50, 3))
    y = X[:, 0] * 0.05 + rng.normal(size=50)
    sol = lasso_fit(LassoProblem(X, y, 1e6, unpenalized=(0,)))
    assert sol.coef[0] != 0 and np.all(sol.coef[1:] == 0)
    assert sol.coef[0] == pytest.approx(X[:, 0] @ y / (X[:, 0] @ X[:, 0]), rel=1e-9)


@pytest.mark.parametrize("seed", range(20))
def test_matches_exhaustive_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    prob = random_problem(rng, p=int(rng.integers(2, 6)))
    sol = lasso_fit(prob, tolerance=1e-10)
    _, best = enumerate_lasso(prob.X, prob.y, prob.thresholds())
    assert sol.objective == pytest.approx(best, rel=1e-9)


@pytest.mark.parametrize("seed", range(20))
def test_matches_proximal_gradient(seed):
    rng = np.random.default_rng(200 + seed)
    prob = random_problem(rng)
    sol = lasso_fit(prob)
    _, ref = fista(prob.X, prob.y, prob.thresholds())
    assert sol.converged
    assert abs(sol.objective - ref) <= 1e-6 * max(1.0, abs(ref))


def test_objective_field_matches_problem():
    prob = random_problem(np.random.default_rng(3))
    sol = lasso_fit(prob)
    assert sol.objective == pytest.approx(prob.objective(sol.coef), rel=1e-12, abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_history_is_monotone_and_kkt_holds(seed):
    prob = random_problem(np.random.default_rng(seed))
    tol = 1e-8
    sol = lasso_fit(prob, tolerance=tol, keep_history=True)
    assert np.all(np.diff(sol.history) <= 1e-13 * np.maximum(1, np.abs(sol.history[1:])))
    n = prob.n
    act, inact = kkt_violation(prob.X.T @ prob.X / n, prob.X.T @ prob.y / n, sol)
    assert act <= 10 * tol and inact <= 10 * tol


def test_nonconvergence_is_flagged():
    prob = random_problem(np.random.default_rng(4), p=8, unpenalized=())
    sol = lasso_fit(prob, tolerance=1e-15, max_iterations=1)
    assert not sol.converged and sol.iterations == 1
    assert np.isfinite(sol.objective)


def test_bad_inputs():
    X = np.ones((3, 2))
    with pytest.raises(DataError):
        LassoProblem(np.array([[np.nan, 1.0]]), np.array([1.0]), 1.0)
    with pytest.raises(DomainError):
        LassoProblem(X, np.ones(3), -1.0)
    with pytest.raises(DomainError):
        LassoProblem(X, np.ones(3), 1.0, loadings=np.array([1.0, 0.0]))
    with pytest.raises(DomainError):
        LassoProblem(X, np.ones(4), 1.0)
    with pytest.raises(DomainError):
        lasso_fit(LassoProblem(X, np.ones(3), 1.0), tolerance=0)


def test_selected_support():
    prob = LassoProblem(np.eye(3), np.ones(3), 0.0)
    sol = lasso_fit(prob)
    object.__setattr__(sol, "coef", np.array([0.5, 1e-14, -0.2]))
    assert selected_support(sol, 1e-10) == {0, 2}
    object.__setattr__(sol, "coef", np.zeros(3))
    assert selected_support(sol) == set()


@pytest.mark.parametrize("seed", range(5))
def test_permutation_equivariance(seed):
    rng = np.random.default_rng(300 + seed)
    prob = random_problem(rng, p=8, unpenalized=())
    perm = rng.permutation(8)
    a = lasso_fit(prob, tolerance=1e-11)
    b = lasso_fit(LassoProblem(prob.X[:, perm], prob.y, prob.lam, prob.loadings[perm]), tolerance=1e-11)
    assert {int(perm[j]) for j in selected_support(b)} == selected_support(a)
    np.testing.assert_allclose(b.coef, a.coef[perm], atol=1e-8)


def test_joint_scaling_invariance():
    prob = random_problem(np.random.default_rng(5), p=6, unpenalized=())
    a = lasso_fit(prob, tolerance=1e-12)
    b = lasso_fit(LassoProblem(prob.X, 3.0 * prob.y, 3.0 * prob.lam, prob.loadings), tolerance=1e-12)
    np.testing.assert_allclose(b.coef, 3.0 * a.coef, atol=1e-9)


def test_standardize():
    Z, center, scale = standardize(np.array([[1.0], [2.0], [3.0]]))
    assert abs(Z.mean()) < 1e-15 and Z.std() == pytest.approx(1.0)
    rng = np.random.default_rng(6)
    X = rng.normal(3, 2, size=(50, 10))
    Z, center, scale = standardize(X)
    assert np.all(np.abs(Z.mean(axis=0)) < 1e-12)
    np.testing.assert_allclose(Z.std(axis=0), 1.0, atol=1e-12)
    np.testing.assert_allclose(Z * scale + center, X, atol=1e-12)
    np.testing.assert_allclose(standardize(Z)[0], Z, atol=1e-12)


def test_standardize_names_constant_column():
    X = np.column_stack([np.arange(5.0), np.full(5, 2.0)])
    with pytest.raises(StandardizationError, match="flat"):
        standardize(X, names=["ok", "flat"])
    Z, _, _ = standardize(X, penalized=np.array([True, False]))
    np.testing.assert_array_equal(Z[:, 1], X[:, 1])


def test_centered_design_matches_dense():
    rng = np.random.default_rng(7)
    dense = (rng.random((60, 8)) < 0.3).astype(float)
    dense[:, 0] = rng.normal(size=60)
    cd = CenteredDesign(sp.csc_matrix(dense))
    Z, _, _ = standardize(dense)
    np.testing.assert_allclose(cd.gram(), Z.T @ Z / 60, atol=1e-12)
    v = rng.normal(size=60)
    v -= v.mean()
    np.testing.assert_allclose(cd.cross(v), Z.T @ v / 60, atol=1e-12)
    b = rng.normal(size=3)
    cols = np.array([1, 4, 6])
    np.testing.assert_allclose(cd.matvec(b, cols), Z[:, cols] @ b, atol=1e-12)
    w = rng.random(60)
    np.testing.assert_allclose(cd.sq_moments(w), (Z ** 2).T @ w / 60, atol=1e-12)


def test_plugin_lambda_high_precision():
    mpmath.mp.dps = 40
    q = mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf("0.9995") - 1)
    ref = float(2 * mpmath.mpf("1.1") * 10 * q)
    assert plugin_lambda(100, 50, 1.0, 0.05) == pytest.approx(ref, rel=1e-12)
    assert plugin_lambda(100, 50, 1.0, 0.05) == pytest.approx(72.39, abs=0.005)


@given(st.integers(2, 10**6), st.integers(1, 5000), st.floats(0.01, 100))
def test_plugin_lambda_shape(n, p, scale):
    lam = plugin_lambda(n, p, scale)
    assert plugin_lambda(n, 2 * p, scale) > lam
    assert plugin_lambda(n, p, 2 * scale) == pytest.approx(2 * lam, rel=1e-14)


@pytest.mark.parametrize("gamma", [0.0, 1.0, -0.1, 2.0])
def test_plugin_lambda_bad_gamma(gamma):
    with pytest.raises(DomainError):
        plugin_lambda(100, 5, 1.0, gamma)


def _plugin_inputs(X, y, unpen=()):
    cd = CenteredDesign(X)
    yc = y - y.mean()
    pen = np.ones(X.shape[1], dtype=bool)
    pen[list(unpen)] = False
    return cd, yc, pen


def test_plugin_fit_recovers_sparse_signal():
    rng = np.random.default_rng(8)
    n, p = 400, 60
    X = rng.normal(size=(n, p))
    y = 1.5 * X[:, 3] - 1.0 * X[:, 10] + rng.normal(size=n)
    cd, yc, pen = _plugin_inputs(X, y)
    fit = plugin_fit(cd.gram(), cd.cross(yc), float(yc @ yc / n), n, pen,
                     lambda b: yc - cd.matvec(b), cd.sq_moments)
    assert set(fit.support) == {3, 10}
    assert 1 <= fit.loading_iterations <= PluginSettings().loading_iterations
    assert fit.solution.converged


def test_plugin_fit_pure_noise_selects_little():
    hits = 0
    for seed in range(20):
        rng = np.random.default_rng(900 + seed)
        n, p = 300, 50
        X = rng.normal(size=(n, p))
        y = rng.normal(size=n)
        cd, yc, pen = _plugin_inputs(X, y)
        fit = plugin_fit(cd.gram(), cd.cross(yc), float(yc @ yc / n), n, pen,
                         lambda b: yc - cd.matvec(b), cd.sq_moments)
        hits += len(fit.support)
    assert hits / (20 * 50) <= 0.05
