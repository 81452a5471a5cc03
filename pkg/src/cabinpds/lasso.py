"""Weighted-L1 least squares by cyclic coordinate descent, with plugin penalties.

Objective, for n observations::

    (1 / 2n) * ||y - X b||^2 + (lam / n) * sum_j psi_j * |b_j|

Columns flagged unpenalized carry psi_j = 0. The solver works on the Gram
form G = X'X / n, c = X'y / n, so repeated fits over one design share G.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np
import scipy.sparse as sp
from scipy.stats import norm

from cabinpds.errors import DataError, DomainError, StandardizationError

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 10_000
PLUGIN_C = 1.1
LOADING_ITERATIONS = 5
LOADING_RTOL = 1e-4


# --------------------------------------------------------------------------- kernel


@numba.njit(cache=True)
def _sweep(G, r, beta, thresh, idx, record):
    maxd = 0.0
    p = G.shape[0]
    for t in range(idx.shape[0]):
        j = idx[t]
        gjj = G[j, j]
        if gjj <= 0.0:
            continue
        z = r[j] + gjj * beta[j]
        if z > thresh[j]:
            b = (z - thresh[j]) / gjj
        elif z < -thresh[j]:
            b = (z + thresh[j]) / gjj
        else:
            b = 0.0
        d = b - beta[j]
        if d != 0.0:
            beta[j] = b
            row = G[j]
            for k in range(p):
                r[k] -= row[k] * d
            ad = abs(d)
            if ad > maxd:
                maxd = ad
            record[j] = True
    return maxd


@numba.njit(cache=True)
def _objective(c, r, beta, thresh, yy):
    # 0.5 * (yy - 2 c'b + b'Gb) with Gb = c - r
    quad = 0.0
    pen = 0.0
    for j in range(c.shape[0]):
        quad += beta[j] * (c[j] + r[j])
        pen += thresh[j] * abs(beta[j])
    return 0.5 * (yy - quad) + pen


@numba.njit(cache=True)
def _cd_gram(G, c, yy, thresh, beta, tol, max_iter, history):
    """Cyclic CD with active-set inner passes. Returns (sweeps, converged, n_history)."""
    p = c.shape[0]
    r = c - G @ beta
    everything = np.arange(p)
    touched = np.zeros(p, dtype=np.bool_)
    sweeps = 0
    nh = 0
    while sweeps < max_iter:
        maxd = _sweep(G, r, beta, thresh, everything, touched)
        sweeps += 1
        if nh < history.shape[0]:
            history[nh] = _objective(c, r, beta, thresh, yy)
            nh += 1
        if maxd < tol:
            return sweeps, True, nh
        active = np.flatnonzero(beta != 0.0)
        while sweeps < max_iter:
            maxd = _sweep(G, r, beta, thresh, active, touched)
            sweeps += 1
            if nh < history.shape[0]:
                history[nh] = _objective(c, r, beta, thresh, yy)
                nh += 1
            if maxd < tol:
                break
    return sweeps, False, nh


# --------------------------------------------------------------------------- problem types


@dataclass(frozen=True)
class LassoProblem:
    """Dense penalized least-squares problem.

    Attributes
    ----------
    X, y
        Predictors (n x p) and response (n).
    lam
        Penalty level, >= 0.
    loadings
        psi_j per column; entries for unpenalized columns are ignored.
    unpenalized
        Indices of columns that are never penalized.
    """

    X: np.ndarray
    y: np.ndarray
    lam: float
    loadings: np.ndarray | None = None
    unpenalized: tuple[int, ...] = ()

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] < 1 or X.shape[1] < 1:
            raise DomainError(f"incompatible shapes X{X.shape}, y{y.shape}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("non-finite values in X or y")
        if not self.lam >= 0 or not math.isfinite(self.lam):
            raise DomainError("lam must be finite and non-negative")
        psi = np.ones(X.shape[1]) if self.loadings is None else np.asarray(self.loadings, dtype=float)
        if psi.shape != (X.shape[1],):
            raise DomainError("one loading per column required")
        unpen = tuple(sorted(set(int(j) for j in self.unpenalized)))
        if any(j < 0 or j >= X.shape[1] for j in unpen):
            raise DomainError("unpenalized index out of range")
        mask = self._penalized_mask(X.shape[1], unpen)
        if np.any(psi[mask] <= 0) or not np.all(np.isfinite(psi[mask])):
            raise DomainError("loadings of penalized columns must be positive and finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "loadings", psi)
        object.__setattr__(self, "unpenalized", unpen)

    @staticmethod
    def _penalized_mask(p, unpen):
        mask = np.ones(p, dtype=bool)
        mask[list(unpen)] = False
        return mask

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def penalized(self) -> np.ndarray:
        return self._penalized_mask(self.p, self.unpenalized)

    def thresholds(self) -> np.ndarray:
        return np.where(self.penalized, self.lam * self.loadings / self.n, 0.0)

    def objective(self, beta: np.ndarray) -> float:
        resid = self.y - self.X @ beta
        return float(resid @ resid / (2 * self.n) + np.sum(self.thresholds() * np.abs(beta)))


@dataclass(frozen=True)
class LassoSolution:
    coef: np.ndarray
    objective: float
    active: tuple[int, ...]
    iterations: int
    converged: bool
    penalized: np.ndarray
    thresholds: np.ndarray
    history: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _solve(G, c, yy, thresh, penalized, tol, max_iter, beta0=None, keep_history=False) -> LassoSolution:
    if tol <= 0:
        raise DomainError("tolerance must be positive")
    G = np.ascontiguousarray(G, dtype=float)
    c = np.ascontiguousarray(c, dtype=float)
    if not (np.all(np.isfinite(G)) and np.all(np.isfinite(c))):
        raise DataError("non-finite values in Gram form")
    beta = np.zeros(len(c)) if beta0 is None else np.array(beta0, dtype=float)
    history = np.empty(min(max_iter, 100_000) if keep_history else 0)
    sweeps, ok, nh = _cd_gram(G, c, float(yy), np.ascontiguousarray(thresh, dtype=float), beta,
                              float(tol), int(max_iter), history)
    if not ok:
        log.warning("coordinate descent stopped at %d sweeps without reaching tol=%g", sweeps, tol)
    r = c - G @ beta
    obj = float(0.5 * (yy - beta @ (c + r)) + np.sum(thresh * np.abs(beta)))
    return LassoSolution(beta, obj, tuple(np.flatnonzero(beta).tolist()), int(sweeps), bool(ok),
                         np.asarray(penalized, dtype=bool), np.asarray(thresh, dtype=float), history[:nh])


def lasso_fit(problem: LassoProblem, tolerance: float = DEFAULT_TOL, max_iterations: int = DEFAULT_MAX_ITER,
              keep_history: bool = False) -> LassoSolution:
    """Minimize the weighted-L1 objective by cyclic coordinate descent.

    Convergence means the largest coefficient change in a full sweep is below
    ``tolerance``. If ``max_iterations`` sweeps pass first, the last iterate is
    returned with ``converged=False``.
    """
    n = problem.n
    G = problem.X.T @ problem.X / n
    c = problem.X.T @ problem.y / n
    yy = float(problem.y @ problem.y / n)
    return _solve(G, c, yy, problem.thresholds(), problem.penalized, tolerance, max_iterations,
                  keep_history=keep_history)


def lasso_gram(G: np.ndarray, c: np.ndarray, yy: float, n: int, lam: float, loadings: np.ndarray,
               penalized: np.ndarray, tolerance: float = DEFAULT_TOL, max_iterations: int = DEFAULT_MAX_ITER,
               beta0: np.ndarray | None = None) -> LassoSolution:
    """Same solver given G = X'X/n, c = X'y/n and yy = y'y/n."""
    thresh = np.where(penalized, lam * np.asarray(loadings, dtype=float) / n, 0.0)
    return _solve(G, c, yy, thresh, penalized, tolerance, max_iterations, beta0)


def kkt_violation(G: np.ndarray, c: np.ndarray, solution: LassoSolution) -> tuple[float, float]:
    """Largest KKT residual over active and over inactive coordinates.

    Active: ||grad_j| - t_j|; inactive: max(|grad_j| - t_j, 0), where
    grad = G b - c and t_j = lam * psi_j / n.
    """
    grad = np.abs(G @ solution.coef - c)
    t = solution.thresholds
    act = solution.coef != 0
    a = float(np.max(np.abs(grad[act] - t[act]), initial=0.0))
    i = float(np.max(np.maximum(grad[~act] - t[~act], 0.0), initial=0.0))
    return a, i


def selected_support(solution: LassoSolution, zero_tolerance: float = 1e-10) -> set[int]:
    return {int(j) for j in np.flatnonzero((np.abs(solution.coef) > zero_tolerance) & solution.penalized)}


def lambda_max(X: np.ndarray, y: np.ndarray, loadings: np.ndarray | None = None) -> float:
    """Smallest penalty zeroing every coefficient (all columns penalized)."""
    X = np.asarray(X, dtype=float)
    psi = np.ones(X.shape[1]) if loadings is None else np.asarray(loadings, dtype=float)
    return float(np.max(np.abs(X.T @ y) / psi))


# --------------------------------------------------------------------------- standardization


def standardize(matrix: np.ndarray, penalized: np.ndarray | None = None, names=None):
    """Center and scale penalized columns to mean 0, population sd 1.

    Returns ``(Z, center, scale)``; unpenalized columns get center 0 and scale 1.
    """
    X = np.asarray(matrix, dtype=float)
    if X.ndim != 2:
        raise DomainError("matrix must be 2-D")
    pen = np.ones(X.shape[1], dtype=bool) if penalized is None else np.asarray(penalized, dtype=bool)
    center = np.where(pen, X.mean(axis=0), 0.0)
    sd = X.std(axis=0)
    for j in np.flatnonzero(pen & (sd <= 1e-14 * np.maximum(1.0, np.abs(center)))):
        raise StandardizationError(names[j] if names is not None else j)
    scale = np.where(pen, sd, 1.0)
    return (X - center) / scale, center, scale


class CenteredDesign:
    """Centered and scaled view of a dense or sparse matrix, never densified.

    Column j represents (x_j - m_j) / s_j with m_j the column mean and s_j the
    population standard deviation.
    """

    def __init__(self, X, names=None):
        self.X = sp.csc_matrix(X, dtype=float) if sp.issparse(X) else np.asarray(X, dtype=float)
        self.n, self.p = self.X.shape
        self.mean = np.asarray(self.X.mean(axis=0)).ravel()
        sq = self.X.multiply(self.X) if sp.issparse(self.X) else self.X * self.X
        self.X2 = sp.csc_matrix(sq) if sp.issparse(sq) else sq
        var = np.asarray(self.X2.mean(axis=0)).ravel() - self.mean ** 2
        var[var < 0] = 0.0
        self.scale = np.sqrt(var)
        bad = np.flatnonzero(self.scale <= 1e-12 * np.maximum(1.0, np.abs(self.mean)))
        if bad.size:
            raise StandardizationError(names[bad[0]] if names is not None else int(bad[0]))

    def gram(self) -> np.ndarray:
        XtX = self.X.T @ self.X
        XtX = XtX.toarray() if sp.issparse(XtX) else np.asarray(XtX)
        G = (XtX / self.n - np.outer(self.mean, self.mean)) / np.outer(self.scale, self.scale)
        np.fill_diagonal(G, 1.0)
        return G

    def cross(self, v: np.ndarray) -> np.ndarray:
        """Z'v / n for a centered vector v."""
        return np.asarray(self.X.T @ v).ravel() / self.n / self.scale

    def matvec(self, beta: np.ndarray, cols: np.ndarray | None = None) -> np.ndarray:
        if cols is None:
            cols = np.arange(self.p)
        if len(cols) == 0:
            return np.zeros(self.n)
        b = beta / self.scale[cols]
        return np.asarray(self.X[:, cols] @ b).ravel() - float(self.mean[cols] @ b)

    def sq_moments(self, w: np.ndarray, cols: np.ndarray | None = None) -> np.ndarray:
        """(1/n) sum_i z_ij^2 w_i for the selected columns."""
        X, X2 = (self.X, self.X2) if cols is None else (self.X[:, cols], self.X2[:, cols])
        m = self.mean if cols is None else self.mean[cols]
        s = self.scale if cols is None else self.scale[cols]
        n = self.n
        t2 = np.asarray(X2.T @ w).ravel() / n
        t1 = np.asarray(X.T @ w).ravel() / n
        return np.maximum((t2 - 2 * m * t1 + m * m * w.mean()) / (s * s), 0.0)


# --------------------------------------------------------------------------- plugin penalty


def plugin_lambda(n: int, p: int, residual_scale: float, gamma: float | None = None, c: float = PLUGIN_C) -> float:
    """2 c sigma sqrt(n) Phi^{-1}(1 - gamma / (2p)); gamma defaults to 0.1 / ln(n)."""
    if n < 2 or p < 1:
        raise DomainError("plugin_lambda needs n >= 2 and p >= 1")
    if not residual_scale > 0:
        raise DomainError("residual_scale must be positive")
    if gamma is None:
        gamma = 0.1 / math.log(n)
    if not 0 < gamma < 1:
        raise DomainError(f"gamma must lie in (0, 1), got {gamma}")
    return 2.0 * c * residual_scale * math.sqrt(n) * float(norm.isf(gamma / (2 * p)))


@dataclass(frozen=True)
class PluginSettings:
    c: float = PLUGIN_C
    gamma: float | None = None
    loading_iterations: int = LOADING_ITERATIONS
    loading_rtol: float = LOADING_RTOL
    tolerance: float = DEFAULT_TOL
    max_iterations: int = DEFAULT_MAX_ITER
    zero_tolerance: float = 1e-10


@dataclass(frozen=True)
class PluginFit:
    solution: LassoSolution
    lam: float
    loadings: np.ndarray
    loading_iterations: int
    support: tuple[int, ...]


def plugin_fit(G: np.ndarray, c: np.ndarray, yy: float, n: int, penalized: np.ndarray,
               residuals: Callable[[np.ndarray], np.ndarray],
               sq_moments: Callable[[np.ndarray], np.ndarray],
               settings: PluginSettings = PluginSettings()) -> PluginFit:
    """Lasso with plugin penalty and iterated heteroskedasticity-robust loadings.

    ``residuals(beta)`` returns y - Z beta on the standardized scale;
    ``sq_moments(w)`` returns (1/n) sum_i z_ij^2 w_i per penalized column.
    The first fit is homoskedastic (unit loadings, penalty scaled by the
    residual sd after the unpenalized columns); later fits use loadings
    sqrt(mean(z_j^2 e^2)) from post-lasso residuals.
    """
    pen_idx = np.flatnonzero(penalized)
    unpen_idx = np.flatnonzero(~penalized)
    n_pen = len(pen_idx)
    if n_pen == 0:
        beta = _post_ols(G, c, unpen_idx, len(c))
        sol = _solve(G, c, yy, np.zeros(len(c)), penalized, settings.tolerance, settings.max_iterations, beta)
        return PluginFit(sol, 0.0, np.zeros(0), 0, ())

    # the (1/2n) objective halves the penalty of the (1/n)-scaled plugin rule
    base = plugin_lambda(n, n_pen, 1.0, settings.gamma, settings.c) / 2.0
    e0 = residuals(_post_ols(G, c, unpen_idx, len(c)))
    sigma = math.sqrt(max(float(e0 @ e0) / n, 1e-300))
    eff = np.full(n_pen, sigma)  # lam * psi_j / base, per penalized column
    loadings = np.zeros(len(c))
    beta = None
    it = 0
    while True:
        loadings[pen_idx] = eff
        sol = lasso_gram(G, c, yy, n, base, loadings, penalized, settings.tolerance,
                         settings.max_iterations, beta)
        beta = sol.coef
        if it >= settings.loading_iterations:
            break
        support = np.flatnonzero((np.abs(beta) > settings.zero_tolerance) | ~penalized)
        e = residuals(_post_ols(G, c, support, len(c)))
        new = np.sqrt(sq_moments(e * e))
        new = np.maximum(new, 1e-12)
        it += 1
        done = np.max(np.abs(new - eff) / eff) < settings.loading_rtol
        eff = new
        if done:
            loadings[pen_idx] = eff
            sol = lasso_gram(G, c, yy, n, base, loadings, penalized, settings.tolerance,
                             settings.max_iterations, beta)
            break
    support = tuple(int(j) for j in np.flatnonzero((np.abs(sol.coef) > settings.zero_tolerance) & penalized))
    return PluginFit(sol, base, loadings[pen_idx].copy(), it, support)


def _post_ols(G, c, cols, p):
    beta = np.zeros(p)
    if len(cols):
        sub = G[np.ix_(cols, cols)]
        beta[cols] = np.linalg.lstsq(sub, c[cols], rcond=None)[0]
    return beta
