"""Independent reference solvers used only by the tests."""

import itertools

import numpy as np


def lasso_objective(X, y, beta, thresh):
    r = y - X @ beta
    return float(r @ r / (2 * len(y)) + np.sum(thresh * np.abs(beta)))


def enumerate_lasso(X, y, thresh):
    """Exact minimizer by enumerating supports and sign patterns.

    For each candidate (support, signs) the stationarity equations are linear;
    a candidate is kept when its signs agree and every excluded coordinate
    satisfies the subgradient bound. The lowest objective wins.
    """
    n, p = X.shape
    G = X.T @ X / n
    c = X.T @ y / n
    pen = thresh > 0
    free = np.flatnonzero(~pen)
    best, best_obj = None, np.inf
    pen_idx = np.flatnonzero(pen)
    for k in range(len(pen_idx) + 1):
        for subset in itertools.combinations(pen_idx, k):
            S = np.array(sorted(list(free) + list(subset)), dtype=int)
            for signs in itertools.product((-1.0, 1.0), repeat=k):
                s = np.zeros(p)
                s[list(subset)] = signs
                beta = np.zeros(p)
                if len(S):
                    rhs = c[S] - thresh[S] * s[S]
                    try:
                        beta[S] = np.linalg.solve(G[np.ix_(S, S)], rhs)
                    except np.linalg.LinAlgError:
                        continue
                if any(np.sign(beta[j]) != s[j] for j in subset):
                    continue
                grad = G @ beta - c
                out = np.setdiff1d(np.arange(p), S)
                if np.any(np.abs(grad[out]) > thresh[out] + 1e-12):
                    continue
                obj = lasso_objective(X, y, beta, thresh)
                if obj < best_obj:
                    best, best_obj = beta, obj
    return best, best_obj


def fista(X, y, thresh, iterations=200_000, tol=1e-15):
    """Accelerated proximal gradient on the same objective."""
    n, p = X.shape
    G = X.T @ X / n
    c = X.T @ y / n
    L = float(np.linalg.eigvalsh(G).max())
    beta = np.zeros(p)
    z = beta.copy()
    t = 1.0
    for _ in range(iterations):
        g = G @ z - c
        u = z - g / L
        new = np.sign(u) * np.maximum(np.abs(u) - thresh / L, 0.0)
        t_next = (1 + np.sqrt(1 + 4 * t * t)) / 2
        z = new + (t - 1) / t_next * (new - beta)
        if np.max(np.abs(new - beta)) < tol:
            beta = new
            break
        beta, t = new, t_next
    return beta, lasso_objective(X, y, beta, thresh)
