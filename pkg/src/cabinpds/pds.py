"""Post-double-selection estimation with cluster-robust inference."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy import stats

from cabinpds.design import DISPLAY_NAMES, DesignMatrix
from cabinpds.errors import (
    CabinPdsError,
    DomainError,
    FitError,
    InferenceError,
    RankDeficiencyError,
    StageError,
)
from cabinpds.lasso import CenteredDesign, PluginSettings, plugin_fit

log = logging.getLogger(__name__)

NORMAL_CRITICAL = ((2.576, "***"), (1.96, "**"), (1.645, "*"))
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class EstimationSpec:
    """How to estimate one design.

    Attributes
    ----------
    select
        Run the double-selection passes. When false no candidate control enters
        the final fit (a naive regression on the interest variables).
    cluster
        Cluster-robust covariance by the design's cluster labels; otherwise
        heteroskedasticity-robust (HC1).
    t_critical
        Stars and p-values from t with G - 1 df instead of the normal.
    """

    settings: PluginSettings = PluginSettings()
    select: bool = True
    cluster: bool = True
    t_critical: bool = False


@dataclass(frozen=True)
class PdsSelection:
    union: tuple[int, ...]
    passes: dict[str, tuple[int, ...]]
    lambdas: dict[str, float]


@dataclass(frozen=True)
class OlsFit:
    coef: np.ndarray
    residuals: np.ndarray
    names: tuple[str, ...]
    R: np.ndarray
    perm: np.ndarray


@dataclass(frozen=True)
class FitStatistics:
    aic: float
    bic: float
    adj_r2: float
    rmse: float
    n: int
    k: int
    degenerate: bool = False


@dataclass(frozen=True)
class EstimationResult:
    """Interest coefficients with cluster-robust errors and fit diagnostics."""

    spec_id: int | str
    names: tuple[str, ...]
    coef: np.ndarray
    se: np.ndarray
    tstat: np.ndarray
    pvalue: np.ndarray
    stars: tuple[str, ...]
    block_counts: dict[str, tuple[int, int]]
    fit: FitStatistics
    n: int
    n_clusters: int
    selected_controls: tuple[str, ...] = ()
    dropped_controls: tuple[str, ...] = ()
    degenerate: tuple[str, ...] = ()
    intercept: float = 0.0
    header: dict = field(default_factory=dict)

    def coefficient(self, name: str) -> float:
        return float(self.coef[self.names.index(name)])

    def std_error(self, name: str) -> float:
        return float(self.se[self.names.index(name)])


# --------------------------------------------------------------------------- selection


def pds_select(design: DesignMatrix, spec: EstimationSpec = EstimationSpec()) -> PdsSelection:
    """Union of controls selected for the outcome and for each interest variable.

    The outcome pass keeps the interest columns unpenalized; each interest pass
    regresses one interest column on the candidate controls alone.
    """
    controls, names, _ = design.controls()
    k = design.interest.shape[1]
    m = controls.shape[1]
    if m == 0 or not spec.select:
        return PdsSelection((), {}, {})
    X = sp.hstack([sp.csc_matrix(design.interest), controls], format="csc")
    op = CenteredDesign(X, names=list(design.interest_names) + names)
    G = op.gram()
    n = design.n
    y = design.outcome - design.outcome.mean()
    settings = spec.settings

    passes, lambdas = {}, {}
    penalized = np.r_[np.zeros(k, dtype=bool), np.ones(m, dtype=bool)]
    cy = op.cross(y)
    fit = plugin_fit(
        G, cy, float(y @ y) / n, n, penalized,
        residuals=lambda b: y - op.matvec(b[b != 0], np.flatnonzero(b)),
        sq_moments=lambda w: op.sq_moments(w, np.arange(k, k + m)),
        settings=settings,
    )
    _check_converged(fit, "outcome")
    passes["outcome"] = tuple(j - k for j in fit.support)
    lambdas["outcome"] = fit.lam

    ctrl = np.arange(k, k + m)
    Gc = np.ascontiguousarray(G[np.ix_(ctrl, ctrl)])
    pen_c = np.ones(m, dtype=bool)
    for i, nm in enumerate(design.interest_names):
        d = (design.interest[:, i] - op.mean[i]) / op.scale[i]
        fit = plugin_fit(
            Gc, np.ascontiguousarray(G[ctrl, i]), 1.0, n, pen_c,
            residuals=lambda b, d=d: d - op.matvec(b[b != 0], ctrl[np.flatnonzero(b)]),
            sq_moments=lambda w: op.sq_moments(w, ctrl),
            settings=settings,
        )
        _check_converged(fit, nm)
        passes[nm] = fit.support
        lambdas[nm] = fit.lam
    union = sorted(set().union(*passes.values()))
    return PdsSelection(tuple(union), passes, lambdas)


def _check_converged(fit, name):
    if not fit.solution.converged:
        raise StageError(f"lasso pass {name}", InferenceError(
            f"coordinate descent did not converge in {fit.solution.iterations} sweeps"))


# --------------------------------------------------------------------------- least squares


def _pivoted_fit(X: np.ndarray, y: np.ndarray, names) -> OlsFit:
    Q, R, perm = sla.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > RANK_RTOL * max(diag[0] if len(diag) else 0.0, 1e-300)))
    if rank < X.shape[1]:
        raise RankDeficiencyError([names[j] for j in perm[rank:]])
    coef = np.empty(X.shape[1])
    coef[perm] = sla.solve_triangular(R, Q.T @ y)
    return OlsFit(coef, y - X @ coef, tuple(names), R, perm)


def _dependent_columns(R: np.ndarray, norms: np.ndarray) -> np.ndarray:
    """Columns whose triangular diagonal is negligible next to their own norm."""
    diag = np.abs(np.diag(R))[: len(norms)]
    return np.flatnonzero(diag <= RANK_RTOL * np.maximum(norms, 1e-300) * 10)


def _fit_from_r(X: np.ndarray, y: np.ndarray, R_aug: np.ndarray, names) -> OlsFit:
    p = X.shape[1]
    R = R_aug[:p, :p]
    coef = sla.solve_triangular(R, R_aug[:p, p])
    return OlsFit(coef, y - X @ coef, tuple(names), R, np.arange(p))


def ols_fit(predictors: np.ndarray, outcome: np.ndarray, names=None) -> OlsFit:
    """Least squares through a QR factorization of the predictors augmented by the outcome.

    Raises
    ------
    RankDeficiencyError
        The predictors are numerically collinear; a column-pivoted
        factorization names the columns it could not place.
    """
    X = np.asarray(predictors, dtype=float)
    y = np.asarray(outcome, dtype=float)
    n, p = X.shape
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(p))
    if n <= p:
        raise RankDeficiencyError(list(names[max(n - 1, 0):]))
    R_aug = sla.qr(np.column_stack([X, y]), mode="r")[0]
    if len(_dependent_columns(R_aug, np.linalg.norm(X, axis=0))):
        return _pivoted_fit(X, y, names)
    return _fit_from_r(X, y, R_aug, names)


def _bread(fit: OlsFit) -> np.ndarray:
    p = len(fit.coef)
    Rinv = sla.solve_triangular(fit.R, np.eye(p))
    inv = Rinv @ Rinv.T
    out = np.empty_like(inv)
    out[np.ix_(fit.perm, fit.perm)] = inv
    return out


def cluster_robust_cov(predictors: np.ndarray, residuals: np.ndarray, clusters, small_sample: bool = True,
                       bread: np.ndarray | None = None) -> np.ndarray:
    """Sandwich covariance clustered on ``clusters``.

    With ``small_sample`` the factor G/(G-1) * (n-1)/(n-k) is applied; with one
    cluster per observation this reproduces HC1.
    """
    X = np.asarray(predictors, dtype=float)
    u = np.asarray(residuals, dtype=float)
    n, k = X.shape
    labels, codes = np.unique(np.asarray(clusters), return_inverse=True)
    g = len(labels)
    if g < 2:
        raise InferenceError("cluster-robust covariance needs at least two clusters")
    if bread is None:
        bread = np.linalg.inv(X.T @ X)
    ind = sp.csr_matrix((np.ones(n), (codes, np.arange(n))), shape=(g, n))
    scores = ind @ (X * u[:, None])
    meat = scores.T @ scores
    cov = bread @ meat @ bread
    if small_sample:
        cov *= g / (g - 1) * (n - 1) / (n - k)
    return (cov + cov.T) / 2


def robust_cov(predictors: np.ndarray, residuals: np.ndarray, bread: np.ndarray | None = None) -> np.ndarray:
    """HC1 covariance."""
    X = np.asarray(predictors, dtype=float)
    n, k = X.shape
    if bread is None:
        bread = np.linalg.inv(X.T @ X)
    s = X * np.asarray(residuals)[:, None]
    cov = bread @ (s.T @ s) @ bread * n / (n - k)
    return (cov + cov.T) / 2


def fit_statistics(residuals: np.ndarray, n: int, k: int, outcome: np.ndarray) -> FitStatistics:
    """Gaussian AIC/BIC, adjusted R-squared and RMSE with k fitted coefficients.

    A perfect fit is flagged ``degenerate`` with AIC = BIC = -inf.
    """
    if n <= k or k < 1:
        raise FitError(f"fit statistics need n > k >= 1 (n={n}, k={k})")
    r = np.asarray(residuals, dtype=float)
    y = np.asarray(outcome, dtype=float)
    rss = float(r @ r)
    tss = float(np.sum((y - y.mean()) ** 2))
    if tss == 0:
        raise FitError("outcome is constant")
    adj = 1.0 - (rss / (n - k)) / (tss / (n - 1))
    rmse = math.sqrt(rss / (n - k))
    if rss <= 1e-300:
        log.error("perfect fit: likelihood-based criteria diverge")
        return FitStatistics(-math.inf, -math.inf, adj, rmse, n, k, True)
    ll_term = n * (math.log(2 * math.pi) + 1 + math.log(rss / n))
    return FitStatistics(ll_term + 2 * (k + 1), ll_term + math.log(n) * (k + 1), adj, rmse, n, k)


def stars(t: float, df: int | None = None) -> str:
    """Significance marks at 1/5/10%; normal critical values unless ``df`` is given."""
    a = abs(t)
    if not math.isfinite(a):
        return "***" if a == math.inf else ""
    if df is None:
        for crit, mark in NORMAL_CRITICAL:
            if a > crit:
                return mark
        return ""
    for level, mark in ((0.01, "***"), (0.05, "**"), (0.10, "*")):
        if a > stats.t.isf(level / 2, df):
            return mark
    return ""


# --------------------------------------------------------------------------- pipeline


def _dedupe_controls(C: np.ndarray, names: list[str]) -> tuple[np.ndarray, list[str], list[str]]:
    keep, dropped, seen = [], [], {}
    for j in range(C.shape[1]):
        col = C[:, j]
        if np.ptp(col) == 0:
            dropped.append(names[j])
            continue
        key = col.tobytes()
        if key in seen:
            dropped.append(names[j])
            continue
        seen[key] = j
        keep.append(j)
    return C[:, keep], [names[j] for j in keep], dropped


def _fit_with_controls(base: np.ndarray, C: np.ndarray, y: np.ndarray, base_names: list[str], names: list[str]):
    """Drop controls in the span of ``base`` and earlier controls, then fit by least squares.

    One factorization serves both steps unless something has to be dropped.
    """
    X = np.column_stack([base, C])
    R_aug = sla.qr(np.column_stack([X, y]), mode="r")[0]
    dep = _dependent_columns(R_aug, np.linalg.norm(X, axis=0))
    nb = base.shape[1]
    if len(dep) and dep[0] < nb:
        ols_fit(base, y, base_names)
    bad = [j - nb for j in dep if j >= nb]
    if not len(dep):
        return _fit_from_r(X, y, R_aug, base_names + names), X, names, []
    good = [j for j in range(C.shape[1]) if j not in set(bad)]
    kept = [names[j] for j in good]
    X = np.column_stack([base, C[:, good]])
    return ols_fit(X, y, base_names + kept), X, kept, [names[j] for j in bad]


def run_specification(design: DesignMatrix, spec: EstimationSpec = EstimationSpec()) -> EstimationResult:
    """Double selection, OLS refit with the union, clustered inference and fit statistics.

    Errors from a stage are re-raised as :class:`StageError` naming the stage.
    """
    try:
        selection = pds_select(design, spec)
    except StageError:
        raise
    except CabinPdsError as exc:
        raise StageError("selection", exc) from exc

    controls, cnames, owner = design.controls()
    union = np.asarray(selection.union, dtype=int)
    n = design.n
    C = controls[:, union].toarray() if len(union) else np.zeros((n, 0))
    C, kept, dropped = _dedupe_controls(C, [cnames[j] for j in union])
    base = np.column_stack([np.ones(n), design.interest])
    base_names = ["(intercept)", *design.interest_names]
    try:
        fit, X, kept, more = _fit_with_controls(base, C, design.outcome, base_names, kept)
        dropped += more
        if dropped:
            log.info("spec %s: dropped %d degenerate or collinear selected controls: %s",
                     design.spec.spec_id, len(dropped), dropped[:10])
    except CabinPdsError as exc:
        raise StageError("least squares", exc) from exc

    try:
        bread = _bread(fit)
        if spec.cluster:
            cov = cluster_robust_cov(X, fit.residuals, design.clusters, bread=bread)
        else:
            cov = robust_cov(X, fit.residuals, bread=bread)
        stats_ = fit_statistics(fit.residuals, n, X.shape[1], design.outcome)
    except CabinPdsError as exc:
        raise StageError("inference", exc) from exc

    k = design.interest.shape[1]
    coef = fit.coef[1:k + 1]
    se = np.sqrt(np.maximum(np.diag(cov)[1:k + 1], 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = coef / se
    g = design.n_clusters
    df = g - 1 if spec.t_critical and spec.cluster else None
    if df is None:
        p = 2 * stats.norm.sf(np.abs(t))
    else:
        p = 2 * stats.t.sf(np.abs(t), df)
    kept_set = set(kept)
    counts = {}
    for b in design.blocks:
        sel = sum(1 for nm in b.column_names if nm in kept_set)
        counts[b.name] = (sel, b.candidates)
    header = {
        "plugin_c": spec.settings.c,
        "plugin_gamma": spec.settings.gamma if spec.settings.gamma is not None else f"0.1/ln({n})",
        "loading_iterations": spec.settings.loading_iterations,
        "tolerance": spec.settings.tolerance,
        "k_convention": "interest + selected controls + intercept",
        "covariance": "cluster-robust (airport pair)" if spec.cluster else "HC1",
        "critical_values": f"t({df})" if df else "normal",
    }
    return EstimationResult(
        spec_id=design.spec.spec_id,
        names=design.interest_names,
        coef=coef,
        se=se,
        tstat=t,
        pvalue=p,
        stars=tuple(stars(v, df) for v in t),
        block_counts=counts,
        fit=stats_,
        n=n,
        n_clusters=g,
        selected_controls=tuple(kept),
        dropped_controls=tuple(dropped),
        degenerate=design.degenerate,
        intercept=float(fit.coef[0]),
        header=header,
    )


# --------------------------------------------------------------------------- reporting

BLOCK_LABELS = {
    "survey_date": "Svy Date Controls",
    "departure_hour": "Flight Time Controls",
    "airport": "Airport Controls",
    "pax_profile": "PAX Profile Controls",
}
ROW_ORDER = ("ADV", "DIST", "BSN", "FLTIME", "SHIPMENT", "REVPAX", "LF", "FUELP", "HUB", "SEATSH", "RHHI",
             "LASTROW", "EMERGEXIT", "COMFORT", "COMFORT_PLACEBO", "MIDDLE", "MIDDLE_1W", "MIDDLE_2W",
             "MIDDLE_3W", "MIDDLE_GT3W", "IROWDENS", "IPITCH")


def _num(x: float, digits: int = 10) -> str:
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return f"{x:.{digits}g}"


def results_to_csv(results: list[EstimationResult]) -> str:
    """Long-format CSV: one row per coefficient, control block and fit statistic."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["spec", "section", "name", "estimate", "std_error", "t_stat", "p_value", "stars",
                "selected", "candidates"])
    for r in results:
        for i, nm in enumerate(r.names):
            w.writerow([r.spec_id, "coefficient", nm, _num(r.coef[i]), _num(r.se[i]), _num(r.tstat[i]),
                        _num(r.pvalue[i]), r.stars[i], "", ""])
        for nm in r.degenerate:
            w.writerow([r.spec_id, "coefficient", nm, "nan", "nan", "nan", "nan", "degenerate", "", ""])
        for b, (s, c) in r.block_counts.items():
            w.writerow([r.spec_id, "controls", b, "", "", "", "", "", s, c])
        f = r.fit
        for nm, v in (("AIC", f.aic), ("BIC", f.bic), ("adj_R2", f.adj_r2), ("RMSE", f.rmse),
                      ("N", f.n), ("k", f.k), ("clusters", r.n_clusters)):
            w.writerow([r.spec_id, "fit", nm, _num(float(v)) if isinstance(v, float) else v, "", "", "", "", "", ""])
    return buf.getvalue()


def format_table(results: list[EstimationResult]) -> str:
    """Coefficient table with one column per specification, errors in parentheses."""
    present = [v for v in ROW_ORDER if any(v in r.names for r in results)]
    extra = [v for r in results for v in r.names if v not in ROW_ORDER]
    present += list(dict.fromkeys(extra))
    head = [""] + [f"({r.spec_id})" for r in results]
    body = []
    for v in present:
        est, err = [DISPLAY_NAMES.get(v, v)], [""]
        for r in results:
            if v in r.names:
                i = r.names.index(v)
                est.append(f"{r.coef[i]:.4f}{r.stars[i]}")
                err.append(f"({r.se[i]:.4f})")
            else:
                est.append("")
                err.append("")
        body += [est, err]
    body.append(["Estimator"] + ["PDS/LASSO"] * len(results))
    body.append(["Airport-Pair Clusters"] + [str(r.n_clusters) for r in results])
    for b, label in BLOCK_LABELS.items():
        row = [label]
        for r in results:
            row.append(f"{r.block_counts[b][0]}/{r.block_counts[b][1]}" if b in r.block_counts else "No")
        body.append(row)
    for label, key, fmt in (("AIC Statistic", "aic", "{:,.0f}"), ("BIC Statistic", "bic", "{:,.0f}"),
                            ("Adj R2 Statistic", "adj_r2", "{:.4f}"), ("RMSE Statistic", "rmse", "{:.4f}")):
        body.append([label] + [fmt.format(getattr(r.fit, key)) for r in results])
    body.append(["Nr Observations"] + [f"{r.n:,}" for r in results])
    widths = [max(len(row[j]) for row in [head] + body) for j in range(len(head))]
    lines = ["  ".join(c.ljust(widths[0]) if j == 0 else c.rjust(widths[j]) for j, c in enumerate(row))
             for row in [head] + body]
    note = ("*** |z|>2.576, ** |z|>1.96, * |z|>1.645; cluster-robust standard errors in parentheses; "
            "k counts interest, selected controls and intercept.")
    return "\n".join(lines) + "\n" + note + "\n"


