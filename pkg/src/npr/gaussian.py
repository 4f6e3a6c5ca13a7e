"""Gaussian-response fitting and inference for propagated designs.

Least squares is solved through a QR decomposition of the selected design
(never the normal equations); the Gram matrix and its inverse are derived
from the triangular factor.  The sequential Wald machinery tests, for each
order j, whether every selected coefficient of propagation order >= j is
zero, and Holm's step-down procedure converts the resulting p-values into
family-wise-error-controlled decisions about the propagation order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla
from scipy import stats

from .design import PropagatedDesign
from .exceptions import SingularMatrixError

Z_95 = 1.959964  # two-sided 95% normal quantile used for intervals

# Restriction dimension at and above which the normal approximation
# replaces the chi-square reference for Wald p-values.  The chi-square
# reference is essentially exact for Gaussian errors at any fixed
# dimension, so the switch is set high and is configurable per call.
NORMAL_APPROX_MIN_DIM = 128


@dataclass(eq=False)
class GaussianFit:
    """OLS fit over the selected columns of a propagated design."""

    theta_hat: np.ndarray
    selected: list[int]
    provenance: list[tuple[int, int]]
    column_names: list[str]
    rss: float
    sigma2_hat: float
    gram: np.ndarray
    gram_inverse: np.ndarray
    std_errors: np.ndarray
    n: int
    d_sel: int
    column_means: np.ndarray | None
    y_mean: float

    @property
    def sigma_hat(self) -> float:
        return math.sqrt(self.sigma2_hat)

    def selected_orders(self) -> np.ndarray:
        """Propagation order of each selected column."""
        return np.asarray([self.provenance[c][0] for c in self.selected])


def fit_ols(design: PropagatedDesign, y: np.ndarray) -> GaussianFit:
    """Least-squares fit of a centered, forward-selected design.

    The response is centered internally when the design is centered (a
    no-op for pre-centered input), and the centering constants are kept on
    the fit so new rows can be predicted consistently.
    """
    if design.selected is None:
        raise ValueError("design must be forward-selected before fitting")
    if not design.centered:
        raise ValueError("gaussian fits require a centered design")
    X = design.selected_matrix()
    n, p = X.shape
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.shape[0] != n:
        raise ValueError(f"response has {y.shape[0]} rows, design has {n}")
    if n <= p:
        raise ValueError("insufficient observations: need more rows than selected columns")

    y_mean = float(y.mean())
    yc = y - y_mean

    Q, R = np.linalg.qr(X)
    rdiag = np.abs(np.diag(R))
    if rdiag.min() <= 1e-12 * max(rdiag.max(), 1.0):
        raise SingularMatrixError(
            "selected design is numerically singular; forward selection should prevent this"
        )
    theta = sla.solve_triangular(R, Q.T @ yc)
    resid = yc - X @ theta
    rss = float(resid @ resid)
    # an exact fit leaves only rounding residue; snap it to zero so the
    # zero-variance edge case is reported as such downstream
    if rss <= 1e-28 * max(float(yc @ yc), 1.0):
        rss = 0.0
    sigma2 = rss / (n - p)

    r_inv = sla.solve_triangular(R, np.eye(p))
    xtx_inv = r_inv @ r_inv.T
    gram = (R.T @ R) / n
    gram_inverse = n * xtx_inv
    std_errors = np.sqrt(sigma2 * np.diag(xtx_inv))

    means = None
    if design.column_means is not None:
        means = design.column_means[design.selected]

    return GaussianFit(
        theta_hat=theta,
        selected=list(design.selected),
        provenance=list(design.provenance),
        column_names=[design.column_names()[c] for c in design.selected],
        rss=rss,
        sigma2_hat=sigma2,
        gram=gram,
        gram_inverse=gram_inverse,
        std_errors=std_errors,
        n=n,
        d_sel=p,
        column_means=means,
        y_mean=y_mean,
    )


def predict(fit: GaussianFit, design_new: PropagatedDesign) -> np.ndarray:
    """Mean response for new rows under the fitted model.

    ``design_new`` must be built with the same provenance layout (same d
    and K) and is used raw; the fit's stored centering constants are
    applied here.
    """
    if list(design_new.provenance) != list(fit.provenance):
        raise ValueError("provenance mismatch between fit and new design")
    if design_new.centered:
        raise ValueError("pass the raw design; the fit applies its own centering")
    M = design_new.full_matrix()[:, fit.selected]
    if fit.column_means is not None:
        M = M - fit.column_means
    return fit.y_mean + M @ fit.theta_hat


def t_statistics(fit: GaussianFit) -> list[dict]:
    """Per-coefficient estimates, standard errors, z-tests and 95% CIs."""
    out = []
    if fit.sigma2_hat == 0.0:
        warnings.warn(
            "zero residual variance: t statistics reported as infinite",
            RuntimeWarning,
            stacklevel=2,
        )
    for i, col in enumerate(fit.selected):
        est = float(fit.theta_hat[i])
        se = float(fit.std_errors[i])
        if se > 0.0:
            t = est / se
            pval = 2.0 * stats.norm.sf(abs(t))
        else:
            t = math.inf if est >= 0 else -math.inf
            pval = 0.0
        out.append(
            {
                "column": col,
                "name": fit.column_names[i],
                "order": fit.provenance[col][0],
                "covariate": fit.provenance[col][1],
                "estimate": est,
                "std_error": se,
                "t": t,
                "p": float(pval),
                "ci_low": est - Z_95 * se,
                "ci_high": est + Z_95 * se,
            }
        )
    return out


def _order_bound(fit: GaussianFit, design: PropagatedDesign | None) -> int:
    if design is not None:
        return design.k_max
    return max(k for k, _ in fit.provenance)


def wald_statistic(fit: GaussianFit, design: PropagatedDesign | None, j: int) -> dict:
    """Wald quadratic form for the hypothesis that all selected
    coefficients of propagation order >= j vanish.

    Returns ``{"j", "m", "T"}`` where m is the restriction dimension
    (number of surviving columns of order >= j).  Columns dropped by
    forward selection are structural zeros and do not enter.  When no
    column of order >= j survives, m = 0 is reported and the caller treats
    the hypothesis as undecidable (p = 1).  ``design`` may be omitted; it
    is used only to bound j by the design's maximum order.
    """
    bound = _order_bound(fit, design)
    if j < 0 or j > bound:
        raise ValueError(f"order j={j} outside [0, {bound}]")
    orders = fit.selected_orders()
    idx = np.flatnonzero(orders >= j)
    m = int(idx.size)
    if m == 0:
        return {"j": j, "m": 0, "T": 0.0}
    theta_r = fit.theta_hat[idx]
    G = fit.gram_inverse[np.ix_(idx, idx)]
    try:
        sol = sla.solve(G, theta_r, assume_a="pos")
    except np.linalg.LinAlgError:
        sol = sla.lstsq(G, theta_r)[0]
    T = float(fit.n * (theta_r @ sol) / fit.sigma2_hat)
    return {"j": j, "m": m, "T": T}


def holm_reject(p_values, alpha: float) -> np.ndarray:
    """Holm's step-down multiple-testing decisions.

    Sorted p-values are compared against ``alpha / (M - rank)``; the first
    failure stops the procedure and every later hypothesis (in sorted
    order) is retained.  Valid under arbitrary dependence.
    """
    p = np.asarray(p_values, dtype=np.float64)
    M = p.size
    order = np.argsort(p, kind="stable")
    reject = np.zeros(M, dtype=bool)
    for rank, idx in enumerate(order):
        if p[idx] <= alpha / (M - rank):
            reject[idx] = True
        else:
            break
    return reject


@dataclass(eq=False)
class OrderTestReport:
    """Outcome of the sequential propagation-order tests.

    One record per tested order j with its restriction dimension, Wald
    statistic, standardized statistic, p-value and reference regime;
    ``selected_order`` is the smallest j whose hypothesis survives Holm
    (all effects of order >= j judged absent), or k_max + 1 when every
    hypothesis is rejected.
    """

    records: list[dict]
    holm_rejections: list[bool]
    selected_order: int
    alpha: float

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "tests": self.records,
            "holm_rejections": list(map(bool, self.holm_rejections)),
            "selected_order": self.selected_order,
        }


def order_test(
    fit: GaussianFit,
    design: PropagatedDesign | None,
    k_max: int,
    xi: float = 0.05,
    normal_approx_min_dim: int = NORMAL_APPROX_MIN_DIM,
) -> OrderTestReport:
    """Sequential Wald tests for orders j = 0..k_max with Holm correction.

    For each j the hypothesis is that all coefficients of order >= j are
    zero.  P-values use the chi-square(m) upper tail for restriction
    dimension below ``normal_approx_min_dim`` and otherwise the normal
    approximation ``2(1 - Phi(Z))`` with ``Z = (T - m)/sqrt(2m)``, clamped
    to [0, 1].
    """
    if not 0 < xi < 1:
        raise ValueError("xi must lie in (0, 1)")
    bound = _order_bound(fit, design)
    if k_max < 0 or k_max > bound:
        raise ValueError(f"k_max={k_max} outside [0, {bound}]")
    records = []
    for j in range(k_max + 1):
        rec = wald_statistic(fit, design, j)
        m, T = rec["m"], rec["T"]
        if m == 0:
            rec.update({"Z": 0.0, "p": 1.0, "regime": "empty", "no_columns": True})
        else:
            z = (T - m) / math.sqrt(2.0 * m)
            if m < normal_approx_min_dim:
                p = float(stats.chi2.sf(T, df=m))
                regime = "chi2"
            else:
                p = float(min(max(2.0 * (1.0 - stats.norm.cdf(z)), 0.0), 1.0))
                regime = "normal"
            rec.update({"Z": z, "p": p, "regime": regime})
        records.append(rec)
    pvals = np.asarray([r["p"] for r in records])
    rejected = holm_reject(pvals, xi)
    not_rejected = np.flatnonzero(~rejected)
    selected_order = int(not_rejected[0]) if not_rejected.size else k_max + 1
    return OrderTestReport(
        records=records,
        holm_rejections=rejected.tolist(),
        selected_order=selected_order,
        alpha=xi,
    )
