"""Network logistic regression: Newton conditional MLE on propagated designs.

The linear predictor is an explicit intercept plus the selected propagated
columns (no centering for this family).  Newton steps use the observed
information and step-halving so the log-likelihood never decreases; a
separation guard converts runaway coefficients into a typed error instead
of pseudo-converged output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .design import PropagatedDesign
from .exceptions import SeparationError
from ._newton import newton_maximize

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100
SEPARATION_BOUND = 30.0  # logit scale beyond double-precision probability resolution


@dataclass(eq=False)
class LogisticFit:
    """Converged conditional MLE; ``theta_hat[0]`` is the intercept."""

    theta_hat: np.ndarray
    selected: list[int]
    provenance: list[tuple[int, int]]
    column_names: list[str]
    log_likelihood: float
    iterations: int
    converged: bool
    information: np.ndarray  # (1/N) sum_i w_i x_i x_i', intercept included
    std_errors: np.ndarray
    n: int
    loglik_trace: list[float]  # objective after each accepted Newton step


def _log_likelihood(eta: np.ndarray, y: np.ndarray) -> float:
    # sum_i y*eta - log(1 + exp(eta)), stable for large |eta|
    return float(y @ eta - np.logaddexp(0.0, eta).sum())


def fit_logistic(
    design: PropagatedDesign,
    y: np.ndarray,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    separation_bound: float = SEPARATION_BOUND,
) -> LogisticFit:
    """Newton maximization of the Bernoulli log-likelihood.

    The design must be uncentered and forward-selected; an all-ones
    intercept column is prepended internally.  Iterations start at zero,
    halve the step whenever the log-likelihood would not increase, and
    stop when the max-norm of the accepted step falls below ``tol``.
    Raises :class:`SeparationError` when the fitted logits exceed
    ``separation_bound`` (beyond double-precision probability resolution)
    while the iteration is still moving, the signature of a likelihood
    maximized only at infinity.
    """
    if design.selected is None:
        raise ValueError("design must be forward-selected before fitting")
    if design.centered:
        raise ValueError("logistic fits use the uncentered design with an explicit intercept")
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.shape[0] != design.n_rows:
        raise ValueError(f"response has {y.shape[0]} rows, design has {design.n_rows}")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("logistic responses must be 0/1")

    X = np.column_stack([np.ones(design.n_rows), design.selected_matrix()])
    n, p = X.shape

    def objective(theta):
        eta = X @ theta
        pr = expit(eta)
        ll = _log_likelihood(eta, y)
        score = X.T @ (y - pr)
        w = pr * (1.0 - pr)
        hess = (X * w[:, None]).T @ X
        return ll, score, hess

    def guard(theta, step_inf):
        if step_inf >= tol and np.abs(X @ theta).max() > separation_bound:
            raise SeparationError(
                "perfect separation detected: fitted logits diverge without convergence"
            )

    def loglik_only(theta):
        return _log_likelihood(X @ theta, y)

    theta, ll, iterations, converged, hess, trace = newton_maximize(
        objective,
        np.zeros(p),
        max_iter=max_iter,
        tol=tol,
        loglik=loglik_only,
        guard=guard,
    )

    info_inv = np.linalg.inv(hess)
    return LogisticFit(
        theta_hat=theta,
        selected=list(design.selected),
        provenance=list(design.provenance),
        column_names=[design.column_names()[c] for c in design.selected],
        log_likelihood=ll,
        iterations=iterations,
        converged=converged,
        information=hess / n,
        std_errors=np.sqrt(np.diag(info_inv)),
        n=n,
        loglik_trace=trace,
    )


def predict_proba(fit: LogisticFit, design_new: PropagatedDesign) -> np.ndarray:
    """Fitted success probabilities for new rows."""
    if list(design_new.provenance) != list(fit.provenance):
        raise ValueError("provenance mismatch between fit and new design")
    if design_new.centered:
        raise ValueError("logistic predictions use the raw design")
    eta = fit.theta_hat[0] + design_new.full_matrix()[:, fit.selected] @ fit.theta_hat[1:]
    return expit(eta)


def auc(scores, labels) -> float:
    """Area under the ROC curve by the rank (Mann-Whitney) formula.

    Equals the fraction of (positive, negative) pairs where the positive
    scores higher, ties counted one half.  Requires both classes present.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have the same length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC undefined: need at least one positive and one negative label")
    from scipy.stats import rankdata

    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))
