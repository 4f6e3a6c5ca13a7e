"""Network Cox proportional-hazards model on propagated covariates.

Maximum partial likelihood with Breslow handling of tied event times.  The
risk-set sums are accumulated in a single pass over the observations sorted
by descending time (subjects sharing a time enter the risk set together, so
censored subjects at an event time remain at risk for it), which costs
O(N log N) for the sort plus O(N d) per evaluation for the score and
O(N d^2) for the information.  The partial likelihood depends on the times
only through their ranks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design import PropagatedDesign
from ._newton import newton_maximize

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100


@dataclass(eq=False)
class SurvivalData:
    """Right-censored observation times with event indicators."""

    time: np.ndarray
    event: np.ndarray

    def __post_init__(self):
        time = np.asarray(self.time, dtype=np.float64).ravel()
        event = np.asarray(self.event).ravel()
        if time.shape != event.shape:
            raise ValueError("time and event must have the same length")
        if np.any(time <= 0) or not np.all(np.isfinite(time)):
            raise ValueError("observed times must be positive and finite")
        if not np.all((event == 0) | (event == 1)):
            raise ValueError("event indicators must be 0/1")
        if event.sum() == 0:
            raise ValueError("at least one event is required")
        self.time = time
        self.event = event.astype(np.int64)

    @property
    def n(self) -> int:
        return self.time.shape[0]

    @property
    def n_events(self) -> int:
        return int(self.event.sum())


@dataclass(eq=False)
class CoxFit:
    """Maximum partial likelihood estimate over selected columns."""

    lambda_hat: np.ndarray
    selected: list[int]
    provenance: list[tuple[int, int]]
    column_names: list[str]
    partial_loglik: float
    information: np.ndarray  # observed information / N at the optimum
    std_errors: np.ndarray
    iterations: int
    converged: bool
    n: int
    loglik_trace: list[float]


class _RiskSetEngine:
    """Precomputed ordering and tie groups for fast Breslow evaluation."""

    def __init__(self, X: np.ndarray, time: np.ndarray, event: np.ndarray):
        # descending time so the risk set of each event time is a prefix
        order = np.argsort(-time, kind="stable")
        self.X = X[order]
        self.event = event[order].astype(bool)
        t_sorted = time[order]
        # group boundaries for tied times: starts[g]..ends[g]-1 share a time
        change = np.flatnonzero(np.diff(t_sorted) != 0.0) + 1
        self.starts = np.concatenate([[0], change])
        self.ends = np.concatenate([change, [t_sorted.size]])
        # events per tie group
        self.d_group = np.add.reduceat(self.event.astype(np.float64), self.starts)
        self.event_groups = np.flatnonzero(self.d_group > 0)
        self.n = X.shape[0]
        self.p = X.shape[1]

    def loglik(self, beta: np.ndarray) -> float:
        eta = self.X @ beta
        shift = eta.max() if eta.size else 0.0
        w = np.exp(eta - shift)
        s0 = np.cumsum(np.add.reduceat(w, self.starts))  # prefix-inclusive per group
        ll = float(eta[self.event] .sum())
        ll -= float(self.d_group[self.event_groups] @ (np.log(s0[self.event_groups]) + shift))
        return ll

    def loglik_score_info(self, beta: np.ndarray):
        X, starts = self.X, self.starts
        eta = X @ beta
        shift = eta.max()
        w = np.exp(eta - shift)
        wX = X * w[:, None]
        s0 = np.cumsum(np.add.reduceat(w, starts))
        s1 = np.cumsum(np.add.reduceat(wX, starts, axis=0), axis=0)

        eg = self.event_groups
        d = self.d_group[eg]
        s0_e = s0[eg]
        u = s1[eg] / s0_e[:, None]  # risk-set mean covariate per event group

        ll = float(eta[self.event].sum() - d @ (np.log(s0_e) + shift))
        score = self.X[self.event].sum(axis=0) - d @ u

        # sum over event groups of d * S2/S0 equals X' diag(w * c) X where
        # c_i aggregates d/S0 over all event groups whose risk set holds row i
        ratio = np.zeros(s0.shape[0])
        ratio[eg] = d / s0_e
        c_group = np.cumsum(ratio[::-1])[::-1]
        c_row = np.repeat(c_group, self.ends - starts)
        info = (X * (w * c_row)[:, None]).T @ X - (u * d[:, None]).T @ u
        return ll, score, info


def fit_cox(
    design: PropagatedDesign,
    surv: SurvivalData,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
) -> CoxFit:
    """Newton maximization of the Breslow partial likelihood.

    The design must be uncentered and forward-selected, with no intercept
    (any multiplicative constant is absorbed by the baseline hazard).
    Convergence and step-halving behave exactly as in the logistic fitter.
    """
    if design.selected is None:
        raise ValueError("design must be forward-selected before fitting")
    if design.centered:
        raise ValueError("cox fits use the uncentered design")
    if surv.n != design.n_rows:
        raise ValueError(f"survival data has {surv.n} rows, design has {design.n_rows}")

    X = design.selected_matrix()
    engine = _RiskSetEngine(X, surv.time, surv.event)

    beta, ll, iterations, converged, info, trace = newton_maximize(
        engine.loglik_score_info,
        np.zeros(X.shape[1]),
        max_iter=max_iter,
        tol=tol,
        loglik=engine.loglik,
    )

    info_inv = np.linalg.inv(info)
    return CoxFit(
        lambda_hat=beta,
        selected=list(design.selected),
        provenance=list(design.provenance),
        column_names=[design.column_names()[c] for c in design.selected],
        partial_loglik=ll,
        information=info / surv.n,
        std_errors=np.sqrt(np.diag(info_inv)),
        iterations=iterations,
        converged=converged,
        n=surv.n,
        loglik_trace=trace,
    )


def predict_relative_risk(fit: CoxFit, design_new: PropagatedDesign) -> np.ndarray:
    """Hazard ratios ``exp(x'lambda_hat)`` for new rows."""
    if list(design_new.provenance) != list(fit.provenance):
        raise ValueError("provenance mismatch between fit and new design")
    if design_new.centered:
        raise ValueError("cox predictions use the raw design")
    return np.exp(design_new.full_matrix()[:, fit.selected] @ fit.lambda_hat)


def simulate_cox_data(
    design: PropagatedDesign,
    lambda_true: np.ndarray,
    baseline_rate: float,
    censor_rate: float,
    seed,
) -> SurvivalData:
    """Draw right-censored survival data consistent with the model.

    Event times are exponential with rate ``baseline_rate * exp(x'lambda)``
    (a constant baseline hazard); censoring times are independent
    exponential with rate ``censor_rate``.  Uses the selected columns when
    a selection is set, otherwise all columns.
    """
    if baseline_rate <= 0 or censor_rate <= 0:
        raise ValueError("rates must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    M = design.selected_matrix() if design.selected is not None else design.full_matrix()
    lambda_true = np.asarray(lambda_true, dtype=np.float64).ravel()
    if lambda_true.shape[0] != M.shape[1]:
        raise ValueError(
            f"lambda_true has {lambda_true.shape[0]} entries for {M.shape[1]} columns"
        )
    rates = baseline_rate * np.exp(M @ lambda_true)
    t_event = rng.exponential(1.0 / rates)
    t_censor = rng.exponential(1.0 / censor_rate, size=M.shape[0])
    time = np.minimum(t_event, t_censor)
    event = (t_event <= t_censor).astype(np.int64)
    return SurvivalData(time=time, event=event)
