"""Shared Newton ascent loop with step-halving and a jitter retry.

Used by the logistic and Cox fitters, which share the same convergence
contract: start at zero, never accept a step that decreases the objective,
declare convergence when the accepted step's max-norm drops below the
tolerance, and treat a singular information matrix as an error after one
retry with a tiny ridge.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg as sla

from .exceptions import SingularMatrixError

JITTER = 1e-10
MAX_HALVINGS = 40


def _solve_information(hess: np.ndarray, score: np.ndarray) -> np.ndarray:
    try:
        c, low = sla.cho_factor(hess)
        return sla.cho_solve((c, low), score)
    except np.linalg.LinAlgError:
        pass
    try:
        jittered = hess + JITTER * np.eye(hess.shape[0])
        c, low = sla.cho_factor(jittered)
        return sla.cho_solve((c, low), score)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("information matrix is singular") from exc


def newton_maximize(objective, theta0, max_iter, tol, loglik, guard=None):
    """Maximize an objective via damped Newton steps.

    ``objective(theta)`` returns ``(value, score, hessian)`` with the
    hessian given as the positive (observed information) matrix;
    ``loglik(theta)`` evaluates the objective alone (cheaper, used during
    step-halving); ``guard(theta, step_inf)``, when given, is called after
    every accepted step with the step's max-norm and may raise to abort
    divergent iterations.

    Returns ``(theta, value, iterations, converged, hessian_at_theta,
    trace)`` where ``trace`` lists the objective value at the start and
    after every accepted step.
    """
    theta = np.asarray(theta0, dtype=np.float64).copy()
    value, score, hess = objective(theta)
    trace = [value]
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        step = _solve_information(hess, score)
        scale = 1.0
        for _ in range(MAX_HALVINGS):
            candidate = theta + scale * step
            cand_value = loglik(candidate)
            if np.isfinite(cand_value) and cand_value >= value:
                break
            scale *= 0.5
        else:
            # objective cannot be improved along the Newton direction;
            # treat the current point as stationary
            converged = np.abs(score).max() < tol * max(1.0, abs(value))
            break
        theta = theta + scale * step
        value, score, hess = objective(theta)
        trace.append(value)
        step_inf = float(np.abs(scale * step).max())
        if guard is not None:
            guard(theta, step_inf)
        if step_inf < tol:
            converged = True
            break
    return theta, value, iterations, converged, hess, trace
