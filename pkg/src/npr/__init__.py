"""Regression on network-linked data via propagated covariates.

Responses are modeled as functions of covariates diffused k steps through
a directed network: continuous outcomes by least squares on the stacked
design (X, WX, ..., W^K X), binary outcomes by a logistic link with an
explicit intercept, and right-censored times by a proportional-hazards
partial likelihood.  Sequential Wald tests with Holm correction select
the relevant propagation order, and a simulation harness reproduces the
desk-scale benchmark studies.
"""

from .exceptions import (
    ConvergenceError,
    DegenerateDesignError,
    ModelError,
    SeparationError,
    SingularMatrixError,
)
from .graph import (
    DirectedGraph,
    RowStochasticOperator,
    gen_erdos_renyi,
    gen_powerlaw,
    gen_sbm,
    propagate,
    read_edge_list,
    row_normalize,
    spectral_bound_check,
    write_edge_list,
)
from .design import (
    PropagatedDesign,
    build_design,
    center,
    center_response,
    forward_select,
    read_covariates,
)
from .gaussian import (
    GaussianFit,
    OrderTestReport,
    fit_ols,
    holm_reject,
    order_test,
    t_statistics,
    wald_statistic,
)
from .logistic import LogisticFit, auc, fit_logistic, predict_proba
from .cox import CoxFit, SurvivalData, fit_cox, predict_relative_risk, simulate_cox_data
from .baselines import (
    Lim2Params,
    LimParams,
    fit_lim2_2sls,
    fit_lim_2sls,
    gen_cohesion,
    gen_lim,
    gen_lim2,
    gen_npr,
    lambda_series_lim,
    lambda_series_lim2,
)
from .sim import (
    ScenarioConfig,
    ScenarioReport,
    run_prediction_study,
    run_test_study,
    split_scenarios,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "ModelError",
    "ConvergenceError",
    "DegenerateDesignError",
    "SeparationError",
    "SingularMatrixError",
    "DirectedGraph",
    "RowStochasticOperator",
    "row_normalize",
    "propagate",
    "spectral_bound_check",
    "gen_erdos_renyi",
    "gen_sbm",
    "gen_powerlaw",
    "read_edge_list",
    "write_edge_list",
    "PropagatedDesign",
    "build_design",
    "center",
    "center_response",
    "forward_select",
    "read_covariates",
    "GaussianFit",
    "OrderTestReport",
    "fit_ols",
    "t_statistics",
    "wald_statistic",
    "order_test",
    "holm_reject",
    "LogisticFit",
    "fit_logistic",
    "predict_proba",
    "auc",
    "CoxFit",
    "SurvivalData",
    "fit_cox",
    "predict_relative_risk",
    "simulate_cox_data",
    "LimParams",
    "Lim2Params",
    "gen_lim",
    "gen_lim2",
    "lambda_series_lim",
    "lambda_series_lim2",
    "gen_npr",
    "gen_cohesion",
    "fit_lim_2sls",
    "fit_lim2_2sls",
    "ScenarioConfig",
    "ScenarioReport",
    "run_prediction_study",
    "run_test_study",
    "split_scenarios",
]
