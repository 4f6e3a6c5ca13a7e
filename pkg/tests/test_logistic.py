import numpy as np
import pytest
from scipy.special import expit

from npr.design import PropagatedDesign, build_design, forward_select
from npr.exceptions import SeparationError
from npr.graph import DirectedGraph, gen_erdos_renyi, row_normalize
from npr.logistic import auc, fit_logistic, predict_proba


def empty_operator(n):
    return row_normalize(DirectedGraph(n, np.empty((0, 2), dtype=np.int64)))


def selected_design(W, X, K):
    return forward_select(build_design(W, X, K))


def gradient_ascent_logistic(X, y, lr=0.05, steps=200_000, tol=1e-12):
    """Independent oracle: plain fixed-step gradient ascent on the
    Bernoulli log-likelihood (intercept included in X)."""
    beta = np.zeros(X.shape[1])
    for _ in range(steps):
        g = X.T @ (y - expit(X @ beta)) / X.shape[0]
        beta_new = beta + lr * g
        if np.abs(beta_new - beta).max() < tol:
            return beta_new
        beta = beta_new
    return beta


def simulate_logistic(rng, W, X, K, alpha, lambdas):
    design = build_design(W, X, K)
    eta = alpha + np.zeros(X.shape[0])
    cols = design.full_matrix()
    d = X.shape[1]
    for k, lam in enumerate(lambdas):
        eta = eta + cols[:, k * d:(k + 1) * d] @ lam
    y = (rng.random(X.shape[0]) < expit(eta)).astype(float)
    return design, y


class TestFitLogistic:
    def test_reduces_to_plain_logistic_regression(self):
        # 20-point instance, K=0: agrees with a from-scratch gradient
        # ascent fit to 1e-6
        rng = np.random.default_rng(0)
        X = rng.standard_normal((20, 2))
        eta = 0.3 + X @ np.array([1.0, -0.7])
        y = (rng.random(20) < expit(eta)).astype(float)
        design = selected_design(empty_operator(20), X, 0)
        fit = fit_logistic(design, y)
        oracle = gradient_ascent_logistic(np.column_stack([np.ones(20), X]), y)
        assert np.abs(fit.theta_hat - oracle).max() < 1e-6
        assert fit.converged

    def test_constant_response_raises_separation(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((30, 1))
        design = selected_design(empty_operator(30), X, 0)
        with pytest.raises(SeparationError):
            fit_logistic(design, np.ones(30))

    def test_separable_data_raises(self):
        X = np.linspace(-2, 2, 40).reshape(-1, 1)
        y = (X.ravel() > 0).astype(float)
        design = selected_design(empty_operator(40), X, 0)
        with pytest.raises(SeparationError):
            fit_logistic(design, y)

    def test_rejects_non_binary_response(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((10, 1))
        design = selected_design(empty_operator(10), X, 0)
        with pytest.raises(ValueError, match="0/1"):
            fit_logistic(design, np.full(10, 0.5))

    def test_rejects_centered_design(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((10, 1))
        from npr.design import center

        design = forward_select(center(build_design(empty_operator(10), X, 0)))
        with pytest.raises(ValueError, match="uncentered"):
            fit_logistic(design, np.zeros(10))

    def test_loglik_monotone_and_score_small(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            n = 150
            g = gen_erdos_renyi(n, rng)
            W = row_normalize(g)
            X = rng.standard_normal((n, 2))
            design, y = simulate_logistic(rng, W, X, 1, 0.2, [np.array([0.8, -0.4]), np.array([0.5, 0.3])])
            if y.min() == y.max():
                continue
            fit = fit_logistic(forward_select(design), y)
            trace = np.asarray(fit.loglik_trace)
            assert np.all(np.diff(trace) >= -1e-10)
            M = np.column_stack([np.ones(n), forward_select(design).selected_matrix()])
            score = M.T @ (y - expit(M @ fit.theta_hat))
            assert np.abs(score).max() < 1e-8 * n
            # observed information is symmetric positive semi-definite
            assert np.abs(fit.information - fit.information.T).max() < 1e-12
            assert np.linalg.eigvalsh(fit.information).min() > -1e-10

    def test_score_and_hessian_match_finite_differences(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            n = 30
            g = gen_erdos_renyi(n, rng)
            X = rng.standard_normal((n, 2))
            design, y = simulate_logistic(rng, row_normalize(g), X, 1, 0.0, [np.array([0.6, -0.3]), np.array([0.2, 0.4])])
            M = np.column_stack([np.ones(n), forward_select(design).selected_matrix()])
            theta = rng.normal(0, 0.3, M.shape[1])

            def ll(t):
                eta = M @ t
                return float(y @ eta - np.logaddexp(0.0, eta).sum())

            score = M.T @ (y - expit(M @ theta))
            w = expit(M @ theta) * (1 - expit(M @ theta))
            hess = (M * w[:, None]).T @ M
            hg, hh = 1e-5, 1e-4  # larger step for second differences (roundoff)
            for i in range(M.shape[1]):
                e = np.zeros(M.shape[1])
                e[i] = hg
                fd = (ll(theta + e) - ll(theta - e)) / (2 * hg)
                assert abs(fd - score[i]) < 1e-5 * max(1.0, abs(score[i]))
                e = np.zeros(M.shape[1])
                e[i] = hh
                for j in range(M.shape[1]):
                    ej = np.zeros(M.shape[1])
                    ej[j] = hh
                    fd2 = (
                        ll(theta + e + ej) - ll(theta + e - ej) - ll(theta - e + ej) + ll(theta - e - ej)
                    ) / (4 * hh * hh)
                    assert abs(fd2 + hess[i, j]) < 1e-5 * max(1.0, abs(hess[i, j]))

    def test_column_reorder_invariance(self):
        rng = np.random.default_rng(6)
        n = 120
        g = gen_erdos_renyi(n, rng)
        W = row_normalize(g)
        X = rng.standard_normal((n, 3))
        design, y = simulate_logistic(rng, W, X, 1, 0.1, [np.array([0.7, -0.2, 0.4]), np.array([0.3, 0.1, -0.5])])
        fit1 = fit_logistic(forward_select(design), y)
        perm = [2, 0, 1]
        design2 = build_design(W, X[:, perm], 1)
        fit2 = fit_logistic(forward_select(design2), y)
        # same intercept, permuted slopes
        assert fit2.theta_hat[0] == pytest.approx(fit1.theta_hat[0], abs=1e-7)
        d = 3
        for k in range(2):
            block1 = fit1.theta_hat[1 + k * d:1 + (k + 1) * d]
            block2 = fit2.theta_hat[1 + k * d:1 + (k + 1) * d]
            assert np.allclose(block2, block1[perm], atol=1e-7)

    def test_estimation_consistency_large_n(self):
        # with a known generative model at n=5000 the CMLE lands close on
        # average across replicates
        rng = np.random.default_rng(7)
        alpha, lam0, lam1 = -0.2, np.array([0.8, -0.5]), np.array([0.6, 0.3])
        errs = []
        for _ in range(60):
            n = 5000
            g = gen_erdos_renyi(n, rng)
            W = row_normalize(g)
            X = rng.standard_normal((n, 2))
            design, y = simulate_logistic(rng, W, X, 1, alpha, [lam0, lam1])
            fit = fit_logistic(forward_select(design), y)
            truth = np.concatenate([[alpha], lam0, lam1])
            errs.append(np.abs(fit.theta_hat - truth).max())
        assert np.mean(errs) < 0.15


class TestPredictProba:
    def test_zero_coefficients_give_half(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((25, 2))
        design = selected_design(empty_operator(25), X, 0)
        y = (rng.random(25) < 0.5).astype(float)
        fit = fit_logistic(design, y)
        fit.theta_hat[:] = 0.0
        assert np.all(predict_proba(fit, design) == 0.5)

    def test_monotone_in_positive_coefficient(self):
        rng = np.random.default_rng(9)
        X = rng.standard_normal((40, 1))
        design = selected_design(empty_operator(40), X, 0)
        y = (rng.random(40) < expit(1.5 * X.ravel())).astype(float)
        if y.min() == y.max():
            pytest.skip("degenerate draw")
        fit = fit_logistic(design, y)
        assert fit.theta_hat[1] > 0
        bumped = PropagatedDesign(blocks=[X + 1.0], provenance=[(0, 0)], selected=[0])
        assert np.all(predict_proba(fit, bumped) > predict_proba(fit, design))

    def test_round_trip_training_probabilities(self):
        rng = np.random.default_rng(10)
        n = 100
        g = gen_erdos_renyi(n, rng)
        X = rng.standard_normal((n, 2))
        design, y = simulate_logistic(rng, row_normalize(g), X, 1, 0.0, [np.array([0.5, 0.5]), np.array([0.2, -0.2])])
        sel = forward_select(design)
        fit = fit_logistic(sel, y)
        M = np.column_stack([np.ones(n), sel.selected_matrix()])
        direct = expit(M @ fit.theta_hat)
        assert np.abs(predict_proba(fit, design) - direct).max() < 1e-12
        assert np.all((predict_proba(fit, design) > 0) & (predict_proba(fit, design) < 1))

    def test_provenance_mismatch(self):
        rng = np.random.default_rng(11)
        X = rng.standard_normal((20, 2))
        design = selected_design(empty_operator(20), X, 0)
        y = (rng.random(20) < 0.5).astype(float)
        if y.min() == y.max():
            y[0] = 1 - y[0]
        fit = fit_logistic(design, y)
        other = build_design(empty_operator(20), X, 1)
        with pytest.raises(ValueError, match="provenance"):
            predict_proba(fit, other)


class TestAuc:
    def test_perfect_separation(self):
        assert auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0

    def test_all_tied_scores(self):
        assert auc([0.5] * 6, [1, 0, 1, 0, 1, 0]) == 0.5

    def test_reversed_scores(self):
        assert auc([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0]) == 0.0

    def test_matches_pairwise_definition(self):
        rng = np.random.default_rng(12)
        scores = rng.choice([0.1, 0.3, 0.5, 0.7], size=30)
        labels = rng.integers(0, 2, size=30)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        pos = scores[labels == 1]
        neg = scores[labels == 0]
        pairs = np.mean((pos[:, None] > neg[None, :]) + 0.5 * (pos[:, None] == neg[None, :]))
        assert auc(scores, labels) == pytest.approx(pairs, abs=1e-12)

    def test_independent_scores_near_half(self):
        rng = np.random.default_rng(13)
        scores = rng.random(20_000)
        labels = rng.integers(0, 2, 20_000)
        assert abs(auc(scores, labels) - 0.5) < 0.02

    def test_single_class_rejected(self):
        with pytest.raises(ValueError, match="AUC undefined"):
            auc([0.1, 0.9], [1, 1])
