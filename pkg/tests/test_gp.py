import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import multivariate_normal

from latentgeo.errors import InputError
from latentgeo.gp import (LatentModel, TrainOptions, avg_training_error, fit_gplvm, fit_gplvm_with_report,
                          init_model, likelihood_grad_log_params, likelihood_grad_X, log_marginal_likelihood,
                          posterior_mean, train)
from latentgeo.kernel import KernelParams, gram_matrix


def random_model(seed, N=6, q=2, p=4, params=None):
    r = np.random.default_rng(seed)
    params = params or KernelParams(alpha=r.uniform(0.5, 2), omega=r.uniform(0.3, 2), beta=r.uniform(5, 50))
    return LatentModel(r.normal(size=(N, q)), r.normal(size=(N, p)), params)


def fd_grad_X(model, h=1e-5):
    G = np.zeros_like(model.X)
    for idx in np.ndindex(*model.X.shape):
        Xp, Xm = model.X.copy(), model.X.copy()
        Xp[idx] += h
        Xm[idx] -= h
        G[idx] = (log_marginal_likelihood(model.with_X(Xp)) - log_marginal_likelihood(model.with_X(Xm))) / (2 * h)
    return G


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


class TestLatentModel:
    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_cached_factors_consistent(self, seed):
        m = random_model(seed, N=12)
        K = gram_matrix(m.X, m.params)
        assert np.linalg.norm(m.chol @ m.chol.T - K) / np.linalg.norm(K) < 1e-8
        assert np.linalg.norm(K @ m.alpha_vec - m.Y) / np.linalg.norm(m.Y) < 1e-8

    def test_immutable(self):
        m = random_model(0)
        with pytest.raises(ValueError):
            m.X[0, 0] = 1.0
        with pytest.raises(AttributeError):
            m.params = KernelParams()

    def test_derived_models_refresh_caches(self):
        m = random_model(0)
        m2 = m.with_X(m.X + 0.5 * np.eye(6, 2))
        assert np.allclose(gram_matrix(m2.X, m2.params) @ m2.alpha_vec, m2.Y)
        m3 = m.with_params(KernelParams(alpha=3.0))
        assert np.allclose(gram_matrix(m3.X, m3.params) @ m3.alpha_vec, m3.Y)

    @pytest.mark.parametrize("X,Y", [
        (np.zeros((3, 2)), np.zeros((4, 3))),
        (np.full((2, 1), np.nan), np.zeros((2, 3))),
        (np.zeros(3), np.zeros((3, 2))),
    ])
    def test_rejects_bad_arrays(self, X, Y):
        with pytest.raises(InputError):
            LatentModel(X, Y, KernelParams())


class TestLikelihood:
    @pytest.mark.parametrize("y", [0.0, 1.0])
    def test_scalar_gaussian(self, y):
        m = LatentModel([[0.0]], [[y]], KernelParams(alpha=1.0, beta=10.0))
        expected = -0.5 * np.log(2 * np.pi * 1.1) - y ** 2 / (2 * 1.1)
        assert log_marginal_likelihood(m) == pytest.approx(expected, abs=1e-12)
        assert log_marginal_likelihood(m) == pytest.approx([-0.9665936, -1.4211391][int(y)], abs=1e-7)

    @pytest.mark.parametrize("seed", range(5))
    def test_dense_logpdf_oracle(self, seed):
        m = random_model(seed, N=5, q=2, p=3)
        K = gram_matrix(m.X, m.params)
        dense = sum(multivariate_normal(np.zeros(5), K).logpdf(m.Y[:, j]) for j in range(3))
        assert log_marginal_likelihood(m) == pytest.approx(dense, rel=1e-12)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_grad_X_matches_finite_differences(self, seed):
        m = random_model(seed)
        assert rel(likelihood_grad_X(m), fd_grad_X(m)) < 1e-4

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.integers(1, 3))
    def test_translation_invariance(self, seed, q):
        g = likelihood_grad_X(random_model(seed, N=8, q=q, p=5))
        assert np.abs(g.sum(axis=0)).max() < 1e-8

    @pytest.mark.parametrize("seed", range(4))
    def test_grad_log_params(self, seed):
        m = random_model(seed)
        h = 1e-5
        theta = np.log([m.params.alpha, m.params.omega, m.params.beta])
        fd = np.empty(3)
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            up = m.with_params(KernelParams(*np.exp(theta + e)))
            dn = m.with_params(KernelParams(*np.exp(theta - e)))
            fd[i] = (log_marginal_likelihood(up) - log_marginal_likelihood(dn)) / (2 * h)
        assert rel(likelihood_grad_log_params(m), fd) < 1e-6


class TestFit:
    def test_circle_improves_on_pca(self, circle_Y, circle_fit):
        model, report = circle_fit
        init = init_model(circle_Y, 2)
        assert log_marginal_likelihood(model) > log_marginal_likelihood(init)
        assert report.trace[0] == pytest.approx(log_marginal_likelihood(init), rel=1e-14)

    def test_trace_monotone(self, circle_fit):
        trace = np.array(circle_fit[1].trace)
        assert np.all(np.diff(trace) >= 0)

    def test_stationary_at_convergence(self):
        Y = np.random.default_rng(5).normal(size=(12, 4))
        model, report = fit_gplvm_with_report(Y, 2, TrainOptions(max_iter=20000))
        assert report.converged
        assert np.abs(likelihood_grad_X(model)).max() < TrainOptions().tol

    def test_iteration_cap(self, circle_fit):
        report = circle_fit[1]
        assert report.converged or report.iterations == TrainOptions().max_iter

    def test_deterministic(self, circle_Y, circle_model):
        again = fit_gplvm(circle_Y, 2)
        assert np.array_equal(again.X, circle_model.X)

    def test_seeded_init_noise_deterministic(self, circle_Y):
        opts = TrainOptions(max_iter=20, init_noise=0.05, seed=7)
        a, b = fit_gplvm(circle_Y, 2, opts), fit_gplvm(circle_Y, 2, opts)
        assert np.array_equal(a.X, b.X)
        assert not np.array_equal(a.X, fit_gplvm(circle_Y, 2, TrainOptions(max_iter=20)).X)

    def test_linear_subspace(self):
        r = np.random.default_rng(3)
        Z = r.normal(size=(30, 2))
        Y = Z @ r.normal(size=(2, 5))
        init = init_model(Y, 2)
        # PCA recovers the subspace: scores are an invertible linear map of Z
        coef, *_ = np.linalg.lstsq(np.column_stack([init.X, np.ones(30)]), Y - Y.mean(0), rcond=None)
        np.testing.assert_allclose(np.column_stack([init.X, np.ones(30)]) @ coef, Y - Y.mean(0), atol=1e-10)
        model, report = train(init, TrainOptions(max_iter=50))
        assert log_marginal_likelihood(model) >= log_marginal_likelihood(init)

    def test_hyperparameter_learning(self, circle_Y):
        opts = TrainOptions(max_iter=100, learn_hyperparams=True)
        model, report = fit_gplvm_with_report(circle_Y, 2, opts)
        assert np.all(np.diff(report.trace) >= 0)
        assert report.trace[-1] > report.trace[0]
        assert model.params != init_model(circle_Y, 2).params

    def test_data_centred_and_offset_kept(self, circle_Y, circle_model):
        np.testing.assert_allclose(circle_model.Y.mean(axis=0), 0, atol=1e-12)
        np.testing.assert_allclose(circle_model.Y + circle_model.Y_mean, circle_Y, atol=1e-12)

    @pytest.mark.parametrize("Y,q", [(np.zeros((1, 3)), 1), (np.zeros((5, 3)), 3), (np.zeros((5, 3)), 0),
                                     (np.full((5, 3), np.inf), 1)])
    def test_input_errors(self, Y, q):
        with pytest.raises(InputError):
            fit_gplvm(Y, q)

    def test_overrides(self, circle_Y):
        m = init_model(circle_Y, 2, TrainOptions(alpha=2.0, omega=0.5, beta=10.0))
        assert m.params == KernelParams(2.0, 0.5, 10.0)

    def test_median_heuristic(self, circle_Y):
        from scipy.spatial.distance import pdist
        m = init_model(circle_Y, 2)
        assert np.median(pdist(m.X)) == pytest.approx(m.params.lengthscale, rel=1e-12)


class TestPosteriorMean:
    def test_far_field_is_prior_mean(self, circle_model):
        np.testing.assert_allclose(posterior_mean(circle_model, [1e3, -1e3]), 0.0, atol=0)

    def test_single_point_shrinkage(self):
        p = KernelParams(alpha=2.0, beta=4.0)
        m = LatentModel([[0.5]], [[1.0, -3.0]], p)
        np.testing.assert_allclose(posterior_mean(m, [0.5]), np.array([1.0, -3.0]) * 2.0 / 2.25, rtol=1e-14)

    @pytest.mark.parametrize("seed", range(3))
    def test_dense_oracle(self, seed):
        m = random_model(seed, N=10)
        xs = np.random.default_rng(seed + 100).normal(size=(4, 2))
        Ks = m.params.alpha * np.exp(-0.5 * m.params.omega * ((xs[:, None] - m.X[None]) ** 2).sum(-1))
        dense = Ks @ np.linalg.solve(gram_matrix(m.X, m.params), m.Y)
        assert rel(posterior_mean(m, xs), dense) < 1e-10
        assert rel(posterior_mean(m, xs[0]), dense[0]) < 1e-10

    def test_dimension_mismatch(self, circle_model):
        with pytest.raises(InputError):
            posterior_mean(circle_model, [0.0, 1.0, 2.0])

    def test_interpolation_limit(self):
        X = 4.0 * np.arange(6, dtype=float)[:, None] * np.array([[1.0, 0.5]])  # > 3 length-scales apart
        Y = np.random.default_rng(0).normal(size=(6, 3))
        m = LatentModel(X, Y, KernelParams(alpha=1.0, omega=1.0, beta=1e6))
        assert np.abs(posterior_mean(m, X) - Y).max() < 1e-3


class TestAvgTrainingError:
    def test_zero_data(self):
        m = LatentModel(np.arange(8.0).reshape(4, 2), np.zeros((4, 3)), KernelParams())
        assert avg_training_error(m) == 0.0

    def test_interpolation_limit(self):
        X = 4.0 * np.arange(5, dtype=float)[:, None] * np.ones((1, 2))
        Y = np.random.default_rng(1).normal(size=(5, 3))
        assert avg_training_error(LatentModel(X, Y, KernelParams(beta=1e8))) < 1e-6

    def test_loop_oracle(self, circle_model):
        m = circle_model
        total = 0.0
        for n in range(m.N):
            k = np.array([m.params.alpha * np.exp(-0.5 * m.params.omega * np.sum((m.X[n] - m.X[i]) ** 2))
                          for i in range(m.N)])
            f = k @ np.linalg.solve(gram_matrix(m.X, m.params), m.Y)
            total += np.sqrt(np.sum((f - m.Y[n]) ** 2))
        assert avg_training_error(m) == pytest.approx(total / m.N, rel=1e-9)
