import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tggp.exceptions import ConditioningError, ParameterError
from tggp.gp import (
    classify,
    jittered_cholesky,
    log_marginal_likelihood,
    one_hot,
    posterior,
)
from tggp.kernels import HyperParams, KernelSpec, base_kernel_matrix

LOG_2PI = math.log(2 * math.pi)


def random_psd(rng, n, rank=None):
    A = rng.standard_normal((n, rank or n))
    return A @ A.T / (rank or n)


def dense_lml(K, Y, noise):
    C = K + noise * np.eye(K.shape[0])
    Ci = np.linalg.inv(C)
    _, logdet = np.linalg.slogdet(C)
    s = K.shape[0]
    return sum(-0.5 * y @ Ci @ y - 0.5 * logdet - 0.5 * s * LOG_2PI for y in Y.T)


class TestLogMarginalLikelihood:
    def test_zero_target(self):
        assert log_marginal_likelihood([[1.0]], [0.0], 1e-14) == pytest.approx(-0.5 * LOG_2PI, abs=1e-12)
        assert -0.5 * LOG_2PI == pytest.approx(-0.918939, abs=1e-6)

    def test_pure_noise(self):
        lml = log_marginal_likelihood([[0.0]], [1.0], 1.0)
        assert lml == pytest.approx(-0.5 - 0.5 * LOG_2PI, abs=1e-14)
        assert lml == pytest.approx(-1.418939, abs=1e-6)

    def test_dense_oracle(self, rng):
        K = random_psd(rng, 6)
        Y = rng.standard_normal((6, 2))
        assert abs(log_marginal_likelihood(K, Y, 0.3) - dense_lml(K, Y, 0.3)) < 1e-8

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 10), st.integers(1, 4), st.integers(0, 2**31 - 1))
    def test_additive_over_channels(self, s, c, seed):
        r = np.random.default_rng(seed)
        K = random_psd(r, s)
        Y = r.standard_normal((s, c))
        total = log_marginal_likelihood(K, Y, 0.2)
        parts = sum(log_marginal_likelihood(K, Y[:, j], 0.2) for j in range(c))
        assert abs(total - parts) < 1e-10 * max(1.0, abs(total))

    def test_empty(self):
        with pytest.raises(ParameterError):
            log_marginal_likelihood(np.zeros((0, 0)), np.zeros(0), 1.0)

    def test_indefinite_raises(self):
        with pytest.raises(ConditioningError):
            log_marginal_likelihood([[1.0, 0.0], [0.0, -1.0]], [1.0, 1.0], 0.0)


class TestJitter:
    def test_semidefinite_needs_jitter(self):
        L, jitter = jittered_cholesky(np.ones((3, 3)))
        assert jitter > 0
        np.testing.assert_allclose(L @ L.T, np.ones((3, 3)) + jitter * np.eye(3), atol=1e-12)

    def test_no_jitter_when_pd(self):
        assert jittered_cholesky(np.eye(2))[1] == 0.0


class TestPosterior:
    def test_noiseless_interpolation(self, rng):
        X = rng.standard_normal((6, 2))
        X = np.vstack([X, X[2:3]])  # node 6 duplicates training node 2
        K = base_kernel_matrix(KernelSpec.feature_only(), HyperParams(), X)
        y = rng.standard_normal(6)
        post = posterior(K, np.arange(6), [6], y, 1e-10)
        assert abs(post.mean[0, 0] - y[2]) < 1e-4

    def test_identity_kernel_is_prior(self, rng):
        post = posterior(np.eye(5), [0, 1], [2, 3, 4], rng.standard_normal(2), 0.1)
        np.testing.assert_array_equal(post.mean, 0.0)
        np.testing.assert_allclose(post.variance, 1.0)

    def test_block_inverse_oracle(self, rng):
        K = random_psd(rng, 8)
        train, test = np.array([0, 3, 5, 6]), np.array([1, 2, 4, 7])
        Y = rng.standard_normal((4, 3))
        post = posterior(K, train, test, Y, 0.05)
        Ci = np.linalg.inv(K[np.ix_(train, train)] + 0.05 * np.eye(4))
        Kst = K[np.ix_(test, train)]
        np.testing.assert_allclose(post.mean, Kst @ Ci @ Y, atol=1e-8)
        np.testing.assert_allclose(post.variance, np.diag(K[np.ix_(test, test)] - Kst @ Ci @ Kst.T), atol=1e-8)
        assert abs(post.lml - dense_lml(K[np.ix_(train, train)], Y, 0.05)) < 1e-8

    def test_empty_train(self):
        with pytest.raises(ParameterError):
            posterior(np.eye(3), [], [0, 1], np.zeros(0), 0.1)

    def test_overlap(self):
        with pytest.raises(ParameterError):
            posterior(np.eye(3), [0, 1], [1, 2], np.zeros(2), 0.1)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(3, 15), st.integers(0, 2**31 - 1))
    def test_variance_bounded_by_prior(self, n, seed):
        r = np.random.default_rng(seed)
        K = random_psd(r, n, rank=max(1, n // 2))
        s = int(r.integers(1, n))
        perm = r.permutation(n)
        post = posterior(K, perm[:s], perm[s:], r.standard_normal(s), 0.01)
        assert np.all(post.variance <= np.diag(K)[perm[s:]] + 1e-8)
        assert np.all(post.variance >= 0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(4, 15), st.integers(0, 2**31 - 1))
    def test_more_data_never_increases_variance(self, n, seed):
        r = np.random.default_rng(seed)
        K = random_psd(r, n)
        perm = r.permutation(n)
        s = int(r.integers(1, n - 1))
        small = posterior(K, perm[:s], perm[s + 1:], r.standard_normal(s), 0.1)
        big = posterior(K, perm[: s + 1], perm[s + 1:], r.standard_normal(s + 1), 0.1)
        assert np.all(big.variance <= small.variance + 1e-10)


class TestClassify:
    def test_simple(self):
        assert classify([[0.2, 0.8]])[0] == 1

    def test_tie_goes_low(self):
        assert classify([[0.5, 0.5]])[0] == 0
        assert classify([[0.1, 0.7, 0.7]])[0] == 1

    def test_linear_scan_oracle(self, rng):
        S = rng.integers(0, 5, size=(100, 4)).astype(float)  # many ties
        expect = []
        for row in S:
            best = 0
            for j in range(1, 4):
                if row[j] > row[best]:
                    best = j
            expect.append(best)
        np.testing.assert_array_equal(classify(S), expect)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_monotone_transform_invariance(self, seed):
        S = np.random.default_rng(seed).standard_normal((30, 5))
        base = classify(S)
        for f in (np.exp, lambda x: x**3, lambda x: 2 * x + 7, np.arctan):
            np.testing.assert_array_equal(classify(f(S)), base)


class TestOneHot:
    def test_examples(self):
        np.testing.assert_array_equal(one_hot([0], 2), [[1, 0]])
        np.testing.assert_array_equal(one_hot([1, 0], 2), [[0, 1], [1, 0]])

    @pytest.mark.parametrize("y", [[2], [-1], [0.5]])
    def test_out_of_range(self, y):
        with pytest.raises(ParameterError):
            one_hot(y, 2)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(0, 6), min_size=1, max_size=40))
    def test_round_trip(self, y):
        np.testing.assert_array_equal(classify(one_hot(y, 7)), y)
