import numpy as np
import pytest

from cggm import (
    Dataset,
    InputError,
    NotPositiveDefiniteError,
    PenaltySpec,
    RankError,
    SufficientStats,
    mle_fit,
    neg_log_likelihood,
    penalized_objective,
    residual_scatter,
    sufficient_stats,
)


def small_stats():
    # hand-checked cross products of Y=[[1,2],[3,4]], X=[[1],[0]]
    return sufficient_stats(Dataset([[1, 2], [3, 4]], [[1], [0]]), center=False)


def random_stats(rng, p=4, q=3, n=60):
    y = rng.standard_normal((n, p))
    x = rng.standard_normal((n, q))
    return sufficient_stats(Dataset(y, x))


class TestDataset:
    def test_row_mismatch(self):
        with pytest.raises(InputError):
            Dataset(np.zeros((3, 2)), np.zeros((4, 1)))

    def test_too_few_samples(self):
        with pytest.raises(InputError):
            Dataset(np.zeros((1, 2)), np.zeros((1, 1)))

    def test_non_finite(self):
        y = np.zeros((3, 2))
        y[0, 0] = np.nan
        with pytest.raises(InputError):
            Dataset(y, np.zeros((3, 1)))

    def test_dims(self):
        d = Dataset(np.zeros((5, 3)), np.zeros((5, 2)))
        assert (d.n, d.p, d.q) == (5, 3, 2)


class TestSufficientStats:
    def test_hand_example(self):
        s = small_stats()
        np.testing.assert_allclose(s.c_y, [[5, 7], [7, 10]])
        np.testing.assert_allclose(s.c_yx, [[0.5], [1.0]])
        np.testing.assert_allclose(s.c_x, [[0.5]])
        assert s.n == 2

    def test_zero_responses(self):
        s = sufficient_stats(Dataset(np.zeros((3, 2)), np.ones((3, 1))), center=False)
        assert not s.c_y.any()
        assert not s.c_yx.any()

    def test_centering_kills_constant_rows(self):
        y = np.tile([1.5, -2.0, 3.0], (4, 1))
        s = sufficient_stats(Dataset(y, np.arange(4.0)[:, None]), center=True)
        np.testing.assert_allclose(s.c_y, 0, atol=1e-15)

    def test_row_permutation_invariance(self):
        rng = np.random.default_rng(0)
        y = rng.standard_normal((30, 3))
        x = rng.standard_normal((30, 2))
        perm = rng.permutation(30)
        a = sufficient_stats(Dataset(y, x))
        b = sufficient_stats(Dataset(y[perm], x[perm]))
        np.testing.assert_allclose(a.c_y, b.c_y, atol=1e-13)
        np.testing.assert_allclose(a.c_yx, b.c_yx, atol=1e-13)
        np.testing.assert_allclose(a.c_x, b.c_x, atol=1e-13)

    def test_validation(self):
        with pytest.raises(InputError):
            SufficientStats(np.eye(2), np.zeros((2, 1)), np.eye(2), 5)
        with pytest.raises(InputError):
            SufficientStats([[1, 0.5], [0.4, 1]], np.zeros((2, 1)), np.eye(1), 5)
        with pytest.raises(InputError):
            SufficientStats([[1, 2], [2, 1]], np.zeros((2, 1)), np.eye(1), 5)  # not PSD


class TestResidualScatter:
    def test_zero_gamma_returns_c_y(self):
        s = small_stats()
        np.testing.assert_array_equal(residual_scatter(s, np.zeros((2, 1))), s.c_y)

    def test_hand_example(self):
        s = small_stats()
        np.testing.assert_allclose(
            residual_scatter(s, [[1.0], [2.0]]), [[4.5, 6], [6, 8]]
        )

    def test_mle_gamma_simplification(self):
        rng = np.random.default_rng(1)
        s = random_stats(rng)
        gamma = np.linalg.solve(s.c_x, s.c_yx.T).T
        direct = s.c_y - s.c_yx @ np.linalg.solve(s.c_x, s.c_yx.T)
        np.testing.assert_allclose(residual_scatter(s, gamma), direct, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            residual_scatter(small_stats(), np.zeros((3, 1)))

    def test_symmetric(self):
        rng = np.random.default_rng(2)
        s = random_stats(rng)
        out = residual_scatter(s, rng.standard_normal((4, 3)))
        assert np.abs(out - out.T).max() <= 1e-10


class TestNegLogLikelihood:
    def make(self, c_y, p=2, q=1, n=10):
        return SufficientStats(c_y, np.zeros((p, q)), np.eye(q), n)

    def test_identity_case(self):
        s = self.make(np.eye(2))
        assert neg_log_likelihood(s, np.eye(2), np.zeros((2, 1))) == pytest.approx(2.0)

    def test_zero_scatter(self):
        s = self.make(np.zeros((3, 3)), p=3)
        assert neg_log_likelihood(s, np.eye(3), np.zeros((3, 1))) == pytest.approx(0.0)

    def test_scaled_identity(self):
        s = self.make(np.eye(2))
        value = neg_log_likelihood(s, 2 * np.eye(2), np.zeros((2, 1)))
        assert value == pytest.approx(-2 * np.log(2) + 4, abs=1e-12)

    def test_not_pd_raises(self):
        s = self.make(np.eye(2))
        with pytest.raises(NotPositiveDefiniteError):
            neg_log_likelihood(s, np.diag([1.0, -1.0]), np.zeros((2, 1)))

    def test_matches_trace_expansion(self):
        # the scatter-based value must equal the expanded four-trace form
        rng = np.random.default_rng(3)
        for _ in range(20):
            s = random_stats(rng)
            gamma = rng.standard_normal((4, 3))
            a = rng.standard_normal((4, 4))
            theta = a @ a.T + 4 * np.eye(4)
            expanded = (
                -np.linalg.slogdet(theta)[1]
                + np.trace(s.c_y @ theta)
                - np.trace(s.c_yx @ gamma.T @ theta)
                - np.trace(gamma @ s.c_yx.T @ theta)
                + np.trace(gamma @ s.c_x @ gamma.T @ theta)
            )
            assert neg_log_likelihood(s, theta, gamma) == pytest.approx(
                expanded, abs=1e-10
            )


class TestPenalizedObjective:
    def test_zero_penalties_exact(self):
        rng = np.random.default_rng(4)
        s = random_stats(rng)
        gamma = rng.standard_normal((4, 3))
        theta = np.eye(4) * 1.7
        pen = PenaltySpec(0.0, 0.0)
        assert penalized_objective(s, theta, gamma, pen) == neg_log_likelihood(
            s, theta, gamma
        )

    def test_hand_example(self):
        s = SufficientStats(np.eye(2), np.zeros((2, 1)), np.eye(1), 10)
        value = penalized_objective(
            s, np.eye(2), np.zeros((2, 1)), PenaltySpec(1.0, 0.5)
        )
        assert value == pytest.approx(3.0, abs=1e-12)

    def test_unit_weights_match_unweighted(self):
        rng = np.random.default_rng(5)
        s = random_stats(rng)
        gamma = rng.standard_normal((4, 3))
        a = rng.standard_normal((4, 4))
        theta = a @ a.T + 4 * np.eye(4)
        plain = PenaltySpec(0.3, 0.7)
        weighted = PenaltySpec(
            0.3, 0.7, adaptive=True,
            gamma_weights=np.ones((4, 3)), theta_weights=np.ones((4, 4)),
        )
        assert penalized_objective(s, theta, gamma, plain) == pytest.approx(
            penalized_objective(s, theta, gamma, weighted), abs=1e-14
        )

    def test_penalty_spec_validation(self):
        with pytest.raises(InputError):
            PenaltySpec(-0.1, 0.2)
        with pytest.raises(InputError):
            PenaltySpec(0.1, 0.2, adaptive=True, exponent=0.0)
        with pytest.raises(InputError):
            PenaltySpec(0.1, 0.2, gamma_weights=-np.ones((2, 2)))


class TestMleFit:
    def test_zero_cross_covariance(self):
        c_y = np.array([[2.0, 0.5], [0.5, 1.0]])
        s = SufficientStats(c_y, np.zeros((2, 2)), np.eye(2), 50)
        theta, gamma = mle_fit(s)
        assert not gamma.any()
        np.testing.assert_allclose(theta, np.linalg.inv(c_y), atol=1e-12)

    def test_scalar_case(self):
        s = SufficientStats([[2.0]], [[1.0]], [[1.0]], 50)
        theta, gamma = mle_fit(s)
        assert gamma[0, 0] == pytest.approx(1.0)
        assert theta[0, 0] == pytest.approx(1.0)

    def test_degenerate_two_sample_case(self):
        # n = p = 2 makes the residual scatter exactly singular
        with pytest.raises(RankError):
            mle_fit(sufficient_stats(Dataset([[1, 2], [3, 4]], [[1], [0]]), center=False))

    def test_singular_c_x(self):
        x = np.ones((10, 2))  # duplicated marker column
        rng = np.random.default_rng(6)
        y = rng.standard_normal((10, 2))
        with pytest.raises(RankError):
            mle_fit(sufficient_stats(Dataset(y, x), center=False))

    def test_zero_gradient_identities(self):
        # at the MLE: residual scatter equals inverse precision, and the
        # cross product is reproduced by gamma @ c_x
        rng = np.random.default_rng(7)
        s = random_stats(rng, p=3, q=2, n=100)
        theta, gamma = mle_fit(s)
        np.testing.assert_allclose(
            residual_scatter(s, gamma), np.linalg.inv(theta), atol=1e-8
        )
        np.testing.assert_allclose(s.c_yx, gamma @ s.c_x, atol=1e-8)
