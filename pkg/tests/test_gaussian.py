"""Sigma-point rules, Gaussian density and covariance repair."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nestedgauss.gaussian import (
    GaussianBelief,
    PsdRepairPolicy,
    cubature_points,
    gaussian_logpdf,
    moments_from_points,
    psd_repair,
    unscented_points,
)


def random_belief(rng, dim):
    a = rng.standard_normal((dim, dim))
    cov = a @ a.T + 0.1 * np.eye(dim)
    return GaussianBelief(rng.standard_normal(dim), cov)


class TestUnscentedPoints:
    def test_scalar_standard_normal_kappa2(self):
        pts = unscented_points(GaussianBelief([0.0], [[1.0]]), kappa=2.0)
        np.testing.assert_allclose(np.sort(pts.points.ravel()), [-np.sqrt(3), 0.0, np.sqrt(3)])
        np.testing.assert_allclose(pts.weights, [2 / 3, 1 / 6, 1 / 6])

    def test_2d_identity_kappa1(self):
        pts = unscented_points(GaussianBelief([1.0, 2.0], np.eye(2)), kappa=1.0)
        s = np.sqrt(3.0)
        expected = {(1.0, 2.0), (1 + s, 2.0), (1 - s, 2.0), (1.0, 2 + s), (1.0, 2 - s)}
        got = {tuple(np.round(p, 12)) for p in pts.points}
        assert got == {tuple(np.round(np.array(e), 12)) for e in expected}
        np.testing.assert_allclose(pts.weights, [1 / 3, 1 / 6, 1 / 6, 1 / 6, 1 / 6])

    def test_moment_matching(self):
        rng = np.random.default_rng(7)
        for dim in (1, 2, 3, 5):
            belief = random_belief(rng, dim)
            back = moments_from_points(unscented_points(belief))
            np.testing.assert_allclose(back.mean, belief.mean, atol=1e-10)
            np.testing.assert_allclose(back.cov, belief.cov, atol=1e-10)

    def test_default_kappa_weights_nonnegative(self):
        rng = np.random.default_rng(3)
        for dim in range(1, 8):
            pts = unscented_points(random_belief(rng, dim))
            assert np.all(pts.weights >= 0)
            assert len(pts) == 2 * dim + 1
            assert abs(pts.weights.sum() - 1.0) < 1e-12

    def test_invalid_belief_rejected(self):
        with pytest.raises(ValueError, match="invalid belief"):
            GaussianBelief([np.nan], [[1.0]])

    def test_kappa_lower_bound(self):
        with pytest.raises(ValueError):
            unscented_points(GaussianBelief([0.0], [[1.0]]), kappa=-1.0)


class TestCubaturePoints:
    def test_2d_identity(self):
        pts = cubature_points(GaussianBelief([0.0, 0.0], np.eye(2)))
        s = np.sqrt(2.0)
        expected = np.array([[s, 0.0], [-s, 0.0], [0.0, s], [0.0, -s]])
        got = sorted(map(tuple, pts.points))
        np.testing.assert_allclose(got, sorted(map(tuple, expected)), atol=1e-12)
        np.testing.assert_allclose(pts.weights, np.full(4, 0.25))

    def test_scalar(self):
        pts = cubature_points(GaussianBelief([5.0], [[4.0]]))
        np.testing.assert_allclose(np.sort(pts.points.ravel()), [3.0, 7.0])
        np.testing.assert_allclose(pts.weights, [0.5, 0.5])

    @given(dim=st.integers(1, 6), seed=st.integers(0, 1000))
    @settings(max_examples=30, deadline=None)
    def test_weights_and_moments(self, dim, seed):
        belief = random_belief(np.random.default_rng(seed), dim)
        pts = cubature_points(belief)
        assert len(pts) == 2 * dim
        assert abs(pts.weights.sum() - 1.0) < 1e-12
        back = moments_from_points(pts)
        np.testing.assert_allclose(back.mean, belief.mean, atol=1e-10)
        np.testing.assert_allclose(back.cov, belief.cov, atol=1e-10)


class TestMomentsFromPoints:
    def test_two_point_variance(self):
        from nestedgauss.gaussian import SigmaPointSet

        belief = moments_from_points(SigmaPointSet([[-1.0], [1.0]], [0.5, 0.5]))
        np.testing.assert_allclose(belief.mean, [0.0])
        np.testing.assert_allclose(belief.cov, [[1.0]], atol=1e-12)

    def test_single_point_degenerate(self):
        from nestedgauss.gaussian import SigmaPointSet

        belief = moments_from_points(SigmaPointSet([[2.0, -3.0]], [1.0]))
        np.testing.assert_allclose(belief.mean, [2.0, -3.0])
        np.testing.assert_allclose(belief.cov, np.zeros((2, 2)), atol=1e-10)

    def test_empty_rejected(self):
        from nestedgauss.gaussian import SigmaPointSet

        with pytest.raises(ValueError):
            moments_from_points(SigmaPointSet(np.empty((0, 1)), np.empty(0)))


class TestGaussianLogpdf:
    def test_standard_normal_at_zero(self):
        assert gaussian_logpdf([0.0], GaussianBelief([0.0], [[1.0]])) == pytest.approx(
            -0.9189385332046727
        )

    def test_at_mean_general(self):
        rng = np.random.default_rng(11)
        belief = random_belief(rng, 3)
        expected = -0.5 * (3 * np.log(2 * np.pi) + np.linalg.slogdet(belief.cov)[1])
        assert gaussian_logpdf(belief.mean, belief) == pytest.approx(expected, rel=1e-12)

    def test_scalar_variance_two(self):
        value = gaussian_logpdf([0.0], GaussianBelief([0.0], [[2.0]]))
        assert value == pytest.approx(-0.5 * (np.log(2 * np.pi) + np.log(2.0)))
        assert value == pytest.approx(-1.26551, abs=1e-5)

    def test_integrates_to_one(self):
        m, var = 1.3, 2.7
        belief = GaussianBelief([m], [[var]])
        sigma = np.sqrt(var)
        grid = np.linspace(m - 8 * sigma, m + 8 * sigma, 20001)
        dx = grid[1] - grid[0]
        total = sum(np.exp(gaussian_logpdf([x], belief)) for x in grid) * dx
        assert total == pytest.approx(1.0, abs=1e-6)


class TestPsdRepair:
    def test_identity_unchanged(self):
        np.testing.assert_array_equal(psd_repair(np.eye(3)), np.eye(3))

    def test_symmetrization_average(self):
        out = psd_repair(np.array([[1.0, 0.5], [0.4, 1.0]]))
        np.testing.assert_allclose(out, [[1.0, 0.45], [0.45, 1.0]])

    def test_eigen_floor(self):
        out = psd_repair(np.diag([1.0, -1e-15]), PsdRepairPolicy(eigen_floor=1e-12))
        assert np.all(np.linalg.eigvalsh(out) >= 1e-12 * (1 - 1e-9))
        assert out[0, 0] == pytest.approx(1.0)

    def test_idempotent(self):
        rng = np.random.default_rng(5)
        raw = rng.standard_normal((4, 4))
        once = psd_repair(raw)
        np.testing.assert_allclose(psd_repair(once), once, rtol=0, atol=1e-14)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            psd_repair(np.array([[np.inf, 0.0], [0.0, 1.0]]))

    def test_nonsquare_rejected(self):
        with pytest.raises(ValueError):
            psd_repair(np.ones((2, 3)))
