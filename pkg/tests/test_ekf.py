"""Inner (conditional) extended Kalman filter against exact-KF oracles."""

import numpy as np
import pytest

from nestedgauss.ekf import (
    InnerFilterState,
    ekf_predict,
    ekf_run_from_scratch,
    ekf_step,
    ekf_update,
    predictive_log_likelihood,
)
from nestedgauss.gaussian import GaussianBelief
from nestedgauss.models import ModelSpec


def linear_model(a, q, h, r, dx=1, dy=1):
    """x' = A x, y = H x with scalar or matrix coefficients."""
    A = np.atleast_2d(np.asarray(a, dtype=float))
    H = np.atleast_2d(np.asarray(h, dtype=float))
    Q = np.atleast_2d(np.asarray(q, dtype=float))
    R = np.atleast_2d(np.asarray(r, dtype=float))
    return ModelSpec(
        dx=dx,
        dy=dy,
        dtheta=0,
        drift=lambda x, th: A @ x,
        drift_jacobian=lambda x, th: A,
        obs=lambda x, th: H @ x,
        obs_jacobian=lambda x, th: H,
        state_noise_cov=Q,
        obs_noise_cov=R,
    )


def exact_kf(A, Q, H, R, m, C, ys):
    """Textbook Kalman filter; the oracle the EKF must reproduce exactly
    on linear models."""
    A, Q, H, R = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (A, Q, H, R))
    out = []
    for y in np.atleast_2d(ys):
        m = A @ m
        C = A @ C @ A.T + Q
        S = H @ C @ H.T + R
        K = C @ H.T @ np.linalg.inv(S)
        m = m + K @ (np.atleast_1d(y) - H @ m)
        C = (np.eye(C.shape[0]) - K @ H) @ C
        out.append((m.copy(), C.copy()))
    return out


THETA0 = np.zeros(0)


class TestPredict:
    def test_linear_closed_form(self):
        model = linear_model(a=0.8, q=0.3, h=1.0, r=1.0)
        out = ekf_predict(GaussianBelief([2.0], [[0.5]]), THETA0, model, 1)
        assert out.mean[0] == pytest.approx(0.8 * 2.0)
        assert out.cov[0, 0] == pytest.approx(0.8**2 * 0.5 + 0.3)

    def test_zero_noise_zero_cov(self):
        model = linear_model(a=1.5, q=0.0, h=1.0, r=1.0)
        out = ekf_predict(GaussianBelief([1.0], [[0.0]]), THETA0, model, 1)
        assert out.mean[0] == pytest.approx(1.5)
        assert out.cov[0, 0] <= 1e-11

    def test_micro_step_composition(self):
        model = linear_model(a=0.9, q=0.2, h=1.0, r=1.0)
        b = GaussianBelief([1.0], [[1.0]])
        five = ekf_predict(b, THETA0, model, 5)
        step = b
        for _ in range(5):
            step = ekf_predict(step, THETA0, model, 1)
        np.testing.assert_allclose(five.mean, step.mean, atol=1e-12)
        np.testing.assert_allclose(five.cov, step.cov, atol=1e-12)

    def test_micro_steps_validated(self):
        model = linear_model(a=1.0, q=0.0, h=1.0, r=1.0)
        with pytest.raises(ValueError):
            ekf_predict(GaussianBelief([0.0], [[1.0]]), THETA0, model, 0)


class TestUpdate:
    def test_scalar_closed_form(self):
        model = linear_model(a=1.0, q=0.0, h=1.0, r=1.0)
        post = ekf_update(GaussianBelief([0.0], [[1.0]]), [1.0], THETA0, model)
        assert post.mean[0] == pytest.approx(0.5)
        assert post.cov[0, 0] == pytest.approx(0.5)

    def test_zero_innovation_keeps_mean(self):
        model = linear_model(a=1.0, q=0.0, h=2.0, r=0.7)
        prior = GaussianBelief([3.0], [[1.3]])
        post = ekf_update(prior, [6.0], THETA0, model)
        assert post.mean[0] == pytest.approx(3.0)

    def test_huge_noise_keeps_prior(self):
        model = linear_model(a=1.0, q=0.0, h=1.0, r=1e12)
        prior = GaussianBelief([1.0], [[1.0]])
        post = ekf_update(prior, [5.0], THETA0, model)
        assert post.mean[0] == pytest.approx(1.0, abs=1e-6)
        assert post.cov[0, 0] == pytest.approx(1.0, abs=1e-6)

    def test_update_never_increases_trace(self):
        rng = np.random.default_rng(1)
        model = linear_model(a=[[0.9, 0.1], [0.0, 0.8]], q=0.1 * np.eye(2), h=[[1.0, 0.0]], r=0.5, dx=2, dy=1)
        belief = GaussianBelief([0.0, 0.0], np.eye(2))
        for _ in range(50):
            pred = ekf_predict(belief, THETA0, model, 1)
            belief = ekf_update(pred, rng.standard_normal(1), THETA0, model)
            assert np.trace(belief.cov) <= np.trace(pred.cov) + 1e-12


class TestPredictiveLogLikelihood:
    def test_scalar_closed_form(self):
        model = linear_model(a=1.0, q=0.0, h=1.0, r=1.0)
        ll = predictive_log_likelihood(GaussianBelief([0.0], [[1.0]]), [0.0], THETA0, model)
        assert ll == pytest.approx(-0.5 * np.log(4 * np.pi))
        assert ll == pytest.approx(-1.26551, abs=1e-5)

    def test_maximized_at_predicted_mean(self):
        model = linear_model(a=1.0, q=0.0, h=1.5, r=0.8)
        pred = GaussianBelief([2.0], [[0.6]])
        center = predictive_log_likelihood(pred, [3.0], THETA0, model)
        for y in (2.0, 2.9, 3.1, 4.0):
            assert predictive_log_likelihood(pred, [y], THETA0, model) <= center

    def test_against_monte_carlo_oracle(self):
        # E_x[N(y | h x, r)] estimated from a million prior draws.
        model = linear_model(a=1.0, q=0.0, h=1.0, r=0.5)
        pred = GaussianBelief([0.7], [[1.2]])
        y = 1.1
        rng = np.random.default_rng(0)
        xs = rng.normal(0.7, np.sqrt(1.2), size=1_000_000)
        dens = np.exp(-0.5 * (y - xs) ** 2 / 0.5) / np.sqrt(2 * np.pi * 0.5)
        mc = np.log(dens.mean())
        ll = predictive_log_likelihood(pred, [y], THETA0, model)
        assert ll == pytest.approx(mc, abs=1e-3)


class TestRunFromScratch:
    def test_empty_observations(self):
        model = linear_model(a=1.0, q=0.1, h=1.0, r=1.0)
        prior = GaussianBelief([0.4], [[2.0]])
        state, ll = ekf_run_from_scratch(THETA0, model, prior, np.empty((0, 1)), 1)
        assert ll is None
        np.testing.assert_array_equal(state.belief.mean, prior.mean)

    def test_matches_exact_kalman_filter(self):
        rng = np.random.default_rng(2)
        a, q, h, r = 0.93, 0.2, 1.1, 0.6
        model = linear_model(a=a, q=q, h=h, r=r)
        ys = rng.standard_normal((100, 1))
        prior = GaussianBelief([0.0], [[1.0]])
        oracle = exact_kf(a, q, h, r, np.array([0.0]), np.array([[1.0]]), ys)
        state = InnerFilterState(prior, THETA0, 0)
        for y, (om, oc) in zip(ys, oracle):
            state, _ = ekf_step(state, y, THETA0, model, 1)
            np.testing.assert_allclose(state.belief.mean, om, atol=1e-10)
            np.testing.assert_allclose(state.belief.cov, oc, atol=1e-10)

    def test_matches_exact_kf_2d(self):
        rng = np.random.default_rng(3)
        A = np.array([[0.9, 0.1], [-0.05, 0.85]])
        Q = 0.1 * np.eye(2)
        H = np.array([[1.0, 0.0]])
        R = np.array([[0.4]])
        model = linear_model(a=A, q=Q, h=H, r=R, dx=2, dy=1)
        ys = rng.standard_normal((200, 1))
        prior = GaussianBelief(np.zeros(2), np.eye(2))
        oracle = exact_kf(A, Q, H, R, np.zeros(2), np.eye(2), ys)
        state = InnerFilterState(prior, THETA0, 0)
        for y, (om, oc) in zip(ys, oracle):
            state, _ = ekf_step(state, y, THETA0, model, 1)
            np.testing.assert_allclose(state.belief.mean, om, atol=1e-10)
            np.testing.assert_allclose(state.belief.cov, oc, atol=1e-10)

    def test_replay_equals_incremental(self):
        rng = np.random.default_rng(4)
        model = linear_model(a=0.95, q=0.15, h=1.0, r=0.9)
        ys = rng.standard_normal((30, 1))
        prior = GaussianBelief([0.0], [[1.0]])
        replayed, ll_replay = ekf_run_from_scratch(THETA0, model, prior, ys, 1)
        state = InnerFilterState(prior, THETA0, 0)
        ll_inc = None
        for y in ys:
            state, ll_inc = ekf_step(state, y, THETA0, model, 1)
        np.testing.assert_allclose(replayed.belief.mean, state.belief.mean, atol=1e-14)
        np.testing.assert_allclose(replayed.belief.cov, state.belief.cov, atol=1e-14)
        assert ll_replay == pytest.approx(ll_inc, abs=1e-14)
