"""Compiled kernels for the Lorenz 63 EKF inner loop.

The experiment sweeps replay inner filters over long observation histories
(cost quadratic in time when the recursion threshold is tight), so the
per-observation EKF step for the Lorenz model is jitted here with
hand-rolled 3x3 arithmetic: BLAS/LAPACK call overhead dominates at these
sizes.  The generic numpy implementations in :mod:`nestedgauss.ekf` remain
the reference; the kernels are checked against them in the test suite.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_LOG_2PI = np.log(2.0 * np.pi)


@njit(cache=True)
def _drift(x, theta, delta):
    out = np.empty(3)
    out[0] = x[0] - delta * theta[0] * (x[0] - x[1])
    out[1] = x[1] + delta * ((theta[1] - x[2]) * x[0] - x[1])
    out[2] = x[2] + delta * (x[0] * x[1] - theta[2] * x[2])
    return out


@njit(cache=True)
def simulate_lorenz_path(x0, theta, delta, noise, sig_step):
    """Euler-Maruyama path: noise is (T, 3) standard normal draws."""
    t_steps = noise.shape[0]
    states = np.empty((t_steps + 1, 3))
    states[0] = x0
    x = x0.copy()
    for t in range(t_steps):
        x = _drift(x, theta, delta) + sig_step * noise[t]
        states[t + 1] = x
    return states


@njit(cache=True, fastmath=True)
def ekf_replay_kernel(theta, m0, C0, ys, delta, q, G, sy2, micro_steps):
    """EKF over the whole observation slice, from the prior (m0, C0).

    One observation step is ``micro_steps`` prediction micro-steps (mean
    through the drift, covariance through the Jacobian sandwich plus the
    per-step noise variance q on the diagonal) followed by the linear
    measurement update against G with noise variance sy2.  Returns the
    final posterior, the last step's predictive log-likelihood, and an ok
    flag that goes False on numerical divergence.
    """
    s_p = theta[0]
    r_p = theta[1]
    b_p = theta[2]
    dy = G.shape[0]
    m = m0.copy()
    C = C0.copy()
    A = np.empty((3, 3))
    Cn = np.empty((3, 3))
    CGt = np.empty((3, dy))
    Sm = np.empty((dy, dy))
    L = np.empty((dy, dy))
    K = np.empty((3, dy))
    innov = np.empty(dy)
    alpha = np.empty(dy)
    ll = -np.inf

    for tstep in range(ys.shape[0]):
        for _ in range(micro_steps):
            x1 = m[0]
            x2 = m[1]
            x3 = m[2]
            j00 = 1.0 - delta * s_p
            j01 = delta * s_p
            j10 = delta * (r_p - x3)
            j11 = 1.0 - delta
            j12 = -delta * x1
            j20 = delta * x2
            j21 = delta * x1
            j22 = 1.0 - delta * b_p
            for c in range(3):  # A = J @ C (J[0,2] is 0)
                A[0, c] = j00 * C[0, c] + j01 * C[1, c]
                A[1, c] = j10 * C[0, c] + j11 * C[1, c] + j12 * C[2, c]
                A[2, c] = j20 * C[0, c] + j21 * C[1, c] + j22 * C[2, c]
            for r in range(3):  # C = A @ J^T + q I
                Cn[r, 0] = A[r, 0] * j00 + A[r, 1] * j01
                Cn[r, 1] = A[r, 0] * j10 + A[r, 1] * j11 + A[r, 2] * j12
                Cn[r, 2] = A[r, 0] * j20 + A[r, 1] * j21 + A[r, 2] * j22
            for r in range(3):
                for c in range(3):
                    C[r, c] = Cn[r, c]
                C[r, r] += q
            m[0] = x1 - delta * s_p * (x1 - x2)
            m[1] = x2 + delta * ((r_p - x3) * x1 - x2)
            m[2] = x3 + delta * (x1 * x2 - b_p * x3)

        for r in range(3):  # keep the covariance symmetric
            for c in range(r):
                v = 0.5 * (C[r, c] + C[c, r])
                C[r, c] = v
                C[c, r] = v

        for r in range(3):  # CGt = C @ G^T
            for c in range(dy):
                acc = 0.0
                for k in range(3):
                    acc += C[r, k] * G[c, k]
                CGt[r, c] = acc
        for r in range(dy):  # innovation covariance
            for c in range(dy):
                acc = 0.0
                for k in range(3):
                    acc += G[r, k] * CGt[k, c]
                Sm[r, c] = acc
            Sm[r, r] += sy2

        ok = True  # Cholesky Sm = L L^T
        for i in range(dy):
            for j in range(i + 1):
                acc = Sm[i, j]
                for k in range(j):
                    acc -= L[i, k] * L[j, k]
                if i == j:
                    if not np.isfinite(acc) or acc <= 0.0:
                        ok = False
                        break
                    L[i, i] = np.sqrt(acc)
                else:
                    L[i, j] = acc / L[j, j]
            if not ok:
                break
        if not ok:
            return m, C, -np.inf, False

        logdet = 0.0
        for r in range(dy):
            logdet += 2.0 * np.log(L[r, r])
            acc = 0.0
            for k in range(3):
                acc += G[r, k] * m[k]
            innov[r] = ys[tstep, r] - acc
        for i in range(dy):  # alpha = Sm^-1 innov via two triangular solves
            acc = innov[i]
            for k in range(i):
                acc -= L[i, k] * alpha[k]
            alpha[i] = acc / L[i, i]
        for i in range(dy - 1, -1, -1):
            acc = alpha[i]
            for k in range(i + 1, dy):
                acc -= L[k, i] * alpha[k]
            alpha[i] = acc / L[i, i]
        maha = 0.0
        for i in range(dy):
            maha += innov[i] * alpha[i]
        ll = -0.5 * (dy * _LOG_2PI + logdet + maha)
        if not np.isfinite(ll):
            return m, C, -np.inf, False

        for r in range(3):  # K = CGt Sm^-1, row-wise triangular solves
            for i in range(dy):
                acc = CGt[r, i]
                for k in range(i):
                    acc -= L[i, k] * K[r, k]
                K[r, i] = acc / L[i, i]
            for i in range(dy - 1, -1, -1):
                acc = K[r, i]
                for k in range(i + 1, dy):
                    acc -= L[k, i] * K[r, k]
                K[r, i] = acc / L[i, i]

        for r in range(3):  # posterior mean and covariance
            acc = 0.0
            for k in range(dy):
                acc += K[r, k] * innov[k]
            m[r] += acc
        for r in range(3):  # (I - K G) C = C - K (G C); G C = CGt^T for symmetric C
            for c in range(3):
                acc = 0.0
                for k in range(dy):
                    acc += K[r, k] * CGt[c, k]
                Cn[r, c] = C[r, c] - acc
        for r in range(3):
            for c in range(3):
                C[r, c] = 0.5 * (Cn[r, c] + Cn[c, r])
        if not (np.isfinite(m[0]) and np.isfinite(m[1]) and np.isfinite(m[2])):
            return m, C, -np.inf, False

    return m, C, ll, True


@njit(cache=True)
def ekf_step_kernel(m, C, theta, delta, q, G, sy2, y, micro_steps):
    """One predict(micro_steps) + update against a single observation."""
    return ekf_replay_kernel(theta, m, C, y.reshape(1, y.shape[0]), delta, q, G, sy2, micro_steps)


@njit(cache=True)
def ekf_track_nmse_kernel(theta, m0, C0, ys, truth, delta, q, G, sy2, micro_steps):
    """EKF over the full record, returning per-observation NMSE_x values.

    ``truth`` holds the true state at each observation time.
    """
    n = ys.shape[0]
    nmse = np.empty(n)
    m = m0.copy()
    C = C0.copy()
    for j in range(n):
        m, C, ll, ok = ekf_replay_kernel(theta, m, C, ys[j : j + 1], delta, q, G, sy2, micro_steps)
        if not ok:
            nmse[j:] = np.nan
            return nmse, False
        err0 = truth[j, 0] - m[0]
        err1 = truth[j, 1] - m[1]
        err2 = truth[j, 2] - m[2]
        denom = truth[j, 0] ** 2 + truth[j, 1] ** 2 + truth[j, 2] ** 2
        nmse[j] = (err0 * err0 + err1 * err1 + err2 * err2) / denom
    return nmse, True


@njit(cache=True)
def ekf_step_batch_kernel(ms, Cs, thetas, delta, q, G, sy2, y, micro_steps):
    """Advance a bank of EKFs (one row per parameter vector) one observation.

    ``ms`` and ``Cs`` are updated in place; returns the per-filter
    log-likelihoods and an all-ok flag.
    """
    n = thetas.shape[0]
    lls = np.empty(n)
    ok_all = True
    yy = y.reshape(1, y.shape[0])
    for i in range(n):
        m, C, ll, ok = ekf_replay_kernel(thetas[i], ms[i], Cs[i], yy, delta, q, G, sy2, micro_steps)
        ms[i] = m
        Cs[i] = C
        lls[i] = ll
        if not ok:
            ok_all = False
    return lls, ok_all
