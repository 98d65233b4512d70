"""Gaussian beliefs, deterministic sigma-point rules and safe covariance handling.

The building blocks here are shared by every filter in the package: a
``GaussianBelief`` is the N(m, C) representation used for states and
parameters alike, and the two point rules (unscented transform and
spherical cubature) turn a belief into a weighted point set with exact
first and second moments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


class DegenerateCovarianceError(ValueError):
    """Covariance is singular or not PSD even after repair."""


@dataclass(frozen=True)
class PsdRepairPolicy:
    """How to coerce a nearly-symmetric, nearly-PSD matrix into a valid one."""

    eigen_floor: float = 1e-12
    symmetrize: bool = True

    def __post_init__(self):
        if self.eigen_floor < 0:
            raise ValueError("eigen_floor must be >= 0")


DEFAULT_REPAIR = PsdRepairPolicy()


def psd_repair(cov: np.ndarray, policy: PsdRepairPolicy = DEFAULT_REPAIR) -> np.ndarray:
    """Symmetrize ``cov`` and floor its eigenvalues.

    The floor is scale-aware: ``policy.eigen_floor * max(1, largest diagonal
    entry)``, so tiny covariances are not inflated and huge ones are not left
    with relatively-negative eigenvalues.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise ValueError("non-finite entries in covariance")
    if policy.symmetrize:
        cov = 0.5 * (cov + cov.T)
    floor = policy.eigen_floor * max(1.0, float(np.max(np.diag(cov))) if cov.size else 1.0)
    w, v = np.linalg.eigh(cov)
    if w.size and w[0] >= floor:
        return cov
    w = np.maximum(w, floor)
    out = (v * w) @ v.T
    return 0.5 * (out + out.T)


@dataclass(frozen=True)
class GaussianBelief:
    """A multivariate normal N(mean, cov).

    The covariance is symmetrized on construction; use :func:`psd_repair`
    before constructing if the matrix may have (numerically) negative
    eigenvalues.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if mean.ndim != 1:
            raise ValueError("mean must be a vector")
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"cov shape {cov.shape} does not match dim {mean.size}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValueError("invalid belief: non-finite entries")
        cov = 0.5 * (cov + cov.T)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class SigmaPointSet:
    """Deterministic reference points with weights representing a Gaussian."""

    points: np.ndarray  # (M, d)
    weights: np.ndarray  # (M,)

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if points.shape[0] != weights.size:
            raise ValueError("points/weights length mismatch")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return self.points.shape[0]


def default_kappa(dim: int) -> float:
    """Julier's 3 - d heuristic, clamped at 0 so all weights stay nonnegative."""
    return max(0.0, 3.0 - dim)


def _sqrt_cov(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor after PSD repair."""
    repaired = psd_repair(cov)
    try:
        return np.linalg.cholesky(repaired)
    except np.linalg.LinAlgError as exc:
        raise DegenerateCovarianceError("covariance not PSD") from exc


def unscented_points(belief: GaussianBelief, kappa: float | None = None) -> SigmaPointSet:
    """Classic unscented transform: 2d+1 points.

    Points are the mean and mean +/- the columns of sqrt((d + kappa) * cov);
    weights are kappa/(d+kappa) for the center and 1/(2(d+kappa)) elsewhere.
    """
    d = belief.dim
    if kappa is None:
        kappa = default_kappa(d)
    if kappa <= -d:
        raise ValueError(f"kappa must exceed -d = {-d}")
    scale = d + kappa
    L = _sqrt_cov(belief.cov) * np.sqrt(scale)
    points = np.empty((2 * d + 1, d))
    points[0] = belief.mean
    points[1 : d + 1] = belief.mean + L.T
    points[d + 1 :] = belief.mean - L.T
    weights = np.full(2 * d + 1, 1.0 / (2.0 * scale))
    weights[0] = kappa / scale
    return SigmaPointSet(points, weights)


def cubature_points(belief: GaussianBelief) -> SigmaPointSet:
    """Spherical cubature rule: 2d equally-weighted points at mean +/- sqrt(d) L_j."""
    d = belief.dim
    L = _sqrt_cov(belief.cov) * np.sqrt(d)
    points = np.empty((2 * d, d))
    points[:d] = belief.mean + L.T
    points[d:] = belief.mean - L.T
    weights = np.full(2 * d, 1.0 / (2.0 * d))
    return SigmaPointSet(points, weights)


def moments_from_points(point_set: SigmaPointSet) -> GaussianBelief:
    """Weighted empirical mean/covariance of a point set (inverse of the rules)."""
    if len(point_set) == 0:
        raise ValueError("empty point set")
    w = point_set.weights
    pts = point_set.points
    mean = w @ pts
    centered = pts - mean
    cov = (centered * w[:, None]).T @ centered
    return GaussianBelief(mean, psd_repair(cov))


def gaussian_logpdf(x: np.ndarray, belief: GaussianBelief) -> float:
    """log N(x | mean, cov), with the covariance repaired and Cholesky-solved."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size != belief.dim:
        raise ValueError("dimension mismatch")
    cov = psd_repair(belief.cov)
    try:
        chol, lower = scipy.linalg.cho_factor(cov, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise DegenerateCovarianceError("degenerate density") from exc
    diff = x - belief.mean
    maha = diff @ scipy.linalg.cho_solve((chol, lower), diff)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return float(-0.5 * (belief.dim * np.log(2.0 * np.pi) + logdet + maha))
