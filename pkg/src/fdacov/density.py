"""Product-Gaussian kernel density estimates with least-squares cross-validation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fdacov.errors import DegenerateSample, DimensionMismatch, InvalidBandwidth

#: multipliers of the normal-reference bandwidth searched by LSCV
CV_MULTIPLIERS = np.geomspace(0.1, 3.0, 20)
#: relative density floor (times the normal-reference density at the centroid)
FLOOR_FACTOR = 1e-3
#: LSCV is run on a seeded subsample when the sample is larger than this
MAX_CV_POINTS = 800

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _as_points(points) -> np.ndarray:
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or not 1 <= x.shape[1] <= 3:
        raise DimensionMismatch(f"points must be N x d with d in 1..3, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class DensityEstimate:
    """Gaussian product-kernel density estimate.

    Calling the object evaluates ``max(fhat(x), floor)``; use :meth:`raw` for
    the unclamped estimate.
    """

    points: np.ndarray
    bandwidths: np.ndarray
    floor: float

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def raw(self, x, chunk: int = 2_000_000) -> np.ndarray:
        x = _as_points(x)
        if x.shape[1] != self.dim:
            raise DimensionMismatch(f"expected {self.dim}-dimensional evaluation points")
        # quadrature grids often repeat points (e.g. f_UU on a 3-d grid)
        x, inverse = np.unique(x, axis=0, return_inverse=True)
        h = self.bandwidths
        norm = self.points.shape[0] * np.prod(h) * (2.0 * math.pi) ** (self.dim / 2.0)
        out = np.empty(x.shape[0])
        step = max(1, chunk // max(1, self.points.shape[0]))
        for s in range(0, x.shape[0], step):
            q = np.zeros((min(step, x.shape[0] - s), self.points.shape[0]))
            for l in range(self.dim):
                q += ((x[s : s + step, l, None] - self.points[None, :, l]) / h[l]) ** 2
            out[s : s + step] = np.exp(-0.5 * q).sum(axis=1) / norm
        return out[inverse.reshape(-1)]

    def __call__(self, x) -> np.ndarray:
        return np.maximum(self.raw(x), self.floor)


def normal_reference_bandwidths(points) -> np.ndarray:
    """Per-axis ``1.06 * sd * N^(-1/(4+d))``."""
    x = _as_points(points)
    n, d = x.shape
    sd = x.std(axis=0, ddof=1)
    if np.any(~(sd > 0)):
        raise DegenerateSample("an axis of the sample has zero variance")
    return 1.06 * sd * n ** (-1.0 / (4 + d))


def _density_floor(x: np.ndarray) -> float:
    sd = x.std(axis=0, ddof=1)
    sd = np.where(sd > 0, sd, 1.0)
    peak = math.exp(-x.shape[1] * _LOG_SQRT_2PI) / float(np.prod(sd))
    return FLOOR_FACTOR * peak


def kde_fit(points, bandwidths) -> DensityEstimate:
    """Fit a product-Gaussian KDE with the given per-axis bandwidths."""
    x = _as_points(points)
    if x.shape[0] < 2:
        raise DimensionMismatch("need at least two points")
    h = np.atleast_1d(np.asarray(bandwidths, dtype=float))
    if h.shape != (x.shape[1],):
        raise DimensionMismatch(f"need {x.shape[1]} bandwidths, got {h.shape[0]}")
    if np.any(~(h > 0)) or np.any(~np.isfinite(h)):
        raise InvalidBandwidth(f"bandwidths must be positive and finite, got {h}")
    x = x.copy()
    x.setflags(write=False)
    h.setflags(write=False)
    return DensityEstimate(points=x, bandwidths=h, floor=_density_floor(x))


def lscv_scores(points, base: np.ndarray, multipliers=CV_MULTIPLIERS) -> np.ndarray:
    """LSCV criterion for bandwidths ``c * base`` for each multiplier ``c``.

    Uses the closed form of ``int fhat^2`` for Gaussian kernels:
    ``N^-2 sum_ij phi_{sqrt(2) h}(X_i - X_j)``.
    """
    x = _as_points(points)
    n, d = x.shape
    q = np.zeros((n, n))
    for l in range(d):
        q += ((x[:, l, None] - x[None, :, l]) / base[l]) ** 2
    off = ~np.eye(n, dtype=bool)
    scale = (2.0 * math.pi) ** (d / 2.0) * float(np.prod(base))
    scores = np.empty(len(multipliers))
    for idx, c in enumerate(multipliers):
        k_h = np.exp(-0.5 * q / c**2) / (scale * c**d)
        k_2h = np.exp(-0.25 * q / c**2) / (scale * (math.sqrt(2.0) * c) ** d)
        int_f2 = k_2h.sum() / n**2
        loo = k_h[off].sum() / (n * (n - 1))
        scores[idx] = int_f2 - 2.0 * loo
    return scores


def kde_cv_bandwidth(points, max_points: int = MAX_CV_POINTS, seed: int = 0) -> np.ndarray:
    """Per-axis bandwidths minimizing LSCV over a multiplier grid.

    The grid is ``CV_MULTIPLIERS`` times the per-axis normal-reference
    bandwidth. Samples larger than ``max_points`` are cross-validated on a
    seeded subsample and the result rescaled by ``(N_sub / N)^(1/(4+d))``.
    """
    x = _as_points(points)
    n, d = x.shape
    if n < 10:
        raise DimensionMismatch("cross-validation needs at least 10 points")
    if n > max_points:
        rng = np.random.Generator(np.random.Philox(key=seed))
        sub = x[np.sort(rng.choice(n, size=max_points, replace=False))]
        rescale = (max_points / n) ** (1.0 / (4 + d))
    else:
        sub, rescale = x, 1.0
    base = normal_reference_bandwidths(sub)
    scores = lscv_scores(sub, base)
    best = int(np.argmin(scores))
    return CV_MULTIPLIERS[best] * base * rescale


def kde_cv(points, max_points: int = MAX_CV_POINTS, seed: int = 0) -> DensityEstimate:
    """Convenience: :func:`kde_fit` at the cross-validated bandwidth."""
    return kde_fit(points, kde_cv_bandwidth(points, max_points=max_points, seed=seed))
