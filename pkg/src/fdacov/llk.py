"""Local polynomial kernel smoothers for the mean and covariance surfaces.

All smoothers solve weighted normal equations ``(X'WX) beta = X'WY`` at the
evaluation point. Before solving, the normal matrix is equilibrated by its
diagonal; the condition number of the equilibrated matrix is the singularity
diagnostic, so it does not depend on the bandwidth scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from fdacov.data import PanelSample, RawCovariancePanel
from fdacov.errors import EvaluationOutsideDomain, SingularSystem
from fdacov.kernels import GAUSSIAN, KernelSpec, product_weight

COND_LIMIT = 1e12


@dataclass(frozen=True)
class SurfaceEstimate:
    """Intercept of a local fit.

    Attributes
    ----------
    value : float
    point : tuple of float
    effective_mass : float
        Sum of the kernel weights used.
    at_boundary : bool
        True if some coordinate lies within one bandwidth of the edge of
        ``[0, 1]``; the bias and variance formulas only hold in the interior.
    """

    value: float
    point: tuple
    effective_mass: float
    at_boundary: bool = False


def _check_point(point):
    for c in point:
        if not 0.0 <= c <= 1.0:
            raise EvaluationOutsideDomain(f"evaluation point {point} outside the unit cube")


def _near_boundary(point, bandwidths) -> bool:
    return any(min(c, 1.0 - c) < h for c, h in zip(point, bandwidths))


def weighted_solve(design: np.ndarray, w: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Solve the weighted normal equations with a condition check.

    Raises
    ------
    SingularSystem
        If the total weight vanishes or the equilibrated normal matrix has
        condition number above ``COND_LIMIT``.
    """
    wx = design * w[:, None]
    a = design.T @ wx
    b = wx.T @ y
    d = np.sqrt(np.diag(a))
    if not np.all(d > 0) or not np.all(np.isfinite(a)):
        raise SingularSystem("local window carries no weight on some regressor")
    a_s = a / np.outer(d, d)
    cond = np.linalg.cond(a_s)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularSystem(f"local normal matrix condition number {cond:.3g} exceeds {COND_LIMIT:.0e}")
    return linalg.solve(a_s, b / d, check_finite=False) / d


def _fit_intercept(offsets, bandwidths, response, kernel, point) -> SurfaceEstimate:
    w = product_weight(kernel, offsets, bandwidths)
    mass = float(w.sum())
    if not mass > 0:
        raise SingularSystem(f"no kernel mass at {point}")
    design = np.column_stack([np.ones_like(response)] + list(offsets))
    beta = weighted_solve(design, w, response)
    return SurfaceEstimate(float(beta[0]), tuple(point), mass, _near_boundary(point, bandwidths))


def fit_mean(
    sample: PanelSample, u: float, z: float, hU: float, hZ: float, kernel: KernelSpec = GAUSSIAN
) -> SurfaceEstimate:
    """Local linear estimate of the mean surface at ``(u, z)``."""
    _check_point((u, z))
    uu, zz, yy = sample.flat()
    return _fit_intercept([uu - u, zz - z], [hU, hZ], yy, kernel, (u, z))


def fit_cov(
    raw: RawCovariancePanel,
    u1: float,
    u2: float,
    z: float,
    hU: float,
    hZ: float,
    kernel: KernelSpec = GAUSSIAN,
) -> SurfaceEstimate:
    """Local linear estimate of the covariance surface from off-diagonal raw covariances."""
    _check_point((u1, u2, z))
    return _fit_intercept(
        [raw.u1 - u1, raw.u2 - u2, raw.z - z], [hU, hU, hZ], raw.c, kernel, (u1, u2, z)
    )


def fit_noisy_diagonal(
    raw: RawCovariancePanel, u: float, z: float, hU: float, hZ: float, kernel: KernelSpec = GAUSSIAN
) -> SurfaceEstimate:
    """Local linear estimate of ``gamma(u, u, z) + sigma^2`` from squared residuals."""
    _check_point((u, z))
    return _fit_intercept([raw.diag_u - u, raw.diag_z - z], [hU, hZ], raw.diag_c, kernel, (u, z))


def _cubic_design(du, dz):
    return np.column_stack([np.ones_like(du), du, du**2, du**3, dz, dz**2, dz**3])


def local_cubic_coefficients(
    sample: PanelSample, u: float, z: float, gU: float, gZ: float, kernel: KernelSpec = GAUSSIAN
) -> np.ndarray:
    """Coefficients of the additive local cubic ``1, du, du^2, du^3, dz, dz^2, dz^3``."""
    _check_point((u, z))
    uu, zz, yy = sample.flat()
    du, dz = uu - u, zz - z
    w = product_weight(kernel, [du, dz], [gU, gZ])
    if not w.sum() > 0:
        raise SingularSystem(f"no kernel mass at {(u, z)}")
    return weighted_solve(_cubic_design(du, dz), w, yy)


def fit_mean_derivatives(
    sample: PanelSample, u: float, z: float, gU: float, gZ: float, kernel: KernelSpec = GAUSSIAN
) -> tuple[float, float]:
    """Second partial derivatives ``(d^2/du^2, d^2/dz^2)`` of the mean at ``(u, z)``."""
    beta = local_cubic_coefficients(sample, u, z, gU, gZ, kernel)
    return 2.0 * float(beta[2]), 2.0 * float(beta[5])


class LocalCubicSmoother:
    """The additive local cubic smoother evaluated at every design point at once.

    Used for GCV: for each candidate ``(gU, gZ)`` it returns the fitted
    values, the diagonal of the smoother matrix and a singularity mask. The
    kernel sums are factored by curve, because ``Z`` is constant within a
    curve, so the U-part only has to be recomputed when ``gU`` changes.
    """

    def __init__(self, sample: PanelSample, kernel: KernelSpec = GAUSSIAN):
        self.kernel = kernel
        self.sample = sample
        uu, zz, yy = sample.flat()
        self.y = yy
        # offsets of every design point (rows) to every observation, grouped by curve
        self._du = sample.u[None, :, :] - uu[:, None, None]
        self._dz = sample.z[None, :] - zz[:, None]
        self._cache_gu = None

    def _u_sums(self, gU):
        if self._cache_gu is not None and self._cache_gu[0] == gU:
            return self._cache_gu[1], self._cache_gu[2]
        du = self._du
        a = self.kernel(du / gU) / gU
        t = np.empty((7,) + du.shape[:2])
        ty = np.empty((4,) + du.shape[:2])
        powk = a
        ya = a * self.sample.y[None, :, :]
        for p in range(7):
            t[p] = powk.sum(axis=2)
            if p < 4:
                ty[p] = (ya).sum(axis=2)
                ya = ya * du
            powk = powk * du
        self._cache_gu = (gU, t, ty)
        return t, ty

    def fit(self, gU: float, gZ: float, leave_out_curve: bool = False):
        """Return ``(fitted, influence, singular)`` arrays of length ``n*m``.

        With ``leave_out_curve`` each fitted value is computed without the
        observations of its own curve and ``influence`` is zero.
        """
        t, ty = self._u_sums(gU)
        dz = self._dz
        az = self.kernel(dz / gZ) / gZ
        zp = [az]
        for _ in range(6):
            zp.append(zp[-1] * dz)

        rows = np.arange(self.y.shape[0])
        own = np.repeat(np.arange(self.sample.n), self.sample.m)

        def total(zq, tp):
            out = np.einsum("kn,kn->k", zq, tp)
            if leave_out_curve:
                out -= zq[rows, own] * tp[rows, own]
            return out

        def s(p, q):
            return total(zp[q], t[p])

        def sy(p, q):
            return total(zp[q], ty[p])

        # basis index -> (power of du, power of dz)
        powers = [(0, 0), (1, 0), (2, 0), (3, 0), (0, 1), (0, 2), (0, 3)]
        nobs = self.y.shape[0]
        a = np.empty((nobs, 7, 7))
        b = np.empty((nobs, 7))
        memo = {}
        for r, (pr, qr) in enumerate(powers):
            b[:, r] = sy(pr, qr)
            for c in range(r, 7):
                pc, qc = powers[c]
                key = (pr + pc, qr + qc)
                if key not in memo:
                    memo[key] = s(*key)
                a[:, r, c] = a[:, c, r] = memo[key]
        d = np.sqrt(np.clip(np.einsum("kii->ki", a), 0.0, None))
        singular = ~np.all(d > 0, axis=1) | ~np.all(np.isfinite(a), axis=(1, 2))
        d_safe = np.where(d > 0, d, 1.0)
        a_s = a / (d_safe[:, :, None] * d_safe[:, None, :])
        a_s[singular] = np.eye(7)
        eig = np.linalg.eigvalsh(a_s)
        with np.errstate(divide="ignore", invalid="ignore"):
            cond = eig[:, -1] / eig[:, 0]
        cond = np.where(eig[:, 0] > 0, cond, np.inf)
        singular |= ~np.isfinite(cond) | (cond > COND_LIMIT)
        a_s[singular] = np.eye(7)
        rhs = np.zeros((nobs, 7, 2))
        rhs[:, :, 0] = b / d_safe
        rhs[:, 0, 1] = 1.0 / d_safe[:, 0]
        sol = np.linalg.solve(a_s, rhs)
        fitted = sol[:, 0, 0] / d_safe[:, 0]
        inv00 = sol[:, 0, 1] / d_safe[:, 0]
        w_self = (self.kernel(0.0) / gU) * (self.kernel(0.0) / gZ)
        influence = np.zeros_like(inv00) if leave_out_curve else w_self * inv00
        fitted[singular] = np.nan
        influence[singular] = np.nan
        return fitted, influence, singular
