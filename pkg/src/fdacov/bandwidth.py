"""AMISE-optimal bandwidth rules, their AMISE objectives, and GCV pilot bandwidths.

The four closed-form rules take the curvature/variance functionals of
:mod:`fdacov.polyfit` (or their true values) and return a
:class:`BandwidthSet`. Applied to pilot-estimated functionals they are the
rule-of-thumb bandwidths; :func:`rule_of_thumb` does exactly that.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from fdacov.data import PanelSample
from fdacov.errors import AllSingular, DegenerateFunctionals, InputError
from fdacov.kernels import GAUSSIAN, KernelSpec
from fdacov.llk import LocalCubicSmoother
from fdacov.polyfit import CovFunctionals, MeanFunctionals, PilotFits, QuadratureGrid

H_MIN = 1e-3
H_MAX = 1.5
GCV_GRID = np.geomspace(0.05, 1.0, 10)
#: a GCV candidate is discarded if more than this fraction of points is singular
GCV_MAX_SINGULAR = 0.10


class Target(str, enum.Enum):
    MEAN = "mean"
    COVARIANCE = "covariance"


class Regime(str, enum.Enum):
    SPARSE = "sparse"
    DENSE = "dense"


@dataclass(frozen=True)
class BandwidthSet:
    h_u: float
    h_z: float
    target: Target
    regime: Regime
    clamped: bool = False
    provenance: str = "formula"

    def to_dict(self) -> dict:
        return {
            "target": self.target.value,
            "regime": self.regime.value,
            "h_u": self.h_u,
            "h_z": self.h_z,
            "clamped": self.clamped,
            "provenance": self.provenance,
        }


def _finish(h_u, h_z, target, regime, clamp, provenance="formula") -> BandwidthSet:
    if not (np.isfinite(h_u) and np.isfinite(h_z) and h_u > 0 and h_z > 0):
        raise DegenerateFunctionals(f"bandwidth formula produced h_u={h_u}, h_z={h_z}")
    clamped = False
    if clamp:
        cu, cz = min(max(h_u, H_MIN), H_MAX), min(max(h_z, H_MIN), H_MAX)
        clamped = (cu, cz) != (h_u, h_z)
        h_u, h_z = cu, cz
    return BandwidthSet(float(h_u), float(h_z), target, regime, clamped, provenance)


def sparse_mean_bandwidths(
    f: MeanFunctionals, n: int, m: int, kernel: KernelSpec = GAUSSIAN, clamp: bool = True
) -> BandwidthSet:
    """Bandwidths minimizing the mean AMISE with the first variance term only."""
    if not (f.i_uu > 0 and f.i_zz > 0):
        raise DegenerateFunctionals("need I_mu_UU > 0 and I_mu_ZZ > 0")
    bracket = math.sqrt(f.i_uu * f.i_zz) + f.i_uz
    if not bracket > 0:
        raise DegenerateFunctionals("sqrt(I_UU I_ZZ) + I_UZ must be positive")
    num = kernel.rk_mean * f.q1 * f.i_zz**0.75
    den = n * m * kernel.nu2_mean**2 * bracket * f.i_uu**0.75
    h_u = (num / den) ** (1.0 / 6.0)
    h_z = (f.i_uu / f.i_zz) ** 0.25 * h_u
    return _finish(h_u, h_z, Target.MEAN, Regime.SPARSE, clamp)


def sparse_cov_bandwidths(
    f: CovFunctionals, n: int, m: int, kernel: KernelSpec = GAUSSIAN, clamp: bool = True
) -> BandwidthSet:
    """Bandwidths minimizing the covariance AMISE with the first variance term only."""
    big_m = m * m - m
    c_i = f.c_i
    gap = c_i - f.i_u1z
    if not (gap > 0 and f.i_zz > 0):
        raise DegenerateFunctionals("need C_I - I_U1Z > 0 and I_ZZ > 0")
    # exact stationary point of the AMISE: the U-bandwidth factor is (C_I + 3 I_U1Z)
    lead = c_i + 3.0 * f.i_u1z
    if not lead > 0:
        raise DegenerateFunctionals("C_I + 3 I_U1Z must be positive")
    num = kernel.rk_cov * f.q1 * 4.0 * math.sqrt(2.0) * f.i_zz**1.5
    den = n * big_m * kernel.nu2_cov**2 * lead * gap**1.5
    h_u = (num / den) ** (1.0 / 7.0)
    h_z = math.sqrt(gap / (2.0 * f.i_zz)) * h_u
    return _finish(h_u, h_z, Target.COVARIANCE, Regime.SPARSE, clamp)


def dense_mean_bandwidths(
    f: MeanFunctionals, n: int, m: int, kernel: KernelSpec = GAUSSIAN, clamp: bool = True
) -> BandwidthSet:
    """Hierarchical bandwidths: Z from the leading terms, U from the second-order ones."""
    if not (f.i_zz > 0 and f.i_uz > 0 and f.q1 > 0 and f.q2 > 0):
        raise DegenerateFunctionals("need I_mu_ZZ, I_mu_UZ, Q_mu_1, Q_mu_2 > 0")
    nu = kernel.nu2_mean**2
    h_z = (kernel.rk * f.q2 / (n * nu * f.i_zz)) ** 0.2
    h_u = (kernel.rk_mean * f.q1 / (n * m * nu * f.i_uz)) ** (1.0 / 3.0) / h_z
    return _finish(h_u, h_z, Target.MEAN, Regime.DENSE, clamp)


def dense_cov_bandwidths(
    f: CovFunctionals, n: int, m: int, kernel: KernelSpec = GAUSSIAN, clamp: bool = True
) -> BandwidthSet:
    if not (f.i_zz > 0 and f.i_u1z > 0 and f.q1 > 0 and f.q2 > 0):
        raise DegenerateFunctionals("need I_gamma_ZZ, I_gamma_U1Z, Q_gamma_1, Q_gamma_2 > 0")
    big_m = m * m - m
    nu = kernel.nu2_cov**2
    h_z = (kernel.rk * f.q2 / (n * nu * f.i_zz)) ** 0.2
    h_u = (kernel.rk_cov * f.q1 / (n * big_m * nu * f.i_u1z)) ** 0.25 * h_z**-0.75
    return _finish(h_u, h_z, Target.COVARIANCE, Regime.DENSE, clamp)


def amise_mean(
    h_u, h_z, f: MeanFunctionals, n: int, m: int, kernel: KernelSpec = GAUSSIAN, include_v2: bool = False
):
    """AMISE of the mean smoother; vectorized over ``h_u`` and ``h_z``."""
    h_u = np.asarray(h_u, dtype=float)
    h_z = np.asarray(h_z, dtype=float)
    val = kernel.rk_mean * f.q1 / (n * m * h_u * h_z)
    if include_v2:
        val = val + kernel.rk * f.q2 / (n * h_z)
    bias = h_u**4 * f.i_uu + 2.0 * h_u**2 * h_z**2 * f.i_uz + h_z**4 * f.i_zz
    return val + 0.25 * kernel.nu2_mean**2 * bias


def amise_cov(
    h_u, h_z, f: CovFunctionals, n: int, m: int, kernel: KernelSpec = GAUSSIAN, include_v2: bool = False
):
    """AMISE of the covariance smoother; vectorized over ``h_u`` and ``h_z``."""
    h_u = np.asarray(h_u, dtype=float)
    h_z = np.asarray(h_z, dtype=float)
    big_m = m * m - m
    val = kernel.rk_cov * f.q1 / (n * big_m * h_u**2 * h_z)
    if include_v2:
        val = val + kernel.rk * f.q2 / (n * h_z)
    bias = (
        2.0 * h_u**4 * (f.i_u1u1 + f.i_u1u2)
        + 4.0 * h_u**2 * h_z**2 * f.i_u1z
        + h_z**4 * f.i_zz
    )
    return val + 0.25 * kernel.nu2_cov**2 * bias


_RULES = {
    (Target.MEAN, Regime.SPARSE): sparse_mean_bandwidths,
    (Target.MEAN, Regime.DENSE): dense_mean_bandwidths,
    (Target.COVARIANCE, Regime.SPARSE): sparse_cov_bandwidths,
    (Target.COVARIANCE, Regime.DENSE): dense_cov_bandwidths,
}


def bandwidths_for(target, regime, f, n: int, m: int, kernel: KernelSpec = GAUSSIAN, clamp: bool = True):
    return _RULES[(Target(target), Regime(regime))](f, n, m, kernel, clamp)


def normal_reference_bandwidths(sample: PanelSample, target: Target, regime: Regime) -> BandwidthSet:
    """Fallback ``1.06 sd N^(-1/(4+d))`` per axis, with N and d of the target's smoother."""
    target = Target(target)
    uu, zz, _ = sample.flat()
    su = float(np.std(uu, ddof=1))
    sz = float(np.std(sample.z, ddof=1))
    if target is Target.MEAN:
        rate = (sample.n * sample.m) ** (-1.0 / 6.0)
    else:
        rate = (sample.n * (sample.m**2 - sample.m)) ** (-1.0 / 7.0)
    h_u = 1.06 * (su if su > 0 else 0.29) * rate
    h_z = 1.06 * (sz if sz > 0 else 0.29) * rate
    bw = _finish(h_u, h_z, target, Regime(regime), True, "normal-reference fallback")
    return BandwidthSet(bw.h_u, bw.h_z, bw.target, bw.regime, True, bw.provenance)


@dataclass(frozen=True)
class RuleOfThumb:
    """Rule-of-thumb bandwidths for both targets and regimes."""

    mean_functionals: MeanFunctionals | None
    cov_functionals: CovFunctionals | None
    sets: dict

    def get(self, target, regime) -> BandwidthSet:
        return self.sets[(Target(target), Regime(regime))]

    def to_dict(self) -> dict:
        return {
            "functionals": {
                "mean": None if self.mean_functionals is None else self.mean_functionals.to_dict(),
                "covariance": None if self.cov_functionals is None else self.cov_functionals.to_dict(),
            },
            "bandwidths": [bw.to_dict() for bw in self.sets.values()],
        }


def rule_of_thumb(
    sample: PanelSample,
    pilots: PilotFits,
    kernel: KernelSpec = GAUSSIAN,
    grid: QuadratureGrid = QuadratureGrid(),
    cov_variant: str = "diagonal",
) -> RuleOfThumb:
    """Plug the pilot functionals into all four bandwidth rules.

    A rule whose preconditions fail falls back to normal-reference
    bandwidths; the resulting set is flagged ``clamped``.
    """
    n, m = sample.n, sample.m
    funcs = {}
    for target, compute in (
        (Target.MEAN, lambda: pilots.mean_functionals(grid)),
        (Target.COVARIANCE, lambda: pilots.cov_functionals(grid, cov_variant)),
    ):
        try:
            funcs[target] = compute()
        except DegenerateFunctionals:
            funcs[target] = None
    sets = {}
    for (target, regime), rule in _RULES.items():
        f = funcs[target]
        try:
            if f is None:
                raise DegenerateFunctionals("functionals unavailable")
            sets[(target, regime)] = rule(f, n, m, kernel)
        except DegenerateFunctionals:
            sets[(target, regime)] = normal_reference_bandwidths(sample, target, regime)
    return RuleOfThumb(funcs[Target.MEAN], funcs[Target.COVARIANCE], sets)


DERIVATIVE_CRITERIA = ("gcv", "curve-cv")


def gcv_scores(
    sample: PanelSample, kernel: KernelSpec = GAUSSIAN, grid=GCV_GRID, criterion: str = "gcv"
) -> np.ndarray:
    """Selection criterion of the local cubic smoother over ``grid x grid`` (rows: g_u).

    ``criterion="gcv"`` is ``mean(residual^2) / (1 - tr(S)/N)^2`` with the
    trace taken over each point's self-influence. ``"curve-cv"`` is the mean
    squared leave-one-curve-out residual. All observations of a curve share
    ``Z`` and the curve's random deviation, which GCV treats as signal; it
    then tends to pick the smallest ``g_z`` on the grid. Holding out whole
    curves removes that incentive.

    Entries are ``inf`` for candidates singular at more than 10% of the points;
    singular points of the remaining candidates are left out of the average.
    """
    if criterion not in DERIVATIVE_CRITERIA:
        raise InputError(f"criterion must be one of {DERIVATIVE_CRITERIA}, got {criterion!r}")
    if sample.n * sample.m < 30:
        raise InputError("GCV needs at least 30 observations")
    smoother = LocalCubicSmoother(sample, kernel)
    y = smoother.y
    loco = criterion == "curve-cv"
    scores = np.full((len(grid), len(grid)), np.inf)
    for a, gu in enumerate(grid):
        for b, gz in enumerate(grid):
            fitted, infl, singular = smoother.fit(float(gu), float(gz), leave_out_curve=loco)
            if singular.mean() > GCV_MAX_SINGULAR:
                continue
            ok = ~singular
            rss = np.mean((y[ok] - fitted[ok]) ** 2)
            denom = 1.0 - np.mean(infl[ok])
            if denom > 0:
                scores[a, b] = rss / denom**2
    return scores


def gcv_derivative_bandwidths(
    sample: PanelSample, kernel: KernelSpec = GAUSSIAN, grid=GCV_GRID, criterion: str = "gcv"
) -> tuple[float, float]:
    """Grid-minimizing ``(g_u, g_z)`` for the local cubic derivative estimator.

    See :func:`gcv_scores` for the two criteria.
    """
    scores = gcv_scores(sample, kernel, grid, criterion)
    if not np.isfinite(scores).any():
        raise AllSingular("every GCV candidate is singular at more than 10% of the points")
    a, b = np.unravel_index(int(np.argmin(scores)), scores.shape)
    return float(grid[a]), float(grid[b])
