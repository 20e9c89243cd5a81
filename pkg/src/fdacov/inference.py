"""Plug-in bias and variance estimates and pointwise confidence intervals for the mean.

Four interval flavours are supported:

* ``sparse``: sparse-rule bandwidths, both curvature bias terms, variance ``V1``;
* ``sparse-corrected``: as above with variance ``V1 + V2``;
* ``dense``: dense-rule bandwidths, Z-curvature bias only, variance ``V2``;
* ``dense-corrected``: as above with variance ``V1 + V2``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from scipy import special

from fdacov.bandwidth import (
    BandwidthSet,
    Regime,
    RuleOfThumb,
    Target,
    gcv_derivative_bandwidths,
    rule_of_thumb,
)
from fdacov.data import PanelSample
from fdacov.density import MAX_CV_POINTS
from fdacov.errors import EvaluationOutsideDomain
from fdacov.kernels import GAUSSIAN, KernelSpec
from fdacov.llk import fit_cov, fit_mean, fit_mean_derivatives, fit_noisy_diagonal
from fdacov.polyfit import PilotFits, QuadratureGrid, fit_pilots


class Method(str, enum.Enum):
    SPARSE_PLAIN = "sparse"
    SPARSE_CORRECTED = "sparse-corrected"
    DENSE_PLAIN = "dense"
    DENSE_CORRECTED = "dense-corrected"

    @property
    def regime(self) -> Regime:
        return Regime.SPARSE if self.value.startswith("sparse") else Regime.DENSE

    @property
    def corrected(self) -> bool:
        return self.value.endswith("corrected")


ALL_METHODS = tuple(Method)


def normal_quantile(p: float) -> float:
    """Standard normal quantile."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"probability must lie in (0, 1), got {p}")
    return float(special.ndtri(p))


def variance_used(method: Method, v1: float, v2: float) -> float:
    method = Method(method)
    if method is Method.SPARSE_PLAIN:
        return v1
    if method is Method.DENSE_PLAIN:
        return v2
    return v1 + v2


def bias_from_curvature(d20: float, d02: float, h_u: float, h_z: float, regime, kernel: KernelSpec = GAUSSIAN) -> float:
    """Leading bias ``nu2(K)/2 (h_u^2 d20 + h_z^2 d02)``; the dense regime keeps the Z term only."""
    if Regime(regime) is Regime.DENSE:
        return 0.5 * kernel.nu2_mean * h_z**2 * d02
    return 0.5 * kernel.nu2_mean * (h_u**2 * d20 + h_z**2 * d02)


def estimate_bias(
    sample: PanelSample,
    point,
    h: BandwidthSet,
    g: tuple[float, float],
    kernel: KernelSpec = GAUSSIAN,
) -> float:
    """Bias plug-in with local-cubic curvature estimates at ``point``."""
    d20, d02 = fit_mean_derivatives(sample, point[0], point[1], g[0], g[1], kernel)
    return bias_from_curvature(d20, d02, h.h_u, h.h_z, h.regime, kernel)


def estimate_v1(
    h: BandwidthSet,
    gamma_nd_at_point: float,
    f_uz_at_point: float,
    n: int,
    m: int,
    kernel: KernelSpec = GAUSSIAN,
    diagnostics: dict | None = None,
) -> float:
    """``(nm)^-1 (h_u h_z)^-1 R(K) gamma_nd / f_uz``; a negative ``gamma_nd`` is clamped to 0."""
    if gamma_nd_at_point < 0:
        if diagnostics is not None:
            diagnostics["gamma_nd_clamped"] = True
        gamma_nd_at_point = 0.0
    return kernel.rk_mean * gamma_nd_at_point / (n * m * h.h_u * h.h_z * f_uz_at_point)


def estimate_v2(
    h_z: float,
    gamma_at_point: float,
    f_z_at_point: float,
    n: int,
    m: int,
    kernel: KernelSpec = GAUSSIAN,
    diagnostics: dict | None = None,
) -> float:
    """``n^-1 ((m-1)/m) h_z^-1 R(k) gamma / f_z``; a negative ``gamma`` is clamped to 0."""
    if gamma_at_point < 0:
        if diagnostics is not None:
            diagnostics["gamma_clamped"] = True
        gamma_at_point = 0.0
    return ((m - 1) / m) * kernel.rk * gamma_at_point / (n * h_z * f_z_at_point)


@dataclass(frozen=True)
class PointInference:
    """Bias-corrected estimate and confidence interval at one point."""

    point: tuple
    estimate: float
    bias: float
    v1: float
    v2: float
    ci_lower: float
    ci_upper: float
    method: Method
    alpha: float
    bandwidths: BandwidthSet | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def center(self) -> float:
        return self.estimate - self.bias

    @property
    def variance(self) -> float:
        return variance_used(self.method, self.v1, self.v2)

    @property
    def width(self) -> float:
        return self.ci_upper - self.ci_lower

    def covers(self, value: float) -> bool:
        return self.ci_lower <= value <= self.ci_upper

    def to_dict(self) -> dict:
        out = {
            "u": self.point[0],
            "z": self.point[1],
            "method": self.method.value,
            "alpha": self.alpha,
            "estimate": self.estimate,
            "bias": self.bias,
            "center": self.center,
            "v1": self.v1,
            "v2": self.v2,
            "ci_lower": self.ci_lower,
            "ci_upper": self.ci_upper,
            "diagnostics": self.diagnostics,
        }
        if self.bandwidths is not None:
            out["h_u"] = self.bandwidths.h_u
            out["h_z"] = self.bandwidths.h_z
        return out


def assemble_interval(
    point, method, alpha, estimate, bias, v1, v2, bandwidths=None, diagnostics=None
) -> PointInference:
    """Interval ``estimate - bias -/+ z_{1-alpha/2} sqrt(variance)`` for ``method``."""
    method = Method(method)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    half = normal_quantile(1.0 - alpha / 2.0) * math.sqrt(variance_used(method, v1, v2))
    center = estimate - bias
    return PointInference(
        point=tuple(point),
        estimate=float(estimate),
        bias=float(bias),
        v1=float(v1),
        v2=float(v2),
        ci_lower=center - half,
        ci_upper=center + half,
        method=method,
        alpha=alpha,
        bandwidths=bandwidths,
        diagnostics=dict(diagnostics or {}),
    )


@dataclass(frozen=True)
class InferenceConfig:
    kernel: KernelSpec = GAUSSIAN
    grid: QuadratureGrid = QuadratureGrid()
    cov_variant: str = "diagonal"
    max_quadruples_per_curve: int = 2000
    cv_max_points: int = MAX_CV_POINTS
    derivative_criterion: str = "curve-cv"
    seed: int = 0


@dataclass(frozen=True)
class PlugInContext:
    """Everything that does not depend on the evaluation point."""

    sample: PanelSample
    config: InferenceConfig
    pilots: PilotFits
    bandwidths: RuleOfThumb
    g: tuple


def prepare(sample: PanelSample, config: InferenceConfig = InferenceConfig()) -> PlugInContext:
    """Fit pilots, select rule-of-thumb and GCV bandwidths for ``sample``."""
    pilots = fit_pilots(
        sample,
        max_quadruples_per_curve=config.max_quadruples_per_curve,
        seed=config.seed,
        cv_max_points=config.cv_max_points,
    )
    rot = rule_of_thumb(sample, pilots, config.kernel, config.grid, config.cov_variant)
    g = gcv_derivative_bandwidths(sample, config.kernel, criterion=config.derivative_criterion)
    return PlugInContext(sample, config, pilots, rot, g)


def _regime_components(ctx: PlugInContext, point, regime: Regime):
    """Estimate, bias, V1, V2 and diagnostics under one regime's bandwidths."""
    sample, kernel = ctx.sample, ctx.config.kernel
    u, z = point
    h_mu = ctx.bandwidths.get(Target.MEAN, regime)
    h_gam = ctx.bandwidths.get(Target.COVARIANCE, regime)
    diag: dict = {}
    est = fit_mean(sample, u, z, h_mu.h_u, h_mu.h_z, kernel)
    if est.at_boundary:
        diag["boundary"] = True
    d20, d02 = fit_mean_derivatives(sample, u, z, ctx.g[0], ctx.g[1], kernel)
    bias = bias_from_curvature(d20, d02, h_mu.h_u, h_mu.h_z, regime, kernel)
    g_nd = fit_noisy_diagonal(ctx.pilots.raw, u, z, h_gam.h_u, h_gam.h_z, kernel).value
    g_uu = fit_cov(ctx.pilots.raw, u, u, z, h_gam.h_u, h_gam.h_z, kernel).value
    f_uz_raw = float(ctx.pilots.f_uz.raw([[u, z]])[0])
    f_z_raw = float(ctx.pilots.f_z.raw([[z]])[0])
    if f_uz_raw < ctx.pilots.f_uz.floor:
        diag["f_uz_floor_hit"] = True
    if f_z_raw < ctx.pilots.f_z.floor:
        diag["f_z_floor_hit"] = True
    f_uz = max(f_uz_raw, ctx.pilots.f_uz.floor)
    f_z = max(f_z_raw, ctx.pilots.f_z.floor)
    for bw in (h_mu, h_gam):
        if bw.clamped:
            diag[f"{bw.target.value}_bandwidth_clamped"] = True
    v1 = estimate_v1(h_mu, g_nd, f_uz, sample.n, sample.m, kernel, diag)
    v2 = estimate_v2(h_mu.h_z, g_uu, f_z, sample.n, sample.m, kernel, diag)
    return est.value, bias, v1, v2, h_mu, diag


def confidence_intervals(
    sample: PanelSample,
    point,
    methods=ALL_METHODS,
    alpha: float = 0.1,
    config: InferenceConfig = InferenceConfig(),
    context: PlugInContext | None = None,
) -> list[PointInference]:
    """Intervals for several methods at ``point`` sharing one set of pilot fits."""
    if not all(0.0 <= c <= 1.0 for c in point) or len(point) != 2:
        raise EvaluationOutsideDomain(f"evaluation point {point} outside [0, 1]^2")
    ctx = context if context is not None else prepare(sample, config)
    methods = [Method(mt) for mt in methods]
    parts = {}
    out = []
    for mt in methods:
        if mt.regime not in parts:
            parts[mt.regime] = _regime_components(ctx, point, mt.regime)
        est, bias, v1, v2, h_mu, diag = parts[mt.regime]
        out.append(assemble_interval(point, mt, alpha, est, bias, v1, v2, h_mu, diag))
    return out


def confidence_interval(
    sample: PanelSample,
    point,
    method=Method.DENSE_CORRECTED,
    alpha: float = 0.1,
    config: InferenceConfig = InferenceConfig(),
    context: PlugInContext | None = None,
) -> PointInference:
    """Feasible pointwise interval for the mean surface at ``point``."""
    return confidence_intervals(sample, point, [method], alpha, config, context)[0]
