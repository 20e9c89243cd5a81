"""Global quartic pilot regressions and the integral functionals built from them.

Five pilot models are fitted by OLS:

=================  =======================  ==============================
target             inputs                   monomial families (powers 1-4)
=================  =======================  ==============================
MU                 (u, z)                   u, z, u*z
GAMMA              (u1, u2, z)              u1, u2, z, u1*z, u2*z
GAMMA_TILDE        (u1, u2, u3, u4, z)      u1..u4, z, u1*z .. u4*z
GAMMA_ND           (u, z)                   u, z, u*z
GAMMA_TILDE_ND     (u1, u2, z)              u1, u2, z
=================  =======================  ==============================

The interaction families keep the analytic second partials non-degenerate.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from fdacov.data import (
    PanelSample,
    QuadrupleProducts,
    RawCovariancePanel,
    quadruple_products,
    raw_covariances,
)
from fdacov.density import MAX_CV_POINTS, DensityEstimate, kde_cv
from fdacov.errors import DegenerateFunctionals, QuadratureError, RankDeficient

Q_FLOOR = 1e-6
MAX_POWER = 4


class PolyTarget(str, enum.Enum):
    MU = "mu_poly"
    GAMMA = "gamma_poly"
    GAMMA_TILDE = "gamma_tilde_poly"
    GAMMA_ND = "gamma_nd_poly"
    GAMMA_TILDE_ND = "gamma_tilde_nd_poly"


# families of variable indices whose product is raised to powers 1..4
_FAMILIES = {
    PolyTarget.MU: ((0,), (1,), (0, 1)),
    PolyTarget.GAMMA: ((0,), (1,), (2,), (0, 2), (1, 2)),
    PolyTarget.GAMMA_TILDE: ((0,), (1,), (2,), (3,), (4,), (0, 4), (1, 4), (2, 4), (3, 4)),
    PolyTarget.GAMMA_ND: ((0,), (1,), (0, 1)),
    PolyTarget.GAMMA_TILDE_ND: ((0,), (1,), (2,)),
}
_NAMES = {
    PolyTarget.MU: ("U", "Z"),
    PolyTarget.GAMMA: ("U1", "U2", "Z"),
    PolyTarget.GAMMA_TILDE: ("U1", "U2", "U3", "U4", "Z"),
    PolyTarget.GAMMA_ND: ("U", "Z"),
    PolyTarget.GAMMA_TILDE_ND: ("U1", "U2", "Z"),
}


def n_inputs(target: PolyTarget) -> int:
    return len(_NAMES[PolyTarget(target)])


def n_coefficients(target: PolyTarget) -> int:
    return 1 + MAX_POWER * len(_FAMILIES[PolyTarget(target)])


def basis_descriptor(target: PolyTarget) -> list[str]:
    """Human-readable monomial list in coefficient order."""
    target = PolyTarget(target)
    names = _NAMES[target]
    out = ["1"]
    for fam in _FAMILIES[target]:
        base = "*".join(names[v] for v in fam)
        if len(fam) > 1:
            base = f"({base})"
        out.extend(f"{base}^{q}" for q in range(1, MAX_POWER + 1))
    return out


def design_matrix(target: PolyTarget, coords) -> np.ndarray:
    """Design matrix of ``target`` for input columns ``coords`` (sequence of arrays)."""
    target = PolyTarget(target)
    coords = [np.asarray(c, dtype=float).reshape(-1) for c in coords]
    if len(coords) != n_inputs(target):
        raise ValueError(f"{target.value} takes {n_inputs(target)} inputs, got {len(coords)}")
    cols = [np.ones_like(coords[0])]
    for fam in _FAMILIES[target]:
        base = np.prod([coords[v] for v in fam], axis=0)
        acc = np.ones_like(base)
        for _ in range(MAX_POWER):
            acc = acc * base
            cols.append(acc)
    return np.column_stack(cols)


@dataclass(frozen=True)
class PolyModel:
    """A fitted pilot polynomial; call it with one array per input variable."""

    target: PolyTarget
    coefficients: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.coefficients, dtype=float)
        if beta.shape != (n_coefficients(self.target),):
            raise ValueError(
                f"{self.target.value} needs {n_coefficients(self.target)} coefficients, got {beta.shape}"
            )
        beta.setflags(write=False)
        object.__setattr__(self, "coefficients", beta)

    @property
    def basis(self) -> list[str]:
        return basis_descriptor(self.target)

    def _terms(self):
        beta = self.coefficients
        idx = 1
        for fam in _FAMILIES[self.target]:
            yield fam, beta[idx : idx + MAX_POWER]
            idx += MAX_POWER

    def __call__(self, *coords):
        coords = np.broadcast_arrays(*[np.asarray(c, dtype=float) for c in coords])
        out = np.full(coords[0].shape, self.coefficients[0])
        for fam, b in self._terms():
            base = np.prod([coords[v] for v in fam], axis=0)
            out = out + base * (b[0] + base * (b[1] + base * (b[2] + base * b[3])))
        return out

    def second_partial(self, var: int, *coords):
        """Analytic ``d^2 / d x_var^2`` at ``coords``."""
        coords = np.broadcast_arrays(*[np.asarray(c, dtype=float) for c in coords])
        out = np.zeros(coords[0].shape)
        x = coords[var]
        for fam, b in self._terms():
            if var not in fam:
                continue
            others = np.prod([coords[v] for v in fam if v != var], axis=0) if len(fam) > 1 else 1.0
            for q in range(2, MAX_POWER + 1):
                out = out + b[q - 1] * q * (q - 1) * x ** (q - 2) * others**q
        return out


def ols_fit(target: PolyTarget, coords, y) -> PolyModel:
    """OLS on standardized design columns, mapped back to the raw monomial basis."""
    target = PolyTarget(target)
    x = design_matrix(target, coords)
    y = np.asarray(y, dtype=float).reshape(-1)
    p = x.shape[1]
    if x.shape[0] <= p:
        raise RankDeficient(f"{target.value}: {x.shape[0]} rows for {p} coefficients")
    mean = x[:, 1:].mean(axis=0)
    sd = x[:, 1:].std(axis=0)
    if np.any(~(sd > 0)):
        raise RankDeficient(f"{target.value}: constant design column")
    xs = np.column_stack([np.ones(x.shape[0]), (x[:, 1:] - mean) / sd])
    coef, _, rank, sv = np.linalg.lstsq(xs, y, rcond=None)
    if rank < p:
        raise RankDeficient(f"{target.value}: design rank {rank} < {p}")
    beta = np.empty(p)
    beta[1:] = coef[1:] / sd
    beta[0] = coef[0] - np.dot(beta[1:], mean)
    return PolyModel(target, beta)


def fit_mu_poly(sample: PanelSample) -> PolyModel:
    uu, zz, yy = sample.flat()
    return ols_fit(PolyTarget.MU, (uu, zz), yy)


def fit_gamma_poly(raw: RawCovariancePanel) -> PolyModel:
    return ols_fit(PolyTarget.GAMMA, (raw.u1, raw.u2, raw.z), raw.c)


def fit_gamma_tilde_poly(products: QuadrupleProducts) -> PolyModel:
    return ols_fit(
        PolyTarget.GAMMA_TILDE,
        (products.u1, products.u2, products.u3, products.u4, products.z),
        products.value,
    )


def fit_gamma_nd_poly(raw: RawCovariancePanel) -> PolyModel:
    return ols_fit(PolyTarget.GAMMA_ND, (raw.diag_u, raw.diag_z), raw.diag_c)


def fit_gamma_tilde_nd_poly(raw: RawCovariancePanel, gamma_poly: PolyModel) -> PolyModel:
    """Regress squared covariance residuals ``(C - gamma_poly)^2`` on the additive quartic."""
    resid2 = (raw.c - gamma_poly(raw.u1, raw.u2, raw.z)) ** 2
    return ols_fit(PolyTarget.GAMMA_TILDE_ND, (raw.u1, raw.u2, raw.z), resid2)


# ---------------------------------------------------------------- quadrature


@dataclass(frozen=True)
class QuadratureGrid:
    """Tensor composite Simpson rule on the unit square / cube.

    Odd node counts give the classical 1-4-2-...-4-1 weights; even counts
    use scipy's end correction.
    """

    nodes_2d: int = 41
    nodes_3d: int = 31

    def __post_init__(self):
        for k in (self.nodes_2d, self.nodes_3d):
            if not isinstance(k, (int, np.integer)) or k < 2:
                raise QuadratureError(f"need at least 2 nodes per axis, got {k!r}")

    def rule(self, dim: int):
        """Return ``(axes, weights)``: a list of ``dim`` meshed coordinate arrays and the weights."""
        k = self.nodes_2d if dim <= 2 else self.nodes_3d
        t = np.linspace(0.0, 1.0, k)
        w = integrate.simpson(np.eye(k), x=t, axis=1)
        axes = np.meshgrid(*([t] * dim), indexing="ij")
        weights = np.ones_like(axes[0])
        for d in range(dim):
            shape = [1] * dim
            shape[d] = k
            weights = weights * w.reshape(shape)
        return [a.reshape(-1) for a in axes], weights.reshape(-1)


def _floor_q(value: float, name: str, floored: list) -> float:
    if not value > Q_FLOOR:
        floored.append(name)
        return Q_FLOOR
    return float(value)


@dataclass(frozen=True)
class MeanFunctionals:
    i_uu: float
    i_uz: float
    i_zz: float
    q1: float
    q2: float
    floored: tuple = ()

    def to_dict(self) -> dict:
        return {
            "I_mu_UU": self.i_uu,
            "I_mu_UZ": self.i_uz,
            "I_mu_ZZ": self.i_zz,
            "Q_mu_1": self.q1,
            "Q_mu_2": self.q2,
            "floored": list(self.floored),
        }


@dataclass(frozen=True)
class CovFunctionals:
    i_u1u1: float
    i_u1u2: float
    i_u1z: float
    i_zz: float
    q1: float
    q2: float
    floored: tuple = ()

    @property
    def c_i(self) -> float:
        """``sqrt(I_U1Z^2 + 4 (I_U1U1 + I_U1U2) I_ZZ)``."""
        disc = self.i_u1z**2 + 4.0 * (self.i_u1u1 + self.i_u1u2) * self.i_zz
        if not disc >= 0:
            raise DegenerateFunctionals(f"negative discriminant {disc:.3g}")
        return float(np.sqrt(disc))

    def to_dict(self) -> dict:
        return {
            "I_gamma_U1U1": self.i_u1u1,
            "I_gamma_U1U2": self.i_u1u2,
            "I_gamma_U1Z": self.i_u1z,
            "I_gamma_ZZ": self.i_zz,
            "Q_gamma_1": self.q1,
            "Q_gamma_2": self.q2,
            "floored": list(self.floored),
        }


def mean_functionals(
    mu_poly: PolyModel,
    gamma_poly: PolyModel,
    gamma_nd_poly: PolyModel,
    f_uz,
    f_u,
    grid: QuadratureGrid = QuadratureGrid(),
) -> MeanFunctionals:
    """Curvature integrals and variance-scale integrals for the mean bandwidths.

    ``f_uz`` and ``f_u`` are callables on ``(K, d)`` point arrays, typically
    :class:`~fdacov.density.DensityEstimate` objects.
    """
    (uu, zz), w = grid.rule(2)
    d20 = mu_poly.second_partial(0, uu, zz)
    d02 = mu_poly.second_partial(1, uu, zz)
    fuz = np.asarray(f_uz(np.column_stack([uu, zz])), dtype=float)
    fu = np.asarray(f_u(uu[:, None]), dtype=float)
    floored: list = []
    q1 = _floor_q(np.sum(w * gamma_nd_poly(uu, zz)), "Q_mu_1", floored)
    q2 = _floor_q(np.sum(w * gamma_poly(uu, uu, zz) * fu), "Q_mu_2", floored)
    return MeanFunctionals(
        i_uu=float(np.sum(w * d20**2 * fuz)),
        i_uz=float(np.sum(w * d20 * d02 * fuz)),
        i_zz=float(np.sum(w * d02**2 * fuz)),
        q1=q1,
        q2=q2,
        floored=tuple(floored),
    )


def cov_functionals(
    gamma_poly: PolyModel,
    gamma_tilde_poly: PolyModel,
    gamma_tilde_nd_poly: PolyModel,
    f_uuz,
    f_uu,
    f_uz=None,
    grid: QuadratureGrid = QuadratureGrid(),
    variant: str = "diagonal",
) -> CovFunctionals:
    """Curvature and variance-scale integrals for the covariance bandwidths.

    With ``variant="diagonal"`` the curvature integrals run along the
    diagonal ``(u, u, z)``: the ``U1U1`` term is weighted by ``f_uz`` and the
    others by ``f_uuz(u, u, z)``. ``variant="cube"`` integrates all of them
    over the unit cube weighted by ``f_uuz``. The Q terms always integrate
    over the cube.
    """
    if variant == "diagonal":
        if f_uz is None:
            raise ValueError("the diagonal variant needs f_uz")
        (uu, zz), w = grid.rule(2)
        u1 = u2 = uu
        wt_u1u1 = np.asarray(f_uz(np.column_stack([uu, zz])), dtype=float)
        wt = np.asarray(f_uuz(np.column_stack([uu, uu, zz])), dtype=float)
    elif variant == "cube":
        (u1, u2, zz), w = grid.rule(3)
        wt = np.asarray(f_uuz(np.column_stack([u1, u2, zz])), dtype=float)
        wt_u1u1 = wt
    else:
        raise ValueError(f"unknown variant {variant!r}")
    g200 = gamma_poly.second_partial(0, u1, u2, zz)
    g020 = gamma_poly.second_partial(1, u1, u2, zz)
    g002 = gamma_poly.second_partial(2, u1, u2, zz)

    (c1, c2, cz), wc = grid.rule(3)
    fuu = np.asarray(f_uu(np.column_stack([c1, c2])), dtype=float)
    floored: list = []
    q1 = _floor_q(np.sum(wc * gamma_tilde_nd_poly(c1, c2, cz)), "Q_gamma_1", floored)
    q2 = _floor_q(np.sum(wc * gamma_tilde_poly(c1, c2, c1, c2, cz) * fuu), "Q_gamma_2", floored)
    return CovFunctionals(
        i_u1u1=float(np.sum(w * g200**2 * wt_u1u1)),
        i_u1u2=float(np.sum(w * g200 * g020 * wt)),
        i_u1z=float(np.sum(w * g200 * g002 * wt)),
        i_zz=float(np.sum(w * g002**2 * wt)),
        q1=q1,
        q2=q2,
        floored=tuple(floored),
    )


# ---------------------------------------------------------------- pilot bundle


@dataclass(frozen=True)
class PilotFits:
    """All pilot regressions and density estimates for one sample."""

    mu: PolyModel
    gamma: PolyModel
    gamma_tilde: PolyModel
    gamma_nd: PolyModel
    gamma_tilde_nd: PolyModel
    raw: RawCovariancePanel = field(repr=False)
    f_uz: DensityEstimate = field(repr=False)
    f_u: DensityEstimate = field(repr=False)
    f_z: DensityEstimate = field(repr=False)
    f_uuz: DensityEstimate = field(repr=False)
    f_uu: DensityEstimate = field(repr=False)

    def mean_functionals(self, grid: QuadratureGrid = QuadratureGrid()) -> MeanFunctionals:
        return mean_functionals(self.mu, self.gamma, self.gamma_nd, self.f_uz, self.f_u, grid)

    def cov_functionals(
        self, grid: QuadratureGrid = QuadratureGrid(), variant: str = "diagonal"
    ) -> CovFunctionals:
        return cov_functionals(
            self.gamma,
            self.gamma_tilde,
            self.gamma_tilde_nd,
            self.f_uuz,
            self.f_uu,
            self.f_uz,
            grid,
            variant,
        )


def fit_pilots(
    sample: PanelSample,
    max_quadruples_per_curve: int = 2000,
    seed: int = 0,
    cv_max_points: int = MAX_CV_POINTS,
) -> PilotFits:
    """Fit the five pilot polynomials and the five density estimates.

    The raw covariances are centered with the mean pilot ``mu_poly``.
    """
    mu = fit_mu_poly(sample)
    raw = raw_covariances(sample, mu)
    gamma = fit_gamma_poly(raw)
    quads = quadruple_products(raw, gamma, max_per_curve=max_quadruples_per_curve, seed=seed)
    gamma_tilde = fit_gamma_tilde_poly(quads)
    gamma_nd = fit_gamma_nd_poly(raw)
    gamma_tilde_nd = fit_gamma_tilde_nd_poly(raw, gamma)
    uu, zz, _ = sample.flat()
    kw = dict(max_points=cv_max_points, seed=seed)
    return PilotFits(
        mu=mu,
        gamma=gamma,
        gamma_tilde=gamma_tilde,
        gamma_nd=gamma_nd,
        gamma_tilde_nd=gamma_tilde_nd,
        raw=raw,
        f_uz=kde_cv(np.column_stack([uu, zz]), **kw),
        f_u=kde_cv(uu, **kw),
        f_z=kde_cv(sample.z, **kw),
        f_uuz=kde_cv(np.column_stack([raw.u1, raw.u2, raw.z]), **kw),
        f_uu=kde_cv(np.column_stack([raw.u1, raw.u2]), **kw),
    )
