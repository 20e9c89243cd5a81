"""Second-order univariate kernels and their multiplicative products."""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate

from fdacov.errors import DimensionMismatch, InvalidBandwidth

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class KernelFamily(str, enum.Enum):
    EPANECHNIKOV = "epanechnikov"
    GAUSSIAN = "gaussian"


def _epanechnikov(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


def _gaussian(u):
    u = np.asarray(u, dtype=float)
    return np.exp(-0.5 * u * u) / _SQRT_2PI


_PROFILES = {
    KernelFamily.EPANECHNIKOV: _epanechnikov,
    KernelFamily.GAUSSIAN: _gaussian,
}

# closed forms: (nu2, R)
_CONSTANTS = {
    KernelFamily.EPANECHNIKOV: (1.0 / 5.0, 3.0 / 5.0),
    KernelFamily.GAUSSIAN: (1.0, 1.0 / (2.0 * math.sqrt(math.pi))),
}

# half-width of the support; inf for unbounded kernels
_SUPPORT = {
    KernelFamily.EPANECHNIKOV: 1.0,
    KernelFamily.GAUSSIAN: math.inf,
}


@dataclass(frozen=True)
class KernelSpec:
    """A symmetric second-order kernel with its moment constants.

    Attributes
    ----------
    family : KernelFamily
    nu2 : float
        Second moment ``int u^2 k(u) du``.
    rk : float
        Roughness ``int k(u)^2 du``.
    """

    family: KernelFamily
    nu2: float
    rk: float

    def __call__(self, u):
        return _PROFILES[self.family](u)

    @property
    def support(self) -> float:
        return _SUPPORT[self.family]

    # constants of the bivariate (mean) and trivariate (covariance) products
    @property
    def nu2_mean(self) -> float:
        return self.nu2**2

    @property
    def rk_mean(self) -> float:
        return self.rk**2

    @property
    def nu2_cov(self) -> float:
        return self.nu2**3

    @property
    def rk_cov(self) -> float:
        return self.rk**3


def _quad_over_support(f, family):
    a = _SUPPORT[family]
    if math.isinf(a):
        val, _ = integrate.quad(f, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-13)
    else:
        val, _ = integrate.quad(f, -a, a, epsabs=1e-13, epsrel=1e-13)
    return val


def make_kernel(family: str | KernelFamily = KernelFamily.GAUSSIAN) -> KernelSpec:
    """Build a :class:`KernelSpec`, checking the closed-form constants by quadrature."""
    return _build_kernel(KernelFamily(family))


@functools.lru_cache(maxsize=None)
def _build_kernel(family: KernelFamily) -> KernelSpec:
    prof = _PROFILES[family]
    nu2, rk = _CONSTANTS[family]
    mass = _quad_over_support(lambda t: float(prof(t)), family)
    q_nu2 = _quad_over_support(lambda t: t * t * float(prof(t)), family)
    q_rk = _quad_over_support(lambda t: float(prof(t)) ** 2, family)
    if abs(mass - 1.0) > 1e-10 or abs(q_nu2 - nu2) > 1e-10 or abs(q_rk - rk) > 1e-10:
        raise AssertionError(f"kernel constants for {family.value} failed quadrature check")
    return KernelSpec(family, nu2, rk)


GAUSSIAN = make_kernel(KernelFamily.GAUSSIAN)
EPANECHNIKOV = make_kernel(KernelFamily.EPANECHNIKOV)


def kernel_eval(spec: KernelSpec, u):
    """Evaluate the kernel profile at ``u`` (scalar or array)."""
    out = spec(u)
    return float(out) if np.ndim(out) == 0 else out


def kernel_constants(spec: KernelSpec) -> tuple[float, float]:
    return spec.nu2, spec.rk


def scaled_kernel(spec: KernelSpec, offset, h: float):
    """``h^-1 k(offset / h)``, vectorized over ``offset``."""
    return spec(np.asarray(offset, dtype=float) / h) / h


def product_weight(spec: KernelSpec, offsets: Sequence, bandwidths: Sequence):
    """Multiplicative kernel weight ``prod_l h_l^-1 k(offset_l / h_l)``.

    ``offsets`` entries may be scalars or equally shaped arrays, in which case
    the weights are returned elementwise.
    """
    if len(offsets) != len(bandwidths):
        raise DimensionMismatch(
            f"{len(offsets)} offsets but {len(bandwidths)} bandwidths"
        )
    if not 1 <= len(offsets) <= 3:
        raise DimensionMismatch("product weights are defined for 1 to 3 factors")
    w = 1.0
    for off, h in zip(offsets, bandwidths):
        if not (h > 0 and math.isfinite(h)):
            raise InvalidBandwidth(f"bandwidth must be positive and finite, got {h}")
        w = w * scaled_kernel(spec, off, h)
    return float(w) if np.ndim(w) == 0 else w
