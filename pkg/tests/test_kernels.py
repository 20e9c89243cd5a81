import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fdacov.errors import DimensionMismatch, InvalidBandwidth
from fdacov.kernels import (
    EPANECHNIKOV,
    GAUSSIAN,
    KernelFamily,
    kernel_constants,
    kernel_eval,
    make_kernel,
    product_weight,
    scaled_kernel,
)

KERNELS = [GAUSSIAN, EPANECHNIKOV]


def test_kernel_eval_examples():
    assert kernel_eval(EPANECHNIKOV, 0.0) == pytest.approx(0.75, abs=1e-15)
    assert kernel_eval(EPANECHNIKOV, 2.0) == 0.0
    assert kernel_eval(GAUSSIAN, 0.0) == pytest.approx(0.3989422804, abs=1e-10)


def test_kernel_constants_examples():
    assert kernel_constants(EPANECHNIKOV) == pytest.approx((0.2, 0.6), abs=1e-12)
    assert kernel_constants(GAUSSIAN) == pytest.approx((1.0, 0.2820947918), abs=1e-10)


@pytest.mark.parametrize("spec", KERNELS, ids=lambda s: s.family.value)
def test_constants_match_adaptive_quadrature(spec):
    a = spec.support if math.isfinite(spec.support) else np.inf
    mass, _ = integrate.quad(lambda t: float(spec(t)), -a, a, epsabs=1e-13)
    nu2, _ = integrate.quad(lambda t: t * t * float(spec(t)), -a, a, epsabs=1e-13)
    rk, _ = integrate.quad(lambda t: float(spec(t)) ** 2, -a, a, epsabs=1e-13)
    assert mass == pytest.approx(1.0, abs=1e-10)
    assert nu2 == pytest.approx(spec.nu2, abs=1e-10)
    assert rk == pytest.approx(spec.rk, abs=1e-10)


@pytest.mark.parametrize("spec", KERNELS, ids=lambda s: s.family.value)
def test_nu2_trapezoid_on_wide_grid(spec):
    t = np.linspace(-8.0, 8.0, 1_000_001)
    assert abs(np.trapezoid(t * t * spec(t), t) - spec.nu2) < 1e-8


@pytest.mark.parametrize("spec", KERNELS, ids=lambda s: s.family.value)
def test_kernel_symmetric_on_grid(spec):
    t = np.linspace(-3.0, 3.0, 1001)
    assert np.array_equal(spec(t), spec(-t))


def test_product_constants():
    assert GAUSSIAN.nu2_mean == 1.0 and GAUSSIAN.nu2_cov == 1.0
    assert GAUSSIAN.rk_mean == pytest.approx(1.0 / (4.0 * math.pi))
    assert EPANECHNIKOV.rk_mean == pytest.approx(0.36)
    assert EPANECHNIKOV.rk_cov == pytest.approx(0.216)
    assert EPANECHNIKOV.nu2_cov == pytest.approx(0.008)


def test_make_kernel_accepts_strings_and_caches():
    assert make_kernel("gaussian") is GAUSSIAN
    assert make_kernel(KernelFamily.EPANECHNIKOV) is EPANECHNIKOV
    with pytest.raises(ValueError):
        make_kernel("triweight")


def test_product_weight_examples():
    assert product_weight(EPANECHNIKOV, [0.0, 0.0], [1.0, 1.0]) == pytest.approx(0.5625)
    assert product_weight(EPANECHNIKOV, [0.5], [0.5]) == 0.0
    expected = (1.0 / (2.0 * math.sqrt(2.0 * math.pi))) ** 3
    assert product_weight(GAUSSIAN, [0.0, 0.0, 0.0], [2.0, 2.0, 2.0]) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.0079367, abs=1e-7)


def test_product_weight_errors():
    with pytest.raises(DimensionMismatch):
        product_weight(GAUSSIAN, [0.0, 0.0], [1.0])
    with pytest.raises(InvalidBandwidth):
        product_weight(GAUSSIAN, [0.0], [0.0])
    with pytest.raises(InvalidBandwidth):
        product_weight(GAUSSIAN, [0.0], [float("nan")])


def test_product_weight_vectorized():
    a = np.linspace(-1, 1, 7)
    b = np.linspace(0, 2, 7)
    w = product_weight(GAUSSIAN, [a, b], [0.3, 0.7])
    assert w.shape == (7,)
    assert np.allclose(w, scaled_kernel(GAUSSIAN, a, 0.3) * scaled_kernel(GAUSSIAN, b, 0.7))


offsets = st.floats(-3, 3, allow_nan=False)
bws = st.floats(0.05, 5, allow_nan=False)


@given(offsets, offsets, bws, bws, st.sampled_from(KERNELS))
def test_product_weight_factorizes(a, b, h1, h2, spec):
    joint = product_weight(spec, [a, b], [h1, h2])
    split = product_weight(spec, [a], [h1]) * product_weight(spec, [b], [h2])
    assert joint == pytest.approx(split, rel=1e-12, abs=1e-300)


@settings(max_examples=10, deadline=None)
@given(bws, bws, st.sampled_from(KERNELS))
def test_product_weight_integrates_to_one_2d(h1, h2, spec):
    lim1 = 8 * h1 if spec is GAUSSIAN else h1
    lim2 = 8 * h2 if spec is GAUSSIAN else h2
    val, _ = integrate.dblquad(
        lambda y, x: product_weight(spec, [x, y], [h1, h2]), -lim1, lim1, -lim2, lim2, epsabs=1e-10
    )
    assert val == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("spec", KERNELS, ids=lambda s: s.family.value)
def test_product_weight_integrates_to_one_3d(spec):
    h = (0.4, 0.9, 1.3)
    lims = [8 * x if spec is GAUSSIAN else x for x in h]
    val, _ = integrate.tplquad(
        lambda z, y, x: product_weight(spec, [x, y, z], list(h)),
        -lims[0], lims[0], -lims[1], lims[1], -lims[2], lims[2],
        epsabs=1e-9,
    )
    assert val == pytest.approx(1.0, abs=1e-6)
