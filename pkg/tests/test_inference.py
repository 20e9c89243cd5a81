import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from fdacov.bandwidth import BandwidthSet, Regime, Target
from fdacov.data import PanelSample
from fdacov.errors import EvaluationOutsideDomain
from fdacov.inference import (
    ALL_METHODS,
    Method,
    assemble_interval,
    bias_from_curvature,
    confidence_interval,
    confidence_intervals,
    estimate_bias,
    estimate_v1,
    estimate_v2,
    normal_quantile,
    prepare,
    variance_used,
)
from fdacov.kernels import EPANECHNIKOV, GAUSSIAN
from fdacov.simulation import DGPSpec, generate


def _bw(hu, hz, regime=Regime.DENSE):
    return BandwidthSet(hu, hz, Target.MEAN, Regime(regime))


@pytest.fixture(scope="module")
def dgp1_context():
    s = generate(DGPSpec(id=1, n=100, m=5), seed=7)
    return s, prepare(s)


def test_method_regimes():
    assert [mt.regime for mt in ALL_METHODS] == [Regime.SPARSE, Regime.SPARSE, Regime.DENSE, Regime.DENSE]
    assert [mt.corrected for mt in ALL_METHODS] == [False, True, False, True]


def test_quantile_oracle():
    assert normal_quantile(0.9) == pytest.approx(1.2816, abs=1e-4)
    for p in (1e-6, 0.025, 0.5, 0.95, 0.999999):
        assert normal_quantile(p) == pytest.approx(stats.norm.ppf(p), abs=1e-9)
    with pytest.raises(ValueError):
        normal_quantile(1.0)


def test_alpha_0_2_uses_z_0_9():
    ci = assemble_interval((0.5, 0.5), Method.SPARSE_PLAIN, 0.2, 1.0, 0.0, 1.0, 0.0)
    assert ci.width / 2 == pytest.approx(1.2815515655, abs=1e-9)


def test_v1_example():
    v1 = estimate_v1(_bw(0.2, 0.2), 2.0, 1.0, 100, 5, EPANECHNIKOV)
    assert v1 == pytest.approx(0.036, rel=1e-12)


def test_v2_example():
    assert estimate_v2(0.2, 2.0, 1.0, 100, 5, EPANECHNIKOV) == pytest.approx(0.048, rel=1e-12)


def test_v1_rates_and_zero():
    a = estimate_v1(_bw(0.3, 0.2), 1.5, 0.8, 100, 5)
    assert estimate_v1(_bw(0.3, 0.2), 1.5, 0.8, 200, 5) == pytest.approx(a / 2)
    assert estimate_v1(_bw(0.3, 0.2), 1.5, 0.8, 100, 10) == pytest.approx(a / 2)
    assert estimate_v1(_bw(0.3, 0.2), 0.0, 0.8, 100, 5) == 0.0


def test_v2_large_m_factor():
    ratio = estimate_v2(0.2, 1.0, 1.0, 100, 10**6) / estimate_v2(0.2, 1.0, 1.0, 100, 10**12)
    assert ratio == pytest.approx(1.0, abs=1e-6)


def test_negative_surfaces_clamped_and_flagged():
    diag = {}
    assert estimate_v2(0.2, -0.3, 1.0, 100, 5, diagnostics=diag) == 0.0
    assert diag == {"gamma_clamped": True}
    diag = {}
    assert estimate_v1(_bw(0.2, 0.2), -1.0, 1.0, 100, 5, diagnostics=diag) == 0.0
    assert diag == {"gamma_nd_clamped": True}


def test_dense_bias_example():
    assert bias_from_curvature(0.0, -1.18, 0.1, 0.3, Regime.DENSE, GAUSSIAN) == pytest.approx(-0.0531, abs=1e-12)


@given(st.floats(-10, 10), st.floats(0.01, 1.0))
def test_sparse_bias_twice_dense_when_symmetric(d, h):
    sparse = bias_from_curvature(d, d, h, h, Regime.SPARSE)
    dense = bias_from_curvature(d, d, h, h, Regime.DENSE)
    assert sparse == pytest.approx(2 * dense, rel=1e-14, abs=1e-300)


def test_bias_vanishes_on_linear_surface():
    u = np.tile(np.linspace(0, 1, 30), (30, 1))
    z = np.linspace(0, 1, 30)
    s = PanelSample(y=0.5 + u - 2 * z[:, None], u=u, z=z)
    assert abs(estimate_bias(s, (0.5, 0.5), _bw(0.2, 0.2, Regime.SPARSE), (0.3, 0.3))) < 1e-6


@settings(max_examples=50)
@given(
    st.sampled_from(ALL_METHODS),
    st.floats(0.01, 0.5),
    st.floats(-5, 5),
    st.floats(-1, 1),
    st.floats(1e-6, 1.0),
    st.floats(1e-6, 1.0),
)
def test_interval_invariants(method, alpha, est, bias, v1, v2):
    ci = assemble_interval((0.5, 0.5), method, alpha, est, bias, v1, v2)
    assert ci.ci_lower < ci.ci_upper
    assert ci.center == est - bias
    assert (ci.ci_lower + ci.ci_upper) / 2 == pytest.approx(ci.center, abs=1e-12)
    z = stats.norm.ppf(1 - alpha / 2)
    assert ci.width == pytest.approx(2 * z * math.sqrt(variance_used(method, v1, v2)), rel=1e-9)
    plain = Method.SPARSE_PLAIN if method.regime is Regime.SPARSE else Method.DENSE_PLAIN
    corrected = Method.SPARSE_CORRECTED if method.regime is Regime.SPARSE else Method.DENSE_CORRECTED
    assert variance_used(corrected, v1, v2) >= variance_used(plain, v1, v2)


def test_variance_used_table():
    assert variance_used("sparse", 1.0, 2.0) == 1.0
    assert variance_used("dense", 1.0, 2.0) == 2.0
    assert variance_used("sparse-corrected", 1.0, 2.0) == 3.0
    assert variance_used("dense-corrected", 1.0, 2.0) == 3.0


def test_feasible_intervals_on_dgp1(dgp1_context):
    s, ctx = dgp1_context
    cis = {ci.method: ci for ci in confidence_intervals(s, (0.5, 0.5), context=ctx)}
    assert set(cis) == set(ALL_METHODS)
    for ci in cis.values():
        assert ci.v1 >= 0 and ci.v2 >= 0 and ci.ci_lower < ci.ci_upper
        assert abs(ci.estimate - DGPSpec(id=1).mean(0.5, 0.5)) < 1.5
    assert cis[Method.SPARSE_CORRECTED].width > cis[Method.SPARSE_PLAIN].width
    assert cis[Method.DENSE_CORRECTED].width > cis[Method.DENSE_PLAIN].width
    assert cis[Method.SPARSE_PLAIN].estimate == cis[Method.SPARSE_CORRECTED].estimate
    assert cis[Method.SPARSE_PLAIN].bias == cis[Method.SPARSE_CORRECTED].bias


def test_deterministic_given_sample(dgp1_context):
    s, ctx = dgp1_context
    a = confidence_interval(s, (0.4, 0.6), context=ctx).to_dict()
    b = confidence_interval(PanelSample(y=s.y.copy(), u=s.u.copy(), z=s.z.copy()), (0.4, 0.6)).to_dict()
    assert a == b


def test_outside_domain(dgp1_context):
    s, ctx = dgp1_context
    with pytest.raises(EvaluationOutsideDomain):
        confidence_interval(s, (1.5, 0.5), context=ctx)


def test_boundary_flagged(dgp1_context):
    s, ctx = dgp1_context
    assert confidence_interval(s, (0.0, 0.5), context=ctx).diagnostics.get("boundary")
