import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdacov.data import (
    PanelSample,
    load_panel,
    quadruple_products,
    raw_covariances,
    valid_quadruples,
    write_panel,
)
from fdacov.errors import DomainError, InconsistentZ, ParseError, RaggedPanel


def _write(path, rows, header="curve_id,u,z,y"):
    path.write_text(header + "\n" + "\n".join(rows) + "\n")
    return path


def _random_panel(n, m, seed=0):
    rng = np.random.default_rng(seed)
    return PanelSample(y=rng.normal(size=(n, m)), u=rng.random((n, m)), z=rng.random(n))


def test_load_minimal_panel(tmp_path):
    p = _write(tmp_path / "a.csv", ["a,0.1,0.5,1", "a,0.9,0.5,1", "b,0.2,0.3,1", "b,0.4,0.3,1"])
    s = load_panel(p)
    assert (s.n, s.m) == (2, 2)
    assert np.all(s.y == 1.0)
    assert np.allclose(s.z, [0.5, 0.3])


def test_load_ragged_panel(tmp_path):
    rows = [f"a,{0.1 * k},0.5,1" for k in range(5)] + [f"b,{0.1 * k},0.2,1" for k in range(3)]
    with pytest.raises(RaggedPanel):
        load_panel(_write(tmp_path / "r.csv", rows))


def test_load_out_of_domain(tmp_path):
    with pytest.raises(DomainError):
        load_panel(_write(tmp_path / "d.csv", ["a,1.2,0.5,1", "a,0.3,0.5,1"]))


def test_load_inconsistent_z(tmp_path):
    with pytest.raises(InconsistentZ):
        load_panel(_write(tmp_path / "z.csv", ["a,0.1,0.5,1", "a,0.3,0.6,1"]))


@pytest.mark.parametrize(
    "rows, header",
    [
        (["a,0.1,0.5,x", "a,0.3,0.5,1"], "curve_id,u,z,y"),
        (["a,0.1,0.5", "a,0.3,0.5,1"], "curve_id,u,z,y"),
        (["a,0.1,0.5,1"], "id,u,z,y"),
    ],
)
def test_load_malformed(tmp_path, rows, header):
    with pytest.raises(ParseError):
        load_panel(_write(tmp_path / "bad.csv", rows, header))


def test_single_point_curves_rejected(tmp_path):
    with pytest.raises(DomainError):
        load_panel(_write(tmp_path / "s.csv", ["a,0.1,0.5,1", "b,0.3,0.4,1"]))


def test_roundtrip_is_exact(tmp_path):
    s = _random_panel(4, 3, seed=1)
    write_panel(s, tmp_path / "p.csv")
    t = load_panel(tmp_path / "p.csv")
    assert np.array_equal(s.y, t.y) and np.array_equal(s.u, t.u) and np.array_equal(s.z, t.z)


def test_panel_is_read_only():
    s = _random_panel(2, 2)
    with pytest.raises(ValueError):
        s.y[0, 0] = 1.0


def test_raw_covariances_zero_residuals():
    s = _random_panel(3, 4)
    raw = raw_covariances(s, lambda u, z: s.y)
    assert np.allclose(raw.c, 0.0) and np.allclose(raw.diag_c, 0.0)


def test_raw_covariances_hand_example():
    s = PanelSample(y=[[2.0, 3.0]], u=[[0.2, 0.7]], z=[0.5])
    raw = raw_covariances(s, lambda u, z: np.zeros_like(u))
    assert sorted(raw.c.tolist()) == [6.0, 6.0]
    assert sorted(raw.diag_c.tolist()) == [4.0, 9.0]


def test_raw_covariance_counts_and_no_diagonal():
    s = _random_panel(5, 3)
    raw = raw_covariances(s, lambda u, z: 0.0 * u)
    assert len(raw) == 5 * (9 - 3) and raw.diag_c.size == 15
    assert raw.bigM == 6
    assert np.all(raw.j != raw.k)
    one = raw_covariances(_random_panel(1, 3), lambda u, z: 0.0 * u)
    assert len(one) == 6


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(2, 6), st.integers(0, 10_000))
def test_raw_covariances_pair_swap_symmetry(n, m, seed):
    raw = raw_covariances(_random_panel(n, m, seed), lambda u, z: np.sin(u + z))
    fwd = {(i, j, k): (a, b, c) for i, j, k, a, b, c in zip(raw.i, raw.j, raw.k, raw.u1, raw.u2, raw.c)}
    for (i, j, k), (a, b, c) in fwd.items():
        a2, b2, c2 = fwd[(i, k, j)]
        assert (a2, b2) == (b, a) and c2 == c


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 6), st.integers(2, 5), st.integers(0, 10_000))
def test_raw_covariances_invariant_under_curve_relabeling(n, m, seed):
    s = _random_panel(n, m, seed)
    perm = np.random.default_rng(seed).permutation(n)
    t = PanelSample(y=s.y[perm], u=s.u[perm], z=s.z[perm])
    mean = lambda u, z: u * z  # noqa: E731
    a, b = raw_covariances(s, mean), raw_covariances(t, mean)
    assert np.allclose(np.sort(a.c), np.sort(b.c), rtol=0, atol=0)


def _brute_force_quadruples(m):
    pairs = [(j, k) for j in range(m) for k in range(m) if j != k]
    return [(p, q) for p, q in itertools.product(pairs, pairs) if p[0] != q[0] and p[1] != q[1]]


@pytest.mark.parametrize("m", [2, 3, 4, 5])
def test_valid_quadruples_match_enumeration(m):
    a, b = valid_quadruples(m)
    assert a.size == len(_brute_force_quadruples(m))


def test_quadruple_count_m2():
    # ordered pairs (0,1) and (1,0) crossed give 4 combinations; the two that
    # repeat an index in the same slot are excluded
    assert len(_brute_force_quadruples(2)) == 2
    a, _ = valid_quadruples(2)
    assert a.size == 2


def test_quadruple_products_zero_when_centered_exactly():
    s = _random_panel(3, 4, seed=3)
    raw = raw_covariances(s, lambda u, z: 0.0 * u)
    lookup = {(round(x, 15), round(y, 15)): c for x, y, c in zip(raw.u1, raw.u2, raw.c)}
    cov = lambda u1, u2, z: np.array([lookup[(round(x, 15), round(y, 15))] for x, y in zip(u1, u2)])  # noqa: E731
    q = quadruple_products(raw, cov)
    assert np.allclose(q.value, 0.0)


def test_quadruple_subsample_cap_and_seed():
    s = _random_panel(4, 5, seed=4)
    raw = raw_covariances(s, lambda u, z: 0.0 * u)
    q = quadruple_products(raw, lambda u1, u2, z: 0.0 * u1, max_per_curve=10, seed=7)
    assert len(q) == 40
    assert np.all(np.bincount(q.curve) == 10)
    again = quadruple_products(raw, lambda u1, u2, z: 0.0 * u1, max_per_curve=10, seed=7)
    assert np.array_equal(q.value, again.value)


def test_quadruple_products_values_by_hand():
    s = PanelSample(y=[[1.0, 2.0, 4.0]], u=[[0.1, 0.5, 0.9]], z=[0.3])
    raw = raw_covariances(s, lambda u, z: 0.0 * u)
    q = quadruple_products(raw, lambda u1, u2, z: 0.0 * u1)
    resid = {0.1: 1.0, 0.5: 2.0, 0.9: 4.0}
    for u1, u2, u3, u4, v in zip(q.u1, q.u2, q.u3, q.u4, q.value):
        assert v == resid[u1] * resid[u2] * resid[u3] * resid[u4]
        assert u1 != u3 and u2 != u4
