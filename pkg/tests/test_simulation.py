import csv
import math

import numpy as np
import pytest
from scipy import integrate

from fdacov.kernels import GAUSSIAN
from fdacov.simulation import (
    CoverageReport,
    DGPSpec,
    RepRecord,
    coverage_report,
    generate,
    infeasible_benchmark,
    run_coverage,
    run_experiment,
    run_variance_table,
    sample_at,
    stream_id,
    theoretical_variances,
    true_mean_functionals,
    true_surfaces,
    variance_report,
    worker_count,
    write_reports,
)


def test_generate_is_deterministic():
    spec = DGPSpec(id=1, n=20, m=5)
    a, b = generate(spec, seed=3), generate(spec, seed=3)
    assert a.y.tobytes() == b.y.tobytes() and a.u.tobytes() == b.u.tobytes() and a.z.tobytes() == b.z.tobytes()
    assert generate(spec, seed=4).y.tobytes() != a.y.tobytes()
    assert generate(spec, seed=3, stream=1).y.tobytes() != a.y.tobytes()


def test_curves_are_independent_substreams():
    # the first curves do not change when more curves are drawn
    small = generate(DGPSpec(id=1, n=5, m=4), seed=1)
    big = generate(DGPSpec(id=1, n=50, m=4), seed=1)
    assert np.array_equal(small.y, big.y[:5])


def test_design_inside_unit_square():
    s = generate(DGPSpec(id=2, n=200, m=10), seed=0)
    assert s.u.min() >= 0 and s.u.max() < 1 and s.z.min() >= 0 and s.z.max() < 1


def test_mean_of_many_draws():
    y = sample_at(DGPSpec(id=1), 0.5, 0.5, 10**6, seed=1)
    assert 5 * math.sin(math.pi / 8) == pytest.approx(1.9134, abs=1e-4)
    assert abs(y.mean() - 1.9134) < 0.02


def test_variance_of_many_draws():
    spec = DGPSpec(id=1)
    y = sample_at(spec, 0.5, 0.5, 10**6, seed=2)
    p1, p2 = math.sin(math.pi / 4), math.sin(math.pi / 2)
    want = 3 * p1**2 + 2 * p2**2 + 1
    assert abs(y.var() / want - 1) < 0.02


def test_score_and_noise_moments():
    n = 10**5
    # with a flat mean and no noise, two points per curve identify both scores
    spec = DGPSpec(id=1, n=n, m=2, sigma_eps=0.0, amplitude=0.0)
    s = generate(spec, seed=5)
    zz = s.z[:, None]
    a = np.stack([spec.psi(1, s.u, zz), spec.psi(2, s.u, zz)], axis=-1)
    xi = np.linalg.solve(a, s.y[..., None])[..., 0]
    eps = generate(DGPSpec(id=1, n=n // 10, m=10, score_vars=(0.0, 0.0), amplitude=0.0), seed=6).y.ravel()
    for draws, var in ((xi[:, 0], 3.0), (xi[:, 1], 2.0), (eps, 1.0)):
        # well-conditioned curves only for the scores
        if draws is not eps:
            good = np.abs(np.linalg.det(a)) > 0.05
            draws = draws[good]
        k = draws.size
        assert abs(draws.mean()) < 5 * math.sqrt(var / k)
        assert abs(draws.var() - var) < 5 * var * math.sqrt(2 / k)


def test_true_curvatures():
    _, _, curv = true_surfaces(DGPSpec(id=1))
    assert curv(0.5, 0.5)[1] == pytest.approx(-5 * (math.pi / 4) ** 2 * math.sin(math.pi / 8))
    assert curv(0.5, 0.5)[1] == pytest.approx(-1.1803, abs=1e-4)
    assert curv(0.5, 0.5)[0] == curv(0.5, 0.5)[1]
    _, _, curv = true_surfaces(DGPSpec(id=2))
    assert curv(0.5, 0.5)[1] == pytest.approx(-5 * (math.pi / 2) ** 2 * math.sin(math.pi / 4))
    assert curv(0.5, 0.5)[1] == pytest.approx(-8.7236, abs=1e-4)


def test_curvature_matches_finite_differences():
    spec = DGPSpec(id=2)
    h = 1e-4
    d20, d02 = spec.mean_second_partials(0.3, 0.7)
    fd20 = (spec.mean(0.3 + h, 0.7) - 2 * spec.mean(0.3, 0.7) + spec.mean(0.3 - h, 0.7)) / h**2
    fd02 = (spec.mean(0.3, 0.7 + h) - 2 * spec.mean(0.3, 0.7) + spec.mean(0.3, 0.7 - h)) / h**2
    assert d20 == pytest.approx(fd20, rel=1e-5) and d02 == pytest.approx(fd02, rel=1e-5)


@pytest.mark.parametrize("dgp", [1, 2])
def test_mean_vanishes_on_axis(dgp):
    z = np.linspace(0, 1, 11)
    assert np.all(DGPSpec(id=dgp).mean(0.0, z) == 0.0)


def test_gamma_weights():
    spec = DGPSpec(id=1)
    assert spec.gamma(0.5, 0.5, 0.5) == pytest.approx(3 * 0.5 + 2 * 1.0)
    alt = DGPSpec(id=1, gamma_weights=(2.0, 1.0))
    assert alt.gamma(0.5, 0.5, 0.5) == pytest.approx(2 * 0.5 + 1.0)


def test_true_functionals_match_adaptive_quadrature():
    spec = DGPSpec(id=1)
    f = true_mean_functionals(spec)
    d = spec.mean_second_partials
    iuu, _ = integrate.dblquad(lambda z, u: d(u, z)[0] ** 2, 0, 1, 0, 1)
    iuz, _ = integrate.dblquad(lambda z, u: d(u, z)[0] * d(u, z)[1], 0, 1, 0, 1)
    q2, _ = integrate.dblquad(lambda z, u: spec.gamma(u, u, z), 0, 1, 0, 1)
    assert f.i_uu == pytest.approx(iuu, rel=1e-6)
    assert f.i_zz == pytest.approx(iuu, rel=1e-6)
    assert f.i_uz == pytest.approx(iuz, rel=1e-6)
    assert f.q2 == pytest.approx(q2, rel=1e-6)
    assert f.q1 == pytest.approx(q2 + 1.0, rel=1e-6)


def test_theoretical_variances_formula():
    spec = DGPSpec(id=1, n=100, m=5)
    v1, v2 = theoretical_variances(spec, 0.2, 0.3, GAUSSIAN)
    g = 3 * math.sin(math.pi / 4) ** 2 + 2
    assert v1 == pytest.approx((g + 1) / (4 * math.pi) / (500 * 0.06))
    assert v2 == pytest.approx(0.8 * g / (2 * math.sqrt(math.pi)) / (100 * 0.3))


def test_benchmark_uses_true_plugins():
    b = infeasible_benchmark(DGPSpec(id=1, n=100, m=5))
    assert b.d02 == pytest.approx(-1.1803, abs=1e-4)
    assert b.f_uz == b.f_z == 1.0
    assert set(b.bandwidths) == {"sparse", "dense"}


def test_stream_ids_distinct():
    ids = {stream_id(d, m, r) for d in (1, 2) for m in (5, 10, 15) for r in range(300)}
    assert len(ids) == 2 * 3 * 300


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("FDACOV_THREADS", "3")
    assert worker_count() == 3
    assert worker_count(2) == 2
    monkeypatch.delenv("FDACOV_THREADS")
    assert worker_count() >= 1


def _synthetic_records():
    truth = DGPSpec(id=1).mean(0.5, 0.5)
    recs = []
    for r in range(10):
        off = 0.1 * (r - 4.5)
        feas = {"sparse": (truth + off, 0.01), "sparse-corrected": (truth + off, 0.05),
                "dense": (truth + off, 0.02), "dense-corrected": (truth + off, 0.09)}
        est = {"sparse": (truth + off, 0.01, 0.02), "dense": (truth + off, 0.02, 0.03)}
        recs.append(RepRecord(1, 5, r, None, est, feas, feas))
    recs.append(RepRecord(1, 5, 10, "SingularSystem"))
    return recs


def test_coverage_report_counts():
    rep = coverage_report(_synthetic_records(), alpha=0.2)
    z = 1.2815515655446004
    offs = np.abs(0.1 * (np.arange(10) - 4.5))
    for method, var in (("sparse", 0.01), ("sparse-corrected", 0.05), ("dense", 0.02), ("dense-corrected", 0.09)):
        cell = rep.cell(1, 5, method)
        assert cell.reps == 11 and cell.failures == 1
        assert cell.covered == int(np.sum(offs <= z * math.sqrt(var)))
        assert cell.coverage * (cell.reps - cell.failures) == cell.covered
        assert not cell.unreliable
    assert rep.cell(1, 5, "sparse-corrected").coverage >= rep.cell(1, 5, "sparse").coverage


def test_unreliable_flag():
    recs = _synthetic_records()[:9] + [RepRecord(1, 5, 20, "SingularSystem")]
    assert coverage_report(recs).cell(1, 5, "dense").unreliable


def test_variance_report():
    rep = variance_report(_synthetic_records())
    cell = rep.cell(1, 5, "sparse")
    assert cell.reps == 10
    assert cell.var_hat == pytest.approx(np.var(0.1 * (np.arange(10) - 4.5), ddof=1))
    assert cell.ratio_v1 == pytest.approx(cell.var_hat / 0.01)
    assert cell.ratio_v1v2 == pytest.approx(cell.var_hat / 0.03)
    assert all(c.var_hat > 0 and c.v1_bar > 0 and c.v2_bar > 0 for c in rep.cells)


def test_minimum_replications():
    with pytest.raises(ValueError):
        run_coverage([1], [5], 100, reps=10)
    with pytest.raises(ValueError):
        run_variance_table([1], [5], 100, reps=50)


def test_write_reports(tmp_path):
    recs = _synthetic_records()
    paths = write_reports(tmp_path, coverage_report(recs, alpha=0.2), variance_report(recs))
    assert [p.name for p in paths] == ["coverage.csv", "variance_ratios.csv", "fig1_long.csv"]
    rows = list(csv.DictReader(open(paths[0])))
    assert len(rows) == 8 and {r["kind"] for r in rows} == {"feasible", "infeasible"}
    fig = list(csv.DictReader(open(paths[2])))
    assert {r["nominal"] for r in fig} == {"0.8"}


def test_experiment_independent_of_worker_count():
    kw = dict(dgps=(1,), ms=(5,), n=60, reps=2, seed=9)
    a = run_experiment(workers=1, **kw)
    b = run_experiment(workers=2, **kw)
    assert [r.rep for r in a] == [0, 1]
    assert a == b
    assert all(r.error is None for r in a)
    assert isinstance(coverage_report(a), CoverageReport)
