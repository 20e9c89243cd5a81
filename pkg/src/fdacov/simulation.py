"""Synthetic data-generating processes and the Monte-Carlo coverage study.

Two DGPs share the structure

    Y_ij = mu(U_ij, Z_i) + xi_i1 psi_1(U_ij, Z_i) + xi_i2 psi_2(U_ij, Z_i) + eps_ij

with ``U, Z ~ Unif(0, 1)``, ``xi_i1 ~ N(0, 3)``, ``xi_i2 ~ N(0, 2)`` and
``eps ~ N(0, 1)``:

======  =====================  ===================  ===================
DGP     mu(u, z)               psi_1(u, z)          psi_2(u, z)
======  =====================  ===================  ===================
1       5 sin(pi u z / 2)      sin(pi u z)          sin(2 pi u z)
2       5 sin(pi u z)          sin(2 pi u z)        sin(3 pi u z)
======  =====================  ===================  ===================

Random numbers come from counter-based Philox streams. The key holds the
base seed and a stream id; the counter's third word holds the curve index.
Every curve therefore has its own substream, and every Monte-Carlo
replication its own stream id, so results do not depend on how the work is
split across processes.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from fdacov.bandwidth import Regime, Target, bandwidths_for
from fdacov.data import PanelSample
from fdacov.errors import FdacovError
from fdacov.inference import (
    ALL_METHODS,
    InferenceConfig,
    Method,
    assemble_interval,
    bias_from_curvature,
    confidence_intervals,
    normal_quantile,
    prepare,
)
from fdacov.kernels import GAUSSIAN, KernelSpec
from fdacov.llk import fit_mean
from fdacov.polyfit import MeanFunctionals, QuadratureGrid

EVAL_POINT = (0.5, 0.5)
UNRELIABLE_FAILURE_RATE = 0.1

_SHAPES = {
    # dgp id: (mean frequency, psi_1 frequency, psi_2 frequency), all times u*z
    1: (math.pi / 2.0, math.pi, 2.0 * math.pi),
    2: (math.pi, 2.0 * math.pi, 3.0 * math.pi),
}


@dataclass(frozen=True)
class DGPSpec:
    """One synthetic design.

    ``gamma_weights`` are the weights of ``psi_k psi_k`` in the true
    covariance. By default they equal ``score_vars``, which is what the
    generator implies; pass ``(2.0, 1.0)`` for the alternative weighting.
    """

    id: int = 1
    n: int = 100
    m: int = 5
    sigma_eps: float = 1.0
    score_vars: tuple = (3.0, 2.0)
    gamma_weights: tuple | None = None
    amplitude: float = 5.0

    def __post_init__(self):
        if self.id not in _SHAPES:
            raise ValueError(f"unknown DGP id {self.id}")
        if self.n < 1 or self.m < 1:
            raise ValueError("n and m must be positive")

    @property
    def weights(self) -> tuple:
        return self.score_vars if self.gamma_weights is None else self.gamma_weights

    def mean(self, u, z):
        c = _SHAPES[self.id][0]
        return self.amplitude * np.sin(c * np.asarray(u) * np.asarray(z))

    def psi(self, k: int, u, z):
        c = _SHAPES[self.id][k]
        return np.sin(c * np.asarray(u) * np.asarray(z))

    def gamma(self, u1, u2, z):
        w1, w2 = self.weights
        return w1 * self.psi(1, u1, z) * self.psi(1, u2, z) + w2 * self.psi(2, u1, z) * self.psi(2, u2, z)

    def mean_second_partials(self, u, z):
        """Analytic ``(d^2/du^2, d^2/dz^2)`` of the mean surface."""
        c = _SHAPES[self.id][0]
        u = np.asarray(u, dtype=float)
        z = np.asarray(z, dtype=float)
        s = -self.amplitude * c**2 * np.sin(c * u * z)
        return s * z**2, s * u**2


def true_surfaces(spec: DGPSpec):
    """Return ``(mean, covariance, curvature)`` evaluators of ``spec``."""
    return spec.mean, spec.gamma, spec.mean_second_partials


def _curve_rng(seed: int, stream: int, curve: int) -> np.random.Generator:
    key = np.array([seed, stream], dtype=np.uint64)
    counter = np.array([0, 0, curve, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def generate(spec: DGPSpec, seed: int, stream: int = 0) -> PanelSample:
    """Draw one panel of ``spec.n`` curves with ``spec.m`` points each."""
    n, m = spec.n, spec.m
    u = np.empty((n, m))
    z = np.empty(n)
    xi = np.empty((n, 2))
    eps = np.empty((n, m))
    sd = np.sqrt(np.asarray(spec.score_vars, dtype=float))
    for i in range(n):
        rng = _curve_rng(seed, stream, i)
        z[i] = rng.random()
        u[i] = rng.random(m)
        xi[i] = rng.standard_normal(2) * sd
        eps[i] = rng.standard_normal(m) * spec.sigma_eps
    zz = z[:, None]
    y = (
        spec.mean(u, zz)
        + xi[:, :1] * spec.psi(1, u, zz)
        + xi[:, 1:] * spec.psi(2, u, zz)
        + eps
    )
    return PanelSample(y=y, u=u, z=z)


def sample_at(spec: DGPSpec, u: float, z: float, size: int, seed: int = 0) -> np.ndarray:
    """Draws of ``Y`` at a fixed ``(u, z)`` from the model of ``spec``."""
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 2**63], dtype=np.uint64)))
    xi = rng.standard_normal((size, 2)) * np.sqrt(np.asarray(spec.score_vars, dtype=float))
    eps = rng.standard_normal(size) * spec.sigma_eps
    return spec.mean(u, z) + xi[:, 0] * spec.psi(1, u, z) + xi[:, 1] * spec.psi(2, u, z) + eps


def stream_id(dgp: int, m: int, rep: int) -> int:
    """Stream id of one Monte-Carlo replication."""
    return (dgp << 48) | (m << 32) | rep


# ---------------------------------------------------------------- infeasible benchmark


def true_mean_functionals(spec: DGPSpec, grid: QuadratureGrid = QuadratureGrid()) -> MeanFunctionals:
    """Mean-bandwidth functionals of ``spec`` under the uniform design (all densities 1)."""
    (uu, zz), w = grid.rule(2)
    d20, d02 = spec.mean_second_partials(uu, zz)
    g = spec.gamma(uu, uu, zz)
    return MeanFunctionals(
        i_uu=float(np.sum(w * d20**2)),
        i_uz=float(np.sum(w * d20 * d02)),
        i_zz=float(np.sum(w * d02**2)),
        q1=float(np.sum(w * (g + spec.sigma_eps**2))),
        q2=float(np.sum(w * g)),
    )


@dataclass(frozen=True)
class Benchmark:
    """Theoretical bandwidths, bias and variance ingredients at the evaluation point."""

    bandwidths: dict
    d20: float
    d02: float
    gamma: float
    f_uz: float = 1.0
    f_z: float = 1.0


def infeasible_benchmark(spec: DGPSpec, kernel: KernelSpec = GAUSSIAN, grid=QuadratureGrid()) -> Benchmark:
    f = true_mean_functionals(spec, grid)
    bws = {r: bandwidths_for(Target.MEAN, r, f, spec.n, spec.m, kernel) for r in Regime}
    d20, d02 = spec.mean_second_partials(*EVAL_POINT)
    return Benchmark(bws, float(d20), float(d02), float(spec.gamma(EVAL_POINT[0], EVAL_POINT[0], EVAL_POINT[1])))


def theoretical_variances(spec: DGPSpec, h_u: float, h_z: float, kernel: KernelSpec = GAUSSIAN):
    """``(V1, V2)`` at the evaluation point with the true surfaces and uniform densities."""
    u, z = EVAL_POINT
    g = float(spec.gamma(u, u, z))
    n, m = spec.n, spec.m
    v1 = kernel.rk_mean * (g + spec.sigma_eps**2) / (n * m * h_u * h_z)
    v2 = ((m - 1) / m) * kernel.rk * g / (n * h_z)
    return v1, v2


# ---------------------------------------------------------------- replications


@dataclass(frozen=True)
class RepRecord:
    """Everything one replication contributes to the reports."""

    dgp: int
    m: int
    rep: int
    error: str | None
    #: regime -> (mu_hat, theoretical v1, theoretical v2) with the rule-of-thumb bandwidths
    estimates: dict = field(default_factory=dict)
    #: method -> (center, variance) of the feasible interval
    feasible: dict = field(default_factory=dict)
    #: method -> (center, variance) of the infeasible interval
    infeasible: dict = field(default_factory=dict)
    infeasible_error: str | None = None


@dataclass(frozen=True)
class _Task:
    spec: DGPSpec
    rep: int
    seed: int
    config: InferenceConfig
    benchmark: Benchmark
    alpha: float = 0.1


def _run_rep(task: _Task) -> RepRecord:
    from threadpoolctl import threadpool_limits

    with threadpool_limits(1):
        return _run_rep_inner(task)


def _run_rep_inner(task: _Task) -> RepRecord:
    spec, kernel = task.spec, task.config.kernel
    sample = generate(spec, task.seed, stream_id(spec.id, spec.m, task.rep))
    bench = task.benchmark
    infeasible, inf_err = {}, None
    try:
        for regime in Regime:
            h = bench.bandwidths[regime]
            est = fit_mean(sample, *EVAL_POINT, h.h_u, h.h_z, kernel).value
            bias = bias_from_curvature(bench.d20, bench.d02, h.h_u, h.h_z, regime, kernel)
            v1, v2 = theoretical_variances(spec, h.h_u, h.h_z, kernel)
            for mt in ALL_METHODS:
                if mt.regime is regime:
                    ci = assemble_interval(EVAL_POINT, mt, task.alpha, est, bias, v1, v2)
                    infeasible[mt.value] = (ci.center, ci.variance)
    except FdacovError as exc:
        infeasible, inf_err = {}, type(exc).__name__
    try:
        ctx = prepare(sample, replace(task.config, seed=task.seed))
        cis = confidence_intervals(sample, EVAL_POINT, ALL_METHODS, task.alpha, context=ctx)
    except FdacovError as exc:
        return RepRecord(spec.id, spec.m, task.rep, type(exc).__name__, infeasible=infeasible, infeasible_error=inf_err)
    estimates = {}
    for ci in cis:
        regime = ci.method.regime.value
        if regime not in estimates:
            h = ci.bandwidths
            estimates[regime] = (ci.estimate,) + theoretical_variances(spec, h.h_u, h.h_z, kernel)
    feasible = {ci.method.value: (ci.center, ci.variance) for ci in cis}
    return RepRecord(spec.id, spec.m, task.rep, None, estimates, feasible, infeasible, inf_err)


def worker_count(requested: int | None = None) -> int:
    """Worker processes: ``requested``, else ``FDACOV_THREADS``, else the CPU count."""
    if requested is None:
        env = os.environ.get("FDACOV_THREADS")
        requested = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(requested))


def run_experiment(
    dgps=(1,),
    ms=(5, 10, 15),
    n: int = 100,
    reps: int = 300,
    alpha: float = 0.1,
    seed: int = 0,
    config: InferenceConfig = InferenceConfig(),
    workers: int | None = None,
    spec_overrides: dict | None = None,
) -> list[RepRecord]:
    """Run every replication of every ``(dgp, m)`` cell; records are ordered by cell and rep."""
    tasks = []
    for dgp in dgps:
        for m in ms:
            spec = DGPSpec(id=int(dgp), n=n, m=int(m), **(spec_overrides or {}))
            bench = infeasible_benchmark(spec, config.kernel, config.grid)
            tasks.extend(_Task(spec, r, seed, config, bench, alpha) for r in range(reps))
    nw = min(worker_count(workers), len(tasks))
    if nw <= 1:
        return [_run_rep(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=nw) as pool:
        return list(pool.map(_run_rep, tasks, chunksize=1))


# ---------------------------------------------------------------- reports


@dataclass(frozen=True)
class CoverageCell:
    dgp: int
    m: int
    kind: str
    method: str
    reps: int
    failures: int
    covered: int
    mean_width: float

    @property
    def coverage(self) -> float:
        used = self.reps - self.failures
        return self.covered / used if used else float("nan")

    @property
    def unreliable(self) -> bool:
        return self.failures / self.reps >= UNRELIABLE_FAILURE_RATE


@dataclass(frozen=True)
class CoverageReport:
    alpha: float
    cells: list

    def cell(self, dgp: int, m: int, method, kind: str = "feasible") -> CoverageCell:
        method = Method(method).value
        for c in self.cells:
            if (c.dgp, c.m, c.kind, c.method) == (dgp, m, kind, method):
                return c
        raise KeyError((dgp, m, method, kind))


@dataclass(frozen=True)
class VarianceCell:
    dgp: int
    m: int
    regime: str
    reps: int
    var_hat: float
    v1_bar: float
    v2_bar: float

    @property
    def ratio_v1(self) -> float:
        return self.var_hat / self.v1_bar

    @property
    def ratio_v2(self) -> float:
        return self.var_hat / self.v2_bar

    @property
    def ratio_v1v2(self) -> float:
        return self.var_hat / (self.v1_bar + self.v2_bar)


@dataclass(frozen=True)
class VarianceRatioReport:
    cells: list

    def cell(self, dgp: int, m: int, regime) -> VarianceCell:
        regime = Regime(regime).value
        for c in self.cells:
            if (c.dgp, c.m, c.regime) == (dgp, m, regime):
                return c
        raise KeyError((dgp, m, regime))


def _cells(records):
    out: dict = {}
    for r in records:
        out.setdefault((r.dgp, r.m), []).append(r)
    return out


def coverage_report(records, methods=ALL_METHODS, alpha: float = 0.1) -> CoverageReport:
    """Coverage of the two-sided ``z_{1-alpha/2}`` intervals built from the stored records."""
    zq = normal_quantile(1.0 - alpha / 2.0)
    cells = []
    for (dgp, m), recs in _cells(records).items():
        truth = float(DGPSpec(id=dgp, m=m).mean(*EVAL_POINT))
        for kind in ("feasible", "infeasible"):
            for mt in methods:
                mt = Method(mt).value
                ok = np.array([getattr(r, kind)[mt] for r in recs if mt in getattr(r, kind)]).reshape(-1, 2)
                half = zq * np.sqrt(ok[:, 1])
                covered = np.sum(np.abs(ok[:, 0] - truth) <= half)
                width = float(np.mean(2.0 * half)) if len(ok) else float("nan")
                cells.append(CoverageCell(dgp, m, kind, mt, len(recs), len(recs) - len(ok), int(covered), width))
    return CoverageReport(alpha, cells)


def variance_report(records) -> VarianceRatioReport:
    cells = []
    for (dgp, m), recs in _cells(records).items():
        for regime in Regime:
            rows = np.array([r.estimates[regime.value] for r in recs if regime.value in r.estimates])
            if rows.shape[0] < 2:
                continue
            cells.append(
                VarianceCell(
                    dgp, m, regime.value, rows.shape[0],
                    float(np.var(rows[:, 0], ddof=1)),
                    float(rows[:, 1].mean()),
                    float(rows[:, 2].mean()),
                )
            )
    return VarianceRatioReport(cells)


def run_coverage(dgps, ms, n: int, reps: int, methods=ALL_METHODS, alpha: float = 0.1, seed: int = 0, **kw) -> CoverageReport:
    """Empirical coverage of the feasible and infeasible intervals at ``(0.5, 0.5)``."""
    if reps < 50:
        raise ValueError("coverage needs at least 50 replications")
    return coverage_report(run_experiment(dgps, ms, n, reps, alpha, seed, **kw), methods, alpha)


def run_variance_table(dgps, ms, n: int, reps: int, seed: int = 0, **kw) -> VarianceRatioReport:
    """Monte-Carlo variance of the mean estimate against averaged ``V1`` and ``V1 + V2``."""
    if reps < 100:
        raise ValueError("the variance table needs at least 100 replications")
    return variance_report(run_experiment(dgps, ms, n, reps, seed=seed, **kw))


# ---------------------------------------------------------------- CSV output


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float) or isinstance(x, np.floating):
        return f"{float(x):.10g}"
    return str(x)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_reports(out_dir, coverage: CoverageReport, variances: VarianceRatioReport) -> list[Path]:
    """Write ``coverage.csv``, ``variance_ratios.csv`` and ``fig1_long.csv`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "coverage.csv", out / "variance_ratios.csv", out / "fig1_long.csv"]
    _write_csv(
        paths[0],
        ["dgp", "m", "kind", "method", "reps", "failures", "covered", "coverage", "mean_width", "unreliable"],
        [
            (c.dgp, c.m, c.kind, c.method, c.reps, c.failures, c.covered, c.coverage, c.mean_width, c.unreliable)
            for c in coverage.cells
        ],
    )
    _write_csv(
        paths[1],
        ["dgp", "m", "regime", "reps", "var_hat", "v1_bar", "v2_bar", "ratio_v1", "ratio_v2", "ratio_v1v2"],
        [
            (c.dgp, c.m, c.regime, c.reps, c.var_hat, c.v1_bar, c.v2_bar, c.ratio_v1, c.ratio_v2, c.ratio_v1v2)
            for c in variances.cells
        ],
    )
    nominal = 1.0 - coverage.alpha
    _write_csv(
        paths[2],
        ["panel", "dgp", "m", "method", "coverage", "nominal"],
        [(c.kind, c.dgp, c.m, c.method, c.coverage, nominal) for c in coverage.cells],
    )
    return paths
