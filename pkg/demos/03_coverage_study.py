"""A small Monte-Carlo coverage study.

Replications are independent counter-based random streams, so the records do
not depend on how many worker processes run them (set FDACOV_THREADS to
choose). Besides the feasible intervals each replication also builds the
infeasible benchmark, which plugs in the true curvatures, covariance and
densities. Reports land in ``demos/out``.

The full desk-scale study uses 300 replications; 40 keep this demo short.

Run with ``python demos/03_coverage_study.py``.
"""

from pathlib import Path

from fdacov.simulation import coverage_report, run_experiment, variance_report, write_reports

REPS = 40
records = run_experiment(dgps=(1,), ms=(5, 10), n=100, reps=REPS, seed=1)
cov = coverage_report(records, alpha=0.1)
var = variance_report(records)

print(f"coverage of nominal 90% intervals, {REPS} replications")
for c in cov.cells:
    print(f"  m={c.m:2d} {c.kind:>10s} {c.method:>17s}: {c.coverage:.3f} (mean width {c.mean_width:.3f})")

print("empirical variance over the theoretical terms")
for c in var.cells:
    print(f"  m={c.m:2d} {c.regime:>6s}: Var/V1={c.ratio_v1:.2f} Var/(V1+V2)={c.ratio_v1v2:.2f}")

paths = write_reports(Path(__file__).parent / "out", cov, var)
print("wrote", ", ".join(p.name for p in paths))
