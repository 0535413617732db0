# A pocket version of the Monte Carlo comparison: a few replicates, all six
# mechanisms, three budgets.  Writes results.csv, summary.csv and audits.
import sys
from pathlib import Path

from dpsynth import McmcConfig, SimulationPlan, run_plan, summarize

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_mc")
plan = SimulationPlan(R=4, n=300, mcmc=McmcConfig(n_warmup=1500, n_retain=1500))
table = run_plan(plan, out_dir=out)

print(f"{len(table)} rows written to {out}/results.csv")
for entry in summarize(table, columns=("censoring_count",)):
    if entry["mechanism"].startswith("censor"):
        print(f"{entry['mechanism']:<10} eps={entry['epsilon']:g}  mean censored={entry['mean']:.1f}")

print()
for entry in summarize(table, columns=("ecdf_max",)):
    if entry["epsilon"] == 5.0:
        print(f"{entry['mechanism']:<11} mean KS distance {entry['mean']:.3f}")
