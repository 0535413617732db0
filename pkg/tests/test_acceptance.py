"""Acceptance criteria, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line (collected again in
the terminal summary).  Run them alone with

    pytest tests/test_acceptance.py -v

The desk-scale plan (R=20, n=500, default MCMC budget) is run once per session
and shared.  Ordering checks use one-sided paired t-tests over replicates:
a strict claim (increase, decrease, smaller) needs p < 0.05 in its favour; a
weak claim (<=, >=) passes unless the reverse direction is significant at 5%.
"""

import filecmp
import math

import mpmath
import numpy as np
import pytest
from scipy import stats

from dpsynth import cli
from dpsynth.harness import SimulationPlan, export, run_plan, worker_count
from dpsynth.mechanisms import (
    MechanismKind,
    SynthesisPipeline,
    laplace_noise,
    perturbed_histogram,
)
from dpsynth.model import BetaParams, beta_loglik
from dpsynth.sampler import McmcConfig, autocorr_time, fit
from dpsynth.utility import ecdf_distances

ALPHA = 0.05
EPSILONS = (5.0, 4.0, 3.0)
CENSORS = ("censor-w", "censor-uw")


def p_greater(a, b):
    """One-sided paired p-value for mean(a - b) > 0."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if np.all(d == d[0]):
        return 0.0 if d[0] > 0 else 1.0
    return float(stats.ttest_rel(a, b, alternative="greater").pvalue)


def strictly_greater(a, b):
    p = p_greater(a, b)
    return p < ALPHA, p


def not_significantly_less(a, b):
    p = p_greater(b, a)
    return p >= ALPHA, p


@pytest.fixture(scope="session")
def desk_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("desk")


@pytest.fixture(scope="session")
def desk(desk_dir):
    return run_plan(SimulationPlan(), workers=1, out_dir=desk_dir)


@pytest.fixture(scope="session")
def downscaled():
    plan = SimulationPlan(c1=0.8, epsilons=(4.0,), mechanisms=("weighted", "weighted-e", "censor-w"))
    return run_plan(plan, workers=worker_count())


@pytest.fixture(scope="session")
def fuzz_results():
    """CensorW and CensorUw on 200 randomized datasets and budgets."""
    rng = np.random.default_rng(20240517)
    cfg = McmcConfig(n_warmup=1000, n_retain=1000)
    out = []
    for k in range(200):
        n = int(rng.integers(20, 401))
        a, b = np.exp(rng.uniform(np.log(0.2), np.log(5.0), 2))
        x = rng.beta(a, b, n)
        if k % 10 == 0:
            x[: max(1, n // 50)] = rng.choice([1e-12, 1 - 1e-12], max(1, n // 50))
        x = np.clip(x, 1e-9, 1 - 1e-9)
        eps = float(rng.uniform(0.5, 8.0))
        c1 = float(rng.uniform(0.5, 1.0))
        pipe = SynthesisPipeline(x, cfg, c1=c1, seed_key=(k,), strict=False)
        for kind in CENSORS:
            out.append(pipe.run(kind, eps).audit)
    return out


def col(table, name, mechanism, epsilon):
    rows = sorted(table.select(mechanism=mechanism, epsilon=epsilon), key=lambda r: r["replicate"])
    return np.array([r[name] for r in rows], dtype=float)


def iqr(x):
    q1, q3 = np.quantile(x, [0.25, 0.75])
    return q3 - q1


def test_criterion_01_strict_cap(desk, fuzz_results, record_criterion):
    desk_rows = [r for r in desk if r["mechanism"] in CENSORS]
    desk_bad = [r for r in desk_rows if not r["delta_local"] <= r["epsilon"] / 2]
    fuzz_bad = [a for a in fuzz_results if not a["delta_local"] <= a["epsilon"] / 2]
    record_criterion(1, {
        "desk violations": not desk_bad,
        "fuzz violations": not fuzz_bad,
        "fuzz coverage": len(fuzz_results) == 400,
    }, f"desk runs={len(desk_rows)} violations={len(desk_bad)}; "
       f"fuzz runs={len(fuzz_results)} violations={len(fuzz_bad)}")


def test_criterion_02_epsilon_identity(desk, downscaled, fuzz_results, record_criterion):
    audits = [a for a in (*desk.audits, *downscaled.audits, *fuzz_results) if a["delta_local"] is not None]
    bad = [a for a in audits if a["epsilon_implied"] != 2 * a["delta_local"]]
    rows_bad = [r for r in desk if r["delta_local"] is not None and r["epsilon_implied"] != 2 * r["delta_local"]]
    record_criterion(2, {"audit records": not bad, "result rows": not rows_bad},
                     f"checked {len(audits)} audit records, mismatches={len(bad) + len(rows_bad)}")


def test_criterion_03_contraction(desk, record_criterion):
    eps = 3.0
    w = col(desk, "delta_local", "weighted", eps)
    we = col(desk, "delta_local", "weighted-e", eps)
    rng = np.random.default_rng(3)
    idx = rng.integers(0, w.size, (10_000, w.size))
    diffs = np.array([iqr(w[i]) - iqr(we[i]) for i in idx])
    p_iqr = float(np.mean(diffs <= 0))
    exceed = int(np.sum(we > eps / 2))
    censor_max = max(col(desk, "delta_local", m, eps).max() for m in CENSORS)
    record_criterion(3, {
        "IQR(Weighted-e) < IQR(Weighted)": p_iqr < ALPHA,
        "Weighted-e exceeds eps/2 somewhere": exceed > 0,
        "censors never exceed eps/2": censor_max <= eps / 2,
    }, f"IQR W={iqr(w):.4f} We={iqr(we):.4f} bootstrap p={p_iqr:.4f}; "
       f"We>eps/2 in {exceed}/{we.size}; censor max={censor_max:.4f}")


def test_criterion_04_invocation_counts(desk, record_criterion):
    checks, parts = {}, []
    for eps in EPSILONS:
        uw = col(desk, "censoring_count", "censor-uw", eps)
        cw = col(desk, "censoring_count", "censor-w", eps)
        ok, p = not_significantly_less(uw, cw)
        checks[f"CensorUw >= CensorW at eps={eps:g}"] = ok
        parts.append(f"eps={eps:g}: uw={uw.mean():.1f} w={cw.mean():.1f} p(rev)={p:.3g}")
    for name, column in (("censor-uw", "censoring_count"), ("censor-w", "censoring_count"),
                         ("weighted-e", "truncation_count")):
        for hi, lo in ((5.0, 4.0), (4.0, 3.0)):
            ok, p = strictly_greater(col(desk, column, name, lo), col(desk, column, name, hi))
            checks[f"{name} {column} increases {hi:g}->{lo:g}"] = ok
            parts.append(f"{name} {hi:g}->{lo:g} p={p:.3g}")
    trunc = [col(desk, "truncation_count", "weighted-e", e).mean() for e in EPSILONS]
    parts.append("We trunc means " + "/".join(f"{t:.1f}" for t in trunc))
    record_criterion(4, checks, "; ".join(parts))


def test_criterion_05_utility_ordering(desk, record_criterion):
    eps = 5.0
    checks, parts = {}, []
    for metric in ("ecdf_max", "ecdf_avg_sq"):
        vals = {m.value: col(desk, metric, m.value, eps) for m in MechanismKind}
        means = {k: v.mean() for k, v in vals.items()}
        for lo, hi in (("weighted", "censor-w"), ("censor-w", "censor-uw")):
            ok, p = not_significantly_less(vals[hi], vals[lo])
            checks[f"{metric}: {lo} <= {hi}"] = ok
            parts.append(f"{metric} {lo}={means[lo]:.4g} {hi}={means[hi]:.4g} p(rev)={p:.3g}")
        rank = sorted(means, key=means.get, reverse=True).index("ph") + 1
        checks[f"{metric}: PH worst or second worst"] = rank <= 2
        parts.append(f"{metric} PH rank from worst={rank}")
        w_rows = [col(desk, metric, "weighted", e) for e in EPSILONS]
        checks[f"{metric}: Weighted invariant across eps"] = all(np.array_equal(w_rows[0], r) for r in w_rows)
    record_criterion(5, checks, "; ".join(parts))


def test_criterion_06_downscaling(desk, downscaled, record_criterion):
    eps = 4.0
    checks, parts = {}, []
    for mech in ("weighted", "weighted-e", "censor-w"):
        for metric in ("delta_local", "ecdf_avg_sq"):
            base = col(desk, metric, mech, eps)
            down = col(downscaled, metric, mech, eps)
            ok, p = strictly_greater(base, down)
            checks[f"{mech} {metric} decreases"] = ok
            parts.append(f"{mech} {metric} c1=1:{base.mean():.4g} c1=0.8:{down.mean():.4g} p={p:.3g}")
    record_criterion(6, checks, "; ".join(parts))


def test_criterion_07_sampler(record_criterion):
    x = np.random.default_rng(2000).beta(0.5, 3.0, 2000).clip(1e-9, 1 - 1e-9)
    m = fit(x, config=McmcConfig(seed=7)).mean()
    prior = fit(x, np.zeros(x.size), config=McmcConfig(seed=8))
    chains = [prior.draws[prior.chain_ids == c, 0] for c in range(2)]
    step = math.ceil(2 * max(autocorr_time(c) for c in chains))
    phi = np.concatenate([c[::step] for c in chains])
    p = stats.kstest(phi, "uniform").pvalue
    record_criterion(7, {
        "phi within 0.02 of 1/7": abs(m["phi"] - 1 / 7) <= 0.02,
        "lambda within 0.4 of 3.5": abs(m["lambda"] - 3.5) <= 0.4,
        "zero-weight phi ~ Uniform (KS at 1%)": p > 0.01,
    }, f"phi={m['phi']:.4f} lambda={m['lambda']:.3f}; prior KS p={p:.3f} on {phi.size} draws (thin {step})")


def brute_force_ks(a, b):
    best = 0.0
    for t in list(a) + list(b):
        fa = sum(1 for v in a if v <= t) / len(a)
        fb = sum(1 for v in b if v <= t) / len(b)
        best = max(best, abs(fa - fb))
    return best


def test_criterion_08_metric_oracles(record_criterion):
    rng = np.random.default_rng(8)
    ks_err = 0.0
    for _ in range(50):
        a = rng.random(rng.integers(1, 20))
        b = rng.random(rng.integers(1, 20))
        ks_err = max(ks_err, abs(ecdf_distances(a, b)[0] - brute_force_ks(a, b)))
    mpmath.mp.dps = 40
    ll_err = 0.0
    for _ in range(1000):
        phi, lam, x = rng.uniform(0.02, 0.98), rng.uniform(0.2, 50.0), rng.uniform(0.001, 0.999)
        a, b = lam * phi, lam * (1 - phi)
        oracle = mpmath.log(mpmath.gamma(a + b) / (mpmath.gamma(a) * mpmath.gamma(b))
                            * mpmath.mpf(x) ** (a - 1) * (1 - mpmath.mpf(x)) ** (b - 1))
        ll_err = max(ll_err, abs(beta_loglik(x, BetaParams(phi, lam)) - float(oracle)))
    record_criterion(8, {"KS vs brute force": ks_err <= 1e-12, "beta_loglik vs gamma oracle": ll_err <= 1e-10},
                     f"max KS error={ks_err:.2e}; max loglik error={ll_err:.2e}")


def test_criterion_09_histogram_plumbing(record_criterion):
    scale = 2 / 5
    noise = laplace_noise(scale, 100_000, np.random.default_rng(9))
    mad = np.abs(noise).mean()
    se = np.abs(noise).std(ddof=1) / math.sqrt(noise.size)
    x = np.random.default_rng(10).beta(0.5, 3.0, 100_000)
    syn, info = perturbed_histogram(x, math.inf, rng=np.random.default_rng(11), return_info=True)
    edges = np.linspace(0, 1, info["bins"] + 1)
    cum = np.concatenate([[0.0], np.cumsum(info["counts"] / x.size)])
    dist = stats.kstest(syn, lambda t: np.interp(t, edges, cum)).statistic
    record_criterion(9, {"Laplace MAD within 3 SE of 2/eps": abs(mad - scale) <= 3 * se,
                         "zero-noise ECDF vs binned reference < 0.02": dist < 0.02},
                     f"MAD={mad:.5f} (target {scale}, SE {se:.5f}); binned distance={dist:.4f}")


def _same_tree(a, b):
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only:
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    return not mismatch and not errors and all(_same_tree(a / d, b / d) for d in cmp.common_dirs)


def test_criterion_10_determinism(desk, desk_dir, tmp_path, monkeypatch, record_criterion):
    checks = {}
    for run in ("a", "b"):
        # relative paths, because the synthesize audit records its input path
        (tmp_path / run).mkdir()
        monkeypatch.chdir(tmp_path / run)
        assert cli.main(["simulate", "--n", "400", "--seed", "5", "--out", "conf.csv"]) == 0
        for mech in ("censor-w", "weighted-e", "ph"):
            assert cli.main(["synthesize", "--input", "conf.csv", "--mechanism", mech, "--epsilon", "3",
                             "--seed", "6", "--out-dir", mech, "--warmup", "1000", "--draws", "1000"]) == 0
        assert cli.main(["evaluate", "--confidential", "conf.csv", "--synthetic", "ph/synthetic.csv",
                         "--out", "eval.json"]) == 0
        assert cli.main(["montecarlo", "--replicates", "2", "--n", "60", "--seed", "9",
                         "--warmup", "800", "--draws", "800", "--workers", "1" if run == "a" else "2",
                         "--out-dir", "mc"]) == 0
    monkeypatch.chdir(tmp_path)
    checks["commands (serial vs 2 workers for montecarlo)"] = _same_tree(tmp_path / "a", tmp_path / "b")
    parallel = tmp_path / "desk_parallel"
    run_plan(SimulationPlan(), workers=2, out_dir=parallel)
    checks["full desk plan, serial vs 2 workers"] = _same_tree(desk_dir, parallel)
    failed = sum(r["fit_status"] == "failed" for r in desk)
    record_criterion(10, checks, f"desk rows={len(desk)}, flagged failed fits={failed}")


def test_desk_failure_rate(desk, record_criterion):
    failed = sum(r["fit_status"] == "failed" for r in desk)
    record_criterion("10b", {"failed fits under 5%": failed <= 0.05 * len(desk)},
                     f"{failed}/{len(desk)} rows flagged failed")


def test_censor_uw_count_at_full_n(record_criterion):
    """Censor_uw at eps=5 with n=2000 over R=100 replicates (only this mechanism)."""
    plan = SimulationPlan.full_scale(mechanisms=("censor-uw",), epsilons=(5.0,))
    counts = run_plan(plan, workers=worker_count()).column("censoring_count")
    mean = counts.mean()
    record_criterion("4*", {"mean within 15% of 247": abs(mean - 247) <= 0.15 * 247},
                     f"R=100 n=2000 mean={mean:.1f} (reference 247), sd={counts.std(ddof=1):.1f}")


@pytest.mark.full_scale
def test_full_scale_plan(tmp_path, record_criterion):
    table = run_plan(SimulationPlan.full_scale(), workers=worker_count(), out_dir=tmp_path)
    cap = all(r["delta_local"] <= r["epsilon"] / 2 for r in table if r["mechanism"] in CENSORS)
    mean = col(table, "censoring_count", "censor-uw", 5.0).mean()
    record_criterion("4**", {"cap": cap, "mean within 15% of 247": abs(mean - 247) <= 0.15 * 247},
                     f"full-scale plan: Censor_uw eps=5 mean={mean:.1f}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v", "-p", "no:cacheprovider"]))
