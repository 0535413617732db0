"""Command-line front end.

Exit codes: 0 on success, 1 for fit failures and internal errors, 2 for
usage and input errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .harness import COLUMNS, SimulationPlan, dump_json, format_float, run_plan
from .mechanisms import MechanismKind, PrivacySpec, SynthesisPipeline
from .model import BetaRegressionSynthesizer, BetaSynthesizer, validate_data
from .sampler import FitFailedError, McmcConfig
from .utility import utility_report

log = logging.getLogger("dpsynth")

MECHANISM_CHOICES = [m.value for m in MechanismKind]


class InputError(Exception):
    """Bad input file or argument combination (exit code 2)."""


def read_table(path, column: str = "value") -> tuple[np.ndarray, dict]:
    """Read a CSV with a ``column`` of outcomes plus optional numeric predictors."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"input file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        if column not in header:
            raise InputError(f"{path}: missing column {column!r} (found: {', '.join(header) or 'none'})")
        cols = {name: [] for name in header}
        for lineno, row in enumerate(reader, start=2):
            for name in header:
                try:
                    cols[name].append(float(row[name]))
                except (TypeError, ValueError):
                    raise InputError(f"{path}:{lineno}: column {name!r} has non-numeric value {row[name]!r}") from None
    values = np.array(cols.pop(column), dtype=float)
    if values.size == 0:
        raise InputError(f"{path}: no records")
    return values, {k: np.array(v, dtype=float) for k, v in cols.items()}


def write_table(path, values, predictors: dict | None = None) -> None:
    predictors = predictors or {}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["value", *predictors])
        cols = [values, *predictors.values()]
        for row in zip(*cols):
            writer.writerow([format_float(v) for v in row])


def _mcmc_from_args(args, seed: int) -> McmcConfig:
    return McmcConfig(n_warmup=args.warmup, n_retain=args.draws, thin=args.thin,
                      n_chains=args.chains, seed=seed)


def cmd_simulate(args) -> int:
    if not (args.a > 0 and args.b > 0):
        raise InputError("Beta shapes must be positive")
    if args.n < 1:
        raise InputError("n must be >= 1")
    rng = np.random.default_rng(args.seed)
    write_table(args.out, rng.beta(args.a, args.b, args.n))
    return 0


def cmd_synthesize(args) -> int:
    values, predictors = read_table(args.input)
    try:
        kind = MechanismKind.parse(args.mechanism)
        x, n_clamped = values, 0
        if kind is not MechanismKind.PERTURBED_HISTOGRAM:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                x, n_clamped = validate_data(values)
            for w in caught:
                log.warning("%s", w.message)
        spec = PrivacySpec(args.epsilon, args.c1, args.c2)
    except ValueError as err:
        raise InputError(str(err)) from None

    if kind is MechanismKind.PERTURBED_HISTOGRAM:
        model = values
    elif predictors:
        X = np.column_stack(list(predictors.values()))
        model = BetaRegressionSynthesizer(x, X, predictor_names=list(predictors))
    else:
        model = BetaSynthesizer(x)
    config = _mcmc_from_args(args, args.seed)
    try:
        pipeline = SynthesisPipeline(model, config, c1=spec.c1, c2=spec.c2,
                                     seed_key=(args.seed,), weight_rule=args.weight_rule,
                                     bins=args.bins, data_range=args.range)
        result = pipeline.run(kind, spec.epsilon)
    except ValueError as err:
        raise InputError(str(err)) from None

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    synth_path = out / "synthetic.csv"
    carried = predictors if kind is not MechanismKind.PERTURBED_HISTOGRAM else {}
    write_table(synth_path, result.synthetic, carried)
    audit = dict(result.audit)
    audit["boundary_clamped"] = n_clamped
    audit["config"] = {
        "input": str(args.input),
        "mechanism": kind.value,
        "epsilon": args.epsilon,
        "c1": args.c1,
        "c2": args.c2,
        "seed": args.seed,
        "bins": args.bins,
        "range": args.range,
        "weight_rule": args.weight_rule,
        "mcmc": {"n_warmup": config.n_warmup, "n_retain": config.n_retain, "thin": config.thin,
                 "n_chains": config.n_chains, "adapt_target": config.adapt_target},
        "model": "histogram" if kind is MechanismKind.PERTURBED_HISTOGRAM else type(model).__name__,
        "version": __version__,
    }
    dump_json(audit, out / "audit.json")
    if args.evaluate:
        report = utility_report(values, result.synthetic)
        dump_json(report.to_dict(), out / "utility.json")
    print(synth_path)
    return 0


def cmd_evaluate(args) -> int:
    conf, _ = read_table(args.confidential, args.column)
    syn, _ = read_table(args.synthetic, args.column)
    report = utility_report(conf, syn)
    if args.format == "json":
        text = json.dumps({**report.to_dict(), "table": report.table()}, indent=2, sort_keys=True) + "\n"
    else:
        fields = list(report.to_dict())
        values = report.to_dict()
        text = ",".join(fields) + "\n" + ",".join(
            v if isinstance(v, str) else format_float(v) for v in (values[f] for f in fields)) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _plan_from_args(args) -> SimulationPlan:
    if args.plan:
        path = Path(args.plan)
        if not path.is_file():
            raise InputError(f"plan file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
            plan = SimulationPlan.from_dict(raw.get("plan", raw))
        except (ValueError, TypeError) as err:
            raise InputError(f"{path}: {err}") from None
    else:
        plan = SimulationPlan.full_scale() if args.full_scale else SimulationPlan()
    overrides = {}
    if args.full_scale:
        overrides.update(R=100, n=2000)
    if args.replicates is not None:
        overrides["R"] = args.replicates
    if args.n is not None:
        overrides["n"] = args.n
    if args.epsilon:
        overrides["epsilons"] = tuple(args.epsilon)
    if args.mechanism:
        overrides["mechanisms"] = tuple(args.mechanism)
    for name in ("c1", "c2", "bins", "weight_rule"):
        if getattr(args, name) is not None:
            overrides[name] = getattr(args, name)
    if args.range is not None:
        overrides["data_range"] = args.range
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.shape is not None:
        overrides["generator"] = tuple(args.shape)
    mcmc = {k: v for k, v in (("n_warmup", args.warmup), ("n_retain", args.draws),
                               ("n_chains", args.chains), ("thin", args.thin)) if v is not None}
    try:
        if mcmc:
            overrides["mcmc"] = replace(plan.mcmc, **mcmc)
        return replace(plan, **overrides)
    except ValueError as err:
        raise InputError(str(err)) from None


def cmd_montecarlo(args) -> int:
    plan = _plan_from_args(args)
    table = run_plan(plan, workers=args.workers, out_dir=args.out_dir)
    if args.format == "json":
        dump_json({"columns": list(COLUMNS), "rows": table.rows}, Path(args.out_dir) / "results.json")
    failed = sum(1 for row in table if row["fit_status"] == "failed")
    log.info("%d rows written to %s (%d flagged failed)", len(table), args.out_dir, failed)
    print(Path(args.out_dir) / "results.csv")
    return 0


def _add_mcmc_flags(p, defaults: bool):
    d = McmcConfig()
    p.add_argument("--warmup", type=int, default=d.n_warmup if defaults else None, help="warmup iterations per chain")
    p.add_argument("--draws", type=int, default=d.n_retain if defaults else None, help="retained draws per chain")
    p.add_argument("--chains", type=int, default=d.n_chains if defaults else None)
    p.add_argument("--thin", type=int, default=d.thin if defaults else None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpsynth", description="Differentially private Bayesian data synthesis")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw confidential-style data from a Beta distribution")
    p.add_argument("--a", type=float, default=0.5)
    p.add_argument("--b", type=float, default=3.0)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("synthesize", help="release a synthetic dataset under one mechanism")
    p.add_argument("--input", required=True)
    p.add_argument("--mechanism", required=True, type=lambda s: MechanismKind.parse(s).value,
                   metavar="{" + ",".join(MECHANISM_CHOICES) + "}")
    p.add_argument("--epsilon", type=float, default=5.0)
    p.add_argument("--c1", type=float, default=1.0)
    p.add_argument("--c2", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bins", type=int, default=None, help="histogram bins (default round(ln n))")
    p.add_argument("--range", type=float, default=1.0, help="declared data range L for the histogram")
    p.add_argument("--weight-rule", dest="weight_rule", choices=["linear", "inverse"], default="linear")
    p.add_argument("--evaluate", action="store_true", help="also write utility.json")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    _add_mcmc_flags(p, defaults=True)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("evaluate", help="utility of a synthetic dataset against the confidential one")
    p.add_argument("--confidential", required=True)
    p.add_argument("--synthetic", required=True)
    p.add_argument("--column", default="value")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("montecarlo", help="run the Monte Carlo comparison")
    p.add_argument("--plan", default=None, help="JSON plan file")
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--paper-scale", dest="full_scale", action="store_true", help="R=100, n=2000")
    p.add_argument("--epsilon", type=float, nargs="+", default=None)
    p.add_argument("--mechanism", nargs="+", default=None, type=lambda s: MechanismKind.parse(s).value)
    p.add_argument("--shape", type=float, nargs=2, default=None, metavar=("A", "B"))
    p.add_argument("--c1", type=float, default=None)
    p.add_argument("--c2", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--bins", type=int, default=None)
    p.add_argument("--range", type=float, default=None)
    p.add_argument("--weight-rule", dest="weight_rule", choices=["linear", "inverse"], default=None)
    p.add_argument("--workers", type=int, default=None, help="worker processes (default DPSYNTH_THREADS or 1)")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    _add_mcmc_flags(p, defaults=False)
    p.set_defaults(func=cmd_montecarlo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as err:
        print(f"dpsynth: error: {err}", file=sys.stderr)
        return 2
    except FitFailedError as err:
        print(f"dpsynth: fit failed: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"dpsynth: error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # pragma: no cover - last-resort guard
        print(f"dpsynth: internal error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
