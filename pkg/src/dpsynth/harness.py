"""Seeded Monte Carlo replication of the mechanism comparison.

For each replicate a confidential dataset is drawn from a Beta(a, b)
generator and every requested mechanism is run at every requested epsilon.
Unweighted and Weighted do not depend on epsilon; they are fitted once per
replicate and their row is repeated for each epsilon.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .mechanisms import MechanismKind, SynthesisPipeline
from .model import validate_data
from .sampler import McmcConfig
from .seeding import derive_seed
from .utility import utility_report

__all__ = [
    "COLUMNS",
    "SUMMARY_STATS",
    "SimulationPlan",
    "ResultsTable",
    "run_plan",
    "summarize",
    "format_float",
    "worker_count",
]

log = logging.getLogger(__name__)

COLUMNS = (
    "replicate",
    "mechanism",
    "epsilon",
    "delta_local",
    "epsilon_implied",
    "truncation_count",
    "censoring_count",
    "ecdf_max",
    "ecdf_avg_sq",
    "mean",
    "median",
    "q15",
    "q90",
    "fit_status",
)
NUMERIC_COLUMNS = COLUMNS[2:-1]
METRIC_COLUMNS = COLUMNS[3:-1]
SUMMARY_STATS = ("min", "q1", "median", "mean", "q3", "max", "sd")
ALL_MECHANISMS = tuple(MechanismKind)


def format_float(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "NA"
    return format(value, ".17g")


def worker_count(default: int = 1) -> int:
    raw = os.environ.get("DPSYNTH_THREADS")
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"DPSYNTH_THREADS must be an integer, got {raw!r}") from None


@dataclass(frozen=True)
class SimulationPlan:
    R: int = 20
    n: int = 500
    generator: tuple = (0.5, 3.0)
    epsilons: tuple = (5.0, 4.0, 3.0)
    mechanisms: tuple = ALL_MECHANISMS
    c1: float = 1.0
    c2: float = 0.0
    master_seed: int = 20240101
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    weight_rule: str = "linear"
    bins: int | None = None
    data_range: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mechanisms", tuple(MechanismKind.parse(m) for m in self.mechanisms))
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))
        object.__setattr__(self, "generator", tuple(float(g) for g in self.generator))
        if isinstance(self.mcmc, dict):
            object.__setattr__(self, "mcmc", McmcConfig(**self.mcmc))
        if self.R < 1:
            raise ValueError("R must be >= 1")
        if self.n < 10:
            raise ValueError("n must be >= 10")
        if not self.epsilons or any(not e > 0 for e in self.epsilons):
            raise ValueError("epsilons must be a non-empty list of positive values")
        if len(set(self.epsilons)) != len(self.epsilons):
            raise ValueError("epsilons must be distinct")
        if not self.mechanisms:
            raise ValueError("at least one mechanism is required")
        if len(self.generator) != 2 or any(not g > 0 for g in self.generator):
            raise ValueError("generator must be a pair of positive Beta shapes")
        if not 0 < self.c1 <= 1:
            raise ValueError("c1 must lie in (0, 1]")

    @classmethod
    def full_scale(cls, **overrides) -> "SimulationPlan":
        return cls(**{"R": 100, "n": 2000, **overrides})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mechanisms"] = [m.value for m in self.mechanisms]
        d["generator"] = list(self.generator)
        d["epsilons"] = list(self.epsilons)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationPlan":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown plan fields: {', '.join(sorted(unknown))}")
        d = dict(d)
        if "mcmc" in d and isinstance(d["mcmc"], dict):
            d["mcmc"] = McmcConfig(**d["mcmc"])
        return cls(**d)

    def replicate_data(self, r: int) -> np.ndarray:
        rng = np.random.default_rng(derive_seed(self.master_seed, r, 0, 0))
        a, b = self.generator
        x, _ = validate_data(rng.beta(a, b, self.n))
        return x


class ResultsTable:
    """Long-format results, one row per (replicate, mechanism, epsilon)."""

    def __init__(self, rows=(), audits=(), fit_counts=None, plan: SimulationPlan | None = None):
        self.rows = [dict(r) for r in rows]
        self.audits = list(audits)
        self.fit_counts = Counter(fit_counts or {})
        self.plan = plan

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def select(self, **where) -> list[dict]:
        out = []
        for row in self.rows:
            if all(_matches(row[k], v) for k, v in where.items()):
                out.append(row)
        return out

    def column(self, name: str, **where) -> np.ndarray:
        if name not in COLUMNS:
            raise KeyError(f"unknown column {name!r}")
        vals = [r[name] for r in self.select(**where)]
        if name in NUMERIC_COLUMNS:
            return np.array([np.nan if v is None else v for v in vals], dtype=float)
        return np.array(vals)

    def sorted(self, epsilons=None) -> "ResultsTable":
        order = {m.value: i for i, m in enumerate(MechanismKind)}
        eps_rank = {e: i for i, e in enumerate(epsilons or ())}

        def key(row):
            return (row["replicate"], order[row["mechanism"]],
                    eps_rank.get(row["epsilon"], len(eps_rank)), -row["epsilon"])

        return ResultsTable(sorted(self.rows, key=key), self.audits, self.fit_counts, self.plan)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(COLUMNS)
            for row in self.rows:
                writer.writerow([row[c] if c in ("mechanism", "fit_status") else format_float(row[c])
                                 for c in COLUMNS])

    @classmethod
    def from_csv(cls, path) -> "ResultsTable":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != COLUMNS:
                raise ValueError(f"{path}: header does not match {COLUMNS}")
            rows = []
            for raw in reader:
                row = {}
                for c in COLUMNS:
                    v = raw[c]
                    if c in ("mechanism", "fit_status"):
                        row[c] = v
                    elif c in ("replicate", "truncation_count", "censoring_count"):
                        row[c] = int(v)
                    else:
                        row[c] = None if v == "NA" else float(v)
                rows.append(row)
        return cls(rows)


def _matches(value, wanted) -> bool:
    if isinstance(wanted, MechanismKind):
        wanted = wanted.value
    if isinstance(wanted, (list, tuple, set)):
        return any(_matches(value, w) for w in wanted)
    if isinstance(value, float) and isinstance(wanted, (int, float)):
        return value == float(wanted)
    return value == wanted


def _run_replicate(plan: SimulationPlan, r: int):
    x = plan.replicate_data(r)
    pipeline = SynthesisPipeline(
        x, plan.mcmc, c1=plan.c1, c2=plan.c2, seed_key=(plan.master_seed, r),
        weight_rule=plan.weight_rule, bins=plan.bins, data_range=plan.data_range, strict=False,
    )
    rows, audits = [], []
    for kind in plan.mechanisms:
        if kind.uses_epsilon:
            results = [(eps, pipeline.run(kind, eps)) for eps in plan.epsilons]
        else:
            shared = pipeline.run(kind)
            results = [(eps, shared) for eps in plan.epsilons]
        for eps, res in results:
            util = utility_report(x, res.synthetic)
            lip = res.lipschitz
            rows.append({
                "replicate": r,
                "mechanism": kind.value,
                "epsilon": eps,
                "delta_local": lip.delta_local if lip else None,
                "epsilon_implied": lip.epsilon_implied if lip else None,
                "truncation_count": res.audit["truncation_count"],
                "censoring_count": res.audit["censoring_count"],
                "ecdf_max": util.ecdf_max,
                "ecdf_avg_sq": util.ecdf_avg_sq,
                "mean": util.mean,
                "median": util.median,
                "q15": util.q15,
                "q90": util.q90,
                "fit_status": res.fit_status,
            })
            audit = dict(res.audit, replicate=r, row_epsilon=eps, utility=util.to_dict())
            audits.append(audit)
    return rows, audits, dict(pipeline.fit_counts)


def _run_replicate_star(args):
    return _run_replicate(*args)


def run_plan(plan: SimulationPlan, workers: int | None = None, out_dir=None) -> ResultsTable:
    """Run every replicate of ``plan``; output does not depend on ``workers``.

    With ``out_dir`` the table is also exported (see :func:`export`).
    """
    workers = worker_count() if workers is None else max(1, int(workers))
    jobs = [(plan, r) for r in range(plan.R)]
    if workers == 1 or plan.R == 1:
        outputs = []
        for job in jobs:
            outputs.append(_run_replicate_star(job))
            log.info("replicate %d/%d done", job[1] + 1, plan.R)
    else:
        with ProcessPoolExecutor(max_workers=min(workers, plan.R)) as pool:
            outputs = list(pool.map(_run_replicate_star, jobs))

    rows, audits, counts = [], [], Counter()
    for r_rows, r_audits, r_counts in outputs:
        rows.extend(r_rows)
        audits.extend(r_audits)
        counts.update(r_counts)
    table = ResultsTable(rows, audits, counts, plan).sorted(plan.epsilons)
    if out_dir is not None:
        export(table, out_dir)
    return table


def summarize(table: ResultsTable, group_by=("mechanism", "epsilon"), columns=None) -> list[dict]:
    """Seven-number summary (min, Q1, median, mean, Q3, max, sd) per group and column.

    ``sd`` is the sample standard deviation; for single-row groups it is
    reported as 0 with ``sd_defined = False``.  Groups come out sorted by key.
    """
    if len(table) == 0:
        raise ValueError("cannot summarize an empty table")
    group_by = (group_by,) if isinstance(group_by, str) else tuple(group_by)
    columns = METRIC_COLUMNS if columns is None else ((columns,) if isinstance(columns, str) else tuple(columns))
    for c in (*group_by, *columns):
        if c not in COLUMNS:
            raise KeyError(f"unknown column {c!r}")
    for c in columns:
        if c not in NUMERIC_COLUMNS:
            raise ValueError(f"column {c!r} is not numeric")

    groups: dict = {}
    for row in table.rows:
        groups.setdefault(tuple(row[g] for g in group_by), []).append(row)

    def sort_key(k):
        return tuple((0, v) if isinstance(v, (int, float)) else (1, str(v)) for v in k)

    out = []
    for key in sorted(groups, key=sort_key):
        rows = groups[key]
        for c in columns:
            vals = np.array([r[c] for r in rows if r[c] is not None], dtype=float)
            vals = vals[~np.isnan(vals)]
            entry = dict(zip(group_by, key))
            entry["column"] = c
            entry["count"] = int(vals.size)
            if vals.size == 0:
                entry.update({s: None for s in SUMMARY_STATS})
                entry["sd_defined"] = False
            else:
                vals = np.sort(vals)
                q1, med, q3 = np.quantile(vals, [0.25, 0.5, 0.75])
                entry.update({
                    "min": float(vals[0]),
                    "q1": float(q1),
                    "median": float(med),
                    "mean": float(math.fsum(vals) / vals.size),
                    "q3": float(q3),
                    "max": float(vals[-1]),
                    "sd": float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0,
                })
                entry["sd_defined"] = vals.size > 1
            out.append(entry)
    return out


def write_summary_csv(summary: list[dict], path) -> None:
    if not summary:
        raise ValueError("empty summary")
    fields = list(summary[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for entry in summary:
            writer.writerow([format_float(v) if not isinstance(v, str) else v for v in (entry[f] for f in fields)])


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, MechanismKind):
        return obj.value
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dump_json(obj, path) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def export(table: ResultsTable, out_dir) -> Path:
    """Write ``results.csv``, ``summary.csv``, ``plan.json`` and ``audit/*.json``."""
    out = Path(out_dir)
    (out / "audit").mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "results.csv")
    write_summary_csv(summarize(table), out / "summary.csv")
    if table.plan is not None:
        dump_json({"plan": table.plan.to_dict(), "fit_counts": dict(sorted(table.fit_counts.items()))},
                  out / "plan.json")
    seen = set()
    for audit in table.audits:
        name = f"r{audit['replicate']:04d}_{audit['mechanism']}_e{format_float(audit['row_epsilon'])}.json"
        if name in seen:
            continue
        seen.add(name)
        dump_json(audit, out / "audit" / name)
    return out

