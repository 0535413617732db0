"""Global (ECDF) and analysis-specific utility of a synthetic dataset."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

__all__ = [
    "DEFAULT_PROBS",
    "UtilityReport",
    "ecdf_distances",
    "point_statistics",
    "utility_report",
]

DEFAULT_PROBS = (0.15, 0.5, 0.9)


def _nonempty(x, name):
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise ValueError(f"{name} dataset is empty")
    return x


def ecdf_distances(confidential, synthetic) -> tuple[float, float]:
    """Maximum and mean squared difference between the two ECDFs.

    Both ECDFs are evaluated at every record of the pooled sample (ties kept
    as separate points), so the maximum is the two-sample Kolmogorov-Smirnov
    statistic.
    """
    c = np.sort(_nonempty(confidential, "confidential"))
    s = np.sort(_nonempty(synthetic, "synthetic"))
    grid = np.concatenate([c, s])
    diff = np.searchsorted(c, grid, side="right") / c.size - np.searchsorted(s, grid, side="right") / s.size
    return float(np.max(np.abs(diff))), float(np.mean(diff * diff))


def point_statistics(data, probs=DEFAULT_PROBS) -> dict:
    """Mean and linearly interpolated (type-7) quantiles."""
    x = _nonempty(data, "input")
    probs = np.asarray(probs, dtype=float)
    if np.any((probs < 0) | (probs > 1)):
        raise ValueError("quantile probabilities must lie in [0, 1]")
    qs = np.quantile(x, probs, method="linear")
    out = {"mean": float(x.mean())}
    out.update({f"q{p:g}": float(q) for p, q in zip(probs, np.atleast_1d(qs))})
    return out


@dataclass(frozen=True)
class UtilityReport:
    ecdf_max: float
    ecdf_avg_sq: float
    mean: float
    median: float
    q15: float
    q90: float
    confidential_mean: float
    confidential_median: float
    confidential_q15: float
    confidential_q90: float
    quantile_method: str = "linear (type 7)"

    def to_dict(self) -> dict:
        return asdict(self)

    def table(self) -> dict:
        """Rows keyed the way utility tables are usually labelled."""
        return {
            "max-ECDF": self.ecdf_max,
            "avg-ECDF": self.ecdf_avg_sq,
            "Mean": self.mean,
            "Median": self.median,
            "15th Q": self.q15,
            "90th Q": self.q90,
        }


def utility_report(confidential, synthetic) -> UtilityReport:
    dmax, dsq = ecdf_distances(confidential, synthetic)
    syn = point_statistics(synthetic)
    conf = point_statistics(confidential)
    return UtilityReport(
        ecdf_max=dmax,
        ecdf_avg_sq=dsq,
        mean=syn["mean"],
        median=syn["q0.5"],
        q15=syn["q0.15"],
        q90=syn["q0.9"],
        confidential_mean=conf["mean"],
        confidential_median=conf["q0.5"],
        confidential_q15=conf["q0.15"],
        confidential_q90=conf["q0.9"],
    )
