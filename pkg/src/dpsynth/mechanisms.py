"""Release mechanisms, record weights and Lipschitz/epsilon accounting.

Six mechanisms are supported:

``unweighted``
    Plain posterior, every weight 1.
``weighted``
    Pseudo posterior with risk-based weights computed from the unweighted fit.
``weighted-e``
    The weighted pipeline, after which any record whose weighted contribution
    exceeds ``epsilon / 2`` in magnitude gets weight 0, followed by a refit.
``censor-w``
    Weighted contributions clamped into ``[-epsilon/2, epsilon/2]``.
``censor-uw``
    Unit-weight contributions clamped into ``[-epsilon/2, epsilon/2]``.
``ph``
    Laplace-perturbed histogram.

For the model-based mechanisms the privacy accounting is
``epsilon_implied = 2 * delta_local`` where ``delta_local`` is the largest
absolute (weighted, possibly clamped) log-likelihood contribution over records
and retained draws.
"""

from __future__ import annotations

import enum
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .model import BetaSynthesizer, censor_loglik, validate_data
from .sampler import FitFailedError, McmcConfig, PosteriorDraws, fit
from .seeding import derive_seed, epsilon_key

__all__ = [
    "MechanismKind",
    "WeightVector",
    "PrivacySpec",
    "LipschitzSummary",
    "MechanismResult",
    "SynthesisPipeline",
    "compute_weights",
    "scale_weights",
    "truncate_weights_e",
    "lipschitz_summary",
    "laplace_noise",
    "default_bins",
    "perturbed_histogram",
    "run_mechanism",
    "weight_summary",
]

WEIGHT_RULES = ("linear", "inverse")


class MechanismKind(str, enum.Enum):
    UNWEIGHTED = "unweighted"
    WEIGHTED = "weighted"
    WEIGHTED_E = "weighted-e"
    CENSOR_W = "censor-w"
    CENSOR_UW = "censor-uw"
    PERTURBED_HISTOGRAM = "ph"

    @classmethod
    def parse(cls, value) -> "MechanismKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {"perturbed-histogram": "ph", "weightede": "weighted-e"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            choices = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown mechanism {value!r}; choose from {choices}") from None

    @property
    def seed_id(self) -> int:
        return list(MechanismKind).index(self) + 1

    @property
    def uses_epsilon(self) -> bool:
        return self not in (MechanismKind.UNWEIGHTED, MechanismKind.WEIGHTED)

    @property
    def label(self) -> str:
        return {
            "unweighted": "Unweighted",
            "weighted": "Weighted",
            "weighted-e": "Weighted-e",
            "censor-w": "Censor_w",
            "censor-uw": "Censor_uw",
            "ph": "PH",
        }[self.value]


@dataclass(frozen=True)
class WeightVector:
    alphas: np.ndarray
    provenance: str = "risk_based"

    def __post_init__(self):
        a = np.array(self.alphas, dtype=float).ravel()
        if a.size and (not np.all(np.isfinite(a)) or a.min() < 0.0 or a.max() > 1.0):
            raise ValueError("weights must lie in [0, 1]")
        if self.provenance not in ("unit", "risk_based", "scaled", "truncated_e"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.provenance == "unit" and not np.all(a == 1.0):
            raise ValueError("unit weights must all equal 1")
        a.setflags(write=False)
        object.__setattr__(self, "alphas", a)

    @classmethod
    def unit(cls, n: int) -> "WeightVector":
        return cls(np.ones(n), "unit")

    def __len__(self):
        return self.alphas.size


@dataclass(frozen=True)
class PrivacySpec:
    epsilon: float
    c1: float = 1.0
    c2: float = 0.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon!r}")
        if not 0.0 < self.c1 <= 1.0:
            raise ValueError(f"c1 must lie in (0, 1], got {self.c1!r}")
        if not math.isfinite(self.c2):
            raise ValueError("c2 must be finite")

    @property
    def M(self) -> float:
        return self.epsilon / 2.0


@dataclass(frozen=True)
class LipschitzSummary:
    per_record_max: np.ndarray
    delta_local: float
    epsilon_implied: float
    n_censored: int
    censored_per_draw: float = 0.0

    def to_dict(self) -> dict:
        return {
            "delta_local": self.delta_local,
            "epsilon_implied": self.epsilon_implied,
            "n_censored": self.n_censored,
            "censored_per_draw_mean": self.censored_per_draw,
        }


def weight_summary(alphas) -> dict:
    a = np.asarray(alphas, dtype=float)
    q1, med, q3 = np.quantile(a, [0.25, 0.5, 0.75])
    return {
        "min": float(a.min()),
        "q1": float(q1),
        "median": float(med),
        "mean": float(a.mean()),
        "q3": float(q3),
        "max": float(a.max()),
        "sd": float(a.std(ddof=1)) if a.size > 1 else 0.0,
    }


def compute_weights(draws: PosteriorDraws, rule: str = "linear") -> WeightVector:
    """Risk-based record weights from an unweighted fit.

    The risk of record ``i`` is ``L_i = max_s |loglik[s, i]|``, the largest
    absolute log-likelihood over retained draws.  Records with a non-finite
    contribution at any draw get weight 0.

    ``rule="linear"`` maps risk linearly onto [0, 1]:
    ``alpha_i = 1 - (L_i - min L) / (max L - min L)``, so the safest record
    keeps full weight and the riskiest gets 0.  ``rule="inverse"`` uses
    ``alpha_i = min(1, min L / L_i)``.
    """
    if draws.target_kind != "unweighted":
        raise ValueError(f"weights must come from an unweighted fit, got {draws.target_kind!r}")
    if rule not in WEIGHT_RULES:
        raise ValueError(f"unknown weight rule {rule!r}")
    ll = draws.per_record_loglik
    if ll.shape[0] == 0:
        raise ValueError("no retained draws")
    finite = np.all(np.isfinite(ll), axis=0)
    risk = np.max(np.abs(np.where(np.isfinite(ll), ll, 0.0)), axis=0)
    alphas = np.zeros(ll.shape[1])
    if finite.any():
        r = risk[finite]
        lo, hi = r.min(), r.max()
        if rule == "linear":
            span = hi - lo
            alphas[finite] = 1.0 if span <= 1e-12 * max(hi, 1.0) else 1.0 - (r - lo) / span
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                alphas[finite] = np.where(r > 0, np.minimum(1.0, lo / r), 1.0)
    return WeightVector(np.clip(alphas, 0.0, 1.0), "risk_based")


def scale_weights(w: WeightVector, spec: PrivacySpec) -> WeightVector:
    """``clip(c1 * alpha + c2, 0, 1)``; warns when clipping was needed."""
    raw = spec.c1 * w.alphas + spec.c2
    scaled = np.clip(raw, 0.0, 1.0)
    n_clipped = int(np.count_nonzero(scaled != raw))
    if n_clipped:
        warnings.warn(f"{n_clipped} scaled weights clipped into [0, 1]", stacklevel=2)
    return WeightVector(scaled, "scaled")


def truncate_weights_e(w: WeightVector, draws: PosteriorDraws, spec: PrivacySpec):
    """Zero the weight of records whose weighted contribution can exceed ``epsilon / 2``.

    Returns ``(new_weights, n_truncated)`` where the count covers records
    that had a positive weight before truncation.
    """
    if len(w) != draws.per_record_loglik.shape[1]:
        raise ValueError("weight vector does not match the fitted records")
    with np.errstate(invalid="ignore"):
        contrib = np.abs(w.alphas[None, :] * draws.per_record_loglik)
    contrib = np.where(np.isnan(contrib), np.inf, contrib)
    # zero weights never contribute, even against a non-finite log-likelihood
    exposure = np.where(w.alphas == 0.0, 0.0, contrib.max(axis=0))
    hit = exposure > spec.M
    alphas = np.where(hit, 0.0, w.alphas)
    return WeightVector(alphas, "truncated_e"), int(np.count_nonzero(hit))


def lipschitz_summary(draws: PosteriorDraws, weights=None) -> LipschitzSummary:
    """Empirical local Lipschitz bound of a fitted (pseudo/censored) posterior.

    ``per_record_max[i] = max_s |c_i(theta_s)|`` where ``c_i`` is the weighted
    contribution, clamped when the fit was censored.
    """
    alphas = draws.weights if weights is None else np.asarray(getattr(weights, "alphas", weights), dtype=float)
    ll = draws.per_record_loglik
    if alphas.shape != (ll.shape[1],):
        raise ValueError(f"{alphas.size} weights for {ll.shape[1]} records")
    _, contrib, flags = censor_loglik(ll, alphas[None, :], draws.M)
    per_record = np.max(np.abs(contrib), axis=0) if ll.shape[0] else np.zeros(ll.shape[1])
    delta = float(per_record.max()) if per_record.size else 0.0
    return LipschitzSummary(
        per_record_max=per_record,
        delta_local=delta,
        epsilon_implied=2.0 * delta,
        n_censored=int(np.count_nonzero(flags.any(axis=0))),
        censored_per_draw=float(flags.sum(axis=1).mean()) if ll.shape[0] else 0.0,
    )


def laplace_noise(scale: float, size, rng) -> np.ndarray:
    """Laplace(0, scale) by inverse CDF of uniform draws.

    ``scale=0`` returns exact zeros (the noiseless limit).
    """
    rng = np.random.default_rng(rng)
    u = rng.random(size) - 0.5
    if scale == 0:
        return np.zeros_like(u)
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def default_bins(n: int) -> int:
    return max(1, int(round(math.log(n)))) if n > 1 else 1


def perturbed_histogram(data, epsilon: float, L: float = 1.0, m: int | None = None, rng=None,
                        return_info: bool = False):
    """Synthetic microdata from a Laplace-perturbed histogram on ``[0, L]``.

    Counts in ``m`` equal-width bins receive Laplace(0, 2/epsilon) noise, are
    floored at zero and normalized; each output record picks a bin from those
    probabilities and a uniform position inside it.  ``epsilon=inf`` disables
    the noise.
    """
    x = np.asarray(data, dtype=float).ravel()
    n = x.size
    if n == 0:
        raise ValueError("dataset is empty")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not L > 0:
        raise ValueError("histogram range must be positive")
    if np.any((x < 0) | (x > L)):
        raise ValueError(f"records fall outside the declared range [0, {L}]")
    m = default_bins(n) if m is None else int(m)
    if m < 1:
        raise ValueError("bin count must be >= 1")
    rng = np.random.default_rng(rng)

    width = L / m
    idx = np.minimum((x / width).astype(int), m - 1)
    counts = np.bincount(idx, minlength=m).astype(float)
    noise = laplace_noise(2.0 / epsilon if math.isfinite(epsilon) else 0.0, m, rng)
    noisy = np.maximum(counts + noise, 0.0)
    total = noisy.sum()
    fallback = not total > 0
    if fallback:
        warnings.warn("all perturbed counts are zero; sampling bins uniformly", stacklevel=2)
        probs = np.full(m, 1.0 / m)
    else:
        probs = noisy / total
    bins = rng.choice(m, size=n, p=probs)
    synthetic = (bins + rng.random(n)) * width
    if return_info:
        info = {"bins": m, "range": L, "counts": counts, "noisy_counts": noisy,
                "probabilities": probs, "uniform_fallback": fallback}
        return synthetic, info
    return synthetic


@dataclass
class FitOutcome:
    draws: PosteriorDraws
    status: str
    attempts: int
    seed: int


@dataclass
class MechanismResult:
    kind: MechanismKind
    epsilon: float | None
    synthetic: np.ndarray
    lipschitz: LipschitzSummary | None
    audit: dict
    weights: WeightVector | None = None
    draws: PosteriorDraws | None = field(default=None, repr=False)

    @property
    def fit_status(self) -> str:
        return self.audit.get("fit_status", "ok")


class SynthesisPipeline:
    """Runs every mechanism on one confidential dataset, sharing fits.

    The unweighted fit and the weighted pseudo-posterior fit do not depend on
    epsilon, so they are computed at most once per pipeline; ``fit_counts``
    records how many fits each stage actually ran.

    Job seeds are ``derive_seed(*seed_key, mechanism, epsilon)`` so that a
    job's randomness depends only on its identity.
    """

    def __init__(self, data, config: McmcConfig | None = None, *, c1: float = 1.0, c2: float = 0.0,
                 seed_key=(0,), weight_rule: str = "linear", bins: int | None = None,
                 data_range: float = 1.0, strict: bool = True):
        if hasattr(data, "loglik_records_z"):
            self._model = data
            self.data = data.x
        else:
            self._model = None
            self.data = np.asarray(data, dtype=float).ravel()
            if self.data.size == 0:
                raise ValueError("dataset is empty")
        self.config = config or McmcConfig()
        self.c1, self.c2 = c1, c2
        PrivacySpec(1.0, c1, c2)  # validates the scaling constants
        self.seed_key = tuple(int(k) for k in seed_key)
        if weight_rule not in WEIGHT_RULES:
            raise ValueError(f"unknown weight rule {weight_rule!r}")
        self.weight_rule = weight_rule
        self.bins = bins
        self.data_range = data_range
        self.strict = strict
        self.fit_counts: Counter = Counter()
        self._unweighted = None
        self._weighted = None
        self._weights = None
        self._base_weights = None
        self._fits: dict = {}

    @property
    def model(self):
        """Beta synthesizer over the validated data, built on first use."""
        if self._model is None:
            x, _ = validate_data(self.data)
            self._model = BetaSynthesizer(x)
        return self._model

    @property
    def n(self) -> int:
        return self.data.size

    def job_seed(self, kind: MechanismKind, epsilon: float | None = None) -> int:
        eps = epsilon if (epsilon is not None and kind.uses_epsilon) else 0.0
        return derive_seed(*self.seed_key, kind.seed_id, epsilon_key(eps))

    def _fit(self, stage: str, seed: int, weights, M=None) -> FitOutcome:
        cfg = self.config.with_seed(derive_seed(seed, 0))
        self.fit_counts[stage] += 1
        try:
            return FitOutcome(fit(self.model, weights, M, cfg), "ok", 1, cfg.seed)
        except FitFailedError:
            pass
        retry = McmcConfig(n_warmup=2 * cfg.n_warmup, n_retain=cfg.n_retain, thin=cfg.thin,
                           adapt_target=cfg.adapt_target, seed=derive_seed(seed, 1),
                           n_chains=cfg.n_chains)
        self.fit_counts[stage] += 1
        try:
            return FitOutcome(fit(self.model, weights, M, retry), "retried", 2, retry.seed)
        except FitFailedError as err:
            if self.strict or err.draws is None:
                raise
            return FitOutcome(err.draws, "failed", 2, retry.seed)

    @property
    def unweighted(self) -> FitOutcome:
        if self._unweighted is None:
            self._unweighted = self._fit("unweighted", self.job_seed(MechanismKind.UNWEIGHTED), None)
        return self._unweighted

    @property
    def base_weights(self) -> WeightVector:
        if self._base_weights is None:
            self._base_weights = compute_weights(self.unweighted.draws, self.weight_rule)
        return self._base_weights

    @property
    def weights(self) -> WeightVector:
        if self._weights is None:
            self._weights = scale_weights(self.base_weights, PrivacySpec(1.0, self.c1, self.c2))
        return self._weights

    @property
    def weighted(self) -> FitOutcome:
        if self._weighted is None:
            self._weighted = self._fit("weighted", self.job_seed(MechanismKind.WEIGHTED),
                                       self.weights.alphas)
        return self._weighted

    def _synthesize(self, draws: PosteriorDraws, seed: int) -> tuple[np.ndarray, int]:
        rng = np.random.default_rng(derive_seed(seed, 2))
        pick = int(rng.integers(draws.n_draws))
        return self.model.synthesize(draws.draws[pick], rng), pick

    def run(self, kind, epsilon: float | None = None) -> MechanismResult:
        kind = MechanismKind.parse(kind)
        if kind.uses_epsilon and (epsilon is None or not epsilon > 0):
            raise ValueError(f"{kind.value} needs a positive epsilon")
        spec = PrivacySpec(epsilon if epsilon is not None else 1.0, self.c1, self.c2)
        seed = self.job_seed(kind, epsilon)
        audit = {
            "mechanism": kind.value,
            "epsilon": epsilon,
            "M": spec.M if kind.uses_epsilon else None,
            "c1": self.c1,
            "c2": self.c2,
            "seed": seed,
            "seed_key": list(self.seed_key),
            "n": self.n,
            "weight_rule": self.weight_rule,
            "truncation_count": 0,
            "censoring_count": 0,
        }

        if kind is MechanismKind.PERTURBED_HISTOGRAM:
            rng = np.random.default_rng(derive_seed(seed, 2))
            synthetic, info = perturbed_histogram(self.data, epsilon, self.data_range, self.bins,
                                                  rng, return_info=True)
            audit.update({
                "bins": info["bins"],
                "range": info["range"],
                "uniform_fallback": info["uniform_fallback"],
                "delta_local": None,
                "epsilon_implied": epsilon,
                "fit_status": "ok",
                "fits": [],
            })
            return MechanismResult(kind, epsilon, synthetic, None, audit)

        fits = []
        truncations = 0
        if kind is MechanismKind.UNWEIGHTED:
            outcome = self.unweighted
            weights = WeightVector.unit(self.n)
            fits.append(("unweighted", outcome))
        elif kind is MechanismKind.WEIGHTED:
            fits.append(("unweighted", self.unweighted))
            outcome = self.weighted
            weights = self.weights
            fits.append(("weighted", outcome))
        elif kind is MechanismKind.WEIGHTED_E:
            fits.append(("unweighted", self.unweighted))
            fits.append(("weighted", self.weighted))
            weights, truncations = truncate_weights_e(self.weights, self.weighted.draws, spec)
            outcome = self._fit("weighted-e", seed, weights.alphas)
            fits.append(("weighted-e", outcome))
        elif kind is MechanismKind.CENSOR_W:
            fits.append(("unweighted", self.unweighted))
            weights = self.weights
            outcome = self._fit("censor-w", seed, weights.alphas, spec.M)
            fits.append(("censor-w", outcome))
        else:
            weights = WeightVector.unit(self.n)
            outcome = self._fit("censor-uw", seed, None, spec.M)
            fits.append(("censor-uw", outcome))

        draws = outcome.draws
        summary = lipschitz_summary(draws, weights)
        synthetic, pick = self._synthesize(draws, seed)
        statuses = [o.status for _, o in fits]
        audit.update({
            "truncation_count": truncations,
            "censoring_count": summary.n_censored if draws.M is not None else 0,
            "censored_per_draw_mean": summary.censored_per_draw,
            "delta_local": summary.delta_local,
            "epsilon_implied": summary.epsilon_implied,
            "weights": weight_summary(weights.alphas),
            "weight_provenance": weights.provenance,
            "synthesis_draw_index": pick,
            "synthesis_params": dict(zip(draws.param_names, draws.draws[pick].tolist())),
            "fit_status": "failed" if "failed" in statuses else "ok",
            "fits": [
                {"stage": name, "status": o.status, "attempts": o.attempts, "seed": o.seed,
                 **o.draws.diagnostics, "posterior_mean": o.draws.mean()}
                for name, o in fits
            ],
        })
        return MechanismResult(kind, epsilon, synthetic, summary, audit, weights, draws)


def run_mechanism(kind, data, spec: PrivacySpec, config: McmcConfig | None = None, seed: int = 0,
                  **pipeline_kwargs) -> MechanismResult:
    """Run one mechanism end to end on a confidential dataset.

    Fit failures surviving the single retry propagate as
    :class:`~dpsynth.sampler.FitFailedError`.
    """
    pipeline = SynthesisPipeline(data, config, c1=spec.c1, c2=spec.c2, seed_key=(seed,),
                                 **pipeline_kwargs)
    kind = MechanismKind.parse(kind)
    return pipeline.run(kind, spec.epsilon if kind.uses_epsilon else None)
