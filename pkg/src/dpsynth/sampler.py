"""Adaptive random-walk Metropolis for plain, pseudo and censored posteriors.

The target on the unconstrained scale is

    log prior(z) + log|J(z)| + sum_i c_i(z)

where ``c_i`` is the raw log-likelihood of record ``i`` (unweighted), the
weighted contribution ``alpha_i * loglik_i`` (pseudo) or that contribution
clamped into ``[-M, M]`` (censored).

Warmup adapts a diagonal Gaussian proposal: per-coordinate scales follow the
running spread of the chain, and a global log step size follows a
Robbins-Monro recursion toward the target acceptance rate.  Both are frozen
once warmup ends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .model import BetaSynthesizer, censor_loglik

__all__ = [
    "McmcConfig",
    "PosteriorDraws",
    "FitFailedError",
    "fit",
    "map_point",
    "split_rhat",
    "autocorr_time",
]

RHAT_MAX = 1.05
MIN_ACCEPTANCE = 0.05


@dataclass(frozen=True)
class McmcConfig:
    n_warmup: int = 5000
    n_retain: int = 5000
    thin: int = 1
    adapt_target: float = 0.234
    seed: int = 0
    n_chains: int = 2

    def __post_init__(self):
        if self.n_warmup < 1 or self.n_retain < 1:
            raise ValueError("n_warmup and n_retain must be positive")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if not 0.1 < self.adapt_target < 0.6:
            raise ValueError("adapt_target must lie in (0.1, 0.6)")
        if self.n_chains < 1:
            raise ValueError("n_chains must be >= 1")

    def with_seed(self, seed: int) -> "McmcConfig":
        return replace(self, seed=int(seed))


class FitFailedError(RuntimeError):
    """Raised when convergence diagnostics reject a fit.

    The offending :class:`PosteriorDraws` is kept on ``.draws``.
    """

    def __init__(self, message, draws=None):
        super().__init__(message)
        self.draws = draws


@dataclass
class PosteriorDraws:
    draws: np.ndarray
    per_record_loglik: np.ndarray
    target_kind: str
    log_target: np.ndarray
    param_names: tuple
    weights: np.ndarray
    M: float | None
    acceptance_rate: float
    rhat: dict = field(default_factory=dict)
    chain_ids: np.ndarray | None = None
    model: object = field(default=None, repr=False)

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]

    @property
    def diagnostics(self) -> dict:
        return {
            "acceptance_rate": self.acceptance_rate,
            "rhat": dict(self.rhat),
            "n_draws": self.n_draws,
            "target_kind": self.target_kind,
        }

    def contributions(self):
        """``(weighted, censored, was_censored)`` matrices for these draws."""
        return censor_loglik(self.per_record_loglik, self.weights[None, :], self.M)

    def mean(self) -> dict:
        return dict(zip(self.param_names, self.draws.mean(axis=0).tolist()))


def split_rhat(chains: np.ndarray) -> np.ndarray:
    """Split-chain potential scale reduction, one value per parameter.

    ``chains`` has shape ``(n_chains, n_iter, p)``.
    """
    chains = np.asarray(chains, dtype=float)
    if chains.ndim == 2:
        chains = chains[:, :, None]
    n_iter = chains.shape[1]
    half = n_iter // 2
    if half < 2:
        return np.full(chains.shape[2], np.nan)
    split = np.concatenate([chains[:, :half], chains[:, n_iter - half:]], axis=0)
    m, n = split.shape[0], split.shape[1]
    chain_means = split.mean(axis=1)
    chain_vars = split.var(axis=1, ddof=1)
    W = chain_vars.mean(axis=0)
    B = n * chain_means.var(axis=0, ddof=1)
    var_hat = (n - 1) / n * W + B / n
    with np.errstate(divide="ignore", invalid="ignore"):
        rhat = np.sqrt(var_hat / W)
    # Constant chains: identical means give perfect agreement.
    rhat = np.where((W == 0) & (B == 0), 1.0, rhat)
    return rhat


def autocorr_time(x, cutoff: float = 0.05) -> float:
    """Integrated autocorrelation time of a 1-D chain.

    Lags are summed until the autocorrelation first drops below ``cutoff``.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    x = x - x.mean()
    if n < 2 or not np.any(x):
        return 1.0
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n]
    acf /= acf[0]
    below = np.flatnonzero(acf[1:] < cutoff)
    stop = below[0] + 1 if below.size else n
    return float(1.0 + 2.0 * acf[1:stop].sum())


def _chain_seed(seed: int, chain: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), chain]))


def _make_loglik(model, alpha, M):
    if M is None:
        sums = model.alpha_sums(alpha)
        return lambda z: model.weighted_sum_z(z, sums)

    active = alpha > 0
    a = alpha[active]

    def censored(z):
        ll = model.loglik_records_z(z)[active]
        ll *= a
        np.clip(ll, -M, M, out=ll)
        return float(ll.sum())

    return censored


def _run_chain(log_target, z0, cfg: McmcConfig, rng: np.random.Generator):
    p = z0.size
    n_total = cfg.n_warmup + cfg.n_retain * cfg.thin
    noise = rng.standard_normal((n_total, p))
    log_u = np.log(rng.random(n_total))

    z = z0.copy()
    lp = log_target(z)
    attempts = 0
    while not math.isfinite(lp) and attempts < 100:
        z = z0 + 0.1 * rng.standard_normal(p)
        lp = log_target(z)
        attempts += 1
    if not math.isfinite(lp):
        raise FitFailedError("could not find a finite starting point")

    scale = np.full(p, 0.1)
    log_step = math.log(2.38 / math.sqrt(p))
    # Welford accumulators for the coordinate spread during warmup.
    w_n, w_mean, w_m2 = 0, np.zeros(p), np.zeros(p)
    window = max(50, cfg.n_warmup // 10)
    target = cfg.adapt_target

    kept = np.empty((cfg.n_retain, p))
    kept_lp = np.empty(cfg.n_retain)
    n_accept = 0
    k = 0
    t_adapt = 0
    for t in range(n_total):
        step = math.exp(log_step)
        proposal = z + step * scale * noise[t]
        lp_new = log_target(proposal)
        log_ratio = lp_new - lp
        accepted = log_u[t] < log_ratio
        if accepted:
            z, lp = proposal, lp_new

        if t < cfg.n_warmup:
            accept_prob = 1.0 if log_ratio >= 0 else (math.exp(log_ratio) if log_ratio > -745 else 0.0)
            t_adapt += 1
            log_step += (accept_prob - target) / t_adapt**0.6
            w_n += 1
            delta = z - w_mean
            w_mean += delta / w_n
            w_m2 += delta * (z - w_mean)
            if w_n == window and t + 1 < cfg.n_warmup:
                sd = np.sqrt(w_m2 / (w_n - 1))
                scale = np.maximum(sd, 1e-6)
                log_step = math.log(2.38 / math.sqrt(p))
                t_adapt = 0
                w_n, w_mean, w_m2 = 0, np.zeros(p), np.zeros(p)
                window = min(2 * window, max(50, cfg.n_warmup - t - 1))
        else:
            n_accept += accepted
            j = t - cfg.n_warmup
            if (j + 1) % cfg.thin == 0:
                kept[k] = z
                kept_lp[k] = lp
                k += 1
    return kept, kept_lp, n_accept / (cfg.n_retain * cfg.thin)


def _as_model(data):
    if hasattr(data, "loglik_records_z"):
        return data
    return BetaSynthesizer(data)


def fit(data, weights=None, M: float | None = None, config: McmcConfig | None = None,
        *, check: bool = True) -> PosteriorDraws:
    """Sample the unweighted, pseudo or censored posterior.

    ``data`` is either a model object (see :mod:`dpsynth.model`) or an array
    of unit-interval records, which is wrapped in a beta synthesizer.
    ``weights=None`` means all ones.  Supplying ``M`` switches on censoring.

    Raises :class:`FitFailedError` when split R-hat exceeds 1.05 or the
    acceptance rate drops below 0.05 (unless ``check=False``).
    """
    model = _as_model(data)
    config = config or McmcConfig()
    n = model.n
    if weights is None:
        alpha = np.ones(n)
    else:
        alpha = np.asarray(weights, dtype=float).ravel()
        if alpha.size != n:
            raise ValueError(f"{alpha.size} weights for {n} records")
        if np.any((alpha < 0) | (alpha > 1)) or not np.all(np.isfinite(alpha)):
            raise ValueError("weights must lie in [0, 1]")
    if M is not None and not M > 0:
        raise ValueError(f"clamp bound must be positive, got {M!r}")

    if M is not None:
        kind = "censored"
    elif weights is None or np.all(alpha == 1.0):
        kind = "unweighted"
    else:
        kind = "pseudo"

    loglik = _make_loglik(model, alpha, M)
    log_prior = model.log_prior_z

    def log_target(z):
        if not np.all(np.isfinite(z)) or abs(z[-1]) > 700:
            return -math.inf
        try:
            val = log_prior(z) + loglik(z)
        except (OverflowError, ValueError):
            return -math.inf
        return val if math.isfinite(val) else -math.inf

    z0 = model.initial_point()
    chains, chain_lp, accept = [], [], []
    for c in range(config.n_chains):
        rng = _chain_seed(config.seed, c)
        start = z0 + 0.05 * rng.standard_normal(z0.size)
        kept, kept_lp, acc = _run_chain(log_target, start, config, rng)
        chains.append(kept)
        chain_lp.append(kept_lp)
        accept.append(acc)

    z_all = np.concatenate(chains, axis=0)
    theta = model.to_natural(z_all)
    natural_chains = np.stack([model.to_natural(c) for c in chains])
    rhat = split_rhat(natural_chains)

    draws = PosteriorDraws(
        draws=theta,
        per_record_loglik=model.loglik_matrix(theta),
        target_kind=kind,
        log_target=np.concatenate(chain_lp),
        param_names=tuple(model.param_names),
        weights=alpha,
        M=M,
        acceptance_rate=float(np.mean(accept)),
        rhat=dict(zip(model.param_names, rhat.tolist())),
        chain_ids=np.repeat(np.arange(config.n_chains), config.n_retain),
        model=model,
    )
    if check:
        bad = [k for k, v in draws.rhat.items() if not v <= RHAT_MAX]
        if bad:
            raise FitFailedError(f"R-hat above {RHAT_MAX} for {', '.join(bad)}: {draws.rhat}", draws)
        if draws.acceptance_rate < MIN_ACCEPTANCE:
            raise FitFailedError(f"acceptance rate collapsed to {draws.acceptance_rate:.3f}", draws)
        if not np.all(np.isfinite(draws.per_record_loglik[:, alpha > 0])):
            raise FitFailedError("non-finite log-likelihood among weighted records", draws)
    return draws


def map_point(draws: PosteriorDraws) -> np.ndarray:
    """Retained draw with the largest stored target density (first index on ties)."""
    if draws.n_draws == 0:
        raise ValueError("no retained draws")
    return draws.draws[int(np.argmax(draws.log_target))]
