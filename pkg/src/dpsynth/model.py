"""Beta and beta-regression synthesizers.

Both models use the mean/precision parameterization: a record with mean
``mu`` and precision ``lam`` follows Beta(lam * mu, lam * (1 - mu)).  The
beta synthesizer has a single mean ``phi``; the regression variant maps a
linear predictor through the logistic function.

Priors follow the censoring synthesizer: ``phi ~ Beta(1, 1)`` and
``lam ~ Pareto(0.1, 1.5)``.  Regression coefficients get independent
Normal(0, 5^2) priors.

All likelihood arithmetic stays in log space.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, digamma, expit, logit

__all__ = [
    "LAMBDA_MIN",
    "PARETO_SHAPE",
    "COEF_PRIOR_SD",
    "BOUNDARY_EPS",
    "BetaParams",
    "BetaRegressionParams",
    "LikelihoodContribution",
    "beta_loglik",
    "beta_loglik_grad",
    "beta_regression_loglik",
    "censored_contribution",
    "censor_loglik",
    "log_prior",
    "regression_log_prior",
    "predictive_sample",
    "validate_data",
    "BetaSynthesizer",
    "BetaRegressionSynthesizer",
]

LAMBDA_MIN = 0.1
PARETO_SHAPE = 1.5
COEF_PRIOR_SD = 5.0
BOUNDARY_EPS = 1e-9

_LOG_PARETO_CONST = math.log(PARETO_SHAPE) + PARETO_SHAPE * math.log(LAMBDA_MIN)
_LOG_NORMAL_CONST = -0.5 * math.log(2 * math.pi) - math.log(COEF_PRIOR_SD)
_MU_LO = np.finfo(float).tiny
_MU_HI = 1.0 - np.finfo(float).epsneg
_LAMBDA_FLOOR = np.nextafter(LAMBDA_MIN, np.inf)


def _logistic_mean(eta):
    # expit saturates to exactly 0 or 1 in double precision; keep the mean interior
    return np.clip(expit(eta), _MU_LO, _MU_HI)


@dataclass(frozen=True)
class BetaParams:
    """Mean ``phi`` in (0, 1) and precision ``lam`` > 0.1."""

    phi: float
    lam: float

    def __post_init__(self):
        if not (0.0 < self.phi < 1.0):
            raise ValueError(f"phi must lie in (0, 1), got {self.phi!r}")
        if not (self.lam > LAMBDA_MIN) or not math.isfinite(self.lam):
            raise ValueError(f"lambda must be finite and > {LAMBDA_MIN}, got {self.lam!r}")

    @property
    def shapes(self) -> tuple[float, float]:
        return self.lam * self.phi, self.lam * (1.0 - self.phi)

    @classmethod
    def from_shapes(cls, a: float, b: float) -> "BetaParams":
        return cls(phi=a / (a + b), lam=a + b)

    def to_array(self) -> np.ndarray:
        return np.array([self.phi, self.lam])


@dataclass(frozen=True)
class BetaRegressionParams:
    """Logit-link coefficients (intercept first) and shared precision ``lam``."""

    coefficients: tuple[float, ...]
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if len(self.coefficients) < 1:
            raise ValueError("at least an intercept is required")
        if not all(math.isfinite(c) for c in self.coefficients):
            raise ValueError("coefficients must be finite")
        if not (self.lam > LAMBDA_MIN) or not math.isfinite(self.lam):
            raise ValueError(f"lambda must be finite and > {LAMBDA_MIN}, got {self.lam!r}")

    def mean(self, predictors) -> np.ndarray:
        X = _as_design(predictors, len(self.coefficients) - 1)
        coef = np.asarray(self.coefficients)
        return _logistic_mean(coef[0] + X @ coef[1:])

    def to_array(self) -> np.ndarray:
        return np.array([*self.coefficients, self.lam])


@dataclass(frozen=True)
class LikelihoodContribution:
    record_index: int
    raw_loglik: float
    weighted_loglik: float
    censored_loglik: float
    was_censored: bool


def _check_unit_interval(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.all((x > 0.0) & (x < 1.0)):
        raise ValueError("record values must lie strictly inside (0, 1)")
    return x


def _as_design(predictors, n_coef: int) -> np.ndarray:
    X = np.asarray(predictors, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1) if n_coef > 1 or X.size == n_coef else X.reshape(-1, 1)
    if X.shape[-1] != n_coef:
        raise ValueError(
            f"predictor row has {X.shape[-1]} columns but the model has {n_coef} slopes"
        )
    return X


def _beta_logpdf(x, a, b):
    return (a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x) - betaln(a, b)


def beta_loglik(x, params: BetaParams):
    """Log density of Beta(lam*phi, lam*(1-phi)) at ``x`` (scalar or array)."""
    x = _check_unit_interval(x)
    a, b = params.shapes
    out = _beta_logpdf(x, a, b)
    return float(out) if out.ndim == 0 else out


def beta_loglik_grad(x, params: BetaParams) -> np.ndarray:
    """Analytic gradient of :func:`beta_loglik` with respect to ``(phi, lam)``."""
    x = _check_unit_interval(x)
    a, b = params.shapes
    common = digamma(a + b)
    d_a = np.log(x) - digamma(a) + common
    d_b = np.log1p(-x) - digamma(b) + common
    return np.stack([params.lam * (d_a - d_b), params.phi * d_a + (1.0 - params.phi) * d_b], axis=-1)


def beta_regression_loglik(x, predictors, params: BetaRegressionParams):
    """Per-record log density under the logit-mean beta regression.

    ``predictors`` is one covariate row (for scalar ``x``) or an ``(n, k)``
    matrix aligned with an array ``x``.
    """
    x = _check_unit_interval(x)
    mu = params.mean(predictors)
    if x.ndim == 0:
        if mu.size != 1:
            raise ValueError("a scalar record needs exactly one covariate row")
        mu = mu[0]
    elif mu.shape != x.shape:
        raise ValueError(f"{mu.shape[0]} covariate rows for {x.shape[0]} records")
    out = _beta_logpdf(x, params.lam * mu, params.lam * (1.0 - mu))
    return float(out) if np.ndim(out) == 0 else out


def censor_loglik(raw, alpha, M: float | None):
    """Vectorized weighting and clamping of log-likelihood contributions.

    Returns ``(weighted, censored, was_censored)``.  With ``M=None`` nothing
    is clamped.  A zero weight always yields an exact zero contribution, even
    for a non-finite raw value.
    """
    raw = np.asarray(raw, dtype=float)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), raw.shape)
    with np.errstate(invalid="ignore"):
        weighted = np.where(alpha == 0.0, 0.0, alpha * raw)
    if M is None:
        return weighted, weighted.copy(), np.zeros(raw.shape, dtype=bool)
    if not M > 0:
        raise ValueError(f"clamp bound must be positive, got {M!r}")
    flags = np.abs(weighted) > M
    return weighted, np.clip(weighted, -M, M), flags


def censored_contribution(raw_loglik: float, alpha_i: float, M: float, record_index: int = 0):
    if not 0.0 <= alpha_i <= 1.0:
        raise ValueError(f"weight must lie in [0, 1], got {alpha_i!r}")
    weighted, censored, flag = censor_loglik(raw_loglik, alpha_i, M)
    return LikelihoodContribution(
        record_index=record_index,
        raw_loglik=float(raw_loglik),
        weighted_loglik=float(weighted),
        censored_loglik=float(censored),
        was_censored=bool(flag),
    )


def _log_pareto(lam):
    lam = np.asarray(lam, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(lam >= LAMBDA_MIN, _LOG_PARETO_CONST - (PARETO_SHAPE + 1) * np.log(lam), -np.inf)
    return out


def log_prior(params) -> float:
    """Log prior density; ``-inf`` outside the support.

    Accepts a :class:`BetaParams`, a :class:`BetaRegressionParams` or a raw
    ``(phi, lam)`` pair (which is allowed to sit outside the support).
    """
    if isinstance(params, BetaRegressionParams):
        return regression_log_prior(np.asarray(params.coefficients), params.lam)
    if isinstance(params, BetaParams):
        phi, lam = params.phi, params.lam
    else:
        phi, lam = params
    if not (0.0 < phi < 1.0) or not lam >= LAMBDA_MIN:
        return -math.inf
    return float(_log_pareto(lam))


def regression_log_prior(coefficients, lam) -> float:
    if not lam >= LAMBDA_MIN:
        return -math.inf
    coef = np.asarray(coefficients, dtype=float)
    normal = coef.size * _LOG_NORMAL_CONST - 0.5 * float(np.sum((coef / COEF_PRIOR_SD) ** 2))
    return normal + float(_log_pareto(lam))


def predictive_sample(params, n: int | None = None, rng=None, predictors=None) -> np.ndarray:
    """Draw a synthetic dataset of independent Beta records.

    For a regression ``params`` the predictor matrix fixes both the
    record-specific means and ``n``.  Draws are floored/capped into the open
    interval so every returned value is strictly inside (0, 1).
    """
    rng = np.random.default_rng(rng)
    if isinstance(params, BetaRegressionParams):
        if predictors is None:
            raise ValueError("beta regression synthesis needs a predictor matrix")
        mu = params.mean(predictors)
        if n is not None and n != mu.shape[0]:
            raise ValueError(f"predictor matrix has {mu.shape[0]} rows, expected {n}")
        a, b = params.lam * mu, params.lam * (1.0 - mu)
    elif isinstance(params, BetaParams):
        if n is None or n < 0:
            raise ValueError("n must be a non-negative count")
        a, b = params.shapes
        a, b = np.full(n, a), np.full(n, b)
    else:
        raise TypeError(f"unsupported parameter type {type(params).__name__}")
    out = rng.beta(a, b)
    return np.clip(out, BOUNDARY_EPS, 1.0 - BOUNDARY_EPS)


def validate_data(x, *, eps: float = BOUNDARY_EPS) -> tuple[np.ndarray, int]:
    """Clamp records into ``[eps, 1 - eps]``; returns the data and the clamp count.

    Values outside [0, 1] or non-finite values are rejected outright.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("dataset is empty")
    if not np.all(np.isfinite(x)):
        raise ValueError("dataset contains non-finite values")
    if np.any((x < 0.0) | (x > 1.0)):
        raise ValueError("record values must lie in [0, 1]")
    out = np.clip(x, eps, 1.0 - eps)
    n_clamped = int(np.count_nonzero(out != x))
    if n_clamped:
        warnings.warn(f"{n_clamped} boundary records clamped into [{eps}, 1 - {eps}]", stacklevel=2)
    return out, n_clamped


class BetaSynthesizer:
    """Beta model bound to a dataset, in the form the sampler consumes.

    The sampler works on the unconstrained vector
    ``z = (logit(phi), log(lam - 0.1))``.
    """

    param_names = ("phi", "lambda")

    def __init__(self, x):
        self.x = _check_unit_interval(np.asarray(x, dtype=float).ravel())
        self.n = self.x.size
        self.n_params = 2
        self._logx = np.log(self.x)
        self._log1mx = np.log1p(-self.x)
        self._sum_logx = float(self._logx.sum())
        self._sum_log1mx = float(self._log1mx.sum())

    # -- transforms -----------------------------------------------------
    def to_natural(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        phi = np.clip(expit(z[..., 0]), _MU_LO, _MU_HI)
        lam = np.maximum(LAMBDA_MIN + np.exp(z[..., 1]), _LAMBDA_FLOOR)
        return np.stack([phi, lam], axis=-1)

    def to_unconstrained(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return np.stack([logit(theta[..., 0]), np.log(theta[..., 1] - LAMBDA_MIN)], axis=-1)

    def log_prior_z(self, z) -> float:
        """Log prior on the unconstrained scale, Jacobian included."""
        z0, z1 = float(z[0]), float(z[1])
        lam = LAMBDA_MIN + math.exp(z1)
        # log phi + log(1 - phi) from the logistic transform
        log_jac_phi = -abs(z0) - 2.0 * math.log1p(math.exp(-abs(z0)))
        return _LOG_PARETO_CONST - (PARETO_SHAPE + 1) * math.log(lam) + log_jac_phi + z1

    def initial_point(self) -> np.ndarray:
        m = float(np.mean(self.x))
        v = float(np.var(self.x))
        lam = m * (1 - m) / v - 1.0 if v > 0 else 10.0
        lam = min(max(lam, 2 * LAMBDA_MIN), 1e4)
        m = min(max(m, 1e-3), 1 - 1e-3)
        return self.to_unconstrained(np.array([m, lam]))

    def params(self, theta) -> BetaParams:
        return BetaParams(phi=float(theta[0]), lam=float(theta[1]))

    # -- likelihood -----------------------------------------------------
    def _shapes(self, z):
        phi = 1.0 / (1.0 + math.exp(-z[0]))
        lam = LAMBDA_MIN + math.exp(z[1])
        return lam * phi, lam * (1.0 - phi)

    def loglik_records_z(self, z) -> np.ndarray:
        a, b = self._shapes(z)
        out = (a - 1.0) * self._logx
        out += (b - 1.0) * self._log1mx
        out -= math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
        return out

    def weighted_sum_z(self, z, alpha_sums) -> float:
        """Fast uncensored weighted log-likelihood via sufficient statistics."""
        a, b = self._shapes(z)
        s_w, s_lx, s_l1x = alpha_sums
        return (a - 1.0) * s_lx + (b - 1.0) * s_l1x - s_w * (
            math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
        )

    def alpha_sums(self, alpha) -> tuple[float, float, float]:
        alpha = np.asarray(alpha, dtype=float)
        return float(alpha.sum()), float(alpha @ self._logx), float(alpha @ self._log1mx)

    def loglik_matrix(self, theta) -> np.ndarray:
        """Raw log-likelihood of every record at every draw, shape ``(S, n)``."""
        theta = np.atleast_2d(theta)
        a = (theta[:, 1] * theta[:, 0])[:, None]
        b = (theta[:, 1] * (1.0 - theta[:, 0]))[:, None]
        return (a - 1.0) * self._logx + (b - 1.0) * self._log1mx - betaln(a, b)

    def synthesize(self, theta, rng) -> np.ndarray:
        return predictive_sample(self.params(theta), self.n, rng)


class BetaRegressionSynthesizer:
    """Logit-mean beta regression bound to outcomes and a predictor matrix.

    Unconstrained vector: ``(coef_0, ..., coef_k, log(lam - 0.1))``.
    """

    def __init__(self, x, predictors, predictor_names=None):
        self.x = _check_unit_interval(np.asarray(x, dtype=float).ravel())
        X = np.asarray(predictors, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.shape[0] != self.x.size:
            raise ValueError(f"{X.shape[0]} predictor rows for {self.x.size} records")
        self.X = X
        self.n = self.x.size
        self.k = X.shape[1]
        self.n_params = self.k + 2
        self._design = np.column_stack([np.ones(self.n), X])
        self._logx = np.log(self.x)
        self._log1mx = np.log1p(-self.x)
        names = list(predictor_names) if predictor_names is not None else [f"x{j + 1}" for j in range(self.k)]
        self.param_names = ("intercept", *names, "lambda")

    def to_natural(self, z) -> np.ndarray:
        z = np.array(z, dtype=float)
        z[..., -1] = np.maximum(LAMBDA_MIN + np.exp(z[..., -1]), _LAMBDA_FLOOR)
        return z

    def to_unconstrained(self, theta) -> np.ndarray:
        theta = np.array(theta, dtype=float)
        theta[..., -1] = np.log(theta[..., -1] - LAMBDA_MIN)
        return theta

    def log_prior_z(self, z) -> float:
        coef = np.asarray(z[:-1])
        lam = LAMBDA_MIN + math.exp(z[-1])
        normal = coef.size * _LOG_NORMAL_CONST - 0.5 * float(coef @ coef) / COEF_PRIOR_SD**2
        return normal + _LOG_PARETO_CONST - (PARETO_SHAPE + 1) * math.log(lam) + float(z[-1])

    def initial_point(self) -> np.ndarray:
        m = float(np.mean(self.x))
        v = float(np.var(self.x))
        lam = m * (1 - m) / v - 1.0 if v > 0 else 10.0
        lam = min(max(lam, 2 * LAMBDA_MIN), 1e4)
        m = min(max(m, 1e-3), 1 - 1e-3)
        z = np.zeros(self.n_params)
        z[0] = math.log(m / (1 - m))
        z[-1] = math.log(lam - LAMBDA_MIN)
        return z

    def params(self, theta) -> BetaRegressionParams:
        return BetaRegressionParams(coefficients=tuple(theta[:-1]), lam=float(theta[-1]))

    def loglik_records_z(self, z) -> np.ndarray:
        lam = LAMBDA_MIN + math.exp(z[-1])
        mu = _logistic_mean(self._design @ z[:-1])
        a = lam * mu
        b = lam - a
        return (a - 1.0) * self._logx + (b - 1.0) * self._log1mx - betaln(a, b)

    def weighted_sum_z(self, z, alpha) -> float:
        return float(alpha @ self.loglik_records_z(z))

    def alpha_sums(self, alpha):
        return np.asarray(alpha, dtype=float)

    def loglik_matrix(self, theta) -> np.ndarray:
        theta = np.atleast_2d(theta)
        mu = _logistic_mean(theta[:, :-1] @ self._design.T)
        lam = theta[:, -1:]
        a = lam * mu
        b = lam * (1.0 - mu)
        return (a - 1.0) * self._logx + (b - 1.0) * self._log1mx - betaln(a, b)

    def synthesize(self, theta, rng) -> np.ndarray:
        return predictive_sample(self.params(theta), rng=rng, predictors=self.X)
