"""Poisson and geometric count models: closed-form evidences and inversion samplers.

Poisson: l(y | theta) = theta^y e^-theta / y!, prior uniform on [0, L] or
improper flat on [0, inf). Geometric: l(y | phi) = phi (1 - phi)^y, prior
uniform on [0, 1].
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import betaln, gammainc, gammaincc, gammaln, xlog1py, xlogy

from evidence.core import (
    BayesModel,
    EvidenceError,
    EvidenceMethod,
    EvidenceResult,
    LikelihoodTerm,
    ParamSpace,
    UnsupportedIntegral,
    UsageError,
)

logger = logging.getLogger("discrete.counts")

# Grid window for the improper Poisson prior.
IMPROPER_WINDOW = 50.0

_SERIES_MAX_TERMS = 100000


class SimulationParameterError(EvidenceError):
    """Raised when a sampler parameter lies outside its support."""


def as_counts(data) -> np.ndarray:
    arr = np.asarray(data)
    counts = arr.astype(np.int64).ravel()
    if counts.size and (np.any(counts < 0) or np.any(counts != arr.ravel())):
        raise UsageError("count data must be nonnegative integers")
    return counts


# -----------------------------------------------------------------------------
# Special functions
# -----------------------------------------------------------------------------


def log_gammainc_lower(a: float, x: float) -> float:
    """log P(a, x), the regularized lower incomplete gamma function.

    Uses ``gammainc`` in its normal range, ``log1p(-Q)`` close to 1 and a
    log-space power series where ``gammainc`` underflows to zero.
    """
    if not a > 0:
        raise UsageError(f"incomplete gamma needs a > 0 (got {a})")
    if x <= 0:
        return -math.inf
    if math.isinf(x):
        return 0.0
    p = float(gammainc(a, x))
    if p > 0.5:
        return math.log1p(-float(gammaincc(a, x)))
    if p > 1e-300:
        return math.log(p)
    # P(a, x) = x^a e^-x / Gamma(a + 1) * sum_k x^k / ((a + 1) ... (a + k))
    total, term = 1.0, 1.0
    for k in range(1, _SERIES_MAX_TERMS):
        term *= x / (a + k)
        total += term
        if term < 1e-17 * total:
            break
    return a * math.log(x) - x - float(gammaln(a + 1.0)) + math.log(total)


# -----------------------------------------------------------------------------
# Models
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class PoissonModel:
    """Poisson rate model; ``upper=None`` means the improper flat prior."""

    upper: Optional[float] = None

    def __post_init__(self) -> None:
        if self.upper is not None and not self.upper > 0:
            raise UsageError(f"prior bound L must be positive (got {self.upper})")

    @classmethod
    def uniform(cls, upper: float) -> "PoissonModel":
        return cls(float(upper))

    @classmethod
    def improper(cls) -> "PoissonModel":
        return cls(None)

    @property
    def bounded(self) -> bool:
        return self.upper is not None

    def log_integral(self, terms: Sequence[LikelihoodTerm], *, with_prior: bool = False) -> float:
        """log of the integral over the prior support of prod_k l(y_k | theta)^a_k.

        With ``with_prior`` the bounded case includes the 1/L prior density;
        the improper kernel is 1.
        """
        shape = rate = log_fact = 0.0
        for term in terms:
            y = as_counts(term.data)
            shape += term.power * float(y.sum())
            rate += term.power * y.size
            log_fact += term.power * float(gammaln(y + 1.0).sum())

        prior = -math.log(self.upper) if (with_prior and self.bounded) else 0.0
        if rate == 0.0:
            if not self.bounded:
                raise UnsupportedIntegral("flat integral over [0, inf) diverges")
            return math.log(self.upper) + prior - log_fact
        value = float(gammaln(shape + 1.0)) - (shape + 1.0) * math.log(rate) - log_fact
        if self.bounded:
            value += log_gammainc_lower(shape + 1.0, rate * self.upper)
        return value + prior


@dataclass(frozen=True)
class GeometricModel:
    """Geometric model with the uniform prior on phi in [0, 1]."""

    def log_integral(self, terms: Sequence[LikelihoodTerm], *, with_prior: bool = False) -> float:
        successes = failures = 0.0
        for term in terms:
            y = as_counts(term.data)
            successes += term.power * y.size
            failures += term.power * float(y.sum())
        return float(betaln(successes + 1.0, failures + 1.0))


def poisson_log_likelihood(theta: np.ndarray, data) -> np.ndarray:
    y = as_counts(data)
    rate = np.asarray(theta, dtype=float)[:, 0]
    return xlogy(float(y.sum()), rate) - y.size * rate - float(gammaln(y + 1.0).sum())


def geometric_log_likelihood(phi: np.ndarray, data) -> np.ndarray:
    y = as_counts(data)
    p = np.asarray(phi, dtype=float)[:, 0]
    return xlogy(float(y.size), p) + xlog1py(float(y.sum()), -p)


def poisson_log_evidence(data, model: PoissonModel) -> EvidenceResult:
    """Closed-form log Z; for the improper prior this is the kernel-1 integral."""
    log_z = model.log_integral([LikelihoodTerm(data)], with_prior=True)
    return EvidenceResult(log_z=log_z, method=EvidenceMethod.CLOSED_FORM)


def geometric_log_evidence(data) -> EvidenceResult:
    y = as_counts(data)
    return EvidenceResult(
        log_z=float(betaln(y.size + 1.0, float(y.sum()) + 1.0)),
        method=EvidenceMethod.CLOSED_FORM,
    )


def poisson_bayes_model(model: PoissonModel, *, window_upper: float = IMPROPER_WINDOW) -> BayesModel:
    if model.bounded:
        upper = model.upper
        space = ParamSpace(lower=(0.0,), upper=(upper,), names=("theta",))
        log_density = -math.log(upper)
    else:
        upper = math.inf
        space = ParamSpace(
            lower=(0.0,),
            upper=(math.inf,),
            window_lower=(0.0,),
            window_upper=(float(window_upper),),
            tail_note=f"likelihood mass above theta={window_upper:g} ignored on grids",
            names=("theta",),
        )
        log_density = 0.0

    def log_prior(theta: np.ndarray) -> np.ndarray:
        t = np.asarray(theta, dtype=float)[:, 0]
        return np.where((t >= 0.0) & (t <= upper), log_density, -np.inf)

    return BayesModel(
        space=space,
        log_like=poisson_log_likelihood,
        log_prior=log_prior,
        prior_is_proper=model.bounded,
        prior_log_norm_known=model.bounded,
        take=lambda data, idx: as_counts(data)[np.asarray(list(idx), dtype=int)],
        closed_form=model,
        name=f"poisson(L={model.upper:g})" if model.bounded else "poisson(improper)",
    )


def geometric_bayes_model() -> BayesModel:
    def log_prior(phi: np.ndarray) -> np.ndarray:
        p = np.asarray(phi, dtype=float)[:, 0]
        return np.where((p >= 0.0) & (p <= 1.0), 0.0, -np.inf)

    return BayesModel(
        space=ParamSpace(lower=(0.0,), upper=(1.0,), names=("phi",)),
        log_like=geometric_log_likelihood,
        log_prior=log_prior,
        take=lambda data, idx: as_counts(data)[np.asarray(list(idx), dtype=int)],
        closed_form=GeometricModel(),
        name="geometric",
    )


# -----------------------------------------------------------------------------
# Samplers
# -----------------------------------------------------------------------------


def sample_poisson(theta: float, rng: np.random.Generator, size: Optional[int] = None):
    """Inversion sampling: smallest k with F(k) > u, searched in a cdf table."""
    theta = float(theta)
    if not (theta > 0 and math.isfinite(theta)):
        raise SimulationParameterError(f"Poisson rate must be positive and finite (got {theta})")
    k_max = int(math.ceil(theta + 40.0 * math.sqrt(theta) + 40.0))
    k = np.arange(k_max + 1)
    cdf = np.cumsum(np.exp(xlogy(k, theta) - theta - gammaln(k + 1.0)))
    u = rng.random(size)
    draws = np.minimum(np.searchsorted(cdf, u, side="right"), k_max)
    return int(draws) if size is None else draws.astype(np.int64)


def sample_geometric(phi: float, rng: np.random.Generator, size: Optional[int] = None):
    """Inversion sampling of the failures-before-success geometric law."""
    phi = float(phi)
    if not 0.0 < phi < 1.0:
        raise SimulationParameterError(f"geometric phi must lie in (0, 1) (got {phi})")
    u = rng.random(size)
    draws = np.floor(np.log1p(-u) / math.log1p(-phi))
    return int(draws) if size is None else draws.astype(np.int64)
