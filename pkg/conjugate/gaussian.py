"""Gaussian-mean model with known noise sd and a Normal(mu0, sigma0^2) prior."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm

from evidence.core import (
    BayesModel,
    EvidenceMethod,
    EvidenceResult,
    LikelihoodTerm,
    ParamSpace,
    UnsupportedIntegral,
    UsageError,
)

LOG_2PI = math.log(2.0 * math.pi)

# Prior mass beyond this many sds is below 1e-22.
WINDOW_SDS = 10.0


def _as_data(data) -> np.ndarray:
    y = np.asarray(data, dtype=float).ravel()
    if y.size == 0:
        raise UsageError("Gaussian-mean model needs at least one observation")
    return y


@dataclass(frozen=True)
class GaussianMeanModel:
    sigma_like: float
    mu0: float = 0.0
    sigma0: float = 1.0

    def __post_init__(self) -> None:
        if not self.sigma_like > 0:
            raise UsageError(f"sigma_like must be positive (got {self.sigma_like})")
        if not self.sigma0 > 0:
            raise UsageError(f"sigma0 must be positive (got {self.sigma0})")


def gaussian_mean_posterior(model: GaussianMeanModel, data) -> tuple[float, float]:
    """Posterior mean and sd: precision-weighted combination of prior and data."""
    y = _as_data(data)
    precision = 1.0 / model.sigma0**2 + y.size / model.sigma_like**2
    mu_post = (model.mu0 / model.sigma0**2 + y.size * float(y.mean()) / model.sigma_like**2) / precision
    return mu_post, 1.0 / math.sqrt(precision)


def gaussian_mean_log_evidence(model: GaussianMeanModel, data) -> EvidenceResult:
    """Closed-form log Z with sigma_n = sigma / sqrt(D_y) and the biased sample variance."""
    y = _as_data(data)
    n = y.size
    var_like = model.sigma_like**2
    var_n = var_like / n
    mean = float(y.mean())
    v_y = float(np.mean((y - mean) ** 2))
    spread = var_n + model.sigma0**2
    log_z = (
        -0.5 * n * (LOG_2PI + math.log(var_like))
        - n * v_y / (2.0 * var_like)
        + 0.5 * (LOG_2PI + math.log(var_n))
        - 0.5 * (LOG_2PI + math.log(spread))
        - (mean - model.mu0) ** 2 / (2.0 * spread)
    )
    return EvidenceResult(log_z=log_z, method=EvidenceMethod.CLOSED_FORM)


def log_likelihood(theta: np.ndarray, data, sigma_like: float) -> np.ndarray:
    """log l(y | theta) for nodes shaped (n, 1)."""
    y = _as_data(data)
    mu = np.asarray(theta, dtype=float)[:, 0]
    mean = float(y.mean())
    ss = float(np.sum((y - mean) ** 2)) + y.size * (mean - mu) ** 2
    return -0.5 * y.size * (LOG_2PI + 2.0 * math.log(sigma_like)) - ss / (2.0 * sigma_like**2)


class GaussianMeanIntegrals:
    """Exact integrals over the real line of products of powered Gaussian likelihoods.

    Every integrand is exp(-P/2 theta^2 + B theta + C); the optional prior
    factor is either the Normal prior or a flat kernel.
    """

    def __init__(self, sigma_like: float, mu0: float, sigma0: Optional[float]) -> None:
        self.sigma_like = sigma_like
        self.mu0 = mu0
        self.sigma0 = sigma0

    def log_integral(self, terms: Sequence[LikelihoodTerm], *, with_prior: bool = False) -> float:
        var = self.sigma_like**2
        p = b = c = 0.0
        for term in terms:
            y = _as_data(term.data)
            a = term.power
            p += a * y.size / var
            b += a * float(y.sum()) / var
            c += a * (-0.5 * y.size * (LOG_2PI + math.log(var)) - float(np.sum(y * y)) / (2.0 * var))
        if with_prior and self.sigma0 is not None:
            v0 = self.sigma0**2
            p += 1.0 / v0
            b += self.mu0 / v0
            c += -0.5 * (LOG_2PI + math.log(v0)) - self.mu0**2 / (2.0 * v0)
        if not p > 0:
            raise UnsupportedIntegral("flat integral over the real line diverges")
        return c + b * b / (2.0 * p) + 0.5 * (LOG_2PI - math.log(p))


def as_bayes_model(model: GaussianMeanModel, *, window_sds: float = WINDOW_SDS, name: str = "gaussian_mean") -> BayesModel:
    """Wrap the model for the generic evidence machinery.

    The grid window is mu0 +/- ``window_sds`` prior sds; closed-form
    integrals run over the whole real line.
    """
    half = window_sds * model.sigma0
    space = ParamSpace(
        lower=(-math.inf,),
        upper=(math.inf,),
        window_lower=(model.mu0 - half,),
        window_upper=(model.mu0 + half,),
        tail_note=f"prior mass outside mu0 +/- {window_sds:g} sd ignored",
        names=("mu",),
    )
    v0 = model.sigma0**2

    def log_prior(theta: np.ndarray) -> np.ndarray:
        mu = np.asarray(theta, dtype=float)[:, 0]
        return -0.5 * (LOG_2PI + math.log(v0)) - (mu - model.mu0) ** 2 / (2.0 * v0)

    return BayesModel(
        space=space,
        log_like=lambda theta, data: log_likelihood(theta, data, model.sigma_like),
        log_prior=log_prior,
        closed_form=GaussianMeanIntegrals(model.sigma_like, model.mu0, model.sigma0),
        name=name,
    )


def flat_bayes_model(sigma_like: float, window: tuple[float, float], *, name: str = "gaussian_mean_flat") -> BayesModel:
    """Gaussian-mean model under an improper flat prior (kernel 1)."""
    if not sigma_like > 0:
        raise UsageError(f"sigma_like must be positive (got {sigma_like})")
    space = ParamSpace(
        lower=(-math.inf,),
        upper=(math.inf,),
        window_lower=(window[0],),
        window_upper=(window[1],),
        tail_note="likelihood mass outside the window ignored",
        names=("mu",),
    )
    return BayesModel(
        space=space,
        log_like=lambda theta, data: log_likelihood(theta, data, sigma_like),
        log_prior=lambda theta: np.zeros(np.asarray(theta).shape[0]),
        prior_is_proper=False,
        prior_log_norm_known=False,
        closed_form=GaussianMeanIntegrals(sigma_like, 0.0, None),
        name=name,
    )


def posterior_density_curves(model: GaussianMeanModel, data, theta: np.ndarray) -> dict[str, np.ndarray]:
    """Prior, normalized likelihood and posterior densities on a theta grid."""
    y = _as_data(data)
    theta = np.asarray(theta, dtype=float)
    mu_post, sd_post = gaussian_mean_posterior(model, y)
    sd_n = model.sigma_like / math.sqrt(y.size)

    return {
        "prior": norm.pdf(theta, model.mu0, model.sigma0),
        "likelihood": norm.pdf(theta, float(y.mean()), sd_n),
        "posterior": norm.pdf(theta, mu_post, sd_post),
    }
