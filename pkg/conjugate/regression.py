"""Gaussian linear regression with known noise sd and a Gaussian coefficient prior.

Evidence is the density of y under the prior-predictive law
Normal(X m, sigma^2 I + X S0 X^T). It is evaluated through the
coefficient-space factorization (determinant lemma plus Woodbury), which
needs only D_theta x D_theta Cholesky factors and stays accurate when
some prior sds are many orders of magnitude above the noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.stats import multivariate_normal

from evidence.core import BayesModel, EvidenceError, EvidenceMethod, EvidenceResult, ParamSpace, UsageError

from .gaussian import LOG_2PI, GaussianMeanModel


class SingularCovarianceError(EvidenceError):
    """Raised when a covariance that must be positive definite is not (numerically)."""


@dataclass(frozen=True)
class GaussianPrior:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))


@dataclass(frozen=True, eq=False)
class LinRegModel:
    """y = X theta + noise, noise ~ Normal(0, sigma_like^2 I), theta ~ Normal(m, S0).

    ``prior_sd`` gives a diagonal S0; ``prior_cov`` a full one and wins when set.
    """

    design: np.ndarray
    sigma_like: float
    prior_sd: Optional[tuple[float, ...]] = None
    prior_mean: Optional[np.ndarray] = None
    prior_cov: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        x = np.atleast_2d(np.asarray(self.design, dtype=float))
        if x.shape[0] < 1 or x.shape[1] < 1:
            raise UsageError(f"design must be D_y x D_theta with both >= 1 (got {x.shape})")
        if not self.sigma_like > 0:
            raise UsageError(f"sigma_like must be positive (got {self.sigma_like})")
        d = x.shape[1]
        mean = np.zeros(d) if self.prior_mean is None else np.asarray(self.prior_mean, dtype=float).ravel()
        if mean.size != d:
            raise UsageError(f"prior mean has {mean.size} entries for {d} coefficients")
        if self.prior_cov is not None:
            cov = np.asarray(self.prior_cov, dtype=float)
            if cov.shape != (d, d):
                raise UsageError(f"prior covariance must be {d}x{d} (got {cov.shape})")
        elif self.prior_sd is not None:
            sd = tuple(float(s) for s in self.prior_sd)
            if len(sd) != d:
                raise UsageError(f"prior_sd has {len(sd)} entries for {d} coefficients")
            if any(s < 0 for s in sd):
                raise UsageError(f"prior sds must be nonnegative (got {sd})")
            object.__setattr__(self, "prior_sd", sd)
        else:
            raise UsageError("LinRegModel needs prior_sd or prior_cov")
        object.__setattr__(self, "design", x)
        object.__setattr__(self, "prior_mean", mean)

    @property
    def n_data(self) -> int:
        return self.design.shape[0]

    @property
    def n_coef(self) -> int:
        return self.design.shape[1]

    def covariance(self) -> np.ndarray:
        if self.prior_cov is not None:
            return np.asarray(self.prior_cov, dtype=float)
        return np.diag(np.square(self.prior_sd))

    def with_prior(self, prior: GaussianPrior) -> "LinRegModel":
        return replace(self, prior_sd=None, prior_mean=np.asarray(prior.mean, dtype=float), prior_cov=np.asarray(prior.cov))

    def with_sd(self, prior_sd) -> "LinRegModel":
        return replace(self, prior_sd=tuple(prior_sd), prior_cov=None)

    def scales(self) -> str:
        if self.prior_cov is None:
            return f"prior_sd={self.prior_sd}, sigma_like={self.sigma_like}"
        return f"prior_cov diag={tuple(np.diag(self.covariance()))}, sigma_like={self.sigma_like}"


def _cholesky(matrix: np.ndarray, what: str, model: LinRegModel):
    try:
        factor = cho_factor(matrix, lower=True)
    except LinAlgError as exc:
        raise SingularCovarianceError(f"{what} is singular for {model.scales()}") from exc
    diag = np.diag(factor[0])
    if not np.all(np.isfinite(diag)) or np.any(diag <= 0):
        raise SingularCovarianceError(f"{what} is singular for {model.scales()}")
    return factor


def linreg_log_evidence(model: LinRegModel, data) -> EvidenceResult:
    """log Normal(y; X m, sigma^2 I + X S0 X^T)."""
    y = np.asarray(data, dtype=float).ravel()
    if y.size != model.n_data:
        raise UsageError(f"{y.size} observations for a {model.n_data}-row design")
    x = model.design
    var = model.sigma_like**2
    resid = y - x @ model.prior_mean

    prior_chol = _cholesky(model.covariance(), "prior covariance", model)
    prior_precision = cho_solve(prior_chol, np.eye(model.n_coef))
    a = x.T @ x / var + prior_precision
    a_chol = _cholesky(a, "posterior precision", model)
    b = x.T @ resid / var

    log_det_prior = 2.0 * float(np.sum(np.log(np.diag(prior_chol[0]))))
    log_det_a = 2.0 * float(np.sum(np.log(np.diag(a_chol[0]))))
    quad = float(resid @ resid) / var - float(b @ cho_solve(a_chol, b))
    log_z = -0.5 * (y.size * (LOG_2PI + math.log(var)) + log_det_prior + log_det_a + quad)
    return EvidenceResult(log_z=log_z, method=EvidenceMethod.CLOSED_FORM)


def linreg_posterior(model: LinRegModel, data) -> GaussianPrior:
    y = np.asarray(data, dtype=float).ravel()
    x = model.design
    var = model.sigma_like**2
    prior_chol = _cholesky(model.covariance(), "prior covariance", model)
    prior_precision = cho_solve(prior_chol, np.eye(model.n_coef))
    a_chol = _cholesky(x.T @ x / var + prior_precision, "posterior precision", model)
    cov = cho_solve(a_chol, np.eye(model.n_coef))
    mean = cov @ (x.T @ y / var + prior_precision @ model.prior_mean)
    return GaussianPrior(mean=mean, cov=cov)


def prior_expected_snr(model: LinRegModel) -> float:
    """E[theta^T X^T X theta] / (D_y sigma_like^2) under the prior."""
    gram = model.design.T @ model.design
    m = model.prior_mean
    expected = float(np.trace(gram @ model.covariance())) + float(m @ gram @ m)
    return expected / (model.n_data * model.sigma_like**2)


def prior_expected_r2(
    model: LinRegModel,
    n_samples: int,
    seed: Union[int, np.random.Generator],
) -> float:
    """Monte Carlo mean of w / (1 + w), w the per-draw signal-to-noise ratio.

    Draws are ``m + L z`` with standard normal ``z``, so one seed reuses the
    same ``z`` across prior scales.
    """
    if n_samples < 1:
        raise UsageError(f"n_samples must be >= 1 (got {n_samples})")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.Generator(np.random.PCG64(seed))
    z = rng.standard_normal((int(n_samples), model.n_coef))
    cov = model.covariance()
    if np.count_nonzero(cov - np.diag(np.diag(cov))) == 0:
        root = np.diag(np.sqrt(np.diag(cov)))
    else:
        # Zero-variance directions have no Cholesky factor; eigh handles PSD.
        vals, vecs = np.linalg.eigh(cov)
        root = vecs * np.sqrt(np.clip(vals, 0.0, None))
    theta = model.prior_mean + z @ root.T
    signal = theta @ model.design.T
    w = np.sum(signal * signal, axis=1) / (model.n_data * model.sigma_like**2)
    r2 = w / (1.0 + w)
    return float(np.mean(r2))


def uip_prior(model: Union[LinRegModel, GaussianMeanModel], mu) -> GaussianPrior:
    """Unit-information prior: covariance equal to the inverse of one datum's Fisher information."""
    if isinstance(model, GaussianMeanModel):
        return GaussianPrior(mean=np.atleast_1d(np.asarray(mu, dtype=float)), cov=np.array([[model.sigma_like**2]]))
    if isinstance(model, LinRegModel):
        gram = model.design.T @ model.design
        chol = _cholesky(gram, "X^T X", model)
        cov = model.n_data * model.sigma_like**2 * cho_solve(chol, np.eye(model.n_coef))
        mean = np.broadcast_to(np.asarray(mu, dtype=float), (model.n_coef,)).copy()
        return GaussianPrior(mean=mean, cov=cov)
    raise UsageError(f"no unit-information prior for {type(model).__name__}")


def as_bayes_model(model: LinRegModel, *, window_sds: float = 10.0, name: str = "linreg") -> BayesModel:
    """Grid view of the regression: window prior mean +/- ``window_sds`` prior sds per coefficient."""
    cov = model.covariance()
    sd = np.sqrt(np.diag(cov))
    if np.any(sd <= 0):
        raise SingularCovarianceError(f"prior covariance is singular for {model.scales()}")
    m = model.prior_mean
    space = ParamSpace(
        lower=(-math.inf,) * model.n_coef,
        upper=(math.inf,) * model.n_coef,
        window_lower=tuple(m - window_sds * sd),
        window_upper=tuple(m + window_sds * sd),
        tail_note=f"prior mass outside +/- {window_sds:g} sd ignored",
        names=tuple(f"beta{j}" for j in range(model.n_coef)),
    )
    x = model.design
    var = model.sigma_like**2

    def log_like(theta: np.ndarray, data) -> np.ndarray:
        y = np.asarray(data, dtype=float).ravel()
        resid = y[None, :] - np.asarray(theta, dtype=float) @ x.T
        return -0.5 * y.size * (LOG_2PI + math.log(var)) - np.sum(resid * resid, axis=1) / (2.0 * var)

    def log_prior(theta: np.ndarray) -> np.ndarray:
        return np.atleast_1d(multivariate_normal.logpdf(np.asarray(theta, dtype=float), mean=m, cov=cov))

    return BayesModel(space=space, log_like=log_like, log_prior=log_prior, conditionally_independent=False, name=name)
