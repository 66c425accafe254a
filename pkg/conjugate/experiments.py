"""Prior-sensitivity sweeps for the Gaussian-mean and linear-regression models."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from evidence.core import UsageError, log_mean_exp, run_generator
from evidence.csv_output import Table
from evidence.eventlog import log_event

from .gaussian import GaussianMeanModel, gaussian_mean_log_evidence, gaussian_mean_posterior, posterior_density_curves
from .regression import LinRegModel, linreg_log_evidence, prior_expected_r2, prior_expected_snr

logger = logging.getLogger("conjugate.experiments")


def _positive(name: str, values) -> None:
    if not values:
        raise UsageError(f"{name} must be nonempty")
    if any(not v > 0 for v in values):
        raise UsageError(f"{name} must be positive (got {values})")


# -----------------------------------------------------------------------------
# Gaussian mean
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class Exp1Config:
    y: tuple[float, ...] = (2.078,)
    mu0: float = 0.0
    sigma_like: float = 1.0
    sigma0_values: tuple[float, ...] = (3.0, 10.0, 100.0, 1000.0, 10000.0)
    theta_min: float = -10.0
    theta_max: float = 15.0
    theta_points: int = 501

    def __post_init__(self) -> None:
        if not self.y:
            raise UsageError("exp1 needs at least one observation")
        _positive("sigma0_values", self.sigma0_values)
        if self.theta_points < 2 or not self.theta_min < self.theta_max:
            raise UsageError("theta grid needs theta_min < theta_max and at least 2 points")


def z_vs_sigma0(config: Exp1Config) -> list[tuple]:
    """(sigma0, log_z, mu_post, sigma_post) per prior scale."""
    rows = []
    for sigma0 in config.sigma0_values:
        model = GaussianMeanModel(config.sigma_like, config.mu0, sigma0)
        mu_post, sd_post = gaussian_mean_posterior(model, config.y)
        rows.append((sigma0, gaussian_mean_log_evidence(model, config.y).log_z, mu_post, sd_post))
    return rows


def posterior_curves(config: Exp1Config) -> list[tuple]:
    theta = np.linspace(config.theta_min, config.theta_max, config.theta_points)
    rows = []
    for sigma0 in config.sigma0_values:
        model = GaussianMeanModel(config.sigma_like, config.mu0, sigma0)
        curves = posterior_density_curves(model, config.y, theta)
        rows.extend(
            (sigma0, t, p, l, q)
            for t, p, l, q in zip(theta, curves["prior"], curves["likelihood"], curves["posterior"])
        )
    return rows


def run_exp1(config: Exp1Config) -> list[Table]:
    return [
        Table("exp1_posteriors.csv", ("sigma0", "theta", "prior", "likelihood", "posterior"), posterior_curves(config)),
        Table("exp1_z_vs_sigma0.csv", ("sigma0", "log_z", "mu_post", "sigma_post"), z_vs_sigma0(config)),
    ]


# -----------------------------------------------------------------------------
# Linear regression: M0 intercept only against M1 intercept + slope
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class Exp2Config:
    n_data: int = 4
    x_min: float = 0.0
    x_max: float = 1.0
    beta0: float = 1.0
    beta1: float = 1.0
    sigma_like: float = 1.0
    # Observed responses; simulated from M1 with the run seed when empty.
    y: tuple[float, ...] = ()
    sigma1_fixed: float = 1.0
    sigma0_values: tuple[float, ...] = (0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0, 1e3, 1e4, 1e5, 1e6)
    sigma0_fixed: float = 1.0
    sigma1_values: tuple[float, ...] = (0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1e3, 3e3, 1e4, 1e5)
    sigma_values: tuple[float, ...] = (0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0)
    r2_samples: int = 20000
    n_runs: int = 100

    def __post_init__(self) -> None:
        if self.n_data < 2:
            raise UsageError(f"n_data must be >= 2 (got {self.n_data})")
        if self.y and len(self.y) != self.n_data:
            raise UsageError(f"{len(self.y)} responses for n_data={self.n_data}")
        for name in ("sigma0_values", "sigma1_values", "sigma_values"):
            _positive(name, getattr(self, name))
        _positive("sigma scales", (self.sigma_like, self.sigma0_fixed, self.sigma1_fixed))
        if self.r2_samples < 1 or self.n_runs < 1:
            raise UsageError("r2_samples and n_runs must be >= 1")

    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_data)


def designs(x) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float).ravel()
    ones = np.ones_like(x)
    return ones[:, None], np.column_stack([ones, x])


def simulate_regression(x, beta0: float, beta1: float, sigma_like: float, rng: np.random.Generator) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    return beta0 + beta1 * x + sigma_like * rng.standard_normal(x.size)


def _log_bf01(x, y, sigma_like: float, sigma0: float, sigma1: float) -> tuple[float, float, float]:
    d0, d1 = designs(x)
    z0 = linreg_log_evidence(LinRegModel(d0, sigma_like, prior_sd=(sigma0,)), y).log_z
    z1 = linreg_log_evidence(LinRegModel(d1, sigma_like, prior_sd=(sigma0, sigma1)), y).log_z
    return z0, z1, z0 - z1


def bf01_vs_sigma0(x, y, sigma_like: float, sigma0_values, sigma1: float) -> list[tuple]:
    """Shared intercept prior: (sigma0, log_z0, log_z1, log_bf01)."""
    return [(s0, *_log_bf01(x, y, sigma_like, s0, sigma1)) for s0 in sigma0_values]


def bf01_vs_sigma1(x, y, sigma_like: float, sigma1_values, sigma0: float) -> list[tuple]:
    """Slope prior only: (sigma1, log_z0, log_z1, log_bf01)."""
    return [(s1, *_log_bf01(x, y, sigma_like, sigma0, s1)) for s1 in sigma1_values]


def r2_vs_sigma(x, sigma_like: float, sigma_values, n_samples: int, seed: int) -> list[tuple]:
    """(sigma, r2_m0, r2_m1, snr_m0, snr_m1) with sigma0 = sigma1 = sigma.

    Every scale reuses the streams of ``seed`` so the curves are smooth in sigma.
    """
    d0, d1 = designs(x)
    rows = []
    for s in sigma_values:
        m0 = LinRegModel(d0, sigma_like, prior_sd=(s,))
        m1 = LinRegModel(d1, sigma_like, prior_sd=(s, s))
        rows.append(
            (
                s,
                prior_expected_r2(m0, n_samples, run_generator(seed, 0)),
                prior_expected_r2(m1, n_samples, run_generator(seed, 1)),
                prior_expected_snr(m0),
                prior_expected_snr(m1),
            )
        )
    return rows


def averaged_bf01_vs_sigma(
    x,
    beta0: float,
    beta1: float,
    sigma_like: float,
    sigma_values,
    n_runs: int,
    seed: int,
    *,
    workers: int = 1,
) -> list[tuple]:
    """BF01 against sigma0 = sigma1 = sigma, averaged over datasets simulated from M1.

    Rows are (sigma, mean_log_bf01, log_mean_bf01, correct, runs); ``correct``
    counts runs with BF01 < 1.
    """
    if n_runs < 1:
        raise UsageError(f"n_runs must be >= 1 (got {n_runs})")

    def one_run(run: int) -> list[float]:
        y = simulate_regression(x, beta0, beta1, sigma_like, run_generator(seed, run))
        return [_log_bf01(x, y, sigma_like, s, s)[2] for s in sigma_values]

    runs = range(n_runs)
    if workers <= 1:
        per_run = [one_run(r) for r in runs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_run = list(pool.map(one_run, runs))
    table = np.asarray(per_run)
    rows = []
    for j, s in enumerate(sigma_values):
        column = table[:, j]
        rows.append((s, float(column.mean()), log_mean_exp(column), int(np.sum(column < 0.0)), n_runs))
    return rows


def run_exp2(config: Exp2Config, seed: int, *, workers: int = 1) -> list[Table]:
    x = config.x()
    if config.y:
        y = np.asarray(config.y, dtype=float)
    else:
        y = simulate_regression(x, config.beta0, config.beta1, config.sigma_like, run_generator(seed, 0))
    header = ("log_z0", "log_z1", "log_bf01")
    sweep0 = bf01_vs_sigma0(x, y, config.sigma_like, config.sigma0_values, config.sigma1_fixed)
    sweep1 = bf01_vs_sigma1(x, y, config.sigma_like, config.sigma1_values, config.sigma0_fixed)
    r2 = r2_vs_sigma(x, config.sigma_like, config.sigma_values, config.r2_samples, seed)
    averaged = averaged_bf01_vs_sigma(
        x, config.beta0, config.beta1, config.sigma_like, config.sigma_values, config.n_runs, seed, workers=workers
    )
    log_event(
        logger,
        "exp2.sweeps",
        plateau_delta=abs(sweep0[-1][3] - sweep0[-2][3]) if len(sweep0) > 1 else 0.0,
        crossing=first_crossing(sweep1),
    )
    return [
        Table("exp2_data.csv", ("x", "y"), list(zip(x, y))),
        Table("exp2_bf01_vs_sigma0.csv", ("sigma0",) + header, sweep0),
        Table("exp2_bf01_vs_sigma1.csv", ("sigma1",) + header, sweep1),
        Table("exp2_r2_vs_sigma.csv", ("sigma", "r2_m0", "r2_m1", "snr_m0", "snr_m1"), r2),
        Table("exp2_bf01_vs_sigma_avg.csv", ("sigma", "mean_log_bf01", "log_mean_bf01", "correct", "runs"), averaged),
    ]


def first_crossing(rows: list[tuple]) -> Optional[float]:
    """Smallest swept scale where log BF01 turns positive."""
    for row in rows:
        if row[3] > 0:
            return row[0]
    return None
