"""Built-in model/dataset pairs reported by the ``criteria`` command.

Every case returns closed-form log evidences next to the exact maximum of
the log-likelihood, so the Occam factor and the information criteria are
computed from the same fit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.stats import norm

from conjugate.experiments import designs
from conjugate.gaussian import GaussianMeanModel, gaussian_mean_log_evidence
from conjugate.regression import LinRegModel, linreg_log_evidence
from discrete.counts import (
    PoissonModel,
    as_counts,
    geometric_log_evidence,
    geometric_log_likelihood,
    poisson_log_evidence,
    poisson_log_likelihood,
)

from .core import UsageError
from .criteria import CRITERIA_HEADER, CriteriaRow, criteria_row
from .csv_output import Table
from .eventlog import log_event

logger = logging.getLogger("evidence.cases")


class BuiltinCase(str, Enum):
    GAUSSIAN_MEAN = "gaussian_mean"
    LINREG = "linreg"
    POISSON_GEOMETRIC = "poisson_geometric"


@dataclass(frozen=True)
class CriteriaConfig:
    model: str = BuiltinCase.GAUSSIAN_MEAN.value
    sigma_like: float = 1.0
    mu0: float = 0.0
    sigma0_values: tuple[float, ...] = (0.3, 1.0, 3.0, 10.0, 100.0)
    # Responses for gaussian_mean and linreg; linreg spreads x evenly over [0, 1].
    y: tuple[float, ...] = (2.078, 1.512, 2.934, 1.786, 2.401)
    counts: tuple[int, ...] = (2, 0, 3, 1, 4, 2, 2, 1)
    poisson_upper: float = 10.0

    def __post_init__(self) -> None:
        BuiltinCase(self.model)
        if not self.sigma_like > 0 or not self.sigma0_values or any(not s > 0 for s in self.sigma0_values):
            raise UsageError("sigma_like and every sigma0 must be positive")
        if not self.y:
            raise UsageError("y must be nonempty")
        if not self.poisson_upper > 0:
            raise UsageError(f"poisson_upper must be positive (got {self.poisson_upper})")


def gaussian_mean_rows(config: CriteriaConfig) -> list[CriteriaRow]:
    """One row per prior sd; the MLE is the sample mean whatever sigma0."""
    y = np.asarray(config.y, dtype=float)
    log_like_max = float(norm.logpdf(y, y.mean(), config.sigma_like).sum())
    return [
        criteria_row(
            f"gaussian_mean(sigma0={sigma0:g})",
            gaussian_mean_log_evidence(GaussianMeanModel(config.sigma_like, config.mu0, sigma0), y).log_z,
            log_like_max,
            1,
            y.size,
        )
        for sigma0 in config.sigma0_values
    ]


def linreg_rows(config: CriteriaConfig) -> list[CriteriaRow]:
    """Intercept-only (M0) and straight-line (M1) fits with the same prior sd on every coefficient."""
    y = np.asarray(config.y, dtype=float)
    if y.size < 2:
        raise UsageError("linreg needs at least two responses")
    rows = []
    for label, design in zip(("m0", "m1"), designs(np.linspace(0.0, 1.0, y.size))):
        beta, *_ = np.linalg.lstsq(design, y, rcond=None)
        log_like_max = float(norm.logpdf(y, design @ beta, config.sigma_like).sum())
        d_theta = design.shape[1]
        for sigma0 in config.sigma0_values:
            model = LinRegModel(design, config.sigma_like, prior_sd=(sigma0,) * d_theta)
            rows.append(
                criteria_row(
                    f"linreg_{label}(sigma0={sigma0:g})",
                    linreg_log_evidence(model, y).log_z,
                    log_like_max,
                    d_theta,
                    y.size,
                )
            )
    return rows


def poisson_geometric_rows(config: CriteriaConfig) -> list[CriteriaRow]:
    y = as_counts(config.counts)
    if y.size == 0:
        raise UsageError("counts must be nonempty")
    mean = float(y.mean())
    if mean > config.poisson_upper:
        raise UsageError(f"sample mean {mean:g} lies outside the Poisson prior [0, {config.poisson_upper:g}]")
    poisson_max = float(poisson_log_likelihood(np.array([[mean]]), y)[0])
    geometric_max = float(geometric_log_likelihood(np.array([[1.0 / (1.0 + mean)]]), y)[0])
    return [
        criteria_row(
            f"poisson(L={config.poisson_upper:g})",
            poisson_log_evidence(y, PoissonModel.uniform(config.poisson_upper)).log_z,
            poisson_max,
            1,
            y.size,
        ),
        criteria_row("geometric", geometric_log_evidence(y).log_z, geometric_max, 1, y.size),
    ]


_CASES = {
    BuiltinCase.GAUSSIAN_MEAN: gaussian_mean_rows,
    BuiltinCase.LINREG: linreg_rows,
    BuiltinCase.POISSON_GEOMETRIC: poisson_geometric_rows,
}


def run_criteria(config: CriteriaConfig) -> list[Table]:
    case = BuiltinCase(config.model)
    rows = _CASES[case](config)
    log_event(logger, "criteria.report", case=case.value, rows=len(rows), min_occam=min(r.occam for r in rows))
    return [Table(f"criteria_{case.value}.csv", CRITERIA_HEADER, [tuple(r) for r in rows])]
