"""Monte Carlo model-selection experiments: Poisson (M1) against geometric (M2).

Each run draws its data from its own stream ``PCG64(seed + run)``; results
are merged in run order whatever the worker count. A Bayes factor exactly
equal to 1 is never counted as an error.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from evidence.core import BayesModel, DegenerateIntegralError, UsageError, log_mean_exp, run_generator
from evidence.csv_output import Table
from evidence.eventlog import log_event
from evidence.objective import ClosedFormIntegrator, DataPartition, intrinsic_bf, model_evidence, subset_prior_evidence

from .counts import (
    PoissonModel,
    as_counts,
    geometric_bayes_model,
    geometric_log_evidence,
    poisson_bayes_model,
    poisson_log_evidence,
    sample_geometric,
    sample_poisson,
)

logger = logging.getLogger("discrete.experiments")

SWEEP_HEADER = ("param", "Dy", "min_bf", "max_bf", "errors", "runs", "seed")


class IbfMode(str, Enum):
    ONE_SIDED = "one_sided"
    SYMMETRIC = "symmetric"


class TrueModel(str, Enum):
    M1 = "m1"
    M2 = "m2"


@dataclass(frozen=True)
class SweepRow:
    param: float
    d_y: int
    min_bf: float
    max_bf: float
    errors: int
    runs: int
    seed: int

    def as_tuple(self) -> tuple:
        return (self.param, self.d_y, self.min_bf, self.max_bf, self.errors, self.runs, self.seed)


@dataclass
class SweepResult:
    rows: list[SweepRow] = field(default_factory=list)

    def to_table(self, filename: str) -> Table:
        return Table(filename, SWEEP_HEADER, [row.as_tuple() for row in self.rows])

    def errors(self, param: float, d_y: int) -> int:
        for row in self.rows:
            if row.param == param and row.d_y == d_y:
                return row.errors
        raise KeyError((param, d_y))


def _check_runs(n_runs: int) -> None:
    if n_runs < 1:
        raise UsageError(f"n_runs must be >= 1 (got {n_runs})")


def _map_runs(fn: Callable[[int], list[float]], n_runs: int, workers: int) -> np.ndarray:
    if workers <= 1 or n_runs == 1:
        per_run = [fn(r) for r in range(n_runs)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_run = list(pool.map(fn, range(n_runs)))
    return np.asarray(per_run, dtype=float)


def _row(param: float, d_y: int, log_bfs: np.ndarray, errors: int, seed: int) -> SweepRow:
    with np.errstate(over="ignore"):
        return SweepRow(
            param=param,
            d_y=d_y,
            min_bf=float(np.exp(log_bfs.min())),
            max_bf=float(np.exp(log_bfs.max())),
            errors=int(errors),
            runs=int(log_bfs.size),
            seed=int(seed),
        )


# -----------------------------------------------------------------------------
# Lindley sweeps
# -----------------------------------------------------------------------------


def log_bf12_bounded(data, upper: float) -> float:
    """log Z1(L) - log Z2 with the Poisson prior uniform on [0, L]."""
    return poisson_log_evidence(data, PoissonModel.uniform(upper)).log_z - geometric_log_evidence(data).log_z


def _lindley_log_bfs(theta_true: float, d_y: int, l_values: Sequence[float], n_runs: int, seed: int, workers: int) -> np.ndarray:
    def one_run(run: int) -> list[float]:
        data = sample_poisson(theta_true, run_generator(seed, run), size=d_y)
        return [log_bf12_bounded(data, upper) for upper in l_values]

    return _map_runs(one_run, n_runs, workers)


def lindley_sweep(
    theta_true: float,
    d_y: int,
    l_values: Sequence[float],
    n_runs: int,
    seed: int,
    *,
    workers: int = 1,
) -> SweepResult:
    """Error counts of BF12 < 1 on Poisson data as the prior bound L grows."""
    _check_runs(n_runs)
    if d_y < 1 or not l_values:
        raise UsageError("lindley_sweep needs D_y >= 1 and at least one L value")
    table = _lindley_log_bfs(theta_true, d_y, l_values, n_runs, seed, workers)
    result = SweepResult()
    for j, upper in enumerate(l_values):
        column = table[:, j]
        result.rows.append(_row(upper, d_y, column, np.sum(column < 0.0), seed))
    log_event(logger, "lindley.sweep", theta=theta_true, d_y=d_y, errors=[r.errors for r in result.rows])
    return result


def lindley_grid(
    theta_true: float,
    dy_values: Sequence[int],
    l_values: Sequence[float],
    n_runs: int,
    seed: int,
    *,
    workers: int = 1,
) -> SweepResult:
    """Lindley sweeps over every (D_y, L) pair, rows ordered by D_y then L."""
    result = SweepResult()
    for d_y in dy_values:
        result.rows.extend(lindley_sweep(theta_true, d_y, l_values, n_runs, seed, workers=workers).rows)
    return result


def errors_vs_dy(
    theta_true: float,
    dy_values: Sequence[int],
    upper: float,
    n_runs: int,
    seed: int,
    *,
    workers: int = 1,
) -> SweepResult:
    return lindley_grid(theta_true, dy_values, (upper,), n_runs, seed, workers=workers)


# -----------------------------------------------------------------------------
# Intrinsic Bayes factors
# -----------------------------------------------------------------------------


def log_ibf12(
    data,
    mode: IbfMode | str = IbfMode.ONE_SIDED,
    *,
    model1: Optional[BayesModel] = None,
    model2: Optional[BayesModel] = None,
) -> float:
    """log of the arithmetic intrinsic Bayes factor over single-datum training sets.

    one_sided trains only M1: mean_i [Z1(y) / Z1(y_i)] / Z2(y).
    symmetric trains both: mean_i [Z1(y) / Z1(y_i)] / [Z2(y) / Z2(y_i)].
    Defaults are the improper-flat Poisson (M1) and the uniform-prior geometric (M2).
    """
    mode = IbfMode(mode)
    y = as_counts(data)
    if y.size < 2:
        raise UsageError(f"IBF needs D_y >= 2 (got {y.size})")
    model1 = model1 or poisson_bayes_model(PoissonModel.improper())
    model2 = model2 or geometric_bayes_model()
    integrator = ClosedFormIntegrator()
    singletons = [(i,) for i in range(y.size)]

    if mode is IbfMode.SYMMETRIC:
        return intrinsic_bf(model1, model2, y, singletons, integrator).log_bf

    log_z2 = model_evidence(model2, y, integrator).log_z
    if log_z2 == -math.inf:
        raise DegenerateIntegralError(f"{model2.name} evidence is zero")
    summands = [
        subset_prior_evidence(model1, y, DataPartition.from_train(train, y.size), integrator, use_prior=True).log_z
        - log_z2
        for train in singletons
    ]
    return log_mean_exp(summands)


def ibf12(data, mode: IbfMode | str = IbfMode.ONE_SIDED, **models) -> float:
    return math.exp(log_ibf12(data, mode, **models))


def _simulate(true_model: TrueModel, param: float, rng: np.random.Generator, d_y: int) -> np.ndarray:
    if true_model is TrueModel.M1:
        return sample_poisson(param, rng, size=d_y)
    return sample_geometric(param, rng, size=d_y)


def ibf_experiment(
    true_model: TrueModel | str,
    true_param: float,
    d_y: int,
    n_runs: int,
    seed: int,
    mode: IbfMode | str = IbfMode.ONE_SIDED,
    *,
    workers: int = 1,
) -> SweepResult:
    """Per-run IBF12 with error counts: IBF12 < 1 under M1, IBF12 > 1 under M2."""
    true_model = TrueModel(true_model)
    mode = IbfMode(mode)
    _check_runs(n_runs)

    def one_run(run: int) -> list[float]:
        return [log_ibf12(_simulate(true_model, true_param, run_generator(seed, run), d_y), mode)]

    log_ibfs = _map_runs(one_run, n_runs, workers)[:, 0]
    errors = np.sum(log_ibfs < 0.0) if true_model is TrueModel.M1 else np.sum(log_ibfs > 0.0)
    log_event(
        logger,
        "ibf.experiment",
        true_model=true_model.value,
        param=true_param,
        d_y=d_y,
        mode=mode.value,
        errors=int(errors),
    )
    return SweepResult([_row(true_param, d_y, log_ibfs, errors, seed)])


# -----------------------------------------------------------------------------
# Command wiring
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class Exp3Config:
    theta_true: float = 2.0
    dy_values: tuple[int, ...] = (10, 30, 50, 100)
    l_values: tuple[float, ...] = (10.0, 100.0, 1e3, 1e4, 1e5, 1e6)
    l_fixed: float = 1e5
    n_runs: int = 100
    ibf_dy_values: tuple[int, ...] = (30, 100)
    ibf_m1_params: tuple[float, ...] = (2.0, 5.0)
    ibf_m2_params: tuple[float, ...] = (0.5, 0.8)

    def __post_init__(self) -> None:
        _check_runs(self.n_runs)
        if not self.dy_values or any(d < 1 for d in self.dy_values):
            raise UsageError(f"dy_values must be positive (got {self.dy_values})")
        if not self.l_values or any(not v > 0 for v in self.l_values) or not self.l_fixed > 0:
            raise UsageError("prior bounds L must be positive")
        if any(d < 2 for d in self.ibf_dy_values):
            raise UsageError(f"IBF needs D_y >= 2 (got {self.ibf_dy_values})")


def _ibf_table(true_model: TrueModel, params, config: Exp3Config, mode: IbfMode, seed: int, workers: int) -> SweepResult:
    result = SweepResult()
    for param in params:
        for d_y in config.ibf_dy_values:
            result.rows.extend(ibf_experiment(true_model, param, d_y, config.n_runs, seed, mode, workers=workers).rows)
    return result


def run_exp3(config: Exp3Config, seed: int, *, workers: int = 1) -> list[Table]:
    tables = [
        lindley_grid(config.theta_true, config.dy_values, config.l_values, config.n_runs, seed, workers=workers).to_table(
            "exp3_lindley.csv"
        ),
        errors_vs_dy(config.theta_true, config.dy_values, config.l_fixed, config.n_runs, seed, workers=workers).to_table(
            "exp3_errors_vs_dy.csv"
        ),
    ]
    for true_model, params in ((TrueModel.M1, config.ibf_m1_params), (TrueModel.M2, config.ibf_m2_params)):
        for mode in IbfMode:
            sweep = _ibf_table(true_model, params, config, mode, seed, workers)
            tables.append(sweep.to_table(f"exp3_ibf_{true_model.value}_{mode.value}.csv"))
    return tables
