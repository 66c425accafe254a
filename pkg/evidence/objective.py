"""Objective-prior constructions built on likelihood integrals.

Every construction here reduces to ratios of integrals of powered
likelihoods, optionally times a prior or baseline kernel, evaluated by an
integrator (closed form or grid). Ratio constructions never read the
arbitrary constant of an improper prior (``prior_log_scale`` /
``Baseline.log_scale``), so rescaling it leaves their results bit-identical.
A constant shifted into the kernel itself (``log_kernel + c``) cancels only to
rounding; use :meth:`Baseline.scaled` for exact cancellation.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .core import (
    Baseline,
    BayesFactorReport,
    BayesModel,
    DegenerateIntegralError,
    EvidenceMethod,
    EvidenceResult,
    Integrator,
    LikelihoodTerm,
    LogDensity,
    UnsupportedIntegral,
    UsageError,
    bayes_factor,
    check_log_values,
    log_mean_exp,
    log_sum_exp,
    setting,
)
from .eventlog import log_event

_logger = logging.getLogger("evidence.objective")

ModelFamily = Callable[[float], BayesModel]


# -----------------------------------------------------------------------------
# Types
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class DataPartition:
    """Training/test split of data indices."""

    train_indices: tuple[int, ...]
    test_indices: tuple[int, ...]

    @classmethod
    def from_train(cls, train_indices: Sequence[int], n_data: int) -> "DataPartition":
        train = tuple(sorted(int(i) for i in train_indices))
        chosen = set(train)
        return cls(train, tuple(i for i in range(n_data) if i not in chosen))

    def validate(self, n_data: int) -> None:
        train, test = set(self.train_indices), set(self.test_indices)
        if not train:
            raise UsageError("training set must be nonempty")
        if len(train) != len(self.train_indices) or len(test) != len(self.test_indices):
            raise UsageError("partition indices must not repeat")
        if train & test:
            raise UsageError(f"training and test indices overlap: {sorted(train & test)}")
        if train | test != set(range(n_data)):
            raise UsageError(f"partition does not cover data indices 0..{n_data - 1}")


@dataclass(frozen=True)
class TemperedPriorSpec:
    beta: float
    base: Optional[Baseline] = None

    def __post_init__(self) -> None:
        _check_beta(self.beta)


@dataclass(frozen=True)
class HyperPriorSpec:
    """Hyper-parameter grid and log hyperprior (flat when omitted).

    The hyperprior is renormalized over the grid by trapezoid weights; a
    single grid value acts as a point mass.
    """

    grid: tuple[float, ...]
    log_hyperprior: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self) -> None:
        grid = tuple(float(v) for v in self.grid)
        if not grid:
            raise UsageError("hyperparameter grid must be nonempty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise UsageError("hyperparameter grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)


class ClosedFormIntegrator:
    """Integrator backend for models that carry an exact ``closed_form`` family."""

    method = EvidenceMethod.CLOSED_FORM

    def log_integral(
        self,
        model: BayesModel,
        terms: Sequence[LikelihoodTerm],
        *,
        with_prior: bool = False,
        base: Optional[LogDensity] = None,
    ) -> float:
        if model.closed_form is None:
            raise UnsupportedIntegral(f"{model.name} has no closed-form integrals")
        if base is not None:
            raise UnsupportedIntegral("closed-form integrals take no explicit baseline kernel")
        for term in terms:
            if not term.power > 0:
                raise UsageError(f"likelihood powers must be positive (got {term.power})")
        return float(model.closed_form.log_integral(terms, with_prior=with_prior))

    def points_for(self, model: BayesModel) -> None:
        return None


# -----------------------------------------------------------------------------
# Helpers
# -----------------------------------------------------------------------------


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not 0.0 < beta <= 1.0:
        raise UsageError(f"beta must lie in (0, 1] (got {beta})")
    return beta


def default_beta(data: Any) -> float:
    """Minimal training fraction 1/D_y."""
    n = len(data)
    if n == 0:
        raise UsageError("cannot derive a default beta from empty data")
    return 1.0 / n


def _kernel(base: Optional[Baseline]) -> Optional[LogDensity]:
    return base.log_kernel if base is not None else None


def _denominator(value: float, what: str, model: BayesModel) -> float:
    if value == -math.inf:
        raise DegenerateIntegralError(f"{model.name}: {what} is numerically zero")
    return value


def _result(log_z: float, method: EvidenceMethod, integrator: Integrator, model: BayesModel) -> EvidenceResult:
    return EvidenceResult(
        log_z=log_z,
        method=method,
        grid_points_per_dim=integrator.points_for(model),
        truncation_note=model.space.tail_note,
    )


def _parallel_map(fn: Callable, items: Sequence, workers: Optional[int]) -> list:
    workers = int(workers if workers is not None else setting("EVIDENCE_THREADS", 1))
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def model_evidence(model: BayesModel, data: Any, integrator: Integrator) -> EvidenceResult:
    """Plain evidence: integral of likelihood times the model prior.

    For improper priors the arbitrary constant ``prior_log_scale`` is added,
    which is what makes raw evidences of such models meaningless.
    """
    log_z = integrator.log_integral(model, [LikelihoodTerm(data)], with_prior=True) + model.prior_log_scale
    return _result(log_z, integrator.method, integrator, model)


# -----------------------------------------------------------------------------
# Likelihood-based priors
# -----------------------------------------------------------------------------


def tempered_evidence(
    model: BayesModel,
    data: Any,
    beta: Optional[float],
    integrator: Integrator,
    *,
    base: Optional[Baseline] = None,
) -> EvidenceResult:
    """Evidence under the prior proportional to l(y|theta)**beta.

    log Z = log int l**(beta + 1) - log int l**beta. ``beta`` defaults to 1/D_y.
    """
    beta = _check_beta(default_beta(data) if beta is None else beta)
    kernel = _kernel(base)
    num = integrator.log_integral(model, [LikelihoodTerm(data, beta + 1.0)], base=kernel)
    den = integrator.log_integral(model, [LikelihoodTerm(data, beta)], base=kernel)
    _denominator(den, f"integral of likelihood**{beta}", model)
    return _result(num - den, EvidenceMethod.TEMPERED, integrator, model)


def idea1_evidence(model: BayesModel, data: Any, integrator: Integrator, *, base: Optional[Baseline] = None) -> EvidenceResult:
    """Evidence under the prior proportional to the likelihood itself.

    log Z = log int l**2 - log int l; identical to ``tempered_evidence`` at beta = 1.
    """
    return tempered_evidence(model, data, 1.0, integrator, base=base)


def reused_subset_evidence(
    model: BayesModel,
    data: Any,
    subset_indices: Sequence[int],
    integrator: Integrator,
    *,
    base: Optional[Baseline] = None,
) -> EvidenceResult:
    """Evidence under the prior proportional to the likelihood of a data subset.

    The subset is reused in the likelihood:
    log Z = log int l(y) l(y_sub) - log int l(y_sub).
    With the full data as subset this is ``idea1_evidence``.
    """
    if len(subset_indices) == 0:
        raise UsageError("prior subset must be nonempty")
    sub = model.take(data, subset_indices)
    kernel = _kernel(base)
    num = integrator.log_integral(model, [LikelihoodTerm(data), LikelihoodTerm(sub)], base=kernel)
    den = integrator.log_integral(model, [LikelihoodTerm(sub)], base=kernel)
    _denominator(den, "subset likelihood integral", model)
    return _result(num - den, EvidenceMethod.TEMPERED, integrator, model)


def subset_prior_evidence(
    model: BayesModel,
    data: Any,
    partition: DataPartition,
    integrator: Integrator,
    *,
    use_prior: bool = False,
    route: str = "ratio",
) -> EvidenceResult:
    """Evidence of the test data with a prior trained on the training data.

    ``route="ratio"`` computes S / S_train with S the integral over all data;
    ``route="split"`` computes int l(test) l(train) / S_train explicitly. The
    two agree for conditionally independent models. With ``use_prior`` the
    integrals include the model prior kernel (partial Bayes factors),
    otherwise they are flat over the model window.
    """
    if not model.conditionally_independent:
        raise UsageError(f"{model.name}: training-set priors need conditionally independent data")
    partition.validate(len(data))
    if route not in {"ratio", "split"}:
        raise UsageError(f"unknown route {route!r}")

    train = model.take(data, partition.train_indices)
    s_train = integrator.log_integral(model, [LikelihoodTerm(train)], with_prior=use_prior)
    _denominator(s_train, "training-set integral", model)

    if route == "ratio" or not partition.test_indices:
        s = integrator.log_integral(model, [LikelihoodTerm(data)], with_prior=use_prior)
    else:
        test = model.take(data, partition.test_indices)
        s = integrator.log_integral(model, [LikelihoodTerm(test), LikelihoodTerm(train)], with_prior=use_prior)
    return _result(s - s_train, EvidenceMethod.PARTIAL, integrator, model)


def averaged_subset_evidence(
    model: BayesModel,
    data: Any,
    partitions: Sequence[DataPartition],
    integrator: Integrator,
    *,
    use_prior: bool = False,
) -> EvidenceResult:
    """Arithmetic mean over partitions of S / S_train, averaged in log space."""
    if not partitions:
        raise UsageError("at least one partition is required")
    if not model.conditionally_independent:
        raise UsageError(f"{model.name}: training-set priors need conditionally independent data")
    s = integrator.log_integral(model, [LikelihoodTerm(data)], with_prior=use_prior)
    ratios = []
    for partition in partitions:
        partition.validate(len(data))
        train = model.take(data, partition.train_indices)
        s_train = integrator.log_integral(model, [LikelihoodTerm(train)], with_prior=use_prior)
        ratios.append(s - _denominator(s_train, "training-set integral", model))
    return _result(log_mean_exp(ratios), EvidenceMethod.PARTIAL, integrator, model)


def partial_bf(
    model1: BayesModel,
    model2: BayesModel,
    data: Any,
    train_indices: Sequence[int],
    integrator: Integrator,
    *,
    route: str = "ratio",
) -> BayesFactorReport:
    """Partial Bayes factor: both baselines are first trained on ``train_indices``."""
    partition = DataPartition.from_train(train_indices, len(data))
    z1 = subset_prior_evidence(model1, data, partition, integrator, use_prior=True, route=route)
    z2 = subset_prior_evidence(model2, data, partition, integrator, use_prior=True, route=route)
    recipe = "PBF:train=" + ",".join(str(i) for i in partition.train_indices)
    return bayes_factor(z1, z2, recipe)


def intrinsic_bf(
    model1: BayesModel,
    model2: BayesModel,
    data: Any,
    train_sets: Sequence[Sequence[int]],
    integrator: Integrator,
) -> BayesFactorReport:
    """Arithmetic intrinsic Bayes factor: the mean of partial Bayes factors.

    The mean of ratios is not a ratio of evidences, so the report carries
    the averaged value as ``log_z_num`` against ``log_z_den = 0``; the
    per-partition values are kept in ``details``.
    """
    if not train_sets:
        raise UsageError("at least one training set is required")
    partials = [partial_bf(model1, model2, data, train, integrator).log_bf for train in train_sets]
    log_ibf = log_mean_exp(partials)
    return BayesFactorReport(
        log_z_num=log_ibf,
        log_z_den=0.0,
        log_bf=log_ibf - 0.0,
        recipe=f"IBF:arithmetic:n={len(partials)}",
        details={"partial_log_bfs": partials},
    )


def fractional_evidence(
    model: BayesModel,
    data: Any,
    beta: Optional[float],
    integrator: Integrator,
    *,
    base: Optional[Baseline] = None,
) -> EvidenceResult:
    """Fractional evidence log int l g_base - log int l**beta g_base.

    ``base`` defaults to a flat kernel; ``beta`` defaults to 1/D_y.
    """
    beta = _check_beta(default_beta(data) if beta is None else beta)
    kernel = _kernel(base)
    num = integrator.log_integral(model, [LikelihoodTerm(data, 1.0)], base=kernel)
    den = integrator.log_integral(model, [LikelihoodTerm(data, beta)], base=kernel)
    _denominator(den, f"integral of likelihood**{beta}", model)
    return _result(num - den, EvidenceMethod.FRACTIONAL, integrator, model)


def fractional_bf(
    model1: BayesModel,
    model2: BayesModel,
    data: Any,
    beta: Optional[float],
    integrator: Integrator,
    *,
    base1: Optional[Baseline] = None,
    base2: Optional[Baseline] = None,
) -> BayesFactorReport:
    beta = default_beta(data) if beta is None else beta
    z1 = fractional_evidence(model1, data, beta, integrator, base=base1)
    z2 = fractional_evidence(model2, data, beta, integrator, base=base2)
    return bayes_factor(z1, z2, f"FBF:beta={beta:g}")


# -----------------------------------------------------------------------------
# Priors built from simulated data
# -----------------------------------------------------------------------------


def _as_nodes(model: BayesModel, theta: Any) -> tuple[np.ndarray, bool]:
    arr = np.asarray(theta, dtype=float)
    single = arr.ndim <= 1
    nodes = arr.reshape(1, model.space.dims) if single else arr
    if nodes.shape[1] != model.space.dims:
        raise UsageError(f"theta has {nodes.shape[1]} coordinates; {model.name} has {model.space.dims}")
    return nodes, single


def power_prior_log(
    model: BayesModel,
    theta: Any,
    sim_data: Any,
    beta: float,
    base_log_prior: Optional[LogDensity] = None,
):
    """Unnormalized power prior beta * log l(y* | theta) + log g_base(theta)."""
    beta = float(beta)
    if not 0.0 < beta < 1.0:
        raise UsageError(f"power-prior beta must lie in (0, 1) (got {beta})")
    nodes, single = _as_nodes(model, theta)
    base = np.zeros(nodes.shape[0]) if base_log_prior is None else check_log_values(base_log_prior(nodes), "baseline log-prior")
    if len(sim_data) == 0:
        values = np.array(base, dtype=float)
    else:
        ll = check_log_values(model.log_like(nodes, sim_data), f"{model.name} log-likelihood")
        values = beta * ll + base
    return float(values[0]) if single else values


def expected_posterior_prior_log(
    model: BayesModel,
    theta: Any,
    sim_data_draws: Sequence[Any],
    beta: float,
    integrator: Integrator,
    *,
    base_log_prior: Optional[LogDensity] = None,
):
    """Log of the average over draws of the normalized power prior at ``theta``.

    Draws are supplied by the caller; nothing is sampled here.
    """
    if len(sim_data_draws) == 0:
        raise UsageError("at least one simulated data draw is required")
    nodes, single = _as_nodes(model, theta)
    rows = []
    for k, draw in enumerate(sim_data_draws):
        if len(draw) == 0:
            log_norm = integrator.log_integral(model, [], base=base_log_prior)
        else:
            log_norm = integrator.log_integral(model, [LikelihoodTerm(draw, beta)], base=base_log_prior)
        if not math.isfinite(log_norm):
            raise DegenerateIntegralError(f"power prior of draw {k} is not normalizable (log norm {log_norm})")
        rows.append(np.atleast_1d(power_prior_log(model, nodes, draw, beta, base_log_prior)) - log_norm)
    stacked = np.vstack(rows)
    with np.errstate(divide="ignore"):
        values = logsumexp(stacked, axis=0) - math.log(len(rows))
    return float(values[0]) if single else values


def posterior_predictive_log(model: BayesModel, data_cond: Any, data_eval: Any, integrator: Integrator) -> float:
    """log p(y_eval | y_cond) = log int l(y_eval) l(y_cond) g - log int l(y_cond) g."""
    log_z = integrator.log_integral(model, [LikelihoodTerm(data_cond)], with_prior=True)
    _denominator(log_z, "conditioning evidence", model)
    num = integrator.log_integral(
        model, [LikelihoodTerm(data_eval), LikelihoodTerm(data_cond)], with_prior=True
    )
    return num - log_z


def posterior_bf(model1: BayesModel, model2: BayesModel, data: Any, integrator: Integrator) -> BayesFactorReport:
    """Ratio of posterior predictive densities of the observed data under each model."""
    p1 = posterior_predictive_log(model1, data, data, integrator)
    p2 = posterior_predictive_log(model2, data, data, integrator)
    return bayes_factor(
        EvidenceResult(p1, EvidenceMethod.PREDICTIVE),
        EvidenceResult(p2, EvidenceMethod.PREDICTIVE),
        "PoBF",
    )


# -----------------------------------------------------------------------------
# Hyperparameters
# -----------------------------------------------------------------------------


def evidence_profile(
    model_family: ModelFamily,
    data: Any,
    nu_grid: Sequence[float],
    integrator: Integrator,
    *,
    workers: Optional[int] = None,
) -> list[EvidenceResult]:
    """Evidence for every hyperparameter value, in grid order."""
    nus = list(nu_grid)
    if not nus:
        raise UsageError("hyperparameter grid must be nonempty")
    results = _parallel_map(lambda nu: model_evidence(model_family(nu), data, integrator), nus, workers)
    log_event(_logger, "objective.evidence_profile", level="debug", points=len(nus), log_zs=[r.log_z for r in results])
    return results


def empirical_bayes(
    model_family: ModelFamily,
    data: Any,
    nu_grid: Sequence[float],
    integrator: Integrator,
    *,
    workers: Optional[int] = None,
) -> tuple[float, EvidenceResult]:
    """Grid maximizer of Z(nu). Ties go to the smallest grid index."""
    nus = list(nu_grid)
    results = evidence_profile(model_family, data, nus, integrator, workers=workers)
    log_zs = np.array([r.log_z for r in results])
    if np.all(log_zs == -np.inf):
        raise DegenerateIntegralError("every evidence on the hyperparameter grid is zero")
    best = int(np.argmax(log_zs))
    return nus[best], results[best]


def trapezoid_log_weights(grid: Sequence[float]) -> np.ndarray:
    nodes = np.asarray(grid, dtype=float)
    if nodes.size == 1:
        return np.zeros(1)
    gaps = np.diff(nodes)
    weights = np.empty(nodes.size)
    weights[0] = gaps[0] / 2.0
    weights[-1] = gaps[-1] / 2.0
    weights[1:-1] = (gaps[:-1] + gaps[1:]) / 2.0
    return np.log(weights)


def combine_hierarchical(hyper: HyperPriorSpec, log_zs: Sequence[float]) -> float:
    """log of the hyperprior-weighted average of Z(nu) over the grid."""
    nus = np.asarray(hyper.grid)
    log_zs = np.asarray(log_zs, dtype=float)
    if log_zs.shape != nus.shape:
        raise UsageError(f"{log_zs.size} evidences for {nus.size} hyperparameter values")
    if nus.size == 1:
        return float(log_zs[0])
    log_g = np.zeros(nus.size) if hyper.log_hyperprior is None else check_log_values(hyper.log_hyperprior(nus), "log hyperprior")
    log_w = trapezoid_log_weights(nus) + log_g
    log_mass = log_sum_exp(log_w)
    if log_mass == -math.inf:
        raise DegenerateIntegralError("hyperprior has no mass on its grid")
    return log_sum_exp(log_w + log_zs) - log_mass


def hierarchical_evidence(
    model_family: ModelFamily,
    data: Any,
    hyper: HyperPriorSpec,
    integrator: Integrator,
    *,
    workers: Optional[int] = None,
) -> EvidenceResult:
    """Evidence with the hyperparameter integrated out under its hyperprior."""
    profile = evidence_profile(model_family, data, hyper.grid, integrator, workers=workers)
    log_z = combine_hierarchical(hyper, [r.log_z for r in profile])
    return EvidenceResult(
        log_z=log_z,
        method=EvidenceMethod.HIERARCHICAL,
        grid_points_per_dim=profile[0].grid_points_per_dim,
        truncation_note=f"hyperprior renormalized over {len(hyper.grid)} grid values",
    )
