"""Grid evidence for the zero- and one-planet radial-velocity models.

The zero-planet model has the single parameter V0 ~ U([v0_lower, v0_upper]).
The one-planet model keeps K, omega, e and tau at given values and
integrates over (P, V0) with P ~ U([0, P_max]). The V0 direction is always
a midpoint grid of ``v0_points`` cells. The P direction is a midpoint
lattice of width ``period_step``; windows whose upper edge is a multiple of
the step share one lattice, so Keplerian signals are solved once per epoch
and reused across P_max values.
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from evidence.core import (
    BayesModel,
    EvidenceMethod,
    EvidenceResult,
    LikelihoodTerm,
    LogDensity,
    ParamSpace,
    QuadratureBudgetExceeded,
    UsageError,
    check_log_values,
    run_generator,
    setting,
)
from evidence.csv_output import Table
from evidence.eventlog import log_event
from evidence.objective import (
    DataPartition,
    HyperPriorSpec,
    hierarchical_evidence,
    idea1_evidence,
    model_evidence,
    reused_subset_evidence,
    subset_prior_evidence,
)
from evidence.quadrature import GridSpec, grid_budget
from evidence.runconfig import RunConfigError

from .rv import (
    LOG_2PI,
    Planet,
    RvDataset,
    RvParams,
    dataset_sidecar,
    jittered_epochs,
    planet_signal,
    read_rv_dataset,
    simulate_rv,
)

logger = logging.getLogger("exoplanet.evidence")

# Longest period considered, in days.
PERIOD_CEILING = 365.0

# Period cells handled per vectorised block.
_BLOCK_CELLS = 16384


@dataclass(frozen=True)
class RvGridConfig:
    v0_lower: float = -20.0
    v0_upper: float = 20.0
    v0_points: int = field(default_factory=lambda: int(setting("EXOPLANET_V0_POINTS", 64)))
    period_step: float = field(default_factory=lambda: float(setting("EXOPLANET_PERIOD_STEP", 0.004)))

    def __post_init__(self) -> None:
        if not self.v0_lower < self.v0_upper:
            raise UsageError(f"V0 bounds must satisfy lower < upper (got [{self.v0_lower}, {self.v0_upper}])")
        if self.v0_points < 2 or not self.period_step > 0:
            raise UsageError("need v0_points >= 2 and period_step > 0")

    @property
    def v0_width(self) -> float:
        return self.v0_upper - self.v0_lower


# -----------------------------------------------------------------------------
# Models
# -----------------------------------------------------------------------------


def _gaussian_rows(residuals: np.ndarray, v0: np.ndarray, sigma_e: float) -> np.ndarray:
    """log-likelihood of residual rows (one row per node) shifted by each node's V0."""
    if not sigma_e > 0:
        raise UsageError(f"likelihood needs sigma_e > 0 (got {sigma_e})")
    n = residuals.shape[1]
    if n == 0:
        return np.zeros(v0.shape)
    var = sigma_e**2
    mean = residuals.mean(axis=1)
    spread = np.sum((residuals - mean[:, None]) ** 2, axis=1)
    return -0.5 * n * (LOG_2PI + math.log(var)) - (spread + n * (mean - v0) ** 2) / (2.0 * var)


def _uniform_log_prior(lower: Sequence[float], upper: Sequence[float]) -> LogDensity:
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    log_density = -float(np.sum(np.log(hi - lo)))

    def log_prior(nodes: np.ndarray) -> np.ndarray:
        x = np.asarray(nodes, dtype=float)
        inside = np.all((x >= lo) & (x <= hi), axis=1)
        return np.where(inside, log_density, -np.inf)

    return log_prior


def _take(data: RvDataset, indices) -> RvDataset:
    return data.subset(indices)


def zero_planet_model(config: Optional[RvGridConfig] = None) -> BayesModel:
    config = config or RvGridConfig()
    lower, upper = (config.v0_lower,), (config.v0_upper,)

    def log_like(nodes: np.ndarray, data: RvDataset) -> np.ndarray:
        v0 = np.asarray(nodes, dtype=float)[:, 0]
        return _gaussian_rows(data.values[None, :], v0, data.sigma_e)

    return BayesModel(
        space=ParamSpace(lower=lower, upper=upper, names=("v0",)),
        log_like=log_like,
        log_prior=_uniform_log_prior(lower, upper),
        take=_take,
        name="rv_zero_planet",
    )


def one_planet_model(p_max: float, planet: Planet, config: Optional[RvGridConfig] = None) -> BayesModel:
    """(P, V0) model; ``planet.period`` is ignored in favour of the integrated P."""
    config = config or RvGridConfig()
    if not 0.0 < p_max <= PERIOD_CEILING:
        raise UsageError(f"P_max must lie in (0, {PERIOD_CEILING:g}] (got {p_max})")
    lower, upper = (0.0, config.v0_lower), (float(p_max), config.v0_upper)

    def log_like(nodes: np.ndarray, data: RvDataset) -> np.ndarray:
        nodes = np.asarray(nodes, dtype=float)
        periods, inverse = np.unique(nodes[:, 0], return_inverse=True)
        signal = planet_signal(planet, periods, data.times)
        residuals = data.values[None, :] - signal
        return _gaussian_rows(residuals[inverse.ravel()], nodes[:, 1], data.sigma_e)

    return BayesModel(
        space=ParamSpace(lower=lower, upper=upper, names=("period", "v0")),
        log_like=log_like,
        log_prior=_uniform_log_prior(lower, upper),
        take=_take,
        name=f"rv_one_planet(P_max={p_max:g})",
    )


# -----------------------------------------------------------------------------
# Integrator backend
# -----------------------------------------------------------------------------


class _Lattice:
    """Signals of one planet at periods lower + (i + 0.5) step, one column per epoch."""

    def __init__(self, planet: Planet, lower: float, step: float) -> None:
        self.planet = planet
        self.lower = lower
        self.step = step
        self.cells = 0
        self.columns: dict[float, np.ndarray] = {}

    def periods(self, start: int, stop: int) -> np.ndarray:
        return self.lower + (np.arange(start, stop) + 0.5) * self.step

    def signal(self, times: np.ndarray, cells: int) -> np.ndarray:
        if cells > self.cells:
            if self.columns:
                known = np.fromiter(self.columns, dtype=float)
                extra = planet_signal(self.planet, self.periods(self.cells, cells), known)
                for j, t in enumerate(known):
                    self.columns[float(t)] = np.concatenate([self.columns[float(t)], extra[:, j]])
            self.cells = cells
        missing = [float(t) for t in times if float(t) not in self.columns]
        if missing:
            fresh = planet_signal(self.planet, self.periods(0, self.cells), missing)
            for j, t in enumerate(missing):
                self.columns[t] = fresh[:, j]
        return np.column_stack([self.columns[float(t)][:cells] for t in times])


class RvGridIntegrator:
    """Grid integrals for the models built by :func:`zero_planet_model` and :func:`one_planet_model`.

    Every likelihood term is Gaussian in V0, so for each period cell the
    product of powered terms is folded into one quadratic in V0 before the
    V0 grid is summed.
    """

    method = EvidenceMethod.GRID

    def __init__(self, planet: Optional[Planet] = None, config: Optional[RvGridConfig] = None) -> None:
        self.planet = planet
        self.config = config or RvGridConfig()
        self._lattices: dict[tuple[float, float], _Lattice] = {}
        self._lock = threading.Lock()

    def _period_cells(self, model: BayesModel) -> tuple[float, float, int]:
        lower, upper = model.space.window()[0]
        width = upper - lower
        ratio = width / self.config.period_step
        cells = int(round(ratio))
        if cells >= 1 and abs(ratio - cells) <= 1e-9 * ratio:
            return lower, self.config.period_step, cells
        cells = max(1, int(math.ceil(ratio)))
        return lower, width / cells, cells

    def points_for(self, model: BayesModel) -> tuple[int, ...]:
        if model.space.dims == 1:
            return (self.config.v0_points,)
        return (self._period_cells(model)[2], self.config.v0_points)

    def _lattice(self, model: BayesModel) -> tuple[_Lattice, int]:
        if self.planet is None:
            raise UsageError("one-planet integrals need the fixed planet elements")
        lower, step, cells = self._period_cells(model)
        with self._lock:
            lattice = self._lattices.get((lower, step))
            if lattice is None:
                lattice = self._lattices[(lower, step)] = _Lattice(self.planet, lower, step)
        return lattice, cells

    def _signal(self, lattice: _Lattice, times: np.ndarray, cells: int) -> np.ndarray:
        with self._lock:
            return lattice.signal(times, cells)

    def log_integral(
        self,
        model: BayesModel,
        terms: Sequence[LikelihoodTerm],
        *,
        with_prior: bool = False,
        base: Optional[LogDensity] = None,
    ) -> float:
        dims = model.space.dims
        if dims not in (1, 2):
            raise UsageError(f"{model.name}: expected a 1-D or 2-D radial-velocity model")
        v_lower, v_upper = model.space.window()[-1]
        v_nodes, v_log_w = GridSpec.from_box([(v_lower, v_upper)], self.config.v0_points, "midpoint").axis(0)

        if dims == 1:
            periods, p_log_w = None, 0.0
            cells = 1
        else:
            lattice, cells = self._lattice(model)
            periods, p_log_w = lattice.periods(0, cells), math.log(lattice.step)
        if cells * v_nodes.size > grid_budget():
            raise QuadratureBudgetExceeded(
                f"{model.name}: {cells} x {v_nodes.size} nodes exceed the budget of {grid_budget()}"
            )

        # Per term: curvature k (scalar), centre m and constant c (one value per period cell).
        parts = []
        for term in terms:
            if not term.power > 0:
                raise UsageError(f"likelihood powers must be positive (got {term.power})")
            data: RvDataset = term.data
            n = len(data)
            if n == 0:
                continue
            if not data.sigma_e > 0:
                raise UsageError(f"likelihood needs sigma_e > 0 (got {data.sigma_e})")
            var = data.sigma_e**2
            if dims == 1:
                residuals = data.values[None, :]
            else:
                residuals = data.values[None, :] - self._signal(lattice, data.times, cells)
            mean = residuals.mean(axis=1)
            spread = np.sum((residuals - mean[:, None]) ** 2, axis=1)
            a = term.power
            parts.append((a * n / var, mean, a * (-0.5 * n * (LOG_2PI + math.log(var)) - spread / (2.0 * var))))

        curvature = sum(k for k, _, _ in parts)
        if parts:
            centre = sum(k * m for k, m, _ in parts) / curvature
            constant = sum(c - 0.5 * k * (m - centre) ** 2 for k, m, c in parts)
        else:
            centre = np.zeros(cells)
            constant = np.zeros(cells)
        centre = np.broadcast_to(centre, (cells,))
        constant = np.broadcast_to(constant, (cells,))

        block_totals = []
        for start in range(0, cells, _BLOCK_CELLS):
            stop = min(start + _BLOCK_CELLS, cells)
            values = constant[start:stop, None] - 0.5 * curvature * (v_nodes[None, :] - centre[start:stop, None]) ** 2
            if with_prior or base is not None:
                if dims == 1:
                    nodes = v_nodes[:, None]
                else:
                    p = np.repeat(periods[start:stop], v_nodes.size)
                    nodes = np.column_stack([p, np.tile(v_nodes, stop - start)])
                if with_prior:
                    values = values + check_log_values(model.log_prior(nodes), f"{model.name} log-prior").reshape(values.shape)
                if base is not None:
                    values = values + check_log_values(base(nodes), "baseline log-prior").reshape(values.shape)
            block_totals.append(float(logsumexp(values + v_log_w[None, :])))
        return float(logsumexp(block_totals)) + p_log_w


# -----------------------------------------------------------------------------
# Evidences and sweeps
# -----------------------------------------------------------------------------


def evidence_zero_planet(
    dataset: RvDataset,
    config: Optional[RvGridConfig] = None,
    integrator: Optional[RvGridIntegrator] = None,
) -> EvidenceResult:
    integrator = integrator or RvGridIntegrator(None, config)
    return model_evidence(zero_planet_model(integrator.config), dataset, integrator)


def evidence_one_planet(
    dataset: RvDataset,
    p_max: float,
    planet: Planet,
    config: Optional[RvGridConfig] = None,
    integrator: Optional[RvGridIntegrator] = None,
) -> EvidenceResult:
    integrator = integrator or RvGridIntegrator(planet, config)
    return model_evidence(one_planet_model(p_max, planet, integrator.config), dataset, integrator)


def bf10_vs_pmax(
    dataset: RvDataset,
    pmax_values: Sequence[float],
    planet: Planet,
    config: Optional[RvGridConfig] = None,
    integrator: Optional[RvGridIntegrator] = None,
) -> list[tuple[float, float]]:
    """(P_max, log BF10) for every prior width."""
    if not pmax_values:
        raise UsageError("pmax_values must be nonempty")
    integrator = integrator or RvGridIntegrator(planet, config)
    log_z0 = evidence_zero_planet(dataset, integrator=integrator).log_z
    rows = [
        (float(p_max), evidence_one_planet(dataset, p_max, planet, integrator=integrator).log_z - log_z0)
        for p_max in pmax_values
    ]
    log_event(logger, "exoplanet.bf10_vs_pmax", log_z0=log_z0, curve=rows)
    return rows


def pmax_hyper_grid(lower: float = 10.0, upper: float = PERIOD_CEILING, step: float = 5.0) -> HyperPriorSpec:
    """Uniform hyperprior on [lower, upper] discretised with spacing ``step`` (upper always included)."""
    if not 0.0 < lower <= upper <= PERIOD_CEILING:
        raise UsageError(f"P_max window must lie in (0, {PERIOD_CEILING:g}] (got [{lower}, {upper}])")
    if lower == upper:
        return HyperPriorSpec((float(lower),))
    if not step > 0:
        raise UsageError(f"hyper grid step must be positive (got {step})")
    values = list(np.arange(lower, upper, step))
    if upper - values[-1] > 1e-9 * upper:
        values.append(upper)
    return HyperPriorSpec(tuple(float(v) for v in values))


def hierarchical_pmax_evidence(
    dataset: RvDataset,
    hyper: HyperPriorSpec,
    planet: Planet,
    config: Optional[RvGridConfig] = None,
    integrator: Optional[RvGridIntegrator] = None,
    *,
    workers: Optional[int] = None,
) -> EvidenceResult:
    """Z_new,1: the one-planet evidence averaged over P_max under the hyperprior."""
    if hyper.grid[0] <= 0 or hyper.grid[-1] > PERIOD_CEILING:
        raise UsageError(f"P_max hyper grid must lie in (0, {PERIOD_CEILING:g}]")
    integrator = integrator or RvGridIntegrator(planet, config)
    return hierarchical_evidence(
        lambda p_max: one_planet_model(p_max, planet, integrator.config),
        dataset,
        hyper,
        integrator,
        workers=workers,
    )


class LikelihoodPriorIdea(str, Enum):
    IDEA1 = "idea1"  # prior proportional to the full likelihood
    IDEA2 = "idea2"  # prior from the first n epochs, reused in the likelihood
    IDEA3 = "idea3"  # prior from the first n epochs, likelihood on the rest


def rv_likelihood_prior_bf(
    dataset: RvDataset,
    idea: LikelihoodPriorIdea | str,
    n_prior_data: Optional[Sequence[int] | int],
    planet: Planet,
    *,
    p_max: float = PERIOD_CEILING,
    config: Optional[RvGridConfig] = None,
    integrator: Optional[RvGridIntegrator] = None,
) -> list[tuple[int, float]]:
    """(n, log BF10) with both models given the same likelihood-based prior.

    ``n_prior_data`` is a list of prefix lengths, a single maximum length, or
    None for every admissible length. idea1 does not depend on n and repeats
    the same value.
    """
    idea = LikelihoodPriorIdea(idea)
    size = len(dataset)
    limit = size - 1 if idea is LikelihoodPriorIdea.IDEA3 else size
    if n_prior_data is None:
        n_values = list(range(1, limit + 1))
    elif isinstance(n_prior_data, (int, np.integer)):
        n_values = list(range(1, int(n_prior_data) + 1))
    else:
        n_values = [int(n) for n in n_prior_data]
    if not n_values or any(not 1 <= n <= limit for n in n_values):
        raise UsageError(f"{idea.value} prefix lengths must lie in [1, {limit}] (got {n_values})")

    integrator = integrator or RvGridIntegrator(planet, config)
    models = (zero_planet_model(integrator.config), one_planet_model(p_max, planet, integrator.config))

    def log_z(model: BayesModel, n: int) -> float:
        if idea is LikelihoodPriorIdea.IDEA1:
            return idea1_evidence(model, dataset, integrator).log_z
        if idea is LikelihoodPriorIdea.IDEA2:
            return reused_subset_evidence(model, dataset, range(n), integrator).log_z
        return subset_prior_evidence(model, dataset, DataPartition.from_train(range(n), size), integrator).log_z

    if idea is LikelihoodPriorIdea.IDEA1:
        value = log_z(models[1], size) - log_z(models[0], size)
        rows = [(n, value) for n in n_values]
    else:
        rows = [(n, log_z(models[1], n) - log_z(models[0], n)) for n in n_values]
    log_event(logger, "exoplanet.likelihood_prior_bf", idea=idea.value, curve=rows)
    return rows


# -----------------------------------------------------------------------------
# Command wiring
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class Exp4Config:
    v0: float = 5.0
    k: float = 25.0
    omega: float = 0.61
    e: float = 0.1
    period: float = 15.0
    tau: float = 3.0
    sigma_e2: float = 15.0
    n_epochs: int = 25
    span: float = 60.0
    jitter: float = 1.2
    # Read t,y CSV (with its sidecar) instead of simulating.
    data_path: str = ""
    v0_lower: float = -20.0
    v0_upper: float = 20.0
    v0_points: int = field(default_factory=lambda: int(setting("EXOPLANET_V0_POINTS", 64)))
    period_step: float = field(default_factory=lambda: float(setting("EXOPLANET_PERIOD_STEP", 0.004)))
    pmax_values: tuple[float, ...] = (5.0, 10.0, 15.0, 20.0, 30.0, 50.0, 75.0, 100.0, 150.0, 200.0, 250.0, 300.0, 365.0)
    hyper_lower: float = 10.0
    hyper_upper: float = 365.0
    hyper_step: float = 5.0
    idea_pmax: float = 365.0

    def __post_init__(self) -> None:
        if not self.sigma_e2 > 0:
            raise UsageError(f"sigma_e2 must be positive (got {self.sigma_e2})")
        if not self.pmax_values:
            raise UsageError("pmax_values must be nonempty")

    def grid(self) -> RvGridConfig:
        return RvGridConfig(self.v0_lower, self.v0_upper, self.v0_points, self.period_step)

    def params(self) -> RvParams:
        return RvParams(self.v0, (Planet(self.k, self.omega, self.e, self.period, self.tau),))


def exp4_dataset(config: Exp4Config, seed: Optional[int]) -> RvDataset:
    if config.data_path:
        dataset = read_rv_dataset(config.data_path)
        if dataset.params is None or len(dataset.params.planets) != 1:
            raise RunConfigError(f"{config.data_path}: sidecar must give v0 and exactly one planet")
        return dataset
    if seed is None:
        raise UsageError("simulating the radial-velocity dataset needs a seed")
    times = jittered_epochs(config.n_epochs, config.span, config.jitter)
    return simulate_rv(config.params(), times, math.sqrt(config.sigma_e2), run_generator(seed, 0))


def run_exp4(config: Exp4Config, seed: Optional[int], *, workers: int = 1) -> list:
    dataset = exp4_dataset(config, seed)
    planet = dataset.params.planets[0]
    integrator = RvGridIntegrator(planet, config.grid())

    curve = bf10_vs_pmax(dataset, config.pmax_values, planet, integrator=integrator)
    log_z0 = evidence_zero_planet(dataset, integrator=integrator).log_z
    hyper = pmax_hyper_grid(config.hyper_lower, config.hyper_upper, config.hyper_step)
    z_new = hierarchical_pmax_evidence(dataset, hyper, planet, integrator=integrator, workers=workers).log_z
    log_event(logger, "exoplanet.hierarchical", log_z_new1=z_new, log_z0=log_z0, grid_points=len(hyper.grid))

    ideas = {
        idea: rv_likelihood_prior_bf(dataset, idea, None, planet, p_max=config.idea_pmax, integrator=integrator)
        for idea in (LikelihoodPriorIdea.IDEA2, LikelihoodPriorIdea.IDEA3)
    }
    idea1 = rv_likelihood_prior_bf(
        dataset, LikelihoodPriorIdea.IDEA1, [len(dataset)], planet, p_max=config.idea_pmax, integrator=integrator
    )
    return [
        Table("exp4_data.csv", ("t", "y"), list(zip(dataset.times, dataset.values))),
        ("exp4_data.ini", dataset_sidecar(dataset)),
        Table("exp4_bf10_vs_pmax.csv", ("pmax", "log_bf10"), curve),
        Table(
            "exp4_hierarchical.csv",
            ("pmax_lower", "pmax_upper", "log_z_new1", "log_z0", "log_bf10"),
            [(hyper.grid[0], hyper.grid[-1], z_new, log_z0, z_new - log_z0)],
        ),
        Table("exp4_idea1.csv", ("n", "log_bf10"), idea1),
        Table("exp4_idea2.csv", ("n", "log_bf10"), ideas[LikelihoodPriorIdea.IDEA2]),
        Table("exp4_idea3.csv", ("n", "log_bf10"), ideas[LikelihoodPriorIdea.IDEA3]),
    ]
