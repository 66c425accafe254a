"""Deterministic log-domain quadrature on boxes of up to three dimensions."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, NamedTuple, Optional, Sequence

import numpy as np

from .core import (
    BayesModel,
    EvidenceMethod,
    EvidenceResult,
    LikelihoodTerm,
    LogDensity,
    QuadratureBudgetExceeded,
    UsageError,
    check_log_values,
    log_sum_exp,
    setting,
)
from .eventlog import log_event

_logger = logging.getLogger("evidence.quadrature")

MAX_DIMS = 3


class QuadratureRule(str, Enum):
    MIDPOINT = "midpoint"
    TRAPEZOID = "trapezoid"


def default_rule() -> QuadratureRule:
    return QuadratureRule(setting("EVIDENCE_DEFAULT_RULE", QuadratureRule.MIDPOINT.value))


def grid_budget() -> int:
    return int(setting("EVIDENCE_GRID_BUDGET", 10**7))


@dataclass(frozen=True)
class GridSpec:
    """A tensor-product grid over a finite box.

    Midpoint grids put ``n`` nodes at cell centres and never touch the box
    edges; trapezoid grids put ``n`` nodes on ``n - 1`` cells including both
    edges.
    """

    points_per_dim: tuple[int, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    rule: QuadratureRule = QuadratureRule.MIDPOINT

    def __post_init__(self) -> None:
        points = tuple(int(n) for n in self.points_per_dim)
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        if not points or not (len(points) == len(lower) == len(upper)):
            raise UsageError("grid points and bounds must have the same nonzero dimension")
        if len(points) > MAX_DIMS:
            raise UsageError(f"grids above {MAX_DIMS} dimensions are not supported")
        for d, (n, a, b) in enumerate(zip(points, lower, upper)):
            if n < 2:
                raise UsageError(f"dimension {d}: need at least 2 points (got {n})")
            if not (math.isfinite(a) and math.isfinite(b) and a < b):
                raise UsageError(f"dimension {d}: bounds must be finite with lower < upper (got [{a}, {b}])")
        object.__setattr__(self, "points_per_dim", points)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "rule", QuadratureRule(self.rule))

    @classmethod
    def from_box(
        cls,
        box: Sequence[tuple[float, float]],
        points: int | Sequence[int],
        rule: Optional[QuadratureRule | str] = None,
    ) -> "GridSpec":
        box = list(box)
        if isinstance(points, (int, np.integer)):
            points = (int(points),) * len(box)
        return cls(
            points_per_dim=tuple(points),
            lower=tuple(a for a, _ in box),
            upper=tuple(b for _, b in box),
            rule=QuadratureRule(rule) if rule is not None else default_rule(),
        )

    @property
    def dims(self) -> int:
        return len(self.points_per_dim)

    @property
    def total_points(self) -> int:
        return int(np.prod(self.points_per_dim, dtype=np.int64))

    def box(self) -> list[tuple[float, float]]:
        return list(zip(self.lower, self.upper))

    def refined(self) -> "GridSpec":
        return GridSpec(tuple(2 * n for n in self.points_per_dim), self.lower, self.upper, self.rule)

    def axis(self, d: int) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates and log quadrature weights along dimension ``d``."""
        n, a, b = self.points_per_dim[d], self.lower[d], self.upper[d]
        if self.rule is QuadratureRule.MIDPOINT:
            h = (b - a) / n
            nodes = a + (np.arange(n) + 0.5) * h
            log_w = np.full(n, math.log(h))
        else:
            h = (b - a) / (n - 1)
            nodes = np.linspace(a, b, n)
            log_w = np.full(n, math.log(h))
            log_w[0] = log_w[-1] = math.log(h / 2.0)
        return nodes, log_w


# -----------------------------------------------------------------------------
# Node evaluation
# -----------------------------------------------------------------------------


def _check_budget(grid: GridSpec) -> None:
    budget = grid_budget()
    if grid.total_points > budget:
        log_event(_logger, "quadrature.budget_exceeded", level="warning", points=grid.total_points, budget=budget)
        raise QuadratureBudgetExceeded(
            f"grid {grid.points_per_dim} needs {grid.total_points} nodes; budget is {budget}"
        )


def _map_chunks(grid: GridSpec, reduce_chunk: Callable[[np.ndarray, np.ndarray], Any], workers: int) -> list:
    """Apply ``reduce_chunk(nodes, log_weights)`` to consecutive node blocks.

    Blocks follow the C-order node index and results come back in that order
    whatever the worker count, so reductions over them are deterministic.
    """
    _check_budget(grid)
    axes = [grid.axis(d) for d in range(grid.dims)]
    total = grid.total_points
    chunk = max(1, int(setting("EVIDENCE_GRID_CHUNK", 2**18)))
    starts = list(range(0, total, chunk))

    def run(start: int):
        flat = np.arange(start, min(start + chunk, total))
        idx = np.unravel_index(flat, grid.points_per_dim)
        nodes = np.column_stack([axes[d][0][idx[d]] for d in range(grid.dims)])
        log_w = np.zeros(flat.size)
        for d in range(grid.dims):
            log_w = log_w + axes[d][1][idx[d]]
        return reduce_chunk(nodes, log_w)

    workers = max(1, int(workers or 1))
    if workers == 1 or len(starts) == 1:
        return [run(s) for s in starts]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, starts))


def _evaluate(f: LogDensity, nodes: np.ndarray, what: str) -> np.ndarray:
    values = np.asarray(f(nodes), dtype=float)
    values = np.broadcast_to(values, (nodes.shape[0],))
    return check_log_values(values, what)


def log_integrate(f: LogDensity, grid: GridSpec, *, workers: int = 1) -> float:
    """log of the integral of exp(f) over the grid box.

    ``f`` receives node arrays shaped (n, D) and returns n log values, each
    finite or -inf. The result is the log-sum-exp of node values plus log
    cell weights.
    """

    def reduce_chunk(nodes: np.ndarray, log_w: np.ndarray) -> float:
        return log_sum_exp(_evaluate(f, nodes, "integrand") + log_w)

    return log_sum_exp(_map_chunks(grid, reduce_chunk, workers))


def evidence_grid(
    model: BayesModel,
    data: Any,
    grid: GridSpec,
    *,
    workers: int = 1,
    acknowledge_truncation: bool = False,
) -> EvidenceResult:
    """Grid evidence log Z = log of the integral of likelihood times prior.

    An improper prior gives an evidence defined only up to its arbitrary
    constant; callers must say they know that via ``acknowledge_truncation``.
    """
    if not model.prior_is_proper and not acknowledge_truncation:
        raise UsageError(f"{model.name}: raw grid evidence needs a proper prior (or acknowledge_truncation=True)")

    def reduce_chunk(nodes: np.ndarray, log_w: np.ndarray):
        ll = _evaluate(lambda th: model.log_like(th, data), nodes, f"{model.name} log-likelihood")
        lp = _evaluate(model.log_prior, nodes, f"{model.name} log-prior")
        support = ll[lp > -np.inf]
        lo = float(support.min()) if support.size else math.inf
        hi = float(support.max()) if support.size else -math.inf
        return log_sum_exp(ll + lp + log_w), lo, hi

    parts = _map_chunks(grid, reduce_chunk, workers)
    log_z = log_sum_exp([p[0] for p in parts]) + model.prior_log_scale
    ll_min = min(p[1] for p in parts)
    ll_max = max(p[2] for p in parts)
    if ll_min == math.inf:
        ll_min = ll_max = None

    note = model.space.tail_note
    if tuple(grid.box()) != tuple(model.space.window()):
        note = (note + "; " if note else "") + f"grid box {grid.box()} differs from model window"
    log_event(
        _logger,
        "quadrature.evidence_grid",
        level="debug",
        model=model.name,
        points=grid.points_per_dim,
        log_z=log_z,
    )
    return EvidenceResult(
        log_z=log_z,
        method=EvidenceMethod.GRID,
        grid_points_per_dim=grid.points_per_dim,
        truncation_note=note,
        log_like_min=ll_min,
        log_like_max=ll_max,
    )


# -----------------------------------------------------------------------------
# Refinement
# -----------------------------------------------------------------------------


class Refinement(NamedTuple):
    log_value: float
    grid: GridSpec
    converged: bool
    levels: tuple[tuple[tuple[int, ...], float], ...]


def _close(prev: float, value: float, rel_tol: float) -> bool:
    if not (math.isfinite(prev) and math.isfinite(value)):
        return False
    return abs(value - prev) < rel_tol * max(1.0, abs(value))


def refine_until(
    f: LogDensity,
    box: Sequence[tuple[float, float]],
    rel_tol: float,
    max_points: int,
    *,
    rule: Optional[QuadratureRule | str] = None,
    start_points: Optional[int] = None,
    workers: int = 1,
) -> Refinement:
    """Double points per dimension until successive log integrals agree.

    Agreement means ``|new - old| < rel_tol * max(1, |new|)``. When the
    node cap is reached first the last value is returned with
    ``converged=False`` and a warning is logged.
    """
    if not rel_tol > 0:
        raise UsageError(f"rel_tol must be positive (got {rel_tol})")
    start = int(start_points or setting("EVIDENCE_REFINE_START_POINTS", 8))
    grid = GridSpec.from_box(box, start, rule)
    cap = min(int(max_points), grid_budget())
    if grid.total_points > cap:
        raise UsageError(f"starting grid {grid.points_per_dim} already exceeds max_points={max_points}")

    value = log_integrate(f, grid, workers=workers)
    levels = [(grid.points_per_dim, value)]
    while True:
        finer = grid.refined()
        if finer.total_points > cap:
            break
        new_value = log_integrate(f, finer, workers=workers)
        levels.append((finer.points_per_dim, new_value))
        grid, previous, value = finer, value, new_value
        if _close(previous, value, rel_tol):
            log_event(_logger, "quadrature.refine.converged", level="debug", points=grid.points_per_dim, log_value=value)
            return Refinement(value, grid, True, tuple(levels))

    log_event(
        _logger,
        "quadrature.refine.not_converged",
        level="warning",
        points=grid.points_per_dim,
        max_points=max_points,
        trace=[v for _, v in levels],
    )
    return Refinement(value, grid, False, tuple(levels))


# -----------------------------------------------------------------------------
# Integrator backend
# -----------------------------------------------------------------------------


class GridIntegrator:
    """Integrator backend that evaluates every integral on a midpoint/trapezoid grid.

    Resolution is either a fixed number of points per dimension or a maximum
    cell width per dimension (``max_step``), in which case the point count
    follows the model's window.
    """

    method = EvidenceMethod.GRID

    def __init__(
        self,
        points_per_dim: int | Sequence[int] | None = None,
        *,
        max_step: float | Sequence[float] | None = None,
        rule: Optional[QuadratureRule | str] = None,
        workers: Optional[int] = None,
    ) -> None:
        if points_per_dim is None and max_step is None:
            raise UsageError("GridIntegrator needs points_per_dim or max_step")
        self.points_per_dim = points_per_dim
        self.max_step = max_step
        self.rule = QuadratureRule(rule) if rule is not None else default_rule()
        self.workers = int(workers if workers is not None else setting("EVIDENCE_THREADS", 1))

    def grid_for(self, model: BayesModel) -> GridSpec:
        box = model.space.window()
        if self.points_per_dim is not None:
            return GridSpec.from_box(box, self.points_per_dim, self.rule)
        steps = self.max_step
        if isinstance(steps, (int, float)):
            steps = (float(steps),) * len(box)
        if len(steps) != len(box):
            raise UsageError(f"max_step has {len(steps)} entries for a {len(box)}-D model")
        points = tuple(max(2, int(math.ceil((b - a) / s))) for (a, b), s in zip(box, steps))
        return GridSpec.from_box(box, points, self.rule)

    def points_for(self, model: BayesModel) -> tuple[int, ...]:
        return self.grid_for(model).points_per_dim

    def log_integral(
        self,
        model: BayesModel,
        terms: Sequence[LikelihoodTerm],
        *,
        with_prior: bool = False,
        base: Optional[LogDensity] = None,
    ) -> float:
        for term in terms:
            if not term.power > 0:
                raise UsageError(f"likelihood powers must be positive (got {term.power})")

        def integrand(nodes: np.ndarray) -> np.ndarray:
            total = np.zeros(nodes.shape[0])
            for term in terms:
                ll = check_log_values(
                    np.broadcast_to(model.log_like(nodes, term.data), total.shape),
                    f"{model.name} log-likelihood",
                )
                total = total + term.power * ll
            if with_prior:
                total = total + check_log_values(model.log_prior(nodes), f"{model.name} log-prior")
            if base is not None:
                total = total + check_log_values(base(nodes), "baseline log-prior")
            return total

        return log_integrate(integrand, self.grid_for(model), workers=self.workers)
