"""Shared model abstraction, result types and log-domain primitives.

Everything is carried in log space. ``-inf`` is the only "zero density"
sentinel; NaN is never propagated and raises :class:`NonFiniteError`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Optional, Protocol, Sequence

import numpy as np
from django.conf import settings
from django.core.exceptions import ImproperlyConfigured

# Evaluators are vectorised over parameter nodes shaped (n, D) -> (n,).
LogDensity = Callable[[np.ndarray], np.ndarray]
LogLikelihood = Callable[[np.ndarray, Any], np.ndarray]


def setting(name: str, default):
    """Project setting with a fallback when Django settings are not configured."""
    try:
        return getattr(settings, name, default)
    except ImproperlyConfigured:
        return default


# -----------------------------------------------------------------------------
# Errors
# -----------------------------------------------------------------------------


class EvidenceError(ValueError):
    """Base class for every error raised by the evidence library."""


class UsageError(EvidenceError):
    """Raised for invalid arguments: empty inputs, mismatched lengths, bad ranges."""


class NonFiniteError(EvidenceError):
    """Raised when NaN (or +inf) shows up where a log-density is expected."""


class QuadratureBudgetExceeded(EvidenceError):
    """Raised when a grid would need more nodes than the configured budget."""


class DegenerateIntegralError(EvidenceError):
    """Raised when an integral that must be positive evaluates to zero (log = -inf)."""


class UnsupportedIntegral(EvidenceError):
    """Raised when a closed-form backend is asked for an integral it cannot do."""


def check_log_values(values: np.ndarray, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if np.isnan(arr).any():
        raise NonFiniteError(f"{what} produced NaN")
    if np.isposinf(arr).any():
        raise NonFiniteError(f"{what} produced +inf")
    return arr


# -----------------------------------------------------------------------------
# Parameter spaces and models
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class ParamSpace:
    """Declared parameter bounds plus the finite window used for integration.

    ``window_lower``/``window_upper`` default to the bounds and must be set
    explicitly when a bound is infinite; ``tail_note`` records why the mass
    outside the window is negligible.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    window_lower: Optional[tuple[float, ...]] = None
    window_upper: Optional[tuple[float, ...]] = None
    tail_note: str = ""
    names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        if not lower or len(lower) != len(upper):
            raise UsageError("ParamSpace needs matching, nonempty lower/upper bounds")
        wl = tuple(float(v) for v in (self.window_lower if self.window_lower is not None else lower))
        wu = tuple(float(v) for v in (self.window_upper if self.window_upper is not None else upper))
        if len(wl) != len(lower) or len(wu) != len(lower):
            raise UsageError("window dimensions do not match the parameter space")
        for d, (lo, hi, a, b) in enumerate(zip(lower, upper, wl, wu)):
            if not lo < hi:
                raise UsageError(f"dimension {d}: lower bound {lo} is not below upper bound {hi}")
            if not (math.isfinite(a) and math.isfinite(b)):
                raise UsageError(f"dimension {d}: integration window must be finite (got [{a}, {b}])")
            if not (lo <= a < b <= hi):
                raise UsageError(f"dimension {d}: window [{a}, {b}] is not inside bounds [{lo}, {hi}]")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "window_lower", wl)
        object.__setattr__(self, "window_upper", wu)

    @property
    def dims(self) -> int:
        return len(self.lower)

    @property
    def truncated(self) -> bool:
        return self.window_lower != self.lower or self.window_upper != self.upper

    def window(self) -> list[tuple[float, float]]:
        return list(zip(self.window_lower, self.window_upper))

    def log_window_volume(self) -> float:
        return float(sum(math.log(b - a) for a, b in self.window()))


def take_rows(data: Any, indices: Sequence[int]) -> Any:
    return np.asarray(data)[np.asarray(list(indices), dtype=int)]


@dataclass(frozen=True)
class Baseline:
    """An improper baseline prior c * h(theta), kept as log h plus log c.

    Ratio constructions only ever integrate ``log_kernel``; ``log_scale`` is
    added to raw (non-ratio) evidences alone, so the arbitrary constant drops
    out of partial and fractional Bayes factors without touching their
    arithmetic. ``log_kernel=None`` means a flat kernel.
    """

    log_kernel: Optional[LogDensity] = None
    log_scale: float = 0.0

    def scaled(self, log_c: float) -> "Baseline":
        """The same baseline multiplied by exp(``log_c``), folded into ``log_scale``.

        A constant added inside ``log_kernel`` also cancels from ratio
        constructions, but only up to rounding in the integrals; a constant
        folded here cancels exactly.
        """
        return replace(self, log_scale=self.log_scale + float(log_c))


@dataclass(frozen=True)
class BayesModel:
    """A likelihood and a prior over a :class:`ParamSpace`.

    ``log_like(theta, data)`` and ``log_prior(theta)`` take nodes shaped
    (n, D) and return (n,) arrays with ``-inf`` outside the support. For
    improper priors ``log_prior`` is the kernel and ``prior_log_scale`` the
    arbitrary constant. ``closed_form`` optionally names a family object
    whose ``log_integral(terms, with_prior)`` evaluates integrals exactly.
    """

    space: ParamSpace
    log_like: LogLikelihood
    log_prior: LogDensity
    prior_is_proper: bool = True
    prior_log_norm_known: bool = True
    prior_log_scale: float = 0.0
    conditionally_independent: bool = True
    take: Callable[[Any, Sequence[int]], Any] = take_rows
    closed_form: Any = None
    name: str = "model"

    def baseline(self) -> Baseline:
        return Baseline(self.log_prior, self.prior_log_scale)

    def with_name(self, name: str) -> "BayesModel":
        return replace(self, name=name)


@dataclass(frozen=True)
class LikelihoodTerm:
    """One factor ``l(data | theta) ** power`` of an integrand."""

    data: Any
    power: float = 1.0


class Integrator(Protocol):
    """Evaluates log of integrals of products of powered likelihood terms.

    ``with_prior`` multiplies the integrand by the model's prior kernel;
    ``base`` multiplies it by an explicit baseline kernel instead. Without
    either, the integral is taken against Lebesgue measure on the window.
    """

    method: "EvidenceMethod"

    def log_integral(
        self,
        model: BayesModel,
        terms: Sequence[LikelihoodTerm],
        *,
        with_prior: bool = False,
        base: Optional[LogDensity] = None,
    ) -> float: ...

    def points_for(self, model: BayesModel) -> Optional[tuple[int, ...]]: ...


# -----------------------------------------------------------------------------
# Results
# -----------------------------------------------------------------------------


class EvidenceMethod(str, Enum):
    CLOSED_FORM = "closed_form"
    GRID = "grid"
    HIERARCHICAL = "hierarchical"
    FRACTIONAL = "fractional"
    PARTIAL = "partial"
    TEMPERED = "tempered"
    PREDICTIVE = "predictive"


@dataclass(frozen=True)
class EvidenceResult:
    log_z: float
    method: EvidenceMethod
    grid_points_per_dim: Optional[tuple[int, ...]] = None
    truncation_note: str = ""
    # Likelihood extrema over the evaluated grid nodes (grid methods only).
    log_like_min: Optional[float] = None
    log_like_max: Optional[float] = None

    @property
    def z(self) -> float:
        return math.exp(self.log_z)


@dataclass(frozen=True)
class BayesFactorReport:
    log_z_num: float
    log_z_den: float
    log_bf: float
    recipe: str = ""
    details: dict = field(default_factory=dict, compare=False)

    @property
    def bf(self) -> float:
        return math.exp(self.log_bf)


# -----------------------------------------------------------------------------
# Log-domain primitives
# -----------------------------------------------------------------------------


def log_sum_exp(values: Sequence[float] | np.ndarray) -> float:
    """log(sum(exp(values))) with the max-shift trick.

    Returns -inf iff every input is -inf, +inf if any input is +inf.
    """
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise UsageError("log_sum_exp of an empty sequence")
    if np.isnan(arr).any():
        raise NonFiniteError("log_sum_exp received NaN")
    m = float(arr.max())
    if m == -math.inf or m == math.inf:
        return m
    return m + math.log(float(np.exp(arr - m).sum()))


def log_mean_exp(values: Sequence[float] | np.ndarray) -> float:
    arr = np.asarray(values, dtype=float).ravel()
    return log_sum_exp(arr) - math.log(arr.size)


def posterior_model_probs(log_zs: Sequence[float], model_priors: Sequence[float]) -> np.ndarray:
    """Posterior model probabilities p(M_m | y) proportional to p_m * Z_m."""
    lz = np.asarray(log_zs, dtype=float)
    priors = np.asarray(model_priors, dtype=float)
    if lz.size == 0 or lz.shape != priors.shape:
        raise UsageError(f"log_zs and model_priors must have the same nonzero length ({lz.size} vs {priors.size})")
    if (priors < 0).any():
        raise UsageError("model priors must be nonnegative")
    if abs(float(priors.sum()) - 1.0) > 1e-12:
        raise UsageError(f"model priors must sum to 1 (got {float(priors.sum())!r})")
    check_log_values(lz, "log evidence")

    with np.errstate(divide="ignore"):
        weighted = np.where(priors > 0, np.log(priors) + lz, -np.inf)
    total = log_sum_exp(weighted)
    if total == -math.inf:
        raise DegenerateIntegralError("every model has zero posterior weight")
    probs = np.exp(weighted - total)
    return probs / probs.sum()


def bayes_factor(z_num: EvidenceResult, z_den: EvidenceResult, recipe: str = "") -> BayesFactorReport:
    """Report log BF = log Z_num - log Z_den."""
    for label, res in (("numerator", z_num), ("denominator", z_den)):
        if not math.isfinite(res.log_z):
            raise NonFiniteError(f"{label} log evidence is not finite ({res.log_z!r})")
    return BayesFactorReport(
        log_z_num=z_num.log_z,
        log_z_den=z_den.log_z,
        log_bf=z_num.log_z - z_den.log_z,
        recipe=recipe,
    )


def run_generator(seed: int, run_index: int = 0) -> np.random.Generator:
    """Independent stream for one Monte Carlo run: PCG64(seed + run_index)."""
    if seed is None:
        raise UsageError("stochastic computations need an explicit seed")
    return np.random.Generator(np.random.PCG64(int(seed) + int(run_index)))
