"""Occam factor, evidence bounds, information criteria and the box-prior penalty split.

Information criteria are reported as costs ``C`` (lower is better), unlike
log evidences where higher is better.
"""

from __future__ import annotations

import math
from enum import Enum
from typing import NamedTuple

from .core import UsageError

# log Z may exceed log l_max by float noise only.
OCCAM_SLACK = 1e-9
BOUNDS_SLACK = 1e-9


class CriterionKind(str, Enum):
    BIC = "bic"
    AIC = "aic"
    HQIC = "hqic"

    def eta(self, d_y: int) -> float:
        if self is CriterionKind.HQIC:
            if d_y < 2:
                raise UsageError(f"HQIC needs D_y >= 2 (got {d_y})")
            return math.log(math.log(d_y))
        if d_y < 1:
            raise UsageError(f"{self.value.upper()} needs D_y >= 1 (got {d_y})")
        if self is CriterionKind.BIC:
            return 0.5 * math.log(d_y)
        return 1.0


def occam_factor(log_z: float, log_like_max: float) -> float:
    """W = Z / l_max, in (0, 1]."""
    if log_z > log_like_max + OCCAM_SLACK:
        raise UsageError(
            f"log evidence {log_z!r} exceeds the maximum log-likelihood {log_like_max!r}; the evidence is wrong"
        )
    return math.exp(min(log_z - log_like_max, 0.0))


def info_criterion(log_like_max: float, d_theta: int, d_y: int, kind: CriterionKind | str) -> float:
    """C = -2 log l_max + 2 eta(D_y) D_theta."""
    kind = CriterionKind(kind)
    if d_theta < 1:
        raise UsageError(f"D_theta must be >= 1 (got {d_theta})")
    return -2.0 * log_like_max + 2.0 * kind.eta(d_y) * d_theta


def bounds_check(log_z: float, log_like_min_on_grid: float, log_like_max_on_grid: float) -> bool:
    """True iff l_min <= Z <= l_max (grid extrema) up to a small log slack."""
    return (log_like_min_on_grid - BOUNDS_SLACK) <= log_z <= (log_like_max_on_grid + BOUNDS_SLACK)


class PenaltySplit(NamedTuple):
    fitting: float
    penalty: float
    log_z: float


def box_penalty_decomposition(delta: float, d_theta: int, log_int_like_over_box: float) -> PenaltySplit:
    """Split the uniform box-prior evidence into fitting and complexity terms.

    With a prior uniform on a cube of side ``delta``:
    log Z = log int_B l - D_theta log delta.
    """
    if not delta > 0:
        raise UsageError(f"box side must be positive (got {delta})")
    fitting = float(log_int_like_over_box)
    penalty = -d_theta * math.log(delta)
    return PenaltySplit(fitting, penalty, fitting + penalty)


class CriteriaRow(NamedTuple):
    model: str
    log_z: float
    log_like_max: float
    occam: float
    bic: float
    aic: float
    hqic: float
    d_theta: int
    d_y: int


CRITERIA_HEADER = CriteriaRow._fields


def criteria_row(model: str, log_z: float, log_like_max: float, d_theta: int, d_y: int) -> CriteriaRow:
    """Evidence, Occam factor and the three costs for one fitted model; HQIC is NaN below D_y = 2."""
    return CriteriaRow(
        model=model,
        log_z=log_z,
        log_like_max=log_like_max,
        occam=occam_factor(log_z, log_like_max),
        bic=info_criterion(log_like_max, d_theta, d_y, CriterionKind.BIC),
        aic=info_criterion(log_like_max, d_theta, d_y, CriterionKind.AIC),
        hqic=info_criterion(log_like_max, d_theta, d_y, CriterionKind.HQIC) if d_y >= 2 else math.nan,
        d_theta=d_theta,
        d_y=d_y,
    )
