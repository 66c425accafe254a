"""Kepler's equation E - e sin E = M by Newton-Raphson, and the true anomaly."""

from __future__ import annotations

import logging
import math
from typing import NamedTuple, Optional

import numpy as np

from evidence.core import UsageError, setting
from evidence.eventlog import log_event

logger = logging.getLogger("exoplanet.kepler")

TWO_PI = 2.0 * math.pi

# Above this eccentricity Newton starts from E = pi instead of E = M.
HIGH_ECCENTRICITY = 0.8


class KeplerConvergenceError(RuntimeError):
    """Newton iteration did not reach the tolerance; carries the last residual."""

    def __init__(self, message: str, residual: float) -> None:
        super().__init__(message)
        self.residual = residual


class KeplerSolution(NamedTuple):
    E: float
    residual: float
    iterations: int


def _check_eccentricity(e: float) -> float:
    e = float(e)
    if not 0.0 <= e < 1.0:
        raise UsageError(f"eccentricity must lie in [0, 1) (got {e})")
    return e


def _limits(tol: Optional[float], max_iter: Optional[int]) -> tuple[float, int]:
    tol = float(tol if tol is not None else setting("KEPLER_TOL", 1e-12))
    max_iter = int(max_iter if max_iter is not None else setting("KEPLER_MAX_ITER", 50))
    if not tol > 0 or max_iter < 1:
        raise UsageError(f"need tol > 0 and max_iter >= 1 (got {tol}, {max_iter})")
    return tol, max_iter


def solve_kepler(M: float, e: float, tol: Optional[float] = None, max_iter: Optional[int] = None) -> KeplerSolution:
    """Eccentric anomaly for mean anomaly ``M`` (radians).

    ``M`` is reduced to [0, 2 pi) and the whole turns are added back, so
    E(M + 2 pi) = E(M) + 2 pi. The reported residual is that of the reduced
    equation.
    """
    e = _check_eccentricity(e)
    tol, max_iter = _limits(tol, max_iter)
    M = float(M)
    if not math.isfinite(M):
        raise UsageError(f"mean anomaly must be finite (got {M})")
    if e == 0.0:
        return KeplerSolution(M, 0.0, 1)

    turns = math.floor(M / TWO_PI)
    m = M - turns * TWO_PI
    E = m if e < HIGH_ECCENTRICITY else math.pi
    residual = math.inf
    for iteration in range(1, max_iter + 1):
        f = E - e * math.sin(E) - m
        residual = abs(f)
        if residual < tol:
            return KeplerSolution(E + turns * TWO_PI, residual, iteration)
        E -= f / (1.0 - e * math.cos(E))

    log_event(logger, "kepler.no_convergence", level="warning", M=M, e=e, residual=residual)
    raise KeplerConvergenceError(
        f"Kepler solve did not converge: M={M!r}, e={e!r}, residual={residual:.3e} after {max_iter} iterations",
        residual,
    )


def solve_kepler_array(M, e: float, tol: Optional[float] = None, max_iter: Optional[int] = None) -> np.ndarray:
    """Vectorised ``solve_kepler`` for an array of mean anomalies and one eccentricity."""
    e = _check_eccentricity(e)
    tol, max_iter = _limits(tol, max_iter)
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise UsageError("mean anomalies must be finite")
    if e == 0.0:
        return M.copy()

    # Newton runs on the flattened anomalies; the input shape is restored on return.
    shape = M.shape
    M = M.ravel()
    turns = np.floor(M / TWO_PI)
    m = M - turns * TWO_PI
    E = m.copy() if e < HIGH_ECCENTRICITY else np.full_like(m, math.pi)
    active = np.ones(m.shape, dtype=bool)
    worst = math.inf
    for _ in range(max_iter):
        Ea, ma = E[active], m[active]
        f = Ea - e * np.sin(Ea) - ma
        done = np.abs(f) < tol
        step = np.where(done, 0.0, f / (1.0 - e * np.cos(Ea)))
        E[active] = Ea - step
        idx = np.flatnonzero(active)
        active[idx[done]] = False
        if not active.any():
            return (E + turns * TWO_PI).reshape(shape)
        worst = float(np.max(np.abs(f[~done])))

    log_event(logger, "kepler.no_convergence", level="warning", e=e, unresolved=int(active.sum()), residual=worst)
    raise KeplerConvergenceError(
        f"Kepler solve did not converge for {int(active.sum())} anomalies at e={e!r}: residual {worst:.3e}",
        worst,
    )


def true_anomaly(E, e: float):
    """u = 2 atan2(sqrt(1 + e) sin(E/2), sqrt(1 - e) cos(E/2)), in (-pi, pi]."""
    e = _check_eccentricity(e)
    half = np.asarray(E, dtype=float) / 2.0
    u = 2.0 * np.arctan2(math.sqrt(1.0 + e) * np.sin(half), math.sqrt(1.0 - e) * np.cos(half))
    return float(u) if np.ndim(u) == 0 else u
