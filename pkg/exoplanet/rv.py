"""Radial-velocity forward model, Gaussian likelihood, simulation and dataset files.

f_t = V0 + sum_i K_i [cos(u_i(t) + omega_i) + e_i cos(omega_i)], with u_i the
true anomaly at mean anomaly M = 2 pi (t - tau_i) / P_i. Times and periods
are in days, velocities in m/s.
"""

from __future__ import annotations

import configparser
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from evidence.core import UsageError
from evidence.csv_output import format_value, read_csv, write_csv, write_text
from evidence.eventlog import log_event

from .kepler import TWO_PI, solve_kepler_array, true_anomaly

logger = logging.getLogger("exoplanet.rv")

LOG_2PI = math.log(2.0 * math.pi)

_PLANET_KEYS = ("k", "omega", "e", "period", "tau")


@dataclass(frozen=True)
class Planet:
    k: float
    omega: float
    e: float
    period: float
    tau: float

    def __post_init__(self) -> None:
        if not self.k >= 0:
            raise UsageError(f"amplitude K must be >= 0 (got {self.k})")
        if not 0.0 <= self.e < 1.0:
            raise UsageError(f"eccentricity must lie in [0, 1) (got {self.e})")
        if not self.period > 0:
            raise UsageError(f"period must be positive (got {self.period})")


@dataclass(frozen=True)
class RvParams:
    v0: float
    planets: tuple[Planet, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "planets", tuple(self.planets))


@dataclass(frozen=True, eq=False)
class RvDataset:
    times: np.ndarray
    values: np.ndarray
    sigma_e: float
    params: Optional[RvParams] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=float).ravel()
        y = np.asarray(self.values, dtype=float).ravel()
        if t.size != y.size:
            raise UsageError(f"{t.size} epochs for {y.size} velocities")
        if t.size and np.any(np.diff(t) <= 0):
            raise UsageError("epochs must be strictly increasing")
        if not self.sigma_e >= 0:
            raise UsageError(f"sigma_e must be >= 0 (got {self.sigma_e})")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", y)
        object.__setattr__(self, "sigma_e", float(self.sigma_e))

    def __len__(self) -> int:
        return self.times.size

    def subset(self, indices: Sequence[int]) -> "RvDataset":
        idx = np.sort(np.asarray(list(indices), dtype=int))
        return RvDataset(self.times[idx], self.values[idx], self.sigma_e, self.params)

    def head(self, n: int) -> "RvDataset":
        return self.subset(range(n))


def planet_signal(planet: Planet, periods, times) -> np.ndarray:
    """Keplerian signal for every (period, time) pair, shaped (len(periods), len(times)).

    ``periods`` replaces the planet's own period; the other elements stay fixed.
    """
    periods = np.atleast_1d(np.asarray(periods, dtype=float))
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(periods <= 0):
        raise UsageError("periods must be positive")
    mean_anomaly = TWO_PI * (times[None, :] - planet.tau) / periods[:, None]
    E = solve_kepler_array(mean_anomaly, planet.e)
    u = true_anomaly(E, planet.e)
    return planet.k * (np.cos(u + planet.omega) + planet.e * math.cos(planet.omega))


def rv_model(params: RvParams, t) -> np.ndarray:
    times = np.atleast_1d(np.asarray(t, dtype=float))
    values = np.full(times.shape, float(params.v0))
    for planet in params.planets:
        values = values + planet_signal(planet, planet.period, times)[0]
    return values


def gaussian_log_likelihood(residuals: np.ndarray, sigma_e: float) -> float:
    if not sigma_e > 0:
        raise UsageError(f"likelihood needs sigma_e > 0 (got {sigma_e})")
    r = np.asarray(residuals, dtype=float)
    var = sigma_e**2
    return -0.5 * r.size * (LOG_2PI + math.log(var)) - float(r @ r) / (2.0 * var)


def rv_log_likelihood(params: RvParams, dataset: RvDataset) -> float:
    """sum_t log Normal(y_t | f_t(params), sigma_e^2)."""
    return gaussian_log_likelihood(dataset.values - rv_model(params, dataset.times), dataset.sigma_e)


def jittered_epochs(n: int, span: float, jitter: float) -> np.ndarray:
    """Regular cadence over [0, span] shifted by deterministic offsets in [0, jitter).

    Offsets follow the golden-ratio sequence, which breaks the exact period
    aliases of an evenly spaced design while keeping the epochs reproducible.
    """
    if n < 2:
        raise UsageError(f"need at least 2 epochs (got {n})")
    if not span > 0 or not 0.0 <= jitter < span / (n - 1):
        raise UsageError(f"need span > 0 and 0 <= jitter < span/(n-1) (got {span}, {jitter})")
    step = (span - jitter) / (n - 1)
    golden = (math.sqrt(5.0) - 1.0) / 2.0
    offsets = jitter * np.mod(np.arange(n) * golden, 1.0)
    return np.arange(n) * step + offsets


def simulate_rv(
    params: RvParams,
    times,
    sigma_e: float,
    rng: Union[int, np.random.Generator],
) -> RvDataset:
    """y_t = f_t(params) + Normal(0, sigma_e^2) noise; ``sigma_e = 0`` gives the noiseless curve."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.Generator(np.random.PCG64(rng))
    times = np.asarray(times, dtype=float)
    clean = rv_model(params, times)
    noise = rng.standard_normal(times.size) * sigma_e
    return RvDataset(times, clean + noise, sigma_e, params)


# -----------------------------------------------------------------------------
# Files: t,y CSV plus a key = value sidecar
# -----------------------------------------------------------------------------


def sidecar_path(path: Path | str) -> Path:
    return Path(path).with_suffix(".ini")


def dataset_sidecar(dataset: RvDataset) -> str:
    lines = ["[dataset]", f"sigma_e = {format_value(dataset.sigma_e)}"]
    if dataset.params is not None:
        lines.append(f"v0 = {format_value(dataset.params.v0)}")
        lines.append(f"planets = {len(dataset.params.planets)}")
        for i, planet in enumerate(dataset.params.planets, start=1):
            lines.append(f"[planet{i}]")
            lines.extend(f"{key} = {format_value(getattr(planet, key))}" for key in _PLANET_KEYS)
    return "\n".join(lines) + "\n"


def write_rv_dataset(path: Path | str, dataset: RvDataset) -> Path:
    path = write_csv(path, ("t", "y"), zip(dataset.times, dataset.values))
    write_text(sidecar_path(path), dataset_sidecar(dataset))
    return path


def read_rv_dataset(path: Path | str) -> RvDataset:
    path = Path(path)
    header, rows = read_csv(path)
    if tuple(header) != ("t", "y"):
        raise UsageError(f"{path}: expected header t,y (got {','.join(header)})")
    side = sidecar_path(path)
    if not side.exists():
        raise UsageError(f"{path}: missing sidecar {side.name}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.read(side, encoding="utf-8")
    try:
        section = parser["dataset"]
        sigma_e = float(section["sigma_e"])
        params = None
        if "v0" in section:
            planets = tuple(
                Planet(**{key: float(parser[f"planet{i}"][key]) for key in _PLANET_KEYS})
                for i in range(1, int(section.get("planets", "0")) + 1)
            )
            params = RvParams(float(section["v0"]), planets)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"{side}: malformed sidecar ({exc})") from exc

    data = np.asarray(rows, dtype=float).reshape(-1, 2)
    log_event(logger, "rv.dataset_read", path=str(path), epochs=int(data.shape[0]))
    return RvDataset(data[:, 0], data[:, 1], sigma_e, params)
