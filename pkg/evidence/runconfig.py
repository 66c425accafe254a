"""Run configuration for the experiment commands.

A config file is line-oriented ``key = value`` text with one ``[section]``
per experiment plus a ``[run]`` section::

    [run]
    seed = 2024
    out = results/
    threads = 4

    [exp3]
    n_runs = 100
    l_values = 10, 100, 1000

Precedence, lowest first: built-in defaults, config file, environment
(``EVIDENCE_<SECTION>_<KEY>``; ``EVIDENCE_SEED``, ``EVIDENCE_OUTPUT_DIR``,
``EVIDENCE_THREADS`` for the run section), command-line flags.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
import types
import typing
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional

from .core import EvidenceError, setting


_UNION_ORIGINS = {typing.Union, getattr(types, "UnionType", typing.Union)}


class RunConfigError(EvidenceError):
    """Raised for unreadable config files and values that do not parse."""


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    seed: Optional[int]
    out_dir: Path
    threads: int
    knobs: Any
    config_path: Optional[Path] = None


def env_prefix() -> str:
    return str(setting("EVIDENCE_ENV_PREFIX", "EVIDENCE_"))


def read_config_file(path: Path | str) -> dict[str, dict[str, str]]:
    path = Path(path).expanduser()
    if not path.exists():
        raise RunConfigError(f"Config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise RunConfigError(f"Cannot parse config file {path}: {exc}") from exc
    return {section: dict(parser.items(section)) for section in parser.sections()}


def _split_list(raw: str) -> list[str]:
    return [part.strip() for part in raw.split(",") if part.strip()]


def coerce(raw: Any, annotation: Any, name: str) -> Any:
    """Parse a text value into the type a knob is declared with."""
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    origin = typing.get_origin(annotation)
    args = typing.get_args(annotation)
    try:
        if origin in _UNION_ORIGINS:
            inner = [a for a in args if a is not type(None)]
            if text.lower() in {"", "none"}:
                return None
            return coerce(text, inner[0], name)
        if origin in (tuple, list):
            item_type = args[0] if args else str
            return tuple(coerce(part, item_type, name) for part in _split_list(text))
        if annotation is bool:
            if text.lower() in {"1", "true", "yes", "on"}:
                return True
            if text.lower() in {"0", "false", "no", "off"}:
                return False
            raise ValueError(text)
        if annotation is int:
            return int(float(text)) if "e" in text.lower() else int(text)
        if annotation is float:
            return float(text)
    except (TypeError, ValueError, IndexError) as exc:
        raise RunConfigError(f"Invalid value for {name}: {raw!r}") from exc
    return text


def knob_names(knobs_class: type) -> list[str]:
    return [f.name for f in dataclasses.fields(knobs_class)]


def build_run_config(
    experiment: str,
    knobs_class: type,
    *,
    config_path: Optional[str] = None,
    seed: Optional[int] = None,
    out: Optional[str] = None,
    threads: Optional[int] = None,
    flag_knobs: Optional[Mapping[str, Optional[str]]] = None,
    environ: Optional[Mapping[str, str]] = None,
    require_seed: bool = False,
) -> RunConfig:
    environ = os.environ if environ is None else environ
    prefix = env_prefix()
    sections = read_config_file(config_path) if config_path else {}
    hints = typing.get_type_hints(knobs_class)

    run: dict[str, Any] = {
        "seed": None,
        "out": str(setting("EVIDENCE_OUTPUT_DIR", "results")),
        "threads": int(setting("EVIDENCE_THREADS", 1)),
    }
    run.update({k: v for k, v in sections.get("run", {}).items() if k in run})
    for key, env_name in (("seed", "SEED"), ("out", "OUTPUT_DIR"), ("threads", "THREADS")):
        if prefix + env_name in environ:
            run[key] = environ[prefix + env_name]
    for key, value in (("seed", seed), ("out", out), ("threads", threads)):
        if value is not None:
            run[key] = value

    values: dict[str, Any] = {}
    file_section = sections.get(experiment, {})
    unknown = set(file_section) - set(hints)
    if unknown:
        raise RunConfigError(f"Unknown keys in [{experiment}]: {', '.join(sorted(unknown))}")
    values.update(file_section)
    for name in hints:
        env_name = f"{prefix}{experiment.upper()}_{name.upper()}"
        if env_name in environ:
            values[name] = environ[env_name]
    for name, value in (flag_knobs or {}).items():
        if value is not None:
            values[name] = value

    typed = {name: coerce(value, hints[name], name) for name, value in values.items()}
    try:
        knobs = knobs_class(**typed)
    except (TypeError, ValueError) as exc:
        raise RunConfigError(f"Invalid [{experiment}] configuration: {exc}") from exc

    seed_value = coerce(run["seed"], Optional[int], "seed")
    if require_seed and seed_value is None:
        raise RunConfigError(f"{experiment} is stochastic: pass --seed, set {prefix}SEED or seed in [run]")
    threads_value = coerce(run["threads"], int, "threads")
    if threads_value < 1:
        raise RunConfigError(f"threads must be >= 1 (got {threads_value})")

    return RunConfig(
        experiment=experiment,
        seed=seed_value,
        out_dir=Path(str(run["out"])).expanduser(),
        threads=threads_value,
        knobs=knobs,
        config_path=Path(config_path) if config_path else None,
    )
