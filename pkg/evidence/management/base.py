"""Base class for the experiment commands (exp1..exp4, criteria).

Subclasses set ``experiment``, ``knobs_class`` and ``stochastic`` and
implement ``run_experiment``. Every table is computed before any file is
written, so a failing run leaves the output directory as it was.
"""

from __future__ import annotations

import dataclasses
import logging
import time

from django.core.management.base import BaseCommand, CommandError

from evidence.core import EvidenceError
from evidence.csv_output import Table, write_csv, write_text
from evidence.eventlog import log_event, log_exception
from evidence.runconfig import RunConfig, build_run_config, knob_names

logger = logging.getLogger("evidence.commands")


class ExperimentCommand(BaseCommand):
    experiment: str = ""
    knobs_class: type = None  # type: ignore[assignment]
    stochastic: bool = False

    def add_arguments(self, parser):
        parser.add_argument("--config", dest="config", default=None, help="INI-style config file")
        parser.add_argument("--seed", dest="seed", type=int, default=None, help="Base RNG seed")
        parser.add_argument("--out", dest="out", default=None, help="Output directory")
        parser.add_argument("--threads", dest="threads", type=int, default=None, help="Worker threads")
        for name in knob_names(self.knobs_class):
            parser.add_argument(
                "--" + name.replace("_", "-"),
                dest=f"knob_{name}",
                default=None,
                help=f"Override [{self.experiment}] {name}",
            )

    def run_experiment(self, config: RunConfig) -> list:
        raise NotImplementedError

    def handle(self, *args, **opts):
        flag_knobs = {name: opts.get(f"knob_{name}") for name in knob_names(self.knobs_class)}
        try:
            config = build_run_config(
                self.experiment,
                self.knobs_class,
                config_path=opts.get("config"),
                seed=opts.get("seed"),
                out=opts.get("out"),
                threads=opts.get("threads"),
                flag_knobs=flag_knobs,
                require_seed=self.stochastic,
            )
        except EvidenceError as exc:
            raise CommandError(str(exc)) from exc

        log_event(
            logger,
            "experiment.start",
            experiment=self.experiment,
            seed=config.seed,
            threads=config.threads,
            knobs=dataclasses.asdict(config.knobs),
        )
        started = time.monotonic()
        try:
            outputs = self.run_experiment(config)
        except (EvidenceError, RuntimeError) as exc:
            log_exception(logger, "experiment.failed", experiment=self.experiment)
            raise CommandError(f"{self.experiment} failed: {exc}") from exc

        written = []
        for item in outputs:
            if isinstance(item, Table):
                written.append(write_csv(config.out_dir / item.filename, item.header, item.rows))
            else:
                filename, text = item
                written.append(write_text(config.out_dir / filename, text))

        log_event(
            logger,
            "experiment.done",
            experiment=self.experiment,
            files=len(written),
            seconds=round(time.monotonic() - started, 3),
        )
        for path in written:
            self.stdout.write(self.style.SUCCESS(f"Wrote {path}"))
