from __future__ import annotations

from conjugate.experiments import Exp1Config, run_exp1
from evidence.management.base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Gaussian-mean prior sweep: posterior curves and log Z against sigma0."

    experiment = "exp1"
    knobs_class = Exp1Config

    def run_experiment(self, config):
        return run_exp1(config.knobs)
