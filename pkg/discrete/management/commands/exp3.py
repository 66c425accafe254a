from __future__ import annotations

from discrete.experiments import Exp3Config, run_exp3
from evidence.management.base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Poisson against geometric: Lindley error counts and intrinsic Bayes factors."

    experiment = "exp3"
    knobs_class = Exp3Config
    stochastic = True

    def run_experiment(self, config):
        return run_exp3(config.knobs, config.seed, workers=config.threads)
