from __future__ import annotations

from evidence.management.base import ExperimentCommand
from exoplanet.evidence import Exp4Config, run_exp4


class Command(ExperimentCommand):
    help = "Zero against one planet: BF10 versus P_max, the hierarchical P_max evidence and likelihood-based priors."

    experiment = "exp4"
    knobs_class = Exp4Config
    stochastic = True

    def run_experiment(self, config):
        return run_exp4(config.knobs, config.seed, workers=config.threads)
