from __future__ import annotations

from conjugate.experiments import Exp2Config, run_exp2
from evidence.management.base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Linear-regression Bayes factor BF01 against the prior scales, with prior-expected R^2."

    experiment = "exp2"
    knobs_class = Exp2Config
    stochastic = True

    def run_experiment(self, config):
        return run_exp2(config.knobs, config.seed, workers=config.threads)
