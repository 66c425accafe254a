from __future__ import annotations

from evidence.cases import CriteriaConfig, run_criteria
from evidence.management.base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Log evidence, Occam factor and BIC/AIC/HQIC side by side for a built-in model."

    experiment = "criteria"
    knobs_class = CriteriaConfig

    def run_experiment(self, config):
        return run_criteria(config.knobs)
