from __future__ import annotations

import csv
import math
import tempfile
from dataclasses import dataclass, replace
from io import StringIO
from pathlib import Path
from typing import Optional

import numpy as np
from django.core.management import CommandError, call_command
from django.test import SimpleTestCase, override_settings
from scipy.special import gammainc, gammaln
from scipy.stats import norm

from conjugate.gaussian import (
    GaussianMeanModel,
    as_bayes_model,
    flat_bayes_model,
    gaussian_mean_log_evidence,
    log_likelihood,
)
from discrete.counts import PoissonModel, poisson_bayes_model

from .core import (
    Baseline,
    BayesModel,
    EvidenceMethod,
    EvidenceResult,
    NonFiniteError,
    ParamSpace,
    QuadratureBudgetExceeded,
    UsageError,
    bayes_factor,
    log_mean_exp,
    log_sum_exp,
    posterior_model_probs,
    run_generator,
)
from .criteria import (
    CriterionKind,
    bounds_check,
    box_penalty_decomposition,
    criteria_row,
    info_criterion,
    occam_factor,
)
from .csv_output import format_value, read_csv, write_csv
from .objective import (
    ClosedFormIntegrator,
    DataPartition,
    HyperPriorSpec,
    averaged_subset_evidence,
    combine_hierarchical,
    empirical_bayes,
    expected_posterior_prior_log,
    fractional_bf,
    fractional_evidence,
    hierarchical_evidence,
    idea1_evidence,
    intrinsic_bf,
    model_evidence,
    partial_bf,
    posterior_bf,
    power_prior_log,
    subset_prior_evidence,
    tempered_evidence,
    trapezoid_log_weights,
)
from .quadrature import GridIntegrator, GridSpec, evidence_grid, log_integrate, refine_until
from .runconfig import RunConfigError, build_run_config, coerce

DATA = [0.4, -1.1, 2.3, 0.9]


def constant_model(c: float) -> BayesModel:
    """Likelihood exp(c) everywhere on [0, 2] under a uniform prior."""
    return BayesModel(
        space=ParamSpace(lower=(0.0,), upper=(2.0,)),
        log_like=lambda theta, data: np.full(np.asarray(theta).shape[0], c),
        log_prior=lambda theta: np.full(np.asarray(theta).shape[0], -math.log(2.0)),
        name="constant",
    )


def sigma0_family(sigma0: float) -> BayesModel:
    return as_bayes_model(GaussianMeanModel(1.0, 0.0, sigma0))


def uniform_gaussian_model(lower: float, upper: float, sigma_like: float = 1.0) -> BayesModel:
    """Gaussian-mean likelihood under the proper uniform prior on [lower, upper]."""
    return BayesModel(
        space=ParamSpace(lower=(lower,), upper=(upper,)),
        log_like=lambda theta, data: log_likelihood(theta, data, sigma_like),
        log_prior=lambda theta: np.full(np.asarray(theta).shape[0], -math.log(upper - lower)),
        name="gaussian_mean_uniform",
    )


def midpoint_log_integral(log_f, lower: float, upper: float, points: int) -> float:
    step = (upper - lower) / points
    theta = lower + (np.arange(points) + 0.5) * step
    return log_sum_exp(log_f(theta)) + math.log(step)


class LogDomainTests(SimpleTestCase):
    def test_log_sum_exp(self) -> None:
        self.assertEqual(log_sum_exp([-math.inf, -math.inf]), -math.inf)
        self.assertAlmostEqual(log_sum_exp([0.0, 0.0]), math.log(2.0), places=15)
        self.assertAlmostEqual(log_sum_exp([1000.0, 1000.0]), 1000.0 + math.log(2.0), places=10)
        self.assertAlmostEqual(log_mean_exp([0.0, math.log(3.0)]), math.log(2.0), places=15)
        with self.assertRaises(NonFiniteError):
            log_sum_exp([0.0, math.nan])
        with self.assertRaises(UsageError):
            log_sum_exp([])

    def test_posterior_model_probabilities(self) -> None:
        np.testing.assert_allclose(posterior_model_probs([0.0, math.log(3.0)], [0.5, 0.5]), [0.25, 0.75], atol=1e-12)
        np.testing.assert_allclose(posterior_model_probs([5.0, 0.0], [0.0, 1.0]), [0.0, 1.0], atol=0.0)
        with self.assertRaises(UsageError):
            posterior_model_probs([0.0, 0.0], [0.5, 0.6])

    def test_bayes_factor_needs_finite_evidences(self) -> None:
        good = EvidenceResult(-1.0, EvidenceMethod.CLOSED_FORM)
        self.assertEqual(bayes_factor(good, EvidenceResult(-3.0, EvidenceMethod.GRID)).log_bf, 2.0)
        with self.assertRaises(NonFiniteError):
            bayes_factor(good, EvidenceResult(-math.inf, EvidenceMethod.GRID))

    def test_run_streams(self) -> None:
        expected = np.random.Generator(np.random.PCG64(7)).random(3)

        np.testing.assert_array_equal(run_generator(5, 2).random(3), expected)
        with self.assertRaises(UsageError):
            run_generator(None)

    def test_parameter_space_windows(self) -> None:
        with self.assertRaises(UsageError):
            ParamSpace(lower=(-math.inf,), upper=(math.inf,))
        with self.assertRaises(UsageError):
            ParamSpace(lower=(0.0,), upper=(1.0,), window_lower=(-1.0,), window_upper=(1.0,))
        self.assertTrue(
            ParamSpace(lower=(0.0,), upper=(math.inf,), window_lower=(0.0,), window_upper=(5.0,)).truncated
        )


class QuadratureTests(SimpleTestCase):
    def test_constant_integrand_gives_the_box_volume(self) -> None:
        grid = GridSpec.from_box([(0.0, 2.0), (0.0, 3.0)], 10, "midpoint")

        self.assertAlmostEqual(log_integrate(lambda x: np.zeros(x.shape[0]), grid), math.log(6.0), places=13)

    def test_gaussian_density_integrates_to_one(self) -> None:
        grid = GridSpec.from_box([(-10.0, 10.0)], 2001, "midpoint")

        self.assertAlmostEqual(log_integrate(lambda x: norm.logpdf(x[:, 0]), grid), 0.0, delta=1e-10)

    def test_trapezoid_is_exact_for_linear_integrands(self) -> None:
        grid = GridSpec.from_box([(1.0, 2.0)], 5, "trapezoid")

        self.assertAlmostEqual(log_integrate(lambda x: np.log(x[:, 0]), grid), math.log(1.5), places=13)

    @override_settings(EVIDENCE_GRID_BUDGET=100)
    def test_budget_is_enforced(self) -> None:
        with self.assertRaises(QuadratureBudgetExceeded):
            log_integrate(lambda x: np.zeros(x.shape[0]), GridSpec.from_box([(0.0, 1.0)] * 2, 11))

    @override_settings(EVIDENCE_GRID_CHUNK=7)
    def test_worker_count_does_not_change_the_value(self) -> None:
        grid = GridSpec.from_box([(-5.0, 5.0), (-5.0, 5.0)], 30, "midpoint")
        f = lambda x: norm.logpdf(x[:, 0]) + norm.logpdf(x[:, 1], 1.0, 2.0)

        self.assertEqual(log_integrate(f, grid), log_integrate(f, grid, workers=3))

    def test_refinement(self) -> None:
        f = lambda x: norm.logpdf(x[:, 0], 0.0, 0.1)

        converged = refine_until(f, [(-1.0, 1.0)], 1e-9, 10**5)
        capped = refine_until(f, [(-1.0, 1.0)], 1e-15, 16)

        self.assertTrue(converged.converged)
        self.assertAlmostEqual(converged.log_value, 0.0, delta=1e-8)
        self.assertFalse(capped.converged)
        self.assertEqual(capped.grid.points_per_dim, (16,))

    def test_improper_prior_grid_evidence_needs_acknowledgement(self) -> None:
        flat = flat_bayes_model(1.0, (-15.0, 15.0))
        grid = GridSpec.from_box(flat.space.window(), 3000, "midpoint")

        with self.assertRaises(UsageError):
            evidence_grid(flat, DATA, grid)
        result = evidence_grid(flat, DATA, grid, acknowledge_truncation=True)
        self.assertTrue(bounds_check(result.log_z - math.log(30.0), result.log_like_min, result.log_like_max))

    def test_step_resolution_follows_the_window(self) -> None:
        self.assertEqual(GridIntegrator(max_step=0.25).points_for(constant_model(0.0)), (8,))

    def test_delta_like_prior_gives_the_likelihood_at_its_point(self) -> None:
        model = uniform_gaussian_model(0.7 - 5e-7, 0.7 + 5e-7)

        result = evidence_grid(model, DATA, GridSpec.from_box(model.space.window(), 11, "midpoint"))

        self.assertAlmostEqual(result.log_z, float(norm.logpdf(DATA, 0.7, 1.0).sum()), delta=1e-8)
        self.assertTrue(bounds_check(result.log_z, result.log_like_min, result.log_like_max))


class ObjectiveTests(SimpleTestCase):
    flat = flat_bayes_model(1.0, (-15.0, 15.0))
    exact = ClosedFormIntegrator()
    grid = GridIntegrator(6000, rule="midpoint")

    def test_constant_likelihood_gives_its_value_for_every_beta(self) -> None:
        model = constant_model(-2.5)
        for beta in (1e-3, 0.5, 1.0, 3.0):
            with self.subTest(beta=beta):
                self.assertAlmostEqual(tempered_evidence(model, [0, 1], beta, self.grid).log_z, -2.5, places=12)

    def test_tempering_at_one_is_idea1(self) -> None:
        self.assertEqual(
            tempered_evidence(self.flat, DATA, 1.0, self.exact).log_z, idea1_evidence(self.flat, DATA, self.exact).log_z
        )

    def test_training_on_everything_gives_one(self) -> None:
        partition = DataPartition.from_train(range(len(DATA)), len(DATA))

        self.assertEqual(subset_prior_evidence(self.flat, DATA, partition, self.grid).log_z, 0.0)

    def test_ratio_and_split_routes_agree(self) -> None:
        partition = DataPartition.from_train([1, 2], len(DATA))

        ratio = subset_prior_evidence(self.flat, DATA, partition, self.grid).log_z
        split = subset_prior_evidence(self.flat, DATA, partition, self.grid, route="split").log_z

        self.assertAlmostEqual(ratio, split, delta=1e-8)
        self.assertAlmostEqual(ratio, subset_prior_evidence(self.flat, DATA, partition, self.exact).log_z, delta=1e-8)

    def test_partition_checks(self) -> None:
        with self.assertRaises(UsageError):
            subset_prior_evidence(self.flat, DATA, DataPartition((0, 1), (1, 2, 3)), self.exact)
        with self.assertRaises(UsageError):
            subset_prior_evidence(self.flat, DATA, DataPartition((), (0, 1, 2, 3)), self.exact)

    def test_single_partition_average_is_the_subset_evidence(self) -> None:
        partition = DataPartition.from_train([2], len(DATA))

        averaged = averaged_subset_evidence(self.flat, DATA, [partition, partition], self.exact).log_z

        self.assertAlmostEqual(averaged, subset_prior_evidence(self.flat, DATA, partition, self.exact).log_z, places=12)

    def test_ratio_constructions_ignore_the_improper_constant(self) -> None:
        rescaled = replace(self.flat, prior_log_scale=7.0)
        other = flat_bayes_model(2.0, (-15.0, 15.0))

        self.assertEqual(
            partial_bf(self.flat, other, DATA, [0], self.exact).log_bf,
            partial_bf(rescaled, other, DATA, [0], self.exact).log_bf,
        )
        self.assertAlmostEqual(
            model_evidence(rescaled, DATA, self.exact).log_z - model_evidence(self.flat, DATA, self.exact).log_z,
            7.0,
            places=12,
        )

    def test_identical_models_give_unit_bayes_factors(self) -> None:
        singletons = [(i,) for i in range(len(DATA))]

        self.assertAlmostEqual(intrinsic_bf(self.flat, self.flat, DATA, singletons, self.exact).log_bf, 0.0, places=14)
        self.assertEqual(fractional_bf(self.flat, self.flat, DATA, None, self.exact).log_bf, 0.0)
        self.assertEqual(posterior_bf(self.flat, self.flat, DATA, self.exact).log_bf, 0.0)

    def test_power_prior(self) -> None:
        self.assertEqual(power_prior_log(self.flat, [0.3], [], 0.5), 0.0)
        self.assertAlmostEqual(
            power_prior_log(self.flat, [0.3], [1.0], 0.5), 0.5 * float(norm.logpdf(1.0, 0.3, 1.0)), places=12
        )
        with self.assertRaises(UsageError):
            power_prior_log(self.flat, [0.3], [1.0], 1.0)

    def test_expected_posterior_prior_is_normalised(self) -> None:
        integrator = GridIntegrator(4000, rule="midpoint")
        nodes, log_w = GridSpec.from_box(self.flat.space.window(), 4000, "midpoint").axis(0)

        values = expected_posterior_prior_log(self.flat, nodes[:, None], [[0.5], [1.5, 2.0]], 0.5, integrator)

        self.assertAlmostEqual(log_sum_exp(values + log_w), 0.0, delta=1e-10)

    def test_hyperparameter_grid(self) -> None:
        best, result = empirical_bayes(sigma0_family, [3.0], (1.0, 2.0, 3.0, 4.0), self.exact)

        self.assertEqual(best, 3.0)
        self.assertAlmostEqual(result.log_z, float(norm.logpdf(3.0, 0.0, math.sqrt(10.0))), places=12)

    def test_hierarchical_combination(self) -> None:
        np.testing.assert_allclose(np.exp(trapezoid_log_weights([0.0, 1.0, 3.0])), [0.5, 1.5, 1.0])
        self.assertEqual(combine_hierarchical(HyperPriorSpec((2.0,)), [-4.0]), -4.0)
        self.assertAlmostEqual(
            combine_hierarchical(HyperPriorSpec((1.0, 2.0)), [0.0, math.log(3.0)]), math.log(2.0), places=14
        )

        hyper = HyperPriorSpec((1.0, 2.0, 3.0, 4.0))
        serial = hierarchical_evidence(sigma0_family, [3.0], hyper, self.exact, workers=1)
        threaded = hierarchical_evidence(sigma0_family, [3.0], hyper, self.exact, workers=3)
        self.assertEqual(serial.log_z, threaded.log_z)
        with self.assertRaises(UsageError):
            HyperPriorSpec((1.0, 1.0))


class FractionalAndTemperedTests(SimpleTestCase):
    flat = flat_bayes_model(1.0, (-15.0, 15.0))
    wide = flat_bayes_model(2.0, (-15.0, 15.0), name="gaussian_mean_wide")
    exact = ClosedFormIntegrator()
    grid = GridIntegrator(6000, rule="midpoint")

    def test_full_fraction_gives_unit_evidence(self) -> None:
        self.assertEqual(fractional_evidence(self.flat, DATA, 1.0, self.exact).log_z, 0.0)
        self.assertEqual(fractional_evidence(self.wide, DATA, 1.0, self.grid).log_z, 0.0)
        self.assertEqual(fractional_bf(self.flat, self.wide, DATA, 1.0, self.exact).log_bf, 0.0)

    def test_baseline_constant_cancels(self) -> None:
        base = Baseline(lambda theta: -0.5 * (theta[:, 0] / 5.0) ** 2)
        shifted = Baseline(lambda theta: -0.5 * (theta[:, 0] / 5.0) ** 2 + 7.0)

        reference = fractional_bf(self.flat, self.wide, DATA, 0.5, self.grid, base1=base, base2=base).log_bf
        scaled = fractional_bf(
            self.flat, self.wide, DATA, 0.5, self.grid, base1=base.scaled(7.0), base2=base.scaled(-3.0)
        ).log_bf
        kernel_shift = fractional_bf(self.flat, self.wide, DATA, 0.5, self.grid, base1=shifted, base2=base).log_bf

        self.assertEqual(scaled, reference)
        self.assertAlmostEqual(kernel_shift, reference, delta=1e-10)
        self.assertEqual(base.scaled(7.0).log_scale, 7.0)

    def test_half_fraction_matches_direct_quadrature(self) -> None:
        def direct(sigma: float) -> float:
            ll = lambda theta: norm.logpdf(np.asarray(DATA)[:, None], theta[None, :], sigma).sum(axis=0)
            full = midpoint_log_integral(ll, -15.0, 15.0, 30000)
            half = midpoint_log_integral(lambda theta: 0.5 * ll(theta), -15.0, 15.0, 30000)
            return full - half

        report = fractional_bf(self.flat, self.wide, DATA, 0.5, self.exact)

        self.assertAlmostEqual(report.log_bf, direct(1.0) - direct(2.0), delta=1e-8)

    def test_vanishing_temper_recovers_the_uniform_prior_evidence(self) -> None:
        model = uniform_gaussian_model(-5.0, 5.0)
        grid = GridIntegrator(4000, rule="midpoint")
        plain = model_evidence(model, DATA, grid).log_z

        gaps = [abs(tempered_evidence(model, DATA, beta, grid).log_z - plain) for beta in (1e-2, 1e-4, 1e-6)]

        self.assertLess(gaps[2], 1e-4)
        self.assertTrue(gaps[0] > gaps[1] > gaps[2], gaps)

    def test_normalised_power_prior_reproduces_tempered_evidence(self) -> None:
        grid = GridSpec.from_box(self.flat.space.window(), 6000, "midpoint")
        log_norm = log_integrate(lambda theta: power_prior_log(self.flat, theta, DATA, 0.5), grid)
        with_power_prior = replace(
            self.flat,
            log_prior=lambda theta: power_prior_log(self.flat, theta, DATA, 0.5) - log_norm,
            prior_is_proper=True,
        )

        self.assertAlmostEqual(
            evidence_grid(with_power_prior, DATA, grid).log_z,
            tempered_evidence(self.flat, DATA, 0.5, self.grid).log_z,
            delta=1e-8,
        )

    def test_leave_one_in_average_matches_direct_sum(self) -> None:
        counts = [1, 3, 0, 2]
        model = poisson_bayes_model(PoissonModel.uniform(10.0))
        partitions = [DataPartition.from_train([i], len(counts)) for i in range(len(counts))]

        def log_s(ys: list[int]) -> float:
            s, n = sum(ys), len(ys)
            return (
                float(gammaln(s + 1.0))
                - (s + 1.0) * math.log(n)
                + math.log(float(gammainc(s + 1.0, 10.0 * n)))
                - float(sum(gammaln(np.asarray(ys) + 1.0)))
                - math.log(10.0)
            )

        direct = math.log(np.mean([math.exp(log_s(counts) - log_s([y])) for y in counts]))
        averaged = averaged_subset_evidence(model, counts, partitions, self.exact, use_prior=True).log_z

        self.assertAlmostEqual(averaged, direct, places=12)


class CriteriaTests(SimpleTestCase):
    def test_information_criteria_arithmetic(self) -> None:
        self.assertAlmostEqual(info_criterion(0.0, 2, 100, "bic"), 2.0 * math.log(100.0), places=12)
        self.assertEqual(info_criterion(0.0, 2, 100, CriterionKind.AIC), 4.0)
        self.assertAlmostEqual(info_criterion(0.0, 2, math.exp(math.e), "hqic"), 4.0, places=12)
        with self.assertRaises(UsageError):
            info_criterion(0.0, 1, 1, "hqic")

    def test_occam_factor(self) -> None:
        self.assertEqual(occam_factor(-3.0, -3.0), 1.0)
        self.assertAlmostEqual(occam_factor(-5.0, -3.0), math.exp(-2.0), places=15)
        with self.assertRaises(UsageError):
            occam_factor(-2.0, -3.0)

    def test_bounds(self) -> None:
        self.assertTrue(bounds_check(-5.0, -5.0, -1.0))
        self.assertTrue(bounds_check(-1.0, -5.0, -1.0))
        self.assertFalse(bounds_check(-0.5, -5.0, -1.0))

    def test_box_penalty(self) -> None:
        unit = box_penalty_decomposition(1.0, 3, -2.0)
        doubled = box_penalty_decomposition(2.0, 3, -2.0)

        self.assertEqual(unit.penalty, 0.0)
        self.assertAlmostEqual(unit.penalty - doubled.penalty, 3.0 * math.log(2.0), places=14)
        self.assertEqual(doubled.fitting + doubled.penalty, doubled.log_z)

    def test_box_penalty_matches_grid_evidence(self) -> None:
        delta = 6.0
        like = lambda th: norm.logpdf(th[:, 0], 0.4, 1.0) + norm.logpdf(th[:, 1], -0.2, 0.7)
        box = [(-delta / 2.0, delta / 2.0)] * 2
        model = BayesModel(
            space=ParamSpace(lower=(-delta / 2.0,) * 2, upper=(delta / 2.0,) * 2),
            log_like=lambda th, data: like(th),
            log_prior=lambda th: np.full(th.shape[0], -2.0 * math.log(delta)),
        )
        grid = GridSpec.from_box(box, 400, "midpoint")

        split = box_penalty_decomposition(delta, 2, log_integrate(like, grid))

        self.assertAlmostEqual(split.log_z, evidence_grid(model, None, grid).log_z, delta=1e-8)

    def test_criteria_row(self) -> None:
        row = criteria_row("m", -4.0, -3.0, 1, 1)

        self.assertAlmostEqual(row.occam, math.exp(-1.0), places=15)
        self.assertEqual(row.aic, 8.0)
        self.assertTrue(math.isnan(row.hqic))

    def test_bic_and_evidence_pick_the_same_model(self) -> None:
        # Unit-information priors: sigma0 equals the likelihood sd.
        for d_y in (50, 100, 200):
            pattern = np.linspace(-1.0, 1.0, d_y)
            pattern = (pattern - pattern.mean()) / pattern.std()
            for spread in (1.0, 3.0):
                y = 0.2 + spread * pattern
                rows = [
                    criteria_row(
                        f"sigma={sigma:g}",
                        gaussian_mean_log_evidence(GaussianMeanModel(sigma, 0.0, sigma), y).log_z,
                        float(norm.logpdf(y, y.mean(), sigma).sum()),
                        1,
                        d_y,
                    )
                    for sigma in (1.0, 3.0)
                ]
                with self.subTest(d_y=d_y, spread=spread):
                    by_bic = min(rows, key=lambda row: row.bic).model
                    by_evidence = min(rows, key=lambda row: -2.0 * row.log_z).model
                    self.assertEqual(by_bic, by_evidence)
                    self.assertEqual(by_bic, f"sigma={spread:g}")


@dataclass(frozen=True)
class DemoKnobs:
    n_runs: int = 10
    l_values: tuple[float, ...] = (1.0,)
    label: str = "a"
    scale: Optional[float] = None


class RunConfigTests(SimpleTestCase):
    def build(self, text: str = "", **kwargs):
        with tempfile.TemporaryDirectory() as tmp:
            path = None
            if text:
                path = Path(tmp) / "run.ini"
                path.write_text(text, encoding="utf-8")
            kwargs.setdefault("environ", {})
            return build_run_config("demo", DemoKnobs, config_path=str(path) if path else None, **kwargs)

    def test_defaults(self) -> None:
        config = self.build()

        self.assertEqual(config.knobs, DemoKnobs())
        self.assertIsNone(config.seed)

    def test_flags_beat_environment_beat_file(self) -> None:
        text = "[run]\nseed = 3\n\n[demo]\nn_runs = 5\nl_values = 1, 2\nlabel = file  # inline comment\n"
        environ = {"EVIDENCE_DEMO_N_RUNS": "7", "EVIDENCE_SEED": "4"}

        from_env = self.build(text, environ=environ)
        from_flags = self.build(text, environ=environ, seed=5, flag_knobs={"n_runs": "9", "l_values": None})

        self.assertEqual((from_env.knobs.n_runs, from_env.seed), (7, 4))
        self.assertEqual(from_env.knobs.l_values, (1.0, 2.0))
        self.assertEqual(from_env.knobs.label, "file")
        self.assertEqual((from_flags.knobs.n_runs, from_flags.seed), (9, 5))

    def test_rejections(self) -> None:
        with self.assertRaises(RunConfigError):
            self.build("[demo]\nbogus = 1\n")
        with self.assertRaises(RunConfigError):
            self.build(require_seed=True)
        with self.assertRaises(RunConfigError):
            self.build(threads=0)
        with self.assertRaises(RunConfigError):
            build_run_config("demo", DemoKnobs, config_path="/nonexistent/run.ini", environ={})

    def test_coercion(self) -> None:
        self.assertEqual(coerce("1e3", int, "n"), 1000)
        self.assertEqual(coerce("0.5, 2", tuple[float, ...], "v"), (0.5, 2.0))
        self.assertIsNone(coerce("none", Optional[float], "s"))
        with self.assertRaises(RunConfigError):
            coerce("many", float, "s")


class CsvOutputTests(SimpleTestCase):
    def test_value_formatting(self) -> None:
        self.assertEqual(format_value(0.1), "0.10000000000000001")
        self.assertEqual(format_value(np.int64(3)), "3")
        self.assertEqual(format_value(True), "1")
        self.assertEqual(format_value(-math.inf), "-inf")
        for x in (math.pi, 1e-300, -2.5e17):
            self.assertEqual(float(format_value(x)), x)

    def test_failed_write_keeps_the_previous_table(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = write_csv(Path(tmp) / "t.csv", ("a", "b"), [(1, 0.5), (2, 0.25)])
            before = path.read_bytes()
            with self.assertRaises(ValueError):
                write_csv(path, ("a", "b"), [(1, 2), (3,)])
            leftovers = sorted(p.name for p in Path(tmp).iterdir())
            header, rows = read_csv(path)

            self.assertEqual(path.read_bytes(), before)
        self.assertNotIn(b"\r", before)
        self.assertEqual(leftovers, ["t.csv"])
        self.assertEqual(header, ["a", "b"])
        self.assertEqual(rows, [["1", "0.5"], ["2", "0.25"]])


class CriteriaCommandTests(SimpleTestCase):
    def run_command(self, tmp: str, **knobs) -> list[dict]:
        call_command("criteria", out=tmp, stdout=StringIO(), **knobs)
        name = f"criteria_{knobs.get('knob_model', 'gaussian_mean')}.csv"
        with (Path(tmp) / name).open(newline="") as handle:
            return list(csv.DictReader(handle))

    def test_gaussian_mean_occam_factor_shrinks_with_prior_width(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            rows = self.run_command(tmp)

        occam = {row["model"]: float(row["occam"]) for row in rows}
        self.assertEqual(len(rows), 5)
        self.assertTrue(all(0.0 < w <= 1.0 for w in occam.values()))
        self.assertLess(occam["gaussian_mean(sigma0=100)"], occam["gaussian_mean(sigma0=3)"])
        self.assertEqual(list(rows[0]), ["model", "log_z", "log_like_max", "occam", "bic", "aic", "hqic", "d_theta", "d_y"])

    def test_other_builtin_cases(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            counts = self.run_command(tmp, knob_model="poisson_geometric")
            regression = self.run_command(tmp, knob_model="linreg", knob_sigma0_values="1, 10")

        self.assertEqual([row["model"] for row in counts], ["poisson(L=10)", "geometric"])
        self.assertEqual(len(regression), 4)
        self.assertEqual({row["d_theta"] for row in regression}, {"1", "2"})

    def test_unknown_model_rejected(self) -> None:
        with tempfile.TemporaryDirectory() as tmp, self.assertRaises(CommandError):
            call_command("criteria", out=tmp, knob_model="cauchy", stdout=StringIO())
