from __future__ import annotations

import math
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
from django.core.management import CommandError, call_command
from django.test import SimpleTestCase
from scipy.stats import multivariate_normal, norm

from evidence.core import LikelihoodTerm, UsageError, run_generator
from evidence.csv_output import read_csv
from evidence.objective import ClosedFormIntegrator, idea1_evidence, posterior_predictive_log
from evidence.quadrature import GridIntegrator, GridSpec, evidence_grid, log_integrate

from .experiments import (
    Exp1Config,
    averaged_bf01_vs_sigma,
    bf01_vs_sigma0,
    bf01_vs_sigma1,
    first_crossing,
    r2_vs_sigma,
    simulate_regression,
    z_vs_sigma0,
)
from .gaussian import (
    GaussianMeanModel,
    as_bayes_model,
    flat_bayes_model,
    gaussian_mean_log_evidence,
    gaussian_mean_posterior,
)
from .regression import (
    LinRegModel,
    SingularCovarianceError,
    linreg_log_evidence,
    prior_expected_r2,
    prior_expected_snr,
    uip_prior,
)
from .regression import as_bayes_model as linreg_bayes_model

Y_SINGLE = 2.078

X_REG = np.array([0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0])
# Noise-free responses of M1 (beta0 = beta1 = 1). With sigma = 0.2 and
# sigma0 = 1 the slope evidence works out to log BF10 = 7.572 - 0.5 log(sigma1^2 / 0.0707)
# for large sigma1, which turns negative near sigma1 = 516.
Y_REG = 1.0 + X_REG
SIGMA_REG = 0.2


def simulated_responses(seed: int, sigma_like: float = 1.0) -> np.ndarray:
    return simulate_regression(X_REG, 1.0, 1.0, sigma_like, run_generator(seed, 0))


def marginal_log_z(y, sigma_like: float, prior_sd) -> float:
    """log N(y; 0, sigma^2 I + X diag(sd^2) X^T) for the first len(prior_sd) design columns."""
    design = np.column_stack([np.ones_like(X_REG), X_REG])[:, : len(prior_sd)]
    cov = sigma_like**2 * np.eye(X_REG.size) + design @ np.diag(np.square(prior_sd)) @ design.T
    return float(multivariate_normal.logpdf(y, mean=np.zeros(X_REG.size), cov=cov))


class GaussianMeanPosteriorTests(SimpleTestCase):
    def test_diffuse_prior_gives_sample_mean(self) -> None:
        y = [1.0, 2.0, 3.5]
        mu_post, _ = gaussian_mean_posterior(GaussianMeanModel(1.0, 0.0, 1e12), y)

        self.assertAlmostEqual(mu_post, float(np.mean(y)), delta=1e-9)

    def test_prior_centred_on_single_datum(self) -> None:
        mu_post, sd_post = gaussian_mean_posterior(GaussianMeanModel(2.0, 0.7, 2.0), [0.7])

        self.assertAlmostEqual(mu_post, 0.7, places=12)
        self.assertAlmostEqual(sd_post, math.sqrt(2.0), places=12)

    def test_matches_grid_posterior_mean(self) -> None:
        model = GaussianMeanModel(1.0, 0.0, 3.0)
        bayes = as_bayes_model(model)
        grid = GridSpec.from_box([(-30.0, 30.0)], 6000, "midpoint")
        shift = 31.0

        def log_post(nodes):
            return bayes.log_like(nodes, [Y_SINGLE]) + bayes.log_prior(nodes)

        log_num = log_integrate(lambda nodes: np.log(nodes[:, 0] + shift) + log_post(nodes), grid)
        log_den = log_integrate(log_post, grid)
        grid_mean = math.exp(log_num - log_den) - shift

        self.assertAlmostEqual(gaussian_mean_posterior(model, [Y_SINGLE])[0], grid_mean, delta=1e-6)

    def test_empty_data_rejected(self) -> None:
        with self.assertRaises(UsageError):
            gaussian_mean_posterior(GaussianMeanModel(1.0), [])
        with self.assertRaises(UsageError):
            gaussian_mean_log_evidence(GaussianMeanModel(1.0), [])

    def test_non_positive_scales_rejected(self) -> None:
        with self.assertRaises(UsageError):
            GaussianMeanModel(0.0)
        with self.assertRaises(UsageError):
            GaussianMeanModel(1.0, 0.0, -1.0)


class GaussianMeanEvidenceTests(SimpleTestCase):
    def test_closed_form_matches_grid_across_prior_scales(self) -> None:
        for sigma0 in (0.5, 1.0, 3.0, 10.0, 100.0):
            with self.subTest(sigma0=sigma0):
                model = GaussianMeanModel(1.0, 0.0, sigma0)
                bayes = as_bayes_model(model)
                points = int(round(20.0 * sigma0 / 0.05))
                grid = GridSpec.from_box(bayes.space.window(), points, "midpoint")
                exact = gaussian_mean_log_evidence(model, [Y_SINGLE]).log_z
                approx = evidence_grid(bayes, [Y_SINGLE], grid).log_z

                self.assertLess(abs(approx - exact), 1e-6 * abs(exact))

    def test_log_evidence_decreases_with_prior_scale(self) -> None:
        values = [
            gaussian_mean_log_evidence(GaussianMeanModel(1.0, 0.0, s), [Y_SINGLE]).log_z
            for s in (3.0, 10.0, 100.0, 1e3, 1e4)
        ]

        self.assertTrue(all(b < a for a, b in zip(values, values[1:])), values)

    def test_posterior_mean_is_stable_for_diffuse_priors(self) -> None:
        at_100 = gaussian_mean_posterior(GaussianMeanModel(1.0, 0.0, 100.0), [Y_SINGLE])[0]
        at_1e4 = gaussian_mean_posterior(GaussianMeanModel(1.0, 0.0, 1e4), [Y_SINGLE])[0]

        self.assertLess(abs(at_100 - at_1e4), 1e-3)

    def test_degenerate_prior_gives_likelihood_at_prior_mean(self) -> None:
        log_z = gaussian_mean_log_evidence(GaussianMeanModel(1.0, 0.5, 1e-9), [Y_SINGLE]).log_z

        self.assertAlmostEqual(log_z, float(norm.logpdf(Y_SINGLE, 0.5, 1.0)), delta=1e-6)

    def test_closed_form_integrals_reproduce_plain_evidence(self) -> None:
        model = GaussianMeanModel(1.5, 0.3, 2.0)
        data = [0.1, 1.2, -0.4]
        via_integrator = ClosedFormIntegrator().log_integral(as_bayes_model(model), [LikelihoodTerm(data)], with_prior=True)

        self.assertAlmostEqual(via_integrator, gaussian_mean_log_evidence(model, data).log_z, places=10)


class LikelihoodPriorIdentityTests(SimpleTestCase):
    def test_idea1_single_datum_is_inverse_of_two_sigma_root_pi(self) -> None:
        sigma = 1.7
        expected = -math.log(2.0 * sigma * math.sqrt(math.pi))
        flat = flat_bayes_model(sigma, (Y_SINGLE - 25.0, Y_SINGLE + 25.0))

        exact = idea1_evidence(flat, [Y_SINGLE], ClosedFormIntegrator()).log_z
        gridded = idea1_evidence(flat, [Y_SINGLE], GridIntegrator(20000)).log_z

        self.assertAlmostEqual(exact, expected, places=12)
        self.assertAlmostEqual(gridded, expected, delta=1e-8)

    def test_flat_prior_predictive_of_own_data_equals_idea1(self) -> None:
        flat = flat_bayes_model(1.0, (-30.0, 30.0))
        data = [0.4, -1.1, 2.3]
        integrator = ClosedFormIntegrator()

        predictive = posterior_predictive_log(flat, data, data, integrator)

        self.assertAlmostEqual(predictive, idea1_evidence(flat, data, integrator).log_z, delta=1e-10)

    def test_posterior_predictive_matches_conjugate_predictive(self) -> None:
        model = GaussianMeanModel(1.0, 0.0, 2.0)
        data = [0.5, 1.5, 1.0]
        mu_post, sd_post = gaussian_mean_posterior(model, data)
        expected = float(norm.logpdf(2.2, mu_post, math.sqrt(sd_post**2 + 1.0)))

        value = posterior_predictive_log(as_bayes_model(model), data, [2.2], ClosedFormIntegrator())

        self.assertAlmostEqual(value, expected, delta=1e-8)


class LinearRegressionEvidenceTests(SimpleTestCase):
    def test_intercept_only_reduces_to_gaussian_mean(self) -> None:
        y = [0.3, 1.9, 1.1, 0.8]
        linreg = LinRegModel(np.ones((4, 1)), 0.7, prior_sd=(2.5,), prior_mean=np.array([0.4]))
        gaussian = GaussianMeanModel(0.7, 0.4, 2.5)

        self.assertAlmostEqual(
            linreg_log_evidence(linreg, y).log_z,
            gaussian_mean_log_evidence(gaussian, y).log_z,
            delta=1e-10,
        )

    def test_two_parameter_model_matches_grid(self) -> None:
        design = np.column_stack([np.ones(4), X_REG])
        model = LinRegModel(design, SIGMA_REG, prior_sd=(1.0, 1.0))
        bayes = linreg_bayes_model(model)
        grid = GridSpec.from_box(bayes.space.window(), 600, "midpoint")

        exact = linreg_log_evidence(model, Y_REG).log_z
        approx = evidence_grid(bayes, Y_REG, grid).log_z

        self.assertLess(abs(approx - exact), 1e-5 * abs(exact))

    def test_zero_prior_scale_is_reported_as_singular(self) -> None:
        model = LinRegModel(np.column_stack([np.ones(4), X_REG]), SIGMA_REG, prior_sd=(1.0, 0.0))

        with self.assertRaisesMessage(SingularCovarianceError, "prior_sd"):
            linreg_log_evidence(model, Y_REG)

    def test_mismatched_data_rejected(self) -> None:
        model = LinRegModel(np.ones((4, 1)), 1.0, prior_sd=(1.0,))

        with self.assertRaises(UsageError):
            linreg_log_evidence(model, [1.0, 2.0])


class RegressionSweepTests(SimpleTestCase):
    def test_shared_intercept_prior_reaches_a_plateau(self) -> None:
        rows = bf01_vs_sigma0(X_REG, Y_REG, SIGMA_REG, (1.0, 10.0, 100.0, 1e3, 1e4, 1e5, 1e6), 1.0)
        log_bf = {row[0]: row[3] for row in rows}

        self.assertLess(abs(log_bf[1e3] - log_bf[1e6]), 1e-3)
        self.assertTrue(all(value < 0.0 for value in log_bf.values()), log_bf)
        log_z0 = [row[1] for row in rows]
        log_z1 = [row[2] for row in rows]
        self.assertTrue(all(b < a for a, b in zip(log_z0[2:], log_z0[3:])))
        self.assertTrue(all(b < a for a, b in zip(log_z1[2:], log_z1[3:])))

    def test_slope_prior_scale_flips_the_bayes_factor(self) -> None:
        sigma1_values = (0.1, 1.0, 10.0, 100.0, 300.0, 1e3, 3e3, 1e4, 1e5)
        rows = bf01_vs_sigma1(X_REG, Y_REG, SIGMA_REG, sigma1_values, 1.0)
        crossing = first_crossing(rows)

        self.assertIsNotNone(crossing)
        self.assertGreater(crossing, 100.0)
        self.assertLess(crossing, 1e4)
        self.assertEqual(len({row[1] for row in rows}), 1)
        tail = [row[2] for row in rows if row[0] >= 10.0]
        self.assertTrue(all(b < a for a, b in zip(tail, tail[1:])))

    def test_sweeps_match_the_gaussian_marginal_on_simulated_data(self) -> None:
        for seed in range(5):
            y = simulated_responses(seed)
            for sigma0, log_z0, log_z1, log_bf01 in bf01_vs_sigma0(X_REG, y, 1.0, (0.5, 3.0, 10.0), 1.0):
                self.assertAlmostEqual(log_z0, marginal_log_z(y, 1.0, (sigma0,)), delta=1e-9)
                self.assertAlmostEqual(log_z1, marginal_log_z(y, 1.0, (sigma0, 1.0)), delta=1e-9)
                self.assertAlmostEqual(log_bf01, log_z0 - log_z1, delta=1e-12)
            for sigma1, _, log_z1, _ in bf01_vs_sigma1(X_REG, y, 1.0, (0.3, 3.0, 30.0), 1.0):
                self.assertAlmostEqual(log_z1, marginal_log_z(y, 1.0, (1.0, sigma1)), delta=1e-9)

    def test_simulated_data_plateau_and_eventual_flip(self) -> None:
        sigma1_values = (10.0, 100.0, 1e3, 1e4, 1e5)
        for seed in range(5):
            y = simulated_responses(seed)
            shared = {row[0]: row[3] for row in bf01_vs_sigma0(X_REG, y, 1.0, (10.0, 1e3, 1e4, 1e6), 1.0)}
            self.assertLess(abs(shared[10.0] - shared[1e4]), 0.05)
            self.assertLess(abs(shared[1e3] - shared[1e6]), 1e-3)

            rows = bf01_vs_sigma1(X_REG, y, 1.0, sigma1_values, 1.0)
            self.assertEqual(len({row[1] for row in rows}), 1)
            log_bf = [row[3] for row in rows]
            self.assertTrue(all(b > a for a, b in zip(log_bf, log_bf[1:])), log_bf)
            self.assertGreater(log_bf[-1], 0.0)
            self.assertIsNotNone(first_crossing(rows))

    def test_r2_curve_is_monotone_and_bounded(self) -> None:
        rows = r2_vs_sigma(X_REG, SIGMA_REG, (0.1, 1.0, 10.0), 2000, seed=11)

        for column in (1, 2):
            values = [row[column] for row in rows]
            self.assertTrue(all(0.0 <= v <= 1.0 for v in values))
            self.assertTrue(all(b >= a for a, b in zip(values, values[1:])), values)

    def test_averaged_sweep_is_reproducible_and_ordered(self) -> None:
        first = averaged_bf01_vs_sigma(X_REG, 1.0, 1.0, SIGMA_REG, (0.5, 2.0), 6, seed=3)
        again = averaged_bf01_vs_sigma(X_REG, 1.0, 1.0, SIGMA_REG, (0.5, 2.0), 6, seed=3, workers=3)

        self.assertEqual(first, again)
        self.assertEqual([row[0] for row in first], [0.5, 2.0])
        self.assertTrue(all(row[4] == 6 for row in first))


class PriorDiagnosticsTests(SimpleTestCase):
    def test_snr_vanishes_for_zero_design_or_zero_prior(self) -> None:
        self.assertEqual(prior_expected_snr(LinRegModel(np.zeros((5, 2)), 1.0, prior_sd=(1.0, 1.0))), 0.0)
        self.assertEqual(prior_expected_snr(LinRegModel(np.ones((5, 2)), 1.0, prior_sd=(0.0, 0.0))), 0.0)

    def test_snr_matches_monte_carlo(self) -> None:
        rng = np.random.Generator(np.random.PCG64(20240))
        design = rng.standard_normal((6, 2))
        model = LinRegModel(design, 1.0, prior_sd=(1.0, 2.0))
        theta = rng.standard_normal((100000, 2)) * np.array([1.0, 2.0])
        draws = np.sum((theta @ design.T) ** 2, axis=1) / 6.0
        standard_error = float(draws.std(ddof=1)) / math.sqrt(draws.size)

        self.assertLess(abs(float(draws.mean()) - prior_expected_snr(model)), 4.0 * standard_error)

    def test_unit_information_prior_snr_equals_parameter_count(self) -> None:
        rng = np.random.Generator(np.random.PCG64(5))
        for k in range(20):
            with self.subTest(design=k):
                design = rng.standard_normal((10, 3))
                model = LinRegModel(design, 1.3, prior_sd=(1.0, 1.0, 1.0))
                uip = model.with_prior(uip_prior(model, 0.0))

                self.assertAlmostEqual(prior_expected_snr(uip), 3.0, delta=1e-10)

    def test_unit_information_prior_values(self) -> None:
        self.assertAlmostEqual(float(uip_prior(GaussianMeanModel(2.0), 0.0).sd[0]), 2.0)
        cov = uip_prior(LinRegModel(np.eye(3), 1.0, prior_sd=(1.0, 1.0, 1.0)), 0.0).cov
        np.testing.assert_allclose(cov, 3.0 * np.eye(3), atol=1e-12)

    def test_unsupported_family_rejected(self) -> None:
        with self.assertRaises(UsageError):
            uip_prior(object(), 0.0)

    def test_r2_limits(self) -> None:
        design = np.column_stack([np.ones(4), X_REG])
        tiny = prior_expected_r2(LinRegModel(design, 1.0, prior_sd=(1e-8, 1e-8)), 1000, 1)
        huge = prior_expected_r2(LinRegModel(design, 1.0, prior_sd=(1e6, 1e6)), 1000, 1)

        self.assertLess(tiny, 1e-6)
        self.assertGreater(huge, 0.99)


class Exp1Tests(SimpleTestCase):
    def test_default_log_evidence_column_strictly_decreases(self) -> None:
        log_zs = [row[1] for row in z_vs_sigma0(Exp1Config())]

        self.assertTrue(all(b < a for a, b in zip(log_zs, log_zs[1:])))

    def test_single_prior_scale_gives_single_row(self) -> None:
        self.assertEqual(len(z_vs_sigma0(Exp1Config(sigma0_values=(3.0,)))), 1)


class ExperimentCommandTests(SimpleTestCase):
    def test_exp1_writes_identical_files_on_rerun(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            call_command("exp1", out=tmp, knob_theta_points="21", stdout=StringIO())
            first = {p.name: p.read_bytes() for p in Path(tmp).glob("*.csv")}
            call_command("exp1", out=tmp, knob_theta_points="21", stdout=StringIO())
            second = {p.name: p.read_bytes() for p in Path(tmp).glob("*.csv")}

        self.assertEqual(set(first), {"exp1_posteriors.csv", "exp1_z_vs_sigma0.csv"})
        self.assertEqual(first, second)
        header = first["exp1_z_vs_sigma0.csv"].decode().splitlines()[0]
        self.assertEqual(header, "sigma0,log_z,mu_post,sigma_post")
        self.assertNotIn(b"\r\n", first["exp1_posteriors.csv"])

    def test_exp2_requires_a_seed(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaisesMessage(CommandError, "seed"):
                call_command("exp2", out=tmp, stdout=StringIO())

    def test_exp2_seeded_run_is_reproducible(self) -> None:
        options = dict(seed=9, knob_n_runs="4", knob_r2_samples="200", stdout=StringIO())
        with tempfile.TemporaryDirectory() as tmp:
            call_command("exp2", out=tmp, **options)
            first = {p.name: p.read_bytes() for p in Path(tmp).glob("*.csv")}
            call_command("exp2", out=tmp, threads=2, **options)
            second = {p.name: p.read_bytes() for p in Path(tmp).glob("*.csv")}

        self.assertEqual(len(first), 5)
        self.assertEqual(first, second)

    def test_exp2_default_run_plateaus_and_flips(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            call_command("exp2", out=tmp, seed=4, knob_n_runs="3", knob_r2_samples="100", stdout=StringIO())
            _, data = read_csv(Path(tmp) / "exp2_data.csv")
            header0, sweep0 = read_csv(Path(tmp) / "exp2_bf01_vs_sigma0.csv")
            header1, sweep1 = read_csv(Path(tmp) / "exp2_bf01_vs_sigma1.csv")

        self.assertEqual(header0, ["sigma0", "log_z0", "log_z1", "log_bf01"])
        self.assertEqual(header1, ["sigma1", "log_z0", "log_z1", "log_bf01"])
        x = [float(row[0]) for row in data]
        y = np.array([float(row[1]) for row in data])
        np.testing.assert_allclose(x, X_REG, atol=1e-15)
        np.testing.assert_allclose(y, simulated_responses(4), atol=1e-12)

        shared = {float(row[0]): float(row[3]) for row in sweep0}
        self.assertLess(abs(shared[10.0] - shared[1e4]), 0.05)
        self.assertLess(abs(shared[1e3] - shared[1e6]), 1e-3)

        self.assertEqual(len({row[1] for row in sweep1}), 1)
        tail = [float(row[3]) for row in sweep1 if float(row[0]) >= 10.0]
        self.assertTrue(all(b > a for a, b in zip(tail, tail[1:])), tail)
        self.assertGreater(tail[-1], 0.0)

