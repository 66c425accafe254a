from __future__ import annotations

import math
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
from django.core.management import call_command
from django.test import SimpleTestCase
from scipy.special import gammainc, gammaln

from evidence.core import UnsupportedIntegral, UsageError, run_generator
from evidence.objective import ClosedFormIntegrator, model_evidence
from evidence.quadrature import GridIntegrator

from .counts import (
    PoissonModel,
    SimulationParameterError,
    geometric_bayes_model,
    geometric_log_evidence,
    log_gammainc_lower,
    poisson_bayes_model,
    poisson_log_evidence,
    sample_geometric,
    sample_poisson,
)
from .experiments import Exp3Config, ibf_experiment, lindley_sweep, log_ibf12

L_VALUES = (10.0, 100.0, 1e3, 1e4, 1e5, 1e6)


class IncompleteGammaTests(SimpleTestCase):
    def test_matches_scipy_in_the_normal_range(self) -> None:
        for a, x in ((1.0, 0.3), (5.0, 1.0), (5.0, 12.0), (40.0, 38.0)):
            with self.subTest(a=a, x=x):
                self.assertAlmostEqual(log_gammainc_lower(a, x), math.log(gammainc(a, x)), places=12)

    def test_near_one_is_resolved_through_the_upper_tail(self) -> None:
        # P(1, x) = 1 - exp(-x)
        self.assertAlmostEqual(log_gammainc_lower(1.0, 30.0), math.log1p(-math.exp(-30.0)), places=15)

    def test_underflowing_values_stay_finite(self) -> None:
        a, x = 200.0, 1e-3
        leading = a * math.log(x) - x - float(gammaln(a + 1.0))

        value = log_gammainc_lower(a, x)

        self.assertTrue(math.isfinite(value))
        self.assertAlmostEqual(value, leading, delta=1e-4)

    def test_edge_arguments(self) -> None:
        self.assertEqual(log_gammainc_lower(2.0, 0.0), -math.inf)
        self.assertEqual(log_gammainc_lower(2.0, math.inf), 0.0)
        with self.assertRaises(UsageError):
            log_gammainc_lower(0.0, 1.0)


class PoissonEvidenceTests(SimpleTestCase):
    def test_improper_single_datum_evidence_is_one(self) -> None:
        for y in (0, 1, 3, 17):
            with self.subTest(y=y):
                self.assertEqual(poisson_log_evidence([y], PoissonModel.improper()).log_z, 0.0)

    def test_bounded_zero_count(self) -> None:
        upper = 2.0
        expected = math.log((1.0 - math.exp(-upper)) / upper)

        self.assertAlmostEqual(poisson_log_evidence([0], PoissonModel.uniform(upper)).log_z, expected, places=12)

    def test_wide_bound_is_improper_evidence_minus_log_bound(self) -> None:
        data = [1, 2, 0, 4, 2, 3]
        improper = poisson_log_evidence(data, PoissonModel.improper()).log_z
        bounded = poisson_log_evidence(data, PoissonModel.uniform(1e6)).log_z

        self.assertAlmostEqual(bounded, improper - math.log(1e6), delta=1e-9)

    def test_bounded_closed_form_matches_grid(self) -> None:
        data = np.array([3, 1, 4])
        model = poisson_bayes_model(PoissonModel.uniform(50.0))

        exact = model_evidence(model, data, ClosedFormIntegrator()).log_z
        grid = model_evidence(model, data, GridIntegrator(20000, rule="midpoint")).log_z

        self.assertAlmostEqual(exact, grid, delta=1e-8)

    def test_improper_prior_needs_data(self) -> None:
        with self.assertRaises(UnsupportedIntegral):
            PoissonModel.improper().log_integral([])

    def test_invalid_inputs_rejected(self) -> None:
        with self.assertRaises(UsageError):
            PoissonModel.uniform(0.0)
        with self.assertRaises(UsageError):
            poisson_log_evidence([1, -2], PoissonModel.improper())
        with self.assertRaises(UsageError):
            poisson_log_evidence([1.5], PoissonModel.improper())


class GeometricEvidenceTests(SimpleTestCase):
    def test_small_closed_forms(self) -> None:
        self.assertAlmostEqual(geometric_log_evidence([0]).log_z, math.log(0.5), places=14)
        self.assertAlmostEqual(geometric_log_evidence([1]).log_z, math.log(1.0 / 6.0), places=14)

    def test_closed_form_matches_grid(self) -> None:
        data = np.array([2, 3])
        model = geometric_bayes_model()

        grid = model_evidence(model, data, GridIntegrator(10000, rule="midpoint")).log_z

        self.assertAlmostEqual(geometric_log_evidence(data).log_z, grid, delta=1e-10)
        self.assertAlmostEqual(grid, math.log(1.0 / 168.0), delta=1e-10)


class SamplerTests(SimpleTestCase):
    def test_same_seed_same_draws(self) -> None:
        first = sample_poisson(2.0, run_generator(7, 0), size=50)
        again = sample_poisson(2.0, run_generator(7, 0), size=50)
        other = sample_poisson(2.0, run_generator(7, 1), size=50)

        np.testing.assert_array_equal(first, again)
        self.assertFalse(np.array_equal(first, other))

    def test_poisson_sample_mean(self) -> None:
        theta = 3.5
        draws = sample_poisson(theta, run_generator(1), size=10**6)

        self.assertLess(abs(float(draws.mean()) - theta), 3.0 * math.sqrt(theta / draws.size))
        self.assertTrue(np.all(draws >= 0))

    def test_geometric_sample_mean(self) -> None:
        phi = 0.3
        draws = sample_geometric(phi, run_generator(2), size=10**6)
        sd = math.sqrt((1.0 - phi) / phi**2)

        self.assertLess(abs(float(draws.mean()) - (1.0 - phi) / phi), 4.0 * sd / math.sqrt(draws.size))

    def test_geometric_near_one_gives_zeros(self) -> None:
        draws = sample_geometric(1.0 - 1e-15, run_generator(3), size=1000)

        self.assertEqual(int(draws.max()), 0)

    def test_scalar_draws_are_ints(self) -> None:
        self.assertIsInstance(sample_poisson(2.0, run_generator(4)), int)
        self.assertIsInstance(sample_geometric(0.5, run_generator(4)), int)

    def test_parameters_outside_support_rejected(self) -> None:
        rng = run_generator(0)
        for call in (
            lambda: sample_poisson(0.0, rng),
            lambda: sample_poisson(math.inf, rng),
            lambda: sample_geometric(0.0, rng),
            lambda: sample_geometric(1.0, rng),
        ):
            with self.assertRaises(SimulationParameterError):
                call()


class LindleySweepTests(SimpleTestCase):
    def test_errors_grow_with_the_prior_bound(self) -> None:
        sweep = lindley_sweep(2.0, 30, L_VALUES, 100, seed=2024)
        errors = [row.errors for row in sweep.rows]

        self.assertLessEqual(sweep.errors(10.0, 30), 10)
        self.assertGreaterEqual(sweep.errors(1e6, 30), 90)
        self.assertEqual(errors, sorted(errors))
        self.assertTrue(all(row.runs == 100 and row.seed == 2024 for row in sweep.rows))

    def test_more_data_resists_wide_priors(self) -> None:
        sweep = lindley_sweep(2.0, 100, L_VALUES, 100, seed=2024)

        self.assertTrue(all(row.errors <= 12 for row in sweep.rows), [row.errors for row in sweep.rows])

    def test_worker_count_does_not_change_results(self) -> None:
        serial = lindley_sweep(2.0, 10, (10.0, 1e4), 12, seed=5)
        threaded = lindley_sweep(2.0, 10, (10.0, 1e4), 12, seed=5, workers=3)

        self.assertEqual(serial, threaded)

    def test_min_and_max_bound_the_runs(self) -> None:
        row = lindley_sweep(2.0, 20, (100.0,), 10, seed=8).rows[0]

        self.assertLessEqual(row.min_bf, row.max_bf)
        self.assertTrue(0 <= row.errors <= row.runs)

    def test_zero_runs_rejected(self) -> None:
        with self.assertRaises(UsageError):
            lindley_sweep(2.0, 30, L_VALUES, 0, seed=1)


class IntrinsicBayesFactorTests(SimpleTestCase):
    def test_identical_models_give_one(self) -> None:
        geometric = geometric_bayes_model()

        value = log_ibf12([0, 2, 1, 5], "symmetric", model1=geometric, model2=geometric)

        self.assertEqual(value, 0.0)

    def test_one_sided_value_is_poisson_against_geometric_evidence(self) -> None:
        # The improper-flat Poisson evidence of a single datum is 1.
        data = [1, 3, 0, 2]
        expected = (
            poisson_log_evidence(data, PoissonModel.improper()).log_z - geometric_log_evidence(data).log_z
        )

        self.assertAlmostEqual(log_ibf12(data, "one_sided"), expected, places=12)

    def test_two_zeros_by_hand(self) -> None:
        # Z1([0, 0]) = 1/2 and Z1([0]) = 1 (flat Poisson); Z2([0, 0]) = 1/3 and Z2([0]) = 1/2.
        self.assertAlmostEqual(log_ibf12([0, 0], "one_sided"), math.log(1.5), places=12)
        self.assertAlmostEqual(log_ibf12([0, 0], "symmetric"), math.log(0.75), places=12)

    def test_invariant_under_permutation(self) -> None:
        data = [4, 0, 2, 2, 7, 1]
        permuted = [2, 7, 0, 1, 4, 2]
        for mode in ("one_sided", "symmetric"):
            with self.subTest(mode=mode):
                self.assertAlmostEqual(log_ibf12(data, mode), log_ibf12(permuted, mode), places=10)

    def test_needs_two_observations(self) -> None:
        with self.assertRaises(UsageError):
            log_ibf12([3])
        with self.assertRaises(ValueError):
            log_ibf12([1, 2], "geometric_mean")

    def test_poisson_truth_is_recovered(self) -> None:
        for theta in (2.0, 5.0):
            for d_y in (30, 100):
                with self.subTest(theta=theta, d_y=d_y):
                    result = ibf_experiment("m1", theta, d_y, 100, seed=77)
                    self.assertLessEqual(result.rows[0].errors, 3)

    def test_symmetric_training_helps_the_geometric_truth(self) -> None:
        one_sided = ibf_experiment("m2", 0.8, 30, 100, seed=77, mode="one_sided").rows[0].errors
        symmetric = ibf_experiment("m2", 0.8, 30, 100, seed=77, mode="symmetric").rows[0].errors

        self.assertTrue(50 <= one_sided <= 80, one_sided)
        self.assertLessEqual(symmetric, 30)
        self.assertLess(symmetric, one_sided)


class Exp3CommandTests(SimpleTestCase):
    def test_config_validation(self) -> None:
        with self.assertRaises(UsageError):
            Exp3Config(n_runs=0)
        with self.assertRaises(UsageError):
            Exp3Config(ibf_dy_values=(1,))

    def test_seeded_run_writes_every_table_reproducibly(self) -> None:
        options = dict(
            seed=31,
            knob_n_runs="5",
            knob_dy_values="10, 20",
            knob_l_values="10, 1000",
            knob_ibf_dy_values="6",
            knob_ibf_m1_params="2",
            knob_ibf_m2_params="0.5",
            stdout=StringIO(),
        )
        with tempfile.TemporaryDirectory() as tmp:
            call_command("exp3", out=tmp, **options)
            first = {p.name: p.read_bytes() for p in Path(tmp).glob("*.csv")}
            call_command("exp3", out=tmp, threads=2, **options)
            second = {p.name: p.read_bytes() for p in Path(tmp).glob("*.csv")}

        self.assertEqual(
            set(first),
            {
                "exp3_lindley.csv",
                "exp3_errors_vs_dy.csv",
                "exp3_ibf_m1_one_sided.csv",
                "exp3_ibf_m1_symmetric.csv",
                "exp3_ibf_m2_one_sided.csv",
                "exp3_ibf_m2_symmetric.csv",
            },
        )
        self.assertEqual(first, second)
        lines = first["exp3_lindley.csv"].decode().splitlines()
        self.assertEqual(lines[0], "param,Dy,min_bf,max_bf,errors,runs,seed")
        self.assertEqual(len(lines), 1 + 4)
