from __future__ import annotations

import math
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
from django.core.management import CommandError, call_command
from django.test import SimpleTestCase
from scipy.optimize import brentq
from scipy.stats import norm

from conjugate.gaussian import GaussianMeanIntegrals
from evidence.core import LikelihoodTerm, UsageError, run_generator
from evidence.quadrature import GridIntegrator

from .evidence import (
    RvGridConfig,
    RvGridIntegrator,
    bf10_vs_pmax,
    evidence_one_planet,
    evidence_zero_planet,
    hierarchical_pmax_evidence,
    one_planet_model,
    pmax_hyper_grid,
    rv_likelihood_prior_bf,
)
from .kepler import KeplerConvergenceError, solve_kepler, solve_kepler_array, true_anomaly
from .rv import (
    Planet,
    RvDataset,
    RvParams,
    gaussian_log_likelihood,
    jittered_epochs,
    planet_signal,
    read_rv_dataset,
    rv_log_likelihood,
    rv_model,
    simulate_rv,
    write_rv_dataset,
)

PLANET = Planet(k=25.0, omega=0.61, e=0.1, period=15.0, tau=3.0)
PARAMS = RvParams(5.0, (PLANET,))
SIGMA = math.sqrt(15.0)
GRID = RvGridConfig(-20.0, 20.0, 64, 0.004)


def simulated_dataset(seed: int = 2024) -> RvDataset:
    return simulate_rv(PARAMS, jittered_epochs(25, 60.0, 1.2), SIGMA, run_generator(seed, 0))


class KeplerTests(SimpleTestCase):
    def test_residual_below_tolerance_across_the_lattice(self) -> None:
        for e in np.linspace(0.0, 0.95, 25):
            for M in np.linspace(0.0, 2.0 * math.pi, 40):
                E = solve_kepler(M, e).E
                self.assertLess(abs(E - e * math.sin(E) - M), 1e-12, (M, e))

    def test_circular_orbit_is_exact(self) -> None:
        self.assertEqual(tuple(solve_kepler(1.3, 0.0)), (1.3, 0.0, 1))

    def test_zero_mean_anomaly(self) -> None:
        self.assertEqual(solve_kepler(0.0, 0.5).E, 0.0)
        self.assertAlmostEqual(solve_kepler(0.0, 0.9).E, 0.0, delta=1e-10)

    def test_whole_turns_are_carried_through(self) -> None:
        for e in (0.1, 0.6, 0.9):
            with self.subTest(e=e):
                shifted = solve_kepler(1.0 + 2.0 * math.pi, e).E
                self.assertAlmostEqual(shifted - solve_kepler(1.0, e).E, 2.0 * math.pi, delta=1e-12)

    def test_matches_bracketed_root(self) -> None:
        rng = run_generator(99)
        for M, e in zip(rng.uniform(0.0, 2.0 * math.pi, 100), rng.uniform(0.0, 0.95, 100)):
            root = brentq(lambda E: E - e * math.sin(E) - M, 0.0, 2.0 * math.pi, xtol=1e-15)
            self.assertAlmostEqual(solve_kepler(M, e).E, root, delta=1e-10)

    def test_array_solver_matches_scalar_solver(self) -> None:
        M = np.array([-7.0, -0.3, 0.0, 1.0, 3.1, 6.2, 40.0])

        E = solve_kepler_array(M, 0.5)

        np.testing.assert_allclose(E, [solve_kepler(m, 0.5).E for m in M], rtol=0.0, atol=1e-12)

    def test_array_solver_keeps_two_dimensional_shapes(self) -> None:
        periods = np.array([0.7, 5.0, 15.0, 120.0])
        times = np.linspace(0.0, 60.0, 9)
        M = 2.0 * math.pi * (times[None, :] - 3.0) / periods[:, None]
        for e in (0.1, 0.5, 0.9):
            with self.subTest(e=e):
                E = solve_kepler_array(M, e)

                self.assertEqual(E.shape, M.shape)
                np.testing.assert_allclose(E - e * np.sin(E) - M, 0.0, atol=1e-9)
                scalar = [[solve_kepler(m, e).E for m in row] for row in M]
                np.testing.assert_allclose(E, scalar, rtol=0.0, atol=1e-10)

    def test_array_solver_on_a_tall_column_pair(self) -> None:
        M = np.column_stack([np.linspace(-3.0, 9.0, 20), np.linspace(0.5, 30.0, 20)])

        E = solve_kepler_array(M, 0.6)

        self.assertEqual(E.shape, (20, 2))
        np.testing.assert_allclose(E - 0.6 * np.sin(E) - M, 0.0, atol=1e-9)

    def test_exhausted_iterations_raise_with_residual(self) -> None:
        with self.assertRaises(KeplerConvergenceError) as ctx:
            solve_kepler(2.0, 0.5, max_iter=1)
        self.assertAlmostEqual(ctx.exception.residual, 0.5 * math.sin(2.0), places=12)
        with self.assertRaises(KeplerConvergenceError):
            solve_kepler_array(np.array([2.0, 4.0]), 0.5, max_iter=1)

    def test_eccentricity_outside_unit_interval_rejected(self) -> None:
        for e in (-0.1, 1.0):
            with self.subTest(e=e), self.assertRaises(UsageError):
                solve_kepler(1.0, e)

    def test_true_anomaly(self) -> None:
        self.assertAlmostEqual(true_anomaly(1.2, 0.0), 1.2, places=12)
        self.assertEqual(true_anomaly(0.0, 0.3), 0.0)
        self.assertAlmostEqual(
            true_anomaly(math.pi / 2.0, 0.1), 2.0 * math.atan(math.sqrt(1.1 / 0.9)), places=12
        )


class RadialVelocityModelTests(SimpleTestCase):
    def test_no_planets_is_constant(self) -> None:
        np.testing.assert_array_equal(rv_model(RvParams(3.0), [0.0, 1.5, 9.0]), [3.0, 3.0, 3.0])

    def test_circular_orbit_is_a_sinusoid(self) -> None:
        planet = Planet(k=2.0, omega=0.3, e=0.0, period=10.0, tau=1.0)
        t = np.linspace(0.0, 30.0, 13)

        expected = 1.0 + 2.0 * np.cos(2.0 * np.pi * (t - 1.0) / 10.0 + 0.3)

        np.testing.assert_allclose(rv_model(RvParams(1.0, (planet,)), t), expected, atol=1e-12)

    def test_value_at_periastron(self) -> None:
        self.assertAlmostEqual(
            float(rv_model(PARAMS, [3.0])[0]), 5.0 + 25.0 * 1.1 * math.cos(0.61), places=10
        )

    def test_signal_repeats_every_period(self) -> None:
        t = np.array([0.4, 7.0, 22.3])

        np.testing.assert_allclose(rv_model(PARAMS, t + 15.0), rv_model(PARAMS, t), atol=1e-10)

    def test_many_epochs_match_one_epoch_at_a_time(self) -> None:
        t = jittered_epochs(25, 60.0, 1.2)

        together = rv_model(PARAMS, t)

        self.assertEqual(together.shape, t.shape)
        np.testing.assert_allclose(together, [rv_model(PARAMS, [ti])[0] for ti in t], rtol=0.0, atol=1e-12)

    def test_signal_grid_is_periods_by_epochs(self) -> None:
        periods = [4.0, 15.0, 33.0]
        t = jittered_epochs(12, 30.0, 1.0)

        grid = planet_signal(PLANET, periods, t)

        self.assertEqual(grid.shape, (3, 12))
        for row, period in zip(grid, periods):
            params = RvParams(0.0, (Planet(PLANET.k, PLANET.omega, PLANET.e, period, PLANET.tau),))
            np.testing.assert_allclose(row, rv_model(params, t), rtol=0.0, atol=1e-12)

    def test_log_likelihood(self) -> None:
        self.assertAlmostEqual(gaussian_log_likelihood(np.zeros(4), 2.0), -2.0 * math.log(8.0 * math.pi), places=12)

        data = simulated_dataset()
        expected = norm.logpdf(data.values, rv_model(PARAMS, data.times), SIGMA).sum()

        self.assertAlmostEqual(rv_log_likelihood(PARAMS, data), expected, delta=1e-9)
        with self.assertRaises(UsageError):
            gaussian_log_likelihood(np.zeros(2), 0.0)

    def test_invalid_planets_rejected(self) -> None:
        for kwargs in ({"e": 1.0}, {"period": 0.0}, {"k": -1.0}):
            with self.subTest(**kwargs), self.assertRaises(UsageError):
                Planet(**{**dict(k=1.0, omega=0.0, e=0.0, period=1.0, tau=0.0), **kwargs})


class SimulationTests(SimpleTestCase):
    def test_zero_noise_reproduces_the_curve(self) -> None:
        times = jittered_epochs(25, 60.0, 1.2)

        data = simulate_rv(PARAMS, times, 0.0, 3)

        np.testing.assert_array_equal(data.values, rv_model(PARAMS, times))

    def test_same_seed_same_dataset(self) -> None:
        np.testing.assert_array_equal(simulated_dataset(5).values, simulated_dataset(5).values)
        self.assertFalse(np.array_equal(simulated_dataset(5).values, simulated_dataset(6).values))

    def test_noise_level(self) -> None:
        times = np.arange(10_000, dtype=float) * 0.01
        data = simulate_rv(PARAMS, times, SIGMA, run_generator(17))
        residuals = data.values - rv_model(PARAMS, times)

        self.assertLess(abs(float(residuals.mean())), 4.0 * SIGMA / 100.0)
        self.assertAlmostEqual(float(residuals.std()) / SIGMA, 1.0, delta=0.03)

    def test_jittered_epochs(self) -> None:
        times = jittered_epochs(25, 60.0, 1.2)

        self.assertEqual(times.size, 25)
        self.assertEqual(times[0], 0.0)
        self.assertLessEqual(times[-1], 60.0)
        self.assertTrue(np.all(np.diff(times) > 0))
        np.testing.assert_allclose(jittered_epochs(25, 60.0, 0.0), np.linspace(0.0, 60.0, 25), atol=1e-12)
        with self.assertRaises(UsageError):
            jittered_epochs(25, 60.0, 2.5)

    def test_dataset_file_round_trip(self) -> None:
        data = simulated_dataset()
        with tempfile.TemporaryDirectory() as tmp:
            path = write_rv_dataset(Path(tmp) / "rv.csv", data)
            loaded = read_rv_dataset(path)

        np.testing.assert_array_equal(loaded.times, data.times)
        np.testing.assert_array_equal(loaded.values, data.values)
        self.assertEqual(loaded.sigma_e, data.sigma_e)
        self.assertEqual(loaded.params, PARAMS)

    def test_missing_sidecar_rejected(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "rv.csv"
            path.write_text("t,y\n0,1\n1,2\n", encoding="utf-8")
            with self.assertRaises(UsageError):
                read_rv_dataset(path)


class RvEvidenceTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls) -> None:
        super().setUpClass()
        cls.data = simulated_dataset()
        cls.integrator = RvGridIntegrator(PLANET, GRID)

    def test_zero_planet_matches_closed_form(self) -> None:
        exact = GaussianMeanIntegrals(SIGMA, 0.0, None).log_integral([LikelihoodTerm(self.data.values)])

        log_z0 = evidence_zero_planet(self.data, integrator=self.integrator).log_z

        self.assertAlmostEqual(log_z0, exact - math.log(40.0), delta=1e-6)

    def test_wider_v0_prior_costs_its_width(self) -> None:
        narrow = evidence_zero_planet(self.data, GRID).log_z
        wide = evidence_zero_planet(self.data, RvGridConfig(-200.0, 200.0, 640, 0.004)).log_z

        self.assertAlmostEqual(narrow - wide, math.log(10.0), delta=1e-6)

    def test_lattice_backend_matches_generic_grid(self) -> None:
        model = one_planet_model(2.0, PLANET, GRID)
        generic = GridIntegrator((500, 64), rule="midpoint")
        terms = [LikelihoodTerm(self.data), LikelihoodTerm(self.data.head(3), 2.0)]

        self.assertEqual(self.integrator.points_for(model), (500, 64))
        for with_prior in (True, False):
            with self.subTest(with_prior=with_prior):
                self.assertAlmostEqual(
                    self.integrator.log_integral(model, terms, with_prior=with_prior),
                    generic.log_integral(model, terms, with_prior=with_prior),
                    delta=1e-8,
                )

    def test_strong_signal_favours_one_planet(self) -> None:
        curve = dict(bf10_vs_pmax(self.data, (20.0, 50.0, 100.0, 150.0, 200.0), PLANET, integrator=self.integrator))

        for p_max in (20.0, 50.0, 100.0):
            self.assertGreater(curve[p_max], 0.0, p_max)
        self.assertGreater(curve[100.0], curve[150.0])
        self.assertGreater(curve[150.0], curve[200.0])

    def test_hierarchical_evidence_averages_the_profile(self) -> None:
        hyper = pmax_hyper_grid(10.0, 365.0, 25.0)
        z_new = hierarchical_pmax_evidence(self.data, hyper, PLANET, integrator=self.integrator).log_z
        profile = [evidence_one_planet(self.data, p, PLANET, integrator=self.integrator).log_z for p in hyper.grid]
        log_z0 = evidence_zero_planet(self.data, integrator=self.integrator).log_z

        self.assertEqual(hyper.grid[-1], 365.0)
        self.assertGreater(z_new, log_z0)
        self.assertTrue(min(profile) <= z_new <= max(profile))

    def test_single_point_hyperprior_is_the_plain_evidence(self) -> None:
        point = hierarchical_pmax_evidence(self.data, pmax_hyper_grid(50.0, 50.0), PLANET, integrator=self.integrator)

        self.assertAlmostEqual(
            point.log_z, evidence_one_planet(self.data, 50.0, PLANET, integrator=self.integrator).log_z, places=12
        )

    def test_likelihood_based_priors(self) -> None:
        kwargs = dict(p_max=365.0, integrator=self.integrator)
        idea2 = dict(rv_likelihood_prior_bf(self.data, "idea2", None, PLANET, **kwargs))
        idea3 = dict(rv_likelihood_prior_bf(self.data, "idea3", None, PLANET, **kwargs))
        idea1 = rv_likelihood_prior_bf(self.data, "idea1", [25], PLANET, **kwargs)[0][1]

        self.assertEqual(sorted(idea2), list(range(1, 26)))
        self.assertEqual(sorted(idea3), list(range(1, 25)))
        self.assertAlmostEqual(idea2[25], idea1, delta=1e-9)
        for n in range(1, 25):
            with self.subTest(n=n):
                self.assertGreater(idea3[n], 0.0)
                self.assertGreaterEqual(idea2[n], idea3[n])

    def test_prefix_lengths_checked(self) -> None:
        with self.assertRaises(UsageError):
            rv_likelihood_prior_bf(self.data, "idea3", [25], PLANET, p_max=10.0, integrator=self.integrator)
        with self.assertRaises(UsageError):
            rv_likelihood_prior_bf(self.data, "idea2", [0], PLANET, p_max=10.0, integrator=self.integrator)

    def test_period_window_checked(self) -> None:
        with self.assertRaises(UsageError):
            one_planet_model(400.0, PLANET)
        with self.assertRaises(UsageError):
            pmax_hyper_grid(0.0, 100.0)


class PeriodWindowTests(SimpleTestCase):
    """The strong K = 25 planet sampled at 100 epochs."""

    @classmethod
    def setUpClass(cls) -> None:
        super().setUpClass()
        times = jittered_epochs(100, 60.0, 0.5)
        cls.data = simulate_rv(PARAMS, times, SIGMA, run_generator(2024, 0))

    def test_window_below_the_true_period_rejects_the_planet(self) -> None:
        # Short trial periods add a full-amplitude signal that the data do not
        # contain; only the true period can pay for it.
        curve = dict(bf10_vs_pmax(self.data, (5.0, 30.0), PLANET, GRID))

        self.assertLess(curve[5.0], 0.0)
        self.assertGreater(curve[30.0], 0.0)


class WeakSignalTests(SimpleTestCase):
    """A faint noise-free planet: BF10 exceeds 1 for moderate P_max only."""

    def test_bayes_factor_rises_then_falls_with_pmax(self) -> None:
        planet = Planet(k=3.5, omega=0.0, e=0.0, period=15.0, tau=0.0)
        times = jittered_epochs(25, 60.0, 1.2)
        data = RvDataset(times, rv_model(RvParams(-18.0, (planet,)), times), SIGMA)

        curve = bf10_vs_pmax(data, (5.0, 50.0, 365.0), planet, GRID)

        self.assertLess(curve[0][1], 0.0)
        self.assertGreater(curve[1][1], 0.0)
        self.assertLess(curve[2][1], 0.0)


class Exp4CommandTests(SimpleTestCase):
    SMALL = dict(
        knob_n_epochs="8",
        knob_span="20",
        knob_jitter="1.0",
        knob_pmax_values="10, 20",
        knob_hyper_lower="10",
        knob_hyper_upper="30",
        knob_hyper_step="10",
        knob_idea_pmax="10",
    )

    def test_writes_every_output_and_reloads_its_dataset(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            first, second = Path(tmp) / "a", Path(tmp) / "b"
            call_command("exp4", seed=11, out=str(first), stdout=StringIO(), **self.SMALL)
            call_command(
                "exp4",
                seed=11,
                out=str(second),
                knob_data_path=str(first / "exp4_data.csv"),
                stdout=StringIO(),
                **self.SMALL,
            )
            names = {p.name for p in first.iterdir()}
            curve = (first / "exp4_bf10_vs_pmax.csv").read_text()
            reloaded = (second / "exp4_bf10_vs_pmax.csv").read_text()
            idea3 = (first / "exp4_idea3.csv").read_text().splitlines()

        self.assertEqual(
            names,
            {
                "exp4_data.csv",
                "exp4_data.ini",
                "exp4_bf10_vs_pmax.csv",
                "exp4_hierarchical.csv",
                "exp4_idea1.csv",
                "exp4_idea2.csv",
                "exp4_idea3.csv",
            },
        )
        self.assertEqual(curve, reloaded)
        self.assertEqual(curve.splitlines()[0], "pmax,log_bf10")
        self.assertEqual(len(idea3), 1 + 7)

    def test_needs_a_seed(self) -> None:
        with tempfile.TemporaryDirectory() as tmp, self.assertRaises(CommandError):
            call_command("exp4", out=tmp, stdout=StringIO(), **self.SMALL)
