"""
Test suite for the learn app
Tests samples, the penalized and hold-out estimators and risk measurements
"""

import io
import math

import numpy as np
from django.test import SimpleTestCase

from apps.analysis.synthesis import Representation
from apps.dictionary.dictionaries import Dictionary
from apps.greedy.schedules import GreedyConfig
from core.exceptions import EmptyDictionaryError, GuardExceededError, InsufficientTrialsError, SampleSetError
from .estimator import LearnConfig, fit, holdout_fit, kappa0, oracle_k, risk_bound_rhs
from .risk import SyntheticModel, excess_risk, l1n_exact_expectation, l1n_vs_l1_check
from .samples import SampleSet, empirical_context, truncate


def three_atom_model(noise=0.1):
    """f_rho = +-0.8 on three of four cells, noise within the band"""
    d = Dictionary('orthonormal_canonical', size=4)
    f_rho = Representation((0, 1, 3), [0.4, -0.4, 0.4])
    return d, SyntheticModel(d, f_rho, B=1.0, noise=noise)


def single_atom_samples():
    """Noiseless y = 0.5 on cell 3 of an 8-cell grid, the grid sampled twice in order"""
    d = Dictionary('orthonormal_canonical', size=8)
    xs = np.tile(d.grid_points(), 2)
    ys = np.where(d.cells(xs) == 3, 0.5, 0.0)
    return d, SampleSet(xs, ys, 1.0)


class SampleSetTestCase(SimpleTestCase):
    """Test sample validation and CSV I/O"""

    def test_empirical_weights(self):
        """Test uniform 1/n weights"""
        s = SampleSet([[0.1], [0.2], [0.3], [0.4]], [0, 0, 0, 0], 1.0)
        ctx = empirical_context(s)
        np.testing.assert_allclose(ctx.weights, [0.25] * 4)
        self.assertAlmostEqual(ctx.norm(np.ones(4)), 1.0, places=14)
        self.assertAlmostEqual(ctx.norm(np.array([1.0, 2.0, 2.0, 3.0])) ** 2, 4.5, places=12)

    def test_repeated_points_kept(self):
        """Test repeated x values stay separate coordinates"""
        s = SampleSet([0.5, 0.5, 0.5], [0.1, 0.2, 0.3], 1.0)
        self.assertEqual(empirical_context(s).dim, 3)

    def test_truncate(self):
        """Test truncation at level B"""
        self.assertEqual(truncate(2.0, 1.0), 1.0)
        self.assertEqual(truncate(-0.5, 1.0), -0.5)
        self.assertEqual(truncate(-3.0, 1.0), -1.0)
        np.testing.assert_array_equal(truncate(np.array([2.0, -0.5]), 1.0), [1.0, -0.5])

    def test_output_bound_enforced(self):
        """Test outputs beyond B are rejected"""
        with self.assertRaises(SampleSetError):
            SampleSet([0.1, 0.2], [0.5, 1.5], 1.0)

    def test_length_mismatch(self):
        """Test xs and ys must have equal length"""
        with self.assertRaises(SampleSetError):
            SampleSet([0.1, 0.2, 0.3], [0.5, 0.1], 1.0)

    def test_empty_rejected(self):
        """Test at least one sample is required"""
        with self.assertRaises(SampleSetError):
            SampleSet(np.zeros((0, 1)), [], 1.0)

    def test_split(self):
        """Test the first floor(fraction n) samples form the first subset"""
        s = SampleSet(np.arange(5) / 5.0, [0.0, 0.1, 0.2, 0.3, 0.4], 1.0)
        first, second = s.split(0.5)
        self.assertEqual(first.n, 2)
        np.testing.assert_array_equal(second.ys, [0.2, 0.3, 0.4])

    def test_degenerate_split(self):
        """Test a split leaving an empty subset is rejected"""
        s = SampleSet([0.1, 0.2], [0.0, 0.1], 1.0)
        with self.assertRaises(SampleSetError):
            s.split(0.4)

    def test_csv_contract(self):
        """Test the x_0..x_{D-1}, y header and values survive a write and read"""
        s = SampleSet([[0.25, 0.5], [0.75, 0.125]], [0.5, -0.25], 1.0)
        stream = io.StringIO()
        s.to_csv(stream)
        self.assertTrue(stream.getvalue().startswith('x_0,x_1,y\n'))
        stream.seek(0)
        loaded = SampleSet.from_csv(stream, 1.0)
        np.testing.assert_array_equal(loaded.xs, s.xs)
        np.testing.assert_array_equal(loaded.ys, s.ys)

    def test_csv_header_required(self):
        """Test files without the header row are rejected"""
        with self.assertRaises(SampleSetError):
            SampleSet.from_csv(io.StringIO('0.1,0.2\n0.3,0.4\n'), 1.0)


class LearnConfigTestCase(SimpleTestCase):
    """Test estimator configuration"""

    def test_kappa0(self):
        """Test the reference penalty constant"""
        self.assertEqual(kappa0(1.0, 1.0), 15408.0)
        self.assertEqual(kappa0(1.0, 0.0), 12840.0)
        self.assertEqual(kappa0(2.0, 1.0), 246528.0)

    def test_rga_forced_to_second_schedule(self):
        """Test the estimator's RGA always uses alpha_k = 1 - 2/k"""
        with self.assertLogs('apps.learn.estimator', level='WARNING'):
            cfg = LearnConfig(greedy=GreedyConfig('RGA', alpha_schedule='2.5'))
        self.assertEqual(cfg.greedy.alpha_schedule, 'one_minus_2_over_k_with_alpha1_zero')

    def test_pga_rejected(self):
        """Test the estimator refuses the pure greedy algorithm"""
        with self.assertRaises(ValueError):
            LearnConfig(greedy=GreedyConfig('PGA'))

    def test_k_cap_defaults(self):
        """Test k_cap never exceeds ceil(B n / kappa), m or n"""
        self.assertEqual(LearnConfig(kappa=16.0).resolve_k_cap(64, 100, 1.0), 4)
        self.assertEqual(LearnConfig(kappa=1.0).resolve_k_cap(64, 10, 1.0), 10)
        self.assertEqual(LearnConfig(selection='holdout').resolve_k_cap(32, 100, 1.0), 32)
        self.assertEqual(LearnConfig(k_cap=3).resolve_k_cap(64, 100, 1.0), 3)

    def test_oracle_k(self):
        """Test the step-count hint"""
        n = 1024
        expected = math.ceil((4 * n / math.log(n)) ** 0.5)
        self.assertEqual(oracle_k(1.0, n), expected)
        self.assertEqual(oracle_k(1.0, 1), 1)

    def test_risk_bound_rhs(self):
        """Test the explicit part of the risk bound"""
        self.assertAlmostEqual(risk_bound_rhs(1.0, 0.5, 4), 2.5, places=14)
        with self.assertRaises(ValueError):
            risk_bound_rhs(1.0, 0.0, 0)


class PenalizedFitTestCase(SimpleTestCase):
    """Test the penalized estimator"""

    def test_zero_outputs(self):
        """Test y = 0 selects the zero model"""
        d = Dictionary('orthonormal_canonical', size=8)
        s = SampleSet(d.grid_points(), np.zeros(8), 1.0)
        result = fit(s, d, LearnConfig())
        self.assertEqual(result.k_star, 0)
        self.assertEqual(result.atoms, ())
        np.testing.assert_array_equal(result.predict(d.grid_points()), np.zeros(8))

    def test_single_atom_recovery(self):
        """Test noiseless one-atom data is recovered at k = 1"""
        d, s = single_atom_samples()
        result = fit(s, d, LearnConfig(kappa=0.01))
        self.assertEqual(result.k_star, 1)
        self.assertEqual(result.atoms, (3,))
        self.assertAlmostEqual(result.empirical_risks[1], 0.0, places=12)
        expected = np.where(np.arange(8) == 3, 0.5, 0.0)
        np.testing.assert_allclose(result.predict(d.grid_points()), expected, atol=1e-12)

    def test_penalized_objective(self):
        """Test k* minimizes the penalized risk and k = 0 is bounded by B^2"""
        d, truth = three_atom_model()
        for seed in range(10):
            s = truth.sample(64, np.random.default_rng(seed))
            for algorithm, schedule in (('OGA', None), ('SPA', None), ('RGA', '2.6')):
                cfg = LearnConfig(greedy=GreedyConfig(algorithm, alpha_schedule=schedule))
                result = fit(s, d, cfg)
                self.assertEqual(result.penalized_risk, float(np.min(result.penalized_risks)))
                self.assertAlmostEqual(result.penalized_risks[0], float(np.mean(s.ys ** 2)), places=12)
                self.assertLessEqual(result.penalized_risks[0], s.B ** 2)
                self.assertLessEqual(result.penalized_risk, result.penalized_risks[0])

    def test_predictions_bounded(self):
        """Test every prediction lies in [-B, B]"""
        d = Dictionary('ridge', input_dim=2, n_directions=6, n_levels=4, activation='logistic', steepness=8.0)
        rng = np.random.default_rng(5)
        xs = rng.random((80, 2))
        ys = np.clip(1.5 * np.sign(xs[:, 0] - 0.5) + 0.3 * rng.standard_normal(80), -1.0, 1.0)
        result = fit(SampleSet(xs, ys, 1.0), d, LearnConfig(kappa=0.01, a_exp=1.0))
        predictions = result.predict(rng.random((500, 2)) * 3 - 1)
        self.assertLessEqual(float(np.max(np.abs(predictions))), 1.0)

    def test_three_atom_fixture(self):
        """Test k* stays within 2..8 for the noisy three-atom model"""
        d, truth = three_atom_model()
        for seed in range(20):
            s = truth.sample(64, np.random.default_rng(seed))
            result = fit(s, d, LearnConfig(kappa=1.0))
            self.assertIn(result.k_star, range(2, 9))

    def test_empty_dictionary(self):
        """Test a truncation whose atoms all vanish on the samples is an error"""
        d = Dictionary('orthonormal_canonical', size=8)
        s = SampleSet([0.95, 0.97], [0.1, 0.2], 1.0)
        with self.assertRaises(EmptyDictionaryError):
            fit(s, d, LearnConfig())

    def test_text_serialization(self):
        """Test the structured text carries k*, kappa, B and the risk table"""
        d, s = single_atom_samples()
        text = fit(s, d, LearnConfig(kappa=0.01)).to_text()
        self.assertIn('k_star = 1\n', text)
        self.assertIn('kappa = 0.01\n', text)
        self.assertIn('atoms = 3\n', text)
        self.assertIn('[risk]\nk,empirical_risk,penalty,penalized_risk\n0,', text)

    def test_risk_decreases_with_n(self):
        """Test the mean excess risk at n = 1024 is below the mean at n = 64"""
        d, truth = three_atom_model()
        means = []
        for n in (64, 1024):
            risks = [
                excess_risk(fit(truth.sample(n, np.random.default_rng([n, seed])), d, LearnConfig()), truth).value
                for seed in range(50)
            ]
            means.append(float(np.mean(risks)))
        self.assertLess(means[1], means[0])

    def test_consistency_outside_l1_ball(self):
        """Test excess risk falls by half from n = 128 to n = 4096 for a target of large L1 norm"""
        d = Dictionary('orthonormal_canonical', size=8)
        coeffs = 0.8 / math.sqrt(8) * np.array([1, -1, 1, -1, 1, -1, 1, -1], dtype=float)
        truth = SyntheticModel(d, Representation(range(8), coeffs), B=1.0, noise=0.1)
        self.assertGreater(truth.f_rho.l1, 1.0)
        means = []
        for n in (128, 4096):
            risks = [
                excess_risk(fit(truth.sample(n, np.random.default_rng([n, seed])), d, LearnConfig()), truth).value
                for seed in range(50)
            ]
            means.append(float(np.mean(risks)))
        self.assertLessEqual(means[1], means[0] / 2)


class HoldoutFitTestCase(SimpleTestCase):
    """Test the hold-out estimator"""

    def test_single_atom(self):
        """Test noiseless one-atom data gives validation risk 0 at k = 1"""
        d, s = single_atom_samples()
        result = holdout_fit(s, d, LearnConfig(selection='holdout'))
        self.assertEqual(result.k_star, 1)
        self.assertAlmostEqual(result.empirical_risks[1], 0.0, places=12)

    def test_zero_outputs(self):
        """Test y = 0 selects k* = 0"""
        d = Dictionary('orthonormal_canonical', size=8)
        s = SampleSet(np.repeat(d.grid_points(), 2), np.zeros(16), 1.0)
        self.assertEqual(holdout_fit(s, d, LearnConfig(selection='holdout')).k_star, 0)

    def test_three_atom_fixture(self):
        """Test k* stays within 2..10 for the noisy three-atom model"""
        d, truth = three_atom_model()
        for seed in range(20):
            s = truth.sample(64, np.random.default_rng(seed))
            result = holdout_fit(s, d, LearnConfig(selection='holdout'))
            self.assertIn(result.k_star, range(2, 11))

    def test_degenerate_split(self):
        """Test a single sample cannot be split"""
        d = Dictionary('orthonormal_canonical', size=8)
        with self.assertRaises(SampleSetError):
            holdout_fit(SampleSet([0.5], [0.1], 1.0), d, LearnConfig(selection='holdout'))


class ExcessRiskTestCase(SimpleTestCase):
    """Test risk evaluation against synthetic truth"""

    def test_exact_model(self):
        """Test a model equal to f_rho has zero excess risk"""
        d = Dictionary('orthonormal_canonical', size=8)
        truth = SyntheticModel(d, Representation((2,), [0.5]), B=1.0)
        s = SampleSet(d.grid_points(), truth.evaluate(d.grid_points()), 1.0)
        result = fit(s, d, LearnConfig(kappa=0.01))
        risk = excess_risk(result, truth)
        self.assertTrue(risk.exact)
        self.assertLess(risk.value, 1e-20)

    def test_zero_model_constant_truth(self):
        """Test the zero model against f_rho = c has excess risk c^2"""
        d = Dictionary('union_of_bases', size=8)
        truth = SyntheticModel(d, Representation((1,), [0.3]), B=1.0)
        np.testing.assert_allclose(truth.evaluate(d.grid_points()), np.full(8, 0.3), atol=1e-14)
        zero = fit(SampleSet(d.grid_points(), np.zeros(8), 1.0), d, LearnConfig())
        self.assertAlmostEqual(excess_risk(zero, truth).value, 0.09, places=12)

    def test_direct_summation_oracle(self):
        """Test the grid computation against an independent weighted sum"""
        d = Dictionary('orthonormal_canonical', size=256)
        truth = SyntheticModel(d, Representation((5, 100, 200), [0.05, -0.04, 0.03]), B=1.0, noise=0.1)
        result = fit(truth.sample(512, np.random.default_rng(11)), d, LearnConfig(kappa=0.1))
        f_values = {5: 0.05 * 16, 100: -0.04 * 16, 200: 0.03 * 16}
        model_values = dict.fromkeys(range(256), 0.0)
        for index, coeff, scale in zip(result.atoms, result.coefficients, result.scales):
            model_values[index] += coeff / scale
        oracle = math.fsum(
            (max(-1.0, min(1.0, model_values[j])) - f_values.get(j, 0.0)) ** 2 for j in range(256)
        ) / 256
        self.assertAlmostEqual(excess_risk(result, truth).value, oracle, delta=1e-12)

    def test_monte_carlo_on_cube(self):
        """Test the cube marginal reports a Monte Carlo estimate with a standard error"""
        d = Dictionary('ridge', input_dim=2, n_directions=4, n_levels=2, activation='logistic', steepness=4.0)
        truth = SyntheticModel(d, Representation((0, 3), [0.2, -0.1]), B=1.0, noise=0.05, marginal='cube')
        s = truth.sample(128, np.random.default_rng(2))
        self.assertLessEqual(float(np.max(np.abs(s.ys))), 1.0)
        result = fit(s, d, LearnConfig(kappa=0.1))
        risk = excess_risk(result, truth, rng=np.random.default_rng(4))
        self.assertFalse(risk.exact)
        self.assertGreater(risk.stderr, 0.0)
        self.assertGreaterEqual(risk.value, 0.0)

    def test_noise_clipping(self):
        """Test noise beyond the band is clipped with a warning"""
        d = Dictionary('orthonormal_canonical', size=4)
        with self.assertLogs('apps.learn.risk', level='WARNING'):
            truth = SyntheticModel(d, Representation((0,), [0.45]), B=1.0, noise=0.5)
        with self.assertLogs('apps.learn.risk', level='WARNING'):
            s = truth.sample(400, np.random.default_rng(0))
        self.assertLessEqual(float(np.max(np.abs(s.ys))), 1.0)

    def test_regression_function_above_bound(self):
        """Test f_rho must stay within [-B, B]"""
        d = Dictionary('orthonormal_canonical', size=4)
        with self.assertRaises(ValueError):
            SyntheticModel(d, Representation((0,), [0.8]), B=1.0)


class EmpiricalL1TestCase(SimpleTestCase):
    """Test the comparison of empirical and population L1 norms"""

    def setUp(self):
        self.d = Dictionary('gaussian', size=4, count=6, seed=3)
        self.truth = SyntheticModel(self.d, Representation((), []), B=1.0)

    def test_too_few_trials(self):
        """Test fewer than 30 trials are refused"""
        h = Representation((0,), [1.0])
        with self.assertRaises(InsufficientTrialsError):
            l1n_vs_l1_check(h, self.truth, 29, 8, np.random.default_rng(0))

    def test_zero_expansion(self):
        """Test h = 0 gives 0 <= 0"""
        check = l1n_vs_l1_check(Representation((), []), self.truth, 30, 8, np.random.default_rng(0))
        self.assertEqual(check.mean_sq_l1n, 0.0)
        self.assertTrue(check.passed)

    def test_single_atom(self):
        """Test one atom meets the bound within resampling noise"""
        check = l1n_vs_l1_check(Representation((2,), [0.7]), self.truth, 200, 5, np.random.default_rng(1))
        self.assertAlmostEqual(check.l1_sq, 0.49, places=14)
        self.assertTrue(check.passed)

    def test_single_atom_exact(self):
        """Test the enumerated expectation for one atom equals c^2"""
        value = l1n_exact_expectation(Representation((2,), [0.7]), self.truth, 3)
        self.assertAlmostEqual(value, 0.49, places=12)

    def test_enumeration_matches_monte_carlo(self):
        """Test the enumerated expectation of a 2-atom h agrees with the Monte Carlo mean"""
        h = Representation((0, 1), [0.6, -0.4])
        exact = l1n_exact_expectation(h, self.truth, 3)
        self.assertLessEqual(exact, h.l1 ** 2 + 1e-12)
        check = l1n_vs_l1_check(h, self.truth, 2000, 3, np.random.default_rng(7))
        self.assertLessEqual(abs(check.mean_sq_l1n - exact), 3 * check.stderr)
        self.assertTrue(check.passed)

    def test_two_point_design(self):
        """Test a 2-atom h on every 2-point design stays below its L1 norm and matches Monte Carlo"""
        h = Representation((1, 4), [0.5, 0.3])
        exact = l1n_exact_expectation(h, self.truth, 2)
        self.assertLessEqual(exact, h.l1 ** 2 + 1e-12)
        check = l1n_vs_l1_check(h, self.truth, 2000, 2, np.random.default_rng(8))
        self.assertLessEqual(abs(check.mean_sq_l1n - exact), 3 * check.stderr)

    def test_monte_carlo_configurations(self):
        """Test ten seeded expansions and design sizes all meet the bound"""
        for i in range(10):
            rng = np.random.default_rng(100 + i)
            atoms = sorted(int(j) for j in rng.choice(6, size=int(rng.integers(1, 4)), replace=False))
            h = Representation(tuple(atoms), rng.uniform(-1.0, 1.0, len(atoms)).tolist())
            n = int(rng.integers(2, 6))
            self.assertLessEqual(l1n_exact_expectation(h, self.truth, n), h.l1 ** 2 + 1e-12, i)
            check = l1n_vs_l1_check(h, self.truth, 200, n, rng)
            self.assertTrue(check.passed, i)

    def test_enumeration_guard(self):
        """Test enumeration refuses more than 10^6 designs"""
        d = Dictionary('orthonormal_canonical', size=16)
        truth = SyntheticModel(d, Representation((), []), B=1.0)
        with self.assertRaises(GuardExceededError):
            l1n_exact_expectation(Representation((0,), [1.0]), truth, 6)
