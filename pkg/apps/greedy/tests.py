"""
Test suite for the greedy app
Tests the four engines, the alpha schedules, the error bounds and trace export
"""

import io
import math

import numpy as np
from django.test import SimpleTestCase

from apps.dictionary.dictionaries import AtomBank, Dictionary
from apps.hilbert.space import SpaceContext
from core.exceptions import UnsupportedBoundError
from .bounds import BOUND_SLACK, bound_rhs, rem25_constant, residual_bound_check, within_bound
from .engines import run_greedy, run_oga, run_pga, run_rga, run_spa
from .schedules import GreedyConfig, alpha


def random_instance(rng, perturbation=0.0):
    """Random unit dictionary with a target of known L1 bound 1"""
    dim = int(rng.integers(8, 65))
    m = int(rng.integers(dim, 129))
    ctx = SpaceContext.euclidean(dim)
    bank = AtomBank.from_vectors(rng.standard_normal((m, dim)), ctx)
    support = rng.choice(m, size=int(rng.integers(1, 21)), replace=False)
    coeffs = rng.standard_normal(support.size)
    coeffs /= np.abs(coeffs).sum()
    h = coeffs @ bank.atoms[support]
    e = rng.standard_normal(dim)
    e *= perturbation / np.linalg.norm(e)
    return ctx, bank, h, h + e


def thresholding_residuals(coeffs, k):
    """Residual norms of top-j coefficient thresholding for j = 1..k"""
    order = np.argsort(-np.abs(coeffs), kind='stable')
    squares = coeffs[order] ** 2
    tails = [math.sqrt(float(np.sum(squares[j:]))) for j in range(1, k + 1)]
    return order[:k].tolist(), tails


class ScheduleTestCase(SimpleTestCase):
    """Test alpha schedules and config validation"""

    def test_schedule_values(self):
        """Test the three schedules at small k"""
        self.assertEqual(alpha('one_minus_1_over_k', 1), 0.0)
        self.assertEqual(alpha('one_minus_1_over_k', 4), 0.75)
        self.assertEqual(alpha('one_minus_2_over_k_with_alpha1_zero', 1), 0.0)
        self.assertEqual(alpha('one_minus_2_over_k_with_alpha1_zero', 2), 0.0)
        self.assertEqual(alpha('one_minus_2_over_k_with_alpha1_zero', 4), 0.5)
        self.assertEqual(alpha('lambda_schedule', 2, lam=3), 0.0)
        self.assertEqual(alpha('lambda_schedule', 6, lam=3), 0.5)

    def test_schedule_aliases(self):
        """Test short schedule names resolve"""
        cfg = GreedyConfig('RGA', alpha_schedule='2.6')
        self.assertEqual(cfg.alpha_schedule, 'one_minus_2_over_k_with_alpha1_zero')

    def test_rga_needs_schedule(self):
        """Test RGA without a schedule is rejected"""
        with self.assertRaises(ValueError):
            GreedyConfig('RGA')

    def test_lambda_below_one_rejected(self):
        """Test lambda < 1 is rejected"""
        with self.assertRaises(ValueError):
            GreedyConfig('RGA', alpha_schedule='lambda_schedule', lam=0.5)

    def test_lambda_one_flagged(self):
        """Test lambda = 1 is allowed with a warning"""
        with self.assertLogs('apps.greedy.schedules', level='WARNING'):
            GreedyConfig('RGA', alpha_schedule='lambda_schedule', lam=1.0)

    def test_unknown_algorithm(self):
        """Test unknown algorithm names are rejected"""
        with self.assertRaises(ValueError):
            GreedyConfig('CoSaMP')


class PureGreedyTestCase(SimpleTestCase):
    """Test the PGA"""

    def setUp(self):
        self.canonical = Dictionary(kind='orthonormal_canonical', size=3)
        self.ctx = SpaceContext.euclidean(3)

    def test_atom_target(self):
        """Test f = g is recovered in one step"""
        trace = run_pga([0, 1, 0], self.canonical, GreedyConfig('PGA', max_steps=5), self.ctx)
        self.assertEqual(trace.k, 1)
        self.assertEqual(trace.final_residual_norm, 0.0)
        self.assertEqual(trace.stopped_reason, 'tol')

    def test_thresholding_oracle(self):
        """Test coefficients (1, 1/2, 1/4) leave 1/4 after two steps"""
        trace = run_pga([1, 0.5, 0.25], self.canonical, GreedyConfig('PGA', max_steps=2), self.ctx)
        self.assertAlmostEqual(trace.final_residual_norm, 0.25, delta=1e-15)
        self.assertEqual(trace.atom_indices, [0, 1])
        self.assertEqual(trace.stopped_reason, 'max_steps')

    def test_orthogonal_target(self):
        """Test f orthogonal to D_m stops before the first step"""
        d = Dictionary(kind='orthonormal_canonical', size=4)
        trace = run_pga([0, 0, 1, 1], d, GreedyConfig('PGA', m=2), SpaceContext.euclidean(4))
        self.assertEqual(trace.k, 0)
        self.assertEqual(trace.stopped_reason, 'tol')

    def test_exact_recursion(self):
        """Test ||r_k||^2 = ||r_k-1||^2 - <r_k-1, g_k>^2"""
        rng = np.random.default_rng(21)
        ctx, bank, _, f = random_instance(rng, perturbation=0.3)
        trace = run_pga(f, bank, GreedyConfig('PGA', max_steps=40), ctx)
        norms = trace.residual_norms
        for k, step in enumerate(trace.steps, start=1):
            self.assertAlmostEqual(norms[k] ** 2, norms[k - 1] ** 2 - step.beta ** 2, delta=1e-10)

    def test_coefficients_reproduce_approximant(self):
        """Test repeated atoms accumulate into the expansion"""
        rng = np.random.default_rng(4)
        ctx = SpaceContext.euclidean(6)
        bank = AtomBank.from_vectors(rng.standard_normal((4, 6)), ctx)
        f = rng.standard_normal(6)
        trace = run_pga(f, bank, GreedyConfig('PGA', max_steps=30), ctx)
        self.assertLess(len(trace.support), trace.k)
        np.testing.assert_allclose(trace.expand(bank), trace.approximant(), atol=1e-10)

    def test_coefficient_path_reexpands(self):
        """Test every prefix of a PGA and an RGA run re-expands to f_k"""
        f = [1, 0.5, 0.25]
        configs = (
            GreedyConfig('PGA', max_steps=3),
            GreedyConfig('RGA', alpha_schedule='2.5', max_steps=3),
            GreedyConfig('RGA', alpha_schedule='2.6', max_steps=3),
        )
        bank = AtomBank.from_vectors(np.eye(3), self.ctx)
        for cfg in configs:
            trace = run_greedy(f, self.canonical, cfg, self.ctx)
            self.assertEqual(trace.k, 3, cfg.algorithm)
            self.assertEqual(trace.atom_indices[0], 0)
            for k in range(trace.k + 1):
                support, coeffs = trace.coefficients_at(k)
                self.assertEqual(len(support), coeffs.size)
                np.testing.assert_allclose(trace.expand(bank, k), trace.approximant(k), atol=1e-12)


class OrthogonalGreedyTestCase(SimpleTestCase):
    """Test the OGA"""

    def test_thresholding_oracle(self):
        """Test coefficients (3, 2, 1) leave residual 1 after two steps"""
        d = Dictionary(kind='orthonormal_canonical', size=3)
        trace = run_oga([3, 2, 1], d, GreedyConfig('OGA', max_steps=2), SpaceContext.euclidean(3))
        self.assertAlmostEqual(trace.final_residual_norm, 1.0, delta=1e-14)

    def test_zero_target(self):
        """Test f = 0 gives an empty trace"""
        d = Dictionary(kind='orthonormal_canonical', size=3)
        trace = run_oga([0, 0, 0], d, GreedyConfig('OGA'), SpaceContext.euclidean(3))
        self.assertEqual(trace.k, 0)
        self.assertEqual(trace.final_residual_norm, 0.0)

    def test_residual_orthogonal_to_selected(self):
        """Test f_k is the projection onto the selected atoms"""
        rng = np.random.default_rng(12)
        ctx, bank, _, f = random_instance(rng, perturbation=0.2)
        trace = run_oga(f, bank, GreedyConfig('OGA', max_steps=12), ctx)
        residual = f - trace.approximant()
        selected = bank.atoms[trace.support]
        self.assertLessEqual(np.max(np.abs(selected @ residual)), 1e-8 * np.linalg.norm(f))
        np.testing.assert_allclose(trace.expand(bank), trace.approximant(), atol=1e-10)

    def test_monotone_residuals(self):
        """Test PGA, OGA and SPA residuals never increase"""
        rng = np.random.default_rng(13)
        for algorithm in ('PGA', 'OGA', 'SPA'):
            ctx, bank, _, f = random_instance(rng, perturbation=0.5)
            norms = run_greedy(f, bank, GreedyConfig(algorithm, max_steps=30), ctx).residual_norms
            self.assertTrue(all(b <= a + 1e-12 for a, b in zip(norms, norms[1:])), algorithm)

    def test_first_step_matches_pga(self):
        """Test OGA and PGA agree at step 1"""
        rng = np.random.default_rng(14)
        ctx, bank, _, f = random_instance(rng)
        oga = run_oga(f, bank, GreedyConfig('OGA', max_steps=1), ctx)
        pga = run_pga(f, bank, GreedyConfig('PGA', max_steps=1), ctx)
        np.testing.assert_allclose(oga.approximant(1), pga.approximant(1), atol=1e-12)

    def test_duplicate_atoms_degenerate(self):
        """Test a dictionary of one repeated atom stops as degenerate"""
        ctx = SpaceContext.euclidean(3)
        bank = AtomBank.from_vectors(np.array([[1.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0]]), ctx)
        trace = run_spa([1.0, 2.0, 3.0], bank, GreedyConfig('SPA', max_steps=5), ctx)
        self.assertEqual(trace.k, 2)
        self.assertEqual(trace.stopped_reason, 'degenerate')

    def test_complete_dictionary_convergence(self):
        """Test residual below 1e-3 ||f|| after 5 dim steps on a complete dictionary"""
        d = Dictionary(kind='union_of_bases', size=16)
        ctx = SpaceContext.euclidean(16)
        f = np.random.default_rng(15).standard_normal(16)
        for algorithm in ('OGA', 'SPA'):
            trace = run_greedy(f, d, GreedyConfig(algorithm, max_steps=80), ctx)
            self.assertLess(trace.final_residual_norm, 1e-3 * np.linalg.norm(f))


class RelaxedGreedyTestCase(SimpleTestCase):
    """Test the RGA"""

    def test_first_step_is_pga_step(self):
        """Test alpha_1 = 0 makes step 1 a PGA step"""
        rng = np.random.default_rng(16)
        ctx, bank, _, f = random_instance(rng)
        rga = run_rga(f, bank, GreedyConfig('RGA', alpha_schedule='2.6', max_steps=1), ctx)
        pga = run_pga(f, bank, GreedyConfig('PGA', max_steps=1), ctx)
        np.testing.assert_allclose(rga.approximant(1), pga.approximant(1), atol=1e-14)
        self.assertEqual(rga.steps[0].alpha, 0.0)

    def test_beta_closed_form(self):
        """Test beta_k = <f - alpha_k f_k-1, g_k> and the argmax choice"""
        rng = np.random.default_rng(17)
        ctx, bank, _, f = random_instance(rng, perturbation=0.1)
        trace = run_rga(f, bank, GreedyConfig('RGA', alpha_schedule='one_minus_1_over_k', max_steps=20), ctx)
        for k, step in enumerate(trace.steps, start=1):
            target = f - step.alpha * trace.approximant(k - 1)
            correlations = bank.atoms @ target
            self.assertAlmostEqual(step.beta, correlations[step.atom.index], delta=1e-12)
            self.assertAlmostEqual(abs(step.beta), np.max(np.abs(correlations)), delta=1e-12)
        np.testing.assert_allclose(trace.expand(bank), trace.approximant(), atol=1e-10)


class StepwiseProjectionTestCase(SimpleTestCase):
    """Test the SPA"""

    def test_orthonormal_matches_oga(self):
        """Test SPA and OGA traces coincide on an orthonormal dictionary"""
        d = Dictionary(kind='orthonormal_canonical', size=10)
        ctx = SpaceContext.euclidean(10)
        f = np.random.default_rng(18).standard_normal(10)
        spa = run_spa(f, d, GreedyConfig('SPA', max_steps=6), ctx)
        oga = run_oga(f, d, GreedyConfig('OGA', max_steps=6), ctx)
        self.assertEqual(spa.atom_indices, oga.atom_indices)
        np.testing.assert_allclose(spa.residual_norms, oga.residual_norms, atol=1e-12)

    def test_atom_target(self):
        """Test f = atom is recovered in one step"""
        ctx = SpaceContext.euclidean(4)
        bank = AtomBank.from_vectors(np.random.default_rng(19).standard_normal((6, 4)), ctx)
        trace = run_spa(bank.atoms[3], bank, GreedyConfig('SPA', max_steps=4), ctx)
        self.assertEqual(trace.atom_indices, [3])
        self.assertLessEqual(trace.final_residual_norm, 1e-12)

    def test_first_step_optimal(self):
        """Test SPA step 1 is no worse than OGA step 1 on coherent pairs"""
        rng = np.random.default_rng(20)
        ctx = SpaceContext.euclidean(5)
        for _ in range(20):
            g = rng.standard_normal(5)
            bank = AtomBank.from_vectors(np.array([g, g + 0.3 * rng.standard_normal(5)]), ctx)
            f = rng.standard_normal(5)
            spa = run_spa(f, bank, GreedyConfig('SPA', max_steps=1), ctx)
            oga = run_oga(f, bank, GreedyConfig('OGA', max_steps=1), ctx)
            self.assertLessEqual(spa.final_residual_norm, oga.final_residual_norm + 1e-12)

    def test_second_step_minimizes_projection_error(self):
        """Test the SPA choice beats every other candidate at step 2"""
        rng = np.random.default_rng(22)
        ctx = SpaceContext.euclidean(6)
        bank = AtomBank.from_vectors(rng.standard_normal((9, 6)), ctx)
        f = rng.standard_normal(6)
        trace = run_spa(f, bank, GreedyConfig('SPA', max_steps=2), ctx)
        first = trace.support[0]
        errors = []
        for index in range(9):
            if index == first:
                continue
            span = bank.atoms[[first, index]].T
            coeffs, *_ = np.linalg.lstsq(span, f, rcond=None)
            errors.append(np.linalg.norm(f - span @ coeffs))
        self.assertLessEqual(trace.final_residual_norm, min(errors) + 1e-10)


class OrthonormalEquivalenceTestCase(SimpleTestCase):
    """Test PGA, OGA and SPA reduce to coefficient thresholding"""

    def test_random_coefficient_vectors(self):
        """Test 50 random coefficient vectors against top-k thresholding"""
        rng = np.random.default_rng(2024)
        for _ in range(50):
            dim = int(rng.integers(2, 65))
            k = int(rng.integers(1, min(10, dim) + 1))
            d = Dictionary(kind='orthonormal_canonical', size=dim)
            ctx = SpaceContext.euclidean(dim)
            coeffs = rng.standard_normal(dim)
            atoms, tails = thresholding_residuals(coeffs, k)
            for algorithm in ('PGA', 'OGA', 'SPA'):
                trace = run_greedy(coeffs, d, GreedyConfig(algorithm, max_steps=k), ctx)
                self.assertEqual(trace.atom_indices[:k], atoms[:trace.k])
                np.testing.assert_allclose(trace.residual_norms[1:], tails[:trace.k], atol=1e-10)


class ProvenBoundTestCase(SimpleTestCase):
    """Test the greedy error bounds on random dictionaries"""

    def test_oga_and_spa_l1_bound(self):
        """Test ||r_N|| <= (N+1)^-1/2 for targets with L1 bound 1"""
        rng = np.random.default_rng(100)
        for _ in range(50):
            ctx, bank, _, f = random_instance(rng)
            for algorithm in ('OGA', 'SPA'):
                trace = run_greedy(f, bank, GreedyConfig(algorithm, max_steps=64), ctx)
                report = residual_bound_check(trace, 1.0, kind='thm21')
                self.assertTrue(report.ok, f"{algorithm} step {report.first_violation}")

    def test_rga_bound(self):
        """Test ||r_N|| <= (1 - ||f||^2)^1/2 N^-1/2 under alpha_k = 1 - 1/k"""
        rng = np.random.default_rng(101)
        for _ in range(50):
            ctx, bank, _, f = random_instance(rng)
            cfg = GreedyConfig('RGA', alpha_schedule='one_minus_1_over_k', max_steps=64)
            trace = run_rga(f, bank, cfg, ctx)
            report = residual_bound_check(trace, 1.0, kind='thm22', h_norm=np.linalg.norm(f))
            self.assertTrue(report.ok, f"step {report.first_violation}")

    def test_quadratic_bounds_with_perturbation(self):
        """Test the quadratic bounds for f = h + e"""
        rng = np.random.default_rng(102)
        for _ in range(50):
            ctx, bank, h, f = random_instance(rng, perturbation=0.05)
            h_dist, h_norm = np.linalg.norm(f - h), np.linalg.norm(h)
            oga = run_oga(f, bank, GreedyConfig('OGA', max_steps=64), ctx)
            self.assertTrue(residual_bound_check(oga, 1.0, h_dist, kind='thm23').ok)
            rga6 = run_rga(f, bank, GreedyConfig('RGA', alpha_schedule='2.6', max_steps=64), ctx)
            self.assertTrue(residual_bound_check(rga6, 1.0, h_dist, kind='thm24', h_norm=h_norm).ok)
            rga5 = run_rga(f, bank, GreedyConfig('RGA', alpha_schedule='2.5', max_steps=64), ctx)
            self.assertTrue(residual_bound_check(rga5, 1.0, h_dist, kind='thm24_nonquadratic', h_norm=h_norm).ok)
            for lam in (2.0, 3.0):
                cfg = GreedyConfig('RGA', alpha_schedule='lambda_schedule', lam=lam, max_steps=64)
                trace = run_rga(f, bank, cfg, ctx)
                report = residual_bound_check(trace, 1.0, h_dist, kind='rem25', lam=lam, h_norm=h_norm)
                self.assertTrue(report.ok, f"lambda={lam} step {report.first_violation}")


class BoundCheckTestCase(SimpleTestCase):
    """Test the bound right-hand sides"""

    def test_thm23_with_exact_surrogate(self):
        """Test h = f reduces to 4 ||f||_L1^2 / N"""
        rhs = bound_rhs('thm23', [1, 4, 16], 2.0, h_dist=0.0)
        np.testing.assert_allclose(rhs ** 2, [16.0, 4.0, 1.0])

    def test_rem25_constant(self):
        """Test C = lambda^2 / (lambda - 1)"""
        self.assertEqual(rem25_constant(2), 4.0)
        self.assertEqual(rem25_constant(3), 4.5)

    def test_rem25_unsupported(self):
        """Test lambda <= 1 has no bound"""
        with self.assertRaises(UnsupportedBoundError):
            rem25_constant(1.0)

    def test_atom_target_passes_everything(self):
        """Test a zero residual passes every bound"""
        d = Dictionary(kind='orthonormal_canonical', size=3)
        trace = run_oga([0, 1, 0], d, GreedyConfig('OGA'), SpaceContext.euclidean(3))
        for kind in ('thm21', 'thm22', 'thm23', 'thm24', 'thm24_nonquadratic'):
            self.assertTrue(residual_bound_check(trace, 1.0, kind=kind, h_norm=1.0).ok)
        self.assertTrue(residual_bound_check(trace, 1.0, kind='rem25', lam=2.0).ok)

    def test_violation_reported(self):
        """Test the first violating step is reported"""
        d = Dictionary(kind='orthonormal_canonical', size=4)
        trace = run_oga([1, 1, 1, 1], d, GreedyConfig('OGA', max_steps=3), SpaceContext.euclidean(4))
        report = residual_bound_check(trace, 0.1, kind='thm21')
        self.assertEqual(report.first_violation, 1)
        self.assertFalse(report.ok)

    def test_truncated_bound(self):
        """Test C0 M (k^-1/2 + m^-r)"""
        rhs = bound_rhs('truncated', [4], 1.0, C0=2.0, m=16, r=0.5)
        self.assertAlmostEqual(float(rhs[0]), 2.0 * (0.5 + 0.25))

    def test_slack(self):
        """Test the comparison allows BOUND_SLACK relative and absolute slack only"""
        self.assertEqual(BOUND_SLACK, 1e-9)
        self.assertTrue(within_bound(1.0 + 1.5e-9, 1.0, 1.0))
        self.assertFalse(within_bound(1.0 + 1e-8, 1.0, 1.0))
        self.assertFalse(within_bound(1e-6, 0.0, 0.0))


class TraceExportTestCase(SimpleTestCase):
    """Test trace CSV serialization"""

    def test_csv_columns(self):
        """Test header and 17-digit values"""
        d = Dictionary(kind='orthonormal_canonical', size=3)
        trace = run_pga([1 / 3, 0, 0], d, GreedyConfig('PGA'), SpaceContext.euclidean(3))
        stream = io.StringIO()
        trace.to_csv(stream)
        lines = stream.getvalue().splitlines()
        self.assertEqual(lines[0], 'step,atom_index,alpha,beta,residual_norm')
        self.assertEqual(lines[1], f"1,0,1,{format(1 / 3, '.17g')},0")

    def test_projection_alpha_empty(self):
        """Test projection algorithms leave alpha empty"""
        d = Dictionary(kind='orthonormal_canonical', size=2)
        trace = run_oga([0, 2.0], d, GreedyConfig('OGA'), SpaceContext.euclidean(2))
        stream = io.StringIO()
        trace.to_csv(stream)
        self.assertEqual(stream.getvalue().splitlines()[1], '1,1,,2,0')
