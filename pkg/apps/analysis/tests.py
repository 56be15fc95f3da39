"""
Test suite for the analysis app
Tests the brute-force and LP oracles, quasi-norms, K-functionals,
synthetic targets and rate fits
"""

import io
import math

import numpy as np
from django.test import SimpleTestCase

from apps.dictionary.dictionaries import AtomBank, Dictionary
from apps.greedy.engines import run_greedy
from apps.greedy.schedules import GreedyConfig
from apps.hilbert.space import SpaceContext
from core.exceptions import GuardExceededError, NotInSpanError
from .functionals import k_functional_estimate, orthonormal_k_value, soft_threshold, weak_lp_quasinorm
from .oracles import best_n_term_bruteforce, l1_norm_lp, write_oracle_csv
from .rates import rate_slope
from .synthesis import Representation, synth_bp_function, synth_l1_function, synth_l1r_function


def threshold_objective(magnitudes, orth_energy, t, levels):
    """||f - h_s|| + t ||h_s||_1 for soft thresholding at each level s"""
    kept = np.minimum(magnitudes[None, :], levels[:, None])
    shrunk = np.maximum(magnitudes[None, :] - levels[:, None], 0.0)
    return np.sqrt(orth_energy + np.sum(kept ** 2, axis=1)) + t * np.sum(shrunk, axis=1)


def dense_threshold_scan(magnitudes, orth_energy, t):
    """Minimum over a dense grid of threshold levels, refined around every coarse local minimum"""
    top = float(np.max(magnitudes))
    coarse = np.linspace(0.0, top, 200001)
    values = threshold_objective(magnitudes, orth_energy, t, coarse)
    step = coarse[1] - coarse[0]
    padded = np.concatenate([[np.inf], values, [np.inf]])
    minima = np.flatnonzero((values <= padded[:-2]) & (values <= padded[2:]))
    best = float(np.min(values))
    for index in minima:
        center, width = coarse[index], step
        for _ in range(3):
            fine = np.linspace(max(center - width, 0.0), min(center + width, top), 2001)
            fine_values = threshold_objective(magnitudes, orth_energy, t, fine)
            center = fine[int(np.argmin(fine_values))]
            width = fine[1] - fine[0]
            best = min(best, float(np.min(fine_values)))
    return best


class BestNTermTestCase(SimpleTestCase):
    """Test the enumeration oracle"""

    def setUp(self):
        self.d = Dictionary(kind='orthonormal_canonical', size=3)
        self.ctx = SpaceContext.euclidean(3)

    def test_orthonormal_tail(self):
        """Test coefficients (3,2,1) give sigma_2 = 1"""
        result = best_n_term_bruteforce([3, 2, 1], self.d, 3, 2, self.ctx)
        self.assertAlmostEqual(result.error, 1.0, delta=1e-12)
        self.assertEqual(result.support, (0, 1))
        np.testing.assert_allclose(result.coefficients, [3, 2], atol=1e-12)

    def test_full_span(self):
        """Test N >= dim gives zero error"""
        self.assertAlmostEqual(best_n_term_bruteforce([3, 2, 1], self.d, 3, 5, self.ctx).error, 0.0, delta=1e-12)

    def test_zero_terms(self):
        """Test N = 0 gives ||f||"""
        self.assertAlmostEqual(best_n_term_bruteforce([3, 2, 1], self.d, 3, 0, self.ctx).error, math.sqrt(14))

    def test_guard(self):
        """Test huge enumerations are refused"""
        d = Dictionary(kind='orthonormal_canonical', size=40)
        with self.assertRaises(GuardExceededError):
            best_n_term_bruteforce(np.ones(40), d, 40, 20, SpaceContext.euclidean(40))

    def test_nonincreasing_in_n(self):
        """Test sigma_N never increases with N"""
        rng = np.random.default_rng(30)
        ctx = SpaceContext.euclidean(8)
        bank = AtomBank.from_vectors(rng.standard_normal((10, 8)), ctx)
        f = rng.standard_normal(8)
        errors = [best_n_term_bruteforce(f, bank, 10, N, ctx).error for N in range(5)]
        self.assertTrue(all(b <= a + 1e-12 for a, b in zip(errors, errors[1:])))

    def test_greedy_dominated_by_oracle(self):
        """Test ||r_N|| >= sigma_N for every algorithm on small instances"""
        rng = np.random.default_rng(31)
        configs = [
            GreedyConfig('PGA', max_steps=4),
            GreedyConfig('OGA', max_steps=4),
            GreedyConfig('SPA', max_steps=4),
            GreedyConfig('RGA', alpha_schedule='2.5', max_steps=4),
            GreedyConfig('RGA', alpha_schedule='2.6', max_steps=4),
        ]
        for _ in range(15):
            dim = int(rng.integers(4, 10))
            m = int(rng.integers(dim, 13))
            ctx = SpaceContext.euclidean(dim)
            bank = AtomBank.from_vectors(rng.standard_normal((m, dim)), ctx)
            f = rng.standard_normal(dim)
            sigma = [best_n_term_bruteforce(f, bank, m, N, ctx).error for N in range(5)]
            for cfg in configs:
                trace = run_greedy(f, bank, cfg, ctx)
                for N, residual in enumerate(trace.residual_norms):
                    self.assertGreaterEqual(residual, sigma[N] - 1e-10, cfg.algorithm)


class L1NormTestCase(SimpleTestCase):
    """Test the basis pursuit oracle"""

    def test_orthonormal_expansion(self):
        """Test the unique orthonormal expansion"""
        d = Dictionary(kind='orthonormal_canonical', size=3)
        result = l1_norm_lp([1, -2, 0.5], d, 3, SpaceContext.euclidean(3))
        self.assertAlmostEqual(result.value, 3.5, delta=1e-8)

    def test_single_atom(self):
        """Test f = g has norm 1"""
        ctx = SpaceContext.euclidean(4)
        bank = AtomBank.from_vectors(np.random.default_rng(32).standard_normal((5, 4)), ctx)
        self.assertAlmostEqual(l1_norm_lp(bank.atoms[2], bank, 5, ctx).value, 1.0, delta=1e-8)

    def test_diagonal_atom_preferred(self):
        """Test e1 + e2 uses the diagonal atom alone"""
        ctx = SpaceContext.euclidean(2)
        s = 1 / math.sqrt(2)
        bank = AtomBank.from_vectors(np.array([[1.0, 0], [0, 1.0], [s, s]]), ctx)
        result = l1_norm_lp([1.0, 1.0], bank, 3, ctx)
        self.assertAlmostEqual(result.value, math.sqrt(2), delta=1e-8)
        self.assertEqual(result.representation.indices, (2,))
        np.testing.assert_allclose(result.representation.vector, [1, 1], atol=1e-8)

    def test_not_in_span(self):
        """Test targets outside the span report their distance"""
        d = Dictionary(kind='orthonormal_canonical', size=3)
        with self.assertRaises(NotInSpanError) as raised:
            l1_norm_lp([1, 2, 2], d, 2, SpaceContext.euclidean(3))
        self.assertAlmostEqual(raised.exception.distance, 2.0, delta=1e-12)

    def test_atom_guard(self):
        """Test the LP refuses more than 64 atoms"""
        d = Dictionary(kind='orthonormal_canonical', size=80)
        with self.assertRaises(GuardExceededError):
            l1_norm_lp(np.ones(80), d, 80, SpaceContext.euclidean(80))

    def test_dominates_norm(self):
        """Test ||f||_L1 >= ||f|| for unit atoms"""
        rng = np.random.default_rng(33)
        ctx = SpaceContext.euclidean(5)
        bank = AtomBank.from_vectors(rng.standard_normal((9, 5)), ctx)
        for _ in range(10):
            f = rng.standard_normal(5)
            self.assertGreaterEqual(l1_norm_lp(f, bank, 9, ctx).value, np.linalg.norm(f) - 1e-8)


class QuasiNormTestCase(SimpleTestCase):
    """Test weak-lp quasi-norms and soft thresholding"""

    def test_harmonic_sequence(self):
        """Test (1, 1/2, 1/3, 1/4) has weak-l1 norm 1"""
        self.assertAlmostEqual(weak_lp_quasinorm([1, 1 / 2, 1 / 3, 1 / 4], 1), 1.0, delta=1e-12)

    def test_single_element(self):
        """Test a single element is its own norm"""
        self.assertAlmostEqual(weak_lp_quasinorm([5], 1.5), 5.0)
        self.assertAlmostEqual(weak_lp_quasinorm([-5], 0.7), 5.0)

    def test_zeros(self):
        """Test the zero sequence"""
        self.assertEqual(weak_lp_quasinorm(np.zeros(4), 1), 0.0)

    def test_ties_counted(self):
        """Test repeated magnitudes count together"""
        self.assertAlmostEqual(weak_lp_quasinorm([1, 1, 1, 1], 2), 2.0)

    def test_soft_threshold_examples(self):
        """Test the three branches"""
        self.assertEqual(soft_threshold(1.0, 1.0), 0.5)
        self.assertEqual(soft_threshold(0.4, 1.0), 0.0)
        self.assertEqual(soft_threshold(-2.0, 1.0), -1.5)

    def test_soft_threshold_contraction(self):
        """Test |S(c) - S(c')| <= |c - c'|"""
        rng = np.random.default_rng(34)
        c, c2 = rng.standard_normal(500) * 3, rng.standard_normal(500) * 3
        t = float(rng.random() * 2)
        self.assertTrue(np.all(np.abs(soft_threshold(c, t) - soft_threshold(c2, t)) <= np.abs(c - c2) + 1e-15))

    def test_negative_threshold(self):
        """Test negative thresholds are rejected"""
        with self.assertRaises(ValueError):
            soft_threshold(1.0, -0.1)


class KFunctionalTestCase(SimpleTestCase):
    """Test K-functional profiles"""

    def test_zero_target(self):
        """Test K vanishes for f = 0"""
        d = Dictionary(kind='orthonormal_canonical', size=4)
        profile = k_functional_estimate(np.zeros(4), d, 4, [0.1, 1.0], SpaceContext.euclidean(4))
        np.testing.assert_array_equal(profile.K_values, [0.0, 0.0])

    def test_two_coefficient_example(self):
        """Test coefficients (1, 1/2) at t = 1 give K = ||f||"""
        d = Dictionary(kind='orthonormal_canonical', size=2)
        profile = k_functional_estimate([1.0, 0.5], d, 2, [1.0], SpaceContext.euclidean(2))
        self.assertAlmostEqual(float(profile.K_values[0]), math.sqrt(1.25), delta=1e-12)
        self.assertTrue(profile.exact)

    def test_general_dictionary_envelope(self):
        """Test K <= min(||f||, t M) for f in L1 with norm M on a coherent dictionary"""
        rng = np.random.default_rng(35)
        ctx = SpaceContext.euclidean(12)
        bank = AtomBank.from_vectors(rng.standard_normal((20, 12)), ctx)
        f, rep = synth_l1_function(bank, 20, rng, support_size=5, ctx=ctx)
        grid = np.logspace(-2, 1, 12)
        profile = k_functional_estimate(f, bank, 20, grid, ctx)
        self.assertFalse(profile.exact)
        envelope = np.minimum(np.linalg.norm(f), grid * rep.l1)
        self.assertTrue(np.all(profile.K_values <= envelope + 1e-7))
        self.assertTrue(np.all(np.diff(profile.K_values) >= -1e-12))

    def test_orthonormal_matches_dense_scan(self):
        """Test the exact orthonormal profile against a dense threshold scan on 20 targets"""
        rng = np.random.default_rng(36)
        d = Dictionary(kind='orthonormal_canonical', size=16)
        ctx = SpaceContext.euclidean(16)
        grid = np.array([0.01, 0.05, 0.1, 0.3, 0.7, 1.0])
        for _ in range(20):
            f = rng.standard_normal(16)
            profile = k_functional_estimate(f, d, 12, grid, ctx)
            magnitudes = np.abs(f[:12])
            orth_energy = float(np.sum(f[12:] ** 2))
            for t, value in zip(grid, profile.K_values):
                self.assertAlmostEqual(value, dense_threshold_scan(magnitudes, orth_energy, t), delta=1e-8)

    def test_exact_value_is_a_minimum(self):
        """Test no threshold level beats the exact value"""
        rng = np.random.default_rng(37)
        magnitudes = np.abs(rng.standard_normal(9))
        levels = np.linspace(0, magnitudes.max(), 5001)
        for t in (0.05, 0.2, 0.6):
            exact = orthonormal_k_value(magnitudes, 0.3, t)
            self.assertLessEqual(exact, float(np.min(threshold_objective(magnitudes, 0.3, t, levels))) + 1e-12)

    def test_membership_constant_bounded(self):
        """Test K(f,t)/t^theta stays bounded for the synthetic interpolation target"""
        d = Dictionary(kind='orthonormal_canonical', size=256)
        ctx = SpaceContext.euclidean(256)
        for p in (4 / 3, 1.5):
            f, _ = synth_bp_function(d, 256, p, 38, ctx=ctx)
            profile = k_functional_estimate(f, d, 256, None, ctx, theta=2 / p - 1)
            self.assertEqual(profile.K_values.size, 32)
            self.assertLessEqual(profile.membership_constant, 10.0)
            self.assertTrue(np.all(np.diff(profile.K_values) >= -1e-12))
            self.assertTrue(np.all(profile.K_values <= np.linalg.norm(f) + 1e-12))
            self.assertAlmostEqual(profile.p, p)


class SynthesisTestCase(SimpleTestCase):
    """Test synthetic targets"""

    def setUp(self):
        self.d = Dictionary(kind='orthonormal_canonical', size=8)
        self.ctx = SpaceContext.euclidean(8)

    def test_harmonic_magnitudes(self):
        """Test p = 1 gives magnitudes (1, 1/2, 1/3)"""
        _, rep = synth_bp_function(self.d, 3, 1.0, 1, ctx=self.ctx)
        np.testing.assert_allclose(np.abs(rep.coeffs), [1, 1 / 2, 1 / 3])

    def test_square_root_magnitudes(self):
        """Test p = 2 gives magnitudes (1, 1/sqrt 2)"""
        _, rep = synth_bp_function(self.d, 2, 2.0, 1, ctx=self.ctx)
        np.testing.assert_allclose(np.abs(rep.coeffs), [1, 1 / math.sqrt(2)])

    def test_unit_weak_norm(self):
        """Test every synthesized coefficient sequence has weak-lp norm 1"""
        for p in (1.0, 4 / 3, 1.5, 2.0):
            _, rep = synth_bp_function(self.d, 8, p, 5, ctx=self.ctx)
            self.assertAlmostEqual(weak_lp_quasinorm(rep.coeffs, p), 1.0, delta=1e-12)

    def test_representation_reproduces_vector(self):
        """Test the stored vector matches re-synthesis"""
        f, rep = synth_bp_function(self.d, 8, 1.5, 6, ctx=self.ctx)
        bank = AtomBank.from_vectors(np.eye(8), self.ctx)
        np.testing.assert_allclose(rep.synthesize(bank), f, atol=1e-10)
        self.assertEqual(len(rep.pairs()), 8)

    def test_seeded_signs_deterministic(self):
        """Test identical seeds give identical targets"""
        f1, _ = synth_bp_function(self.d, 8, 1.0, 99, ctx=self.ctx)
        f2, _ = synth_bp_function(self.d, 8, 1.0, 99, ctx=self.ctx)
        np.testing.assert_array_equal(f1, f2)

    def test_l1_ball_target(self):
        """Test unit L1 ball targets"""
        _, rep = synth_l1_function(self.d, 8, 3, support_size=4, ctx=self.ctx)
        self.assertAlmostEqual(rep.l1, 1.0)
        self.assertEqual(len(rep.indices), 4)

    def test_truncated_class_target(self):
        """Test prefixes of the truncated-class target stay within m^-r"""
        d = Dictionary(kind='orthonormal_canonical', size=128)
        f, rep = synth_l1r_function(d, 128, 0.5, 7, ctx=SpaceContext.euclidean(128))
        self.assertAlmostEqual(rep.l1, 1.0)
        for m in (4, 16, 64):
            self.assertLessEqual(np.linalg.norm(f[m:]), m ** -0.5)

    def test_thresholding_rate(self):
        """Test ||f - top-N|| <= M N^-1/2 for orthonormal L1 targets"""
        rng = np.random.default_rng(39)
        for _ in range(10):
            coeffs = rng.standard_normal(64)
            M = float(np.sum(np.abs(coeffs)))
            tail = np.sort(coeffs ** 2)
            for N in (1, 4, 16):
                self.assertLessEqual(math.sqrt(float(np.sum(tail[:64 - N]))), M / math.sqrt(N))

    def test_empty_representation(self):
        """Test the empty expansion"""
        rep = Representation.empty(3)
        self.assertEqual(rep.l1, 0.0)
        np.testing.assert_array_equal(rep.vector, np.zeros(3))


class RateSlopeTestCase(SimpleTestCase):
    """Test log-log slope fits"""

    def test_exact_half_rate(self):
        """Test err = N^-1/2 gives slope -1/2 and r2 = 1"""
        fit = rate_slope([(1, 1.0), (4, 0.5), (16, 0.25)])
        self.assertAlmostEqual(fit.slope, -0.5, delta=1e-12)
        self.assertAlmostEqual(fit.r2, 1.0, delta=1e-12)

    def test_constant_error(self):
        """Test constant errors give slope 0"""
        self.assertEqual(rate_slope([(1, 0.3), (2, 0.3), (8, 0.3)]).slope, 0.0)

    def test_intercept(self):
        """Test err = 2 N^-0.75"""
        fit = rate_slope([(N, 2 * N ** -0.75) for N in (2, 4, 8, 16)])
        self.assertAlmostEqual(fit.slope, -0.75, delta=1e-12)
        self.assertAlmostEqual(fit.intercept, math.log(2), delta=1e-12)

    def test_invalid_points(self):
        """Test nonpositive errors and short inputs are rejected"""
        with self.assertRaises(ValueError):
            rate_slope([(1, 1.0), (2, 0.0), (3, 0.5)])
        with self.assertRaises(ValueError):
            rate_slope([(1, 1.0), (2, 0.5)])


class OracleExportTestCase(SimpleTestCase):
    """Test oracle CSV export"""

    def test_columns(self):
        """Test header and row formatting"""
        stream = io.StringIO()
        write_oracle_csv(stream, [[0, 2, 1.0, 'OGA', 1.0, 'thm21', 1 / math.sqrt(3), False]])
        lines = stream.getvalue().splitlines()
        self.assertEqual(lines[0], 'instance,N,sigma_N,algorithm,residual_norm,bound_kind,bound,passed')
        self.assertTrue(lines[1].startswith('0,2,1,OGA,1,thm21,0.57735026918962'))
        self.assertTrue(lines[1].endswith(',false'))
