"""
Test suite for the dictionary app
Tests atom evaluation, normalization, exhaustion and selection
"""

import numpy as np
from django.test import SimpleTestCase

from apps.hilbert.space import SpaceContext
from core.exceptions import DeadDictionaryError, EmptyDictionaryError
from .dictionaries import (
    AtomBank, AtomRef, Dictionary, atom_eval, dyadic_level, materialize, normalize,
    ridge_exhaustion, select_max_correlation, truncation_size,
)
from .forms import DictionaryForm


class AtomEvalTestCase(SimpleTestCase):
    """Test raw atom values"""

    def test_canonical_atom(self):
        """Test canonical atom 2 of a 4-cell grid"""
        d = Dictionary(kind='orthonormal_canonical', size=4)
        values = atom_eval(d, AtomRef(2), SpaceContext.euclidean(4))
        np.testing.assert_array_equal(values, [0, 0, 1, 0])

    def test_heaviside_step_at_zero(self):
        """Test heaviside ridge atom with v=1, w=0"""
        d = Dictionary(kind='ridge', directions=((1.0,),), offsets=(0.0,))
        values = atom_eval(d, AtomRef(0), SpaceContext.euclidean(2), [-1.0, 1.0])
        np.testing.assert_array_equal(values, [0, 1])

    def test_heaviside_is_strict(self):
        """Test the step is zero exactly at the hyperplane"""
        d = Dictionary(kind='ridge', directions=((1.0,),), offsets=(0.0,))
        self.assertEqual(atom_eval(d, AtomRef(0), SpaceContext.euclidean(1), [0.0])[0], 0.0)

    def test_logistic_at_zero(self):
        """Test logistic ridge atom with v=0 is 1/2 everywhere"""
        d = Dictionary(kind='ridge', activation='logistic', directions=((0.0,),), offsets=(0.0,))
        values = atom_eval(d, AtomRef(0), SpaceContext.euclidean(3), [-4.0, 0.3, 9.0])
        np.testing.assert_allclose(values, [0.5, 0.5, 0.5])

    def test_index_out_of_range(self):
        """Test invalid atom indices raise"""
        d = Dictionary(kind='orthonormal_canonical', size=4)
        with self.assertRaises(IndexError):
            atom_eval(d, AtomRef(4), SpaceContext.euclidean(4))

    def test_evaluation_is_deterministic(self):
        """Test repeated evaluation gives identical values"""
        d = Dictionary(kind='ridge', input_dim=3, n_directions=5, n_levels=4, fan_in=2)
        points = np.random.default_rng(1).random((20, 3))
        np.testing.assert_array_equal(d.evaluate(range(20), points), d.evaluate(range(20), points))

    def test_gaussian_prefix_stable(self):
        """Test gaussian atoms do not depend on the dictionary size"""
        small = Dictionary(kind='gaussian', size=16, count=5, seed=9)
        large = Dictionary(kind='gaussian', size=16, count=50, seed=9)
        np.testing.assert_array_equal(small.evaluate([3]), large.evaluate([3]))

    def test_union_of_bases_orthonormal_halves(self):
        """Test both halves of a union of bases are orthonormal"""
        d = Dictionary(kind='union_of_bases', size=8)
        bank = materialize(d, d.total, SpaceContext.euclidean(8))
        canonical, cosine = bank.atoms[0::2], bank.atoms[1::2]
        np.testing.assert_allclose(canonical @ canonical.T, np.eye(8), atol=1e-12)
        np.testing.assert_allclose(cosine @ cosine.T, np.eye(8), atol=1e-12)


class ExhaustionTestCase(SimpleTestCase):
    """Test ridge exhaustion order and grids"""

    def test_dyadic_levels(self):
        """Test coarse-to-fine offset positions"""
        levels = [dyadic_level(j) for j in range(7)]
        self.assertEqual(levels, [0.5, 0.25, 0.75, 0.125, 0.375, 0.625, 0.875])

    def test_shell_order(self):
        """Test older directions get the new level first"""
        self.assertEqual(
            ridge_exhaustion(3, 3),
            ((0, 0), (0, 1), (1, 0), (1, 1), (0, 2), (1, 2), (2, 0), (2, 1), (2, 2)),
        )

    def test_prefix_size(self):
        """Test every exhaustion prefix has exactly m atoms"""
        d = Dictionary(kind='ridge', input_dim=2, n_directions=4, n_levels=6)
        points = np.random.default_rng(0).random((10, 2))
        for m in (1, 5, 24):
            self.assertEqual(materialize(d, m, SpaceContext.empirical(10), points).m, m)

    def test_fan_in_limits_coordinates(self):
        """Test bounded fan-in keeps d nonzero coordinates of unit directions"""
        d = Dictionary(kind='ridge', input_dim=5, n_directions=12, n_levels=1, fan_in=2)
        directions = d.direction_matrix
        self.assertTrue(np.all(np.count_nonzero(directions, axis=1) <= 2))
        np.testing.assert_allclose(np.linalg.norm(directions, axis=1), 1.0)

    def test_truncation_size(self):
        """Test m(n) = floor(n^a)"""
        self.assertEqual(truncation_size(10, 2), 100)
        self.assertEqual(truncation_size(1, 3.7), 1)
        self.assertEqual(truncation_size(7, 1.5), 18)
        self.assertEqual(truncation_size(10, 2, total=50), 50)


class NormalizationTestCase(SimpleTestCase):
    """Test unit normalization and dead atoms"""

    def test_half_support_heaviside(self):
        """Test a heaviside on half the samples normalizes to sqrt(2)"""
        d = Dictionary(kind='ridge', directions=((1.0,),), offsets=(-0.5,))
        points = [0.1, 0.2, 0.7, 0.8]
        result = normalize(d, AtomRef(0), SpaceContext.empirical(4), points)
        self.assertFalse(result.dead)
        np.testing.assert_allclose(result.values, [0, 0, np.sqrt(2), np.sqrt(2)])

    def test_canonical_unchanged(self):
        """Test canonical atoms are already unit norm"""
        d = Dictionary(kind='orthonormal_canonical', size=5)
        result = normalize(d, AtomRef(3), SpaceContext.euclidean(5))
        np.testing.assert_array_equal(result.values, [0, 0, 0, 1, 0])

    def test_zero_atom_dead(self):
        """Test an atom that vanishes on every sample is dead"""
        d = Dictionary(kind='ridge', directions=((1.0,),), offsets=(-2.0,))
        result = normalize(d, AtomRef(0), SpaceContext.empirical(3), [0.1, 0.5, 0.9])
        self.assertTrue(result.dead)

    def test_random_ridge_atoms_unit_norm(self):
        """Test 100 ridge atoms over random sample sets have unit empirical norm"""
        rng = np.random.default_rng(42)
        d = Dictionary(kind='ridge', input_dim=2, n_directions=10, n_levels=10, activation='logistic', steepness=4.0)
        for trial in range(5):
            n = int(rng.integers(5, 60))
            points = rng.random((n, 2))
            bank = materialize(d, 100, SpaceContext.empirical(n), points)
            norms = SpaceContext.empirical(n).norms(bank.atoms[bank.live])
            self.assertLessEqual(np.max(np.abs(norms - 1.0)), 1e-10)

    def test_dead_per_context(self):
        """Test an atom dead on one sample set may be live on another"""
        d = Dictionary(kind='ridge', directions=((1.0,),), offsets=(-0.5,))
        dead = materialize(d, 1, SpaceContext.empirical(2), [0.1, 0.2])
        live = materialize(d, 1, SpaceContext.empirical(2), [0.1, 0.9])
        self.assertFalse(dead.live[0])
        self.assertTrue(live.live[0])


class SelectionTestCase(SimpleTestCase):
    """Test the argmax correlation rule"""

    def setUp(self):
        self.canonical = Dictionary(kind='orthonormal_canonical', size=3)
        self.ctx = SpaceContext.euclidean(3)

    def test_argmax_by_inspection(self):
        """Test largest absolute correlation wins with its sign"""
        selection = select_max_correlation(self.canonical, 3, self.ctx, [0.9, -1.1, 0.3])
        self.assertEqual(selection.atom, AtomRef(1))
        self.assertAlmostEqual(selection.corr, -1.1)

    def test_orthogonal_residual_tie_break(self):
        """Test zero correlations select index 0"""
        d = Dictionary(kind='orthonormal_canonical', size=4)
        selection = select_max_correlation(d, 2, SpaceContext.euclidean(4), [0, 0, 1, 1])
        self.assertEqual(selection.atom.index, 0)
        self.assertEqual(selection.corr, 0.0)

    def test_ridge_matches_exhaustive_scan(self):
        """Test selection over 8 ridge atoms matches a brute-force scan"""
        rng = np.random.default_rng(5)
        d = Dictionary(kind='ridge', input_dim=2, n_directions=4, n_levels=2, activation='logistic')
        points = rng.random((30, 2))
        ctx = SpaceContext.empirical(30)
        for _ in range(10):
            r = rng.standard_normal(30)
            selection = select_max_correlation(d, 8, ctx, r, points)
            best_index, best_value = 0, -1.0
            for index in range(8):
                result = normalize(d, AtomRef(index), ctx, points)
                value = abs(ctx.inner(r, result.values))
                if value > best_value:
                    best_index, best_value = index, value
            self.assertEqual(selection.atom.index, best_index)

    def test_exhaustion_monotonicity(self):
        """Test larger truncations never lower the best correlation"""
        rng = np.random.default_rng(8)
        d = Dictionary(kind='gaussian', size=16, count=40, seed=3)
        ctx = SpaceContext.euclidean(16)
        r = rng.standard_normal(16)
        values = [abs(select_max_correlation(d, m, ctx, r).corr) for m in range(1, 41)]
        self.assertTrue(all(b >= a for a, b in zip(values, values[1:])))

    def test_all_dead_raises(self):
        """Test a prefix without live atoms raises"""
        bank = AtomBank.from_vectors(np.zeros((2, 3)), self.ctx)
        with self.assertRaises(DeadDictionaryError):
            bank.select(self.ctx, [1, 2, 3])

    def test_dead_atoms_skipped(self):
        """Test dead atoms are never selected"""
        bank = AtomBank.from_vectors(np.array([[0, 0, 0], [0, 0, 1.0]]), self.ctx)
        self.assertEqual(bank.select(self.ctx, [0, 0, 0]).atom.index, 1)

    def test_empty_truncation(self):
        """Test m = 0 is rejected"""
        with self.assertRaises(EmptyDictionaryError):
            materialize(self.canonical, 0, self.ctx)


class DictionaryFormTestCase(SimpleTestCase):
    """Test dictionary config validation"""

    def test_valid_ridge_form(self):
        """Test a ridge section builds a dictionary"""
        form = DictionaryForm(data={
            'kind': 'ridge', 'input_dim': '2', 'n_directions': '3', 'n_levels': '4',
            'activation': 'logistic', 'steepness': '8',
        })
        self.assertTrue(form.is_valid(), form.errors)
        d = form.build()
        self.assertEqual(d.total, 12)
        self.assertEqual(d.activation, 'logistic')

    def test_explicit_directions(self):
        """Test explicit directions and offsets are parsed"""
        form = DictionaryForm(data={'kind': 'ridge', 'input_dim': '2', 'directions': '1,0; 0,1', 'offsets': '0, -0.5'})
        self.assertTrue(form.is_valid(), form.errors)
        self.assertEqual(form.build().total, 4)

    def test_missing_size(self):
        """Test grid kinds require a size"""
        form = DictionaryForm(data={'kind': 'orthonormal_canonical'})
        self.assertFalse(form.is_valid())
        self.assertIn('size', form.errors)

    def test_direction_length_mismatch(self):
        """Test directions must match input_dim"""
        form = DictionaryForm(data={'kind': 'ridge', 'input_dim': '3', 'directions': '1,0', 'n_levels': '2'})
        self.assertFalse(form.is_valid())
        self.assertIn('directions', form.errors)

    def test_unknown_kind(self):
        """Test unknown kinds are rejected"""
        form = DictionaryForm(data={'kind': 'wavelet', 'size': '8'})
        self.assertFalse(form.is_valid())
        self.assertIn('kind', form.errors)

    def test_unknown_activation(self):
        """Test only heaviside and logistic activations are accepted"""
        form = DictionaryForm(data={'kind': 'ridge', 'activation': 'sigmoid', 'n_directions': '4', 'n_levels': '2'})
        self.assertFalse(form.is_valid())
        self.assertIn('activation', form.errors)
        with self.assertRaises(ValueError):
            Dictionary(kind='ridge', n_directions=4, n_levels=2, activation='sigmoid')
