"""
Test suite for the hilbert app
Tests inner products, Gram state extension and projections
"""

import numpy as np
from django.test import SimpleTestCase

from core.exceptions import DimensionMismatchError
from .space import (
    SpaceContext, GramState, inner, norm, gram_extend, project_onto_span,
    orthogonal_components,
)


class SpaceContextTestCase(SimpleTestCase):
    """Test weighted inner products"""

    def test_constant_function_empirical_norm(self):
        """Test constant 1 has empirical norm 1"""
        ctx = SpaceContext(np.array([0.5, 0.5]))
        self.assertAlmostEqual(inner(ctx, [1, 1], [1, 1]), 1.0)

    def test_disjoint_supports(self):
        """Test vectors with disjoint supports are orthogonal"""
        ctx = SpaceContext(np.array([3.0, 0.25]))
        self.assertEqual(inner(ctx, [1, 0], [0, 1]), 0.0)

    def test_direct_summation(self):
        """Test inner product against a direct sum"""
        ctx = SpaceContext.euclidean(3)
        self.assertEqual(inner(ctx, [1, 2, 3], [1, 1, 1]), 6.0)

    def test_symmetry(self):
        """Test inner product is exactly symmetric"""
        rng = np.random.default_rng(0)
        ctx = SpaceContext(rng.random(17))
        u, v = rng.standard_normal(17), rng.standard_normal(17)
        self.assertEqual(inner(ctx, u, v), inner(ctx, v, u))

    def test_dimension_mismatch(self):
        """Test mismatched lengths raise"""
        ctx = SpaceContext.euclidean(3)
        with self.assertRaises(DimensionMismatchError):
            inner(ctx, [1, 2], [1, 2, 3])
        with self.assertRaises(ValueError):
            norm(ctx, [1, 2, 3, 4])

    def test_invalid_weights(self):
        """Test negative or all-zero weights are rejected"""
        with self.assertRaises(ValueError):
            SpaceContext(np.array([1.0, -1.0]))
        with self.assertRaises(ValueError):
            SpaceContext(np.zeros(3))

    def test_zero_weight_coordinates_ignored(self):
        """Test vectors differing on zero-weight coordinates are equal"""
        ctx = SpaceContext(np.array([1.0, 0.0, 1.0]))
        self.assertTrue(ctx.equal([1, 5, 2], [1, -7, 2]))
        self.assertEqual(norm(ctx, [0, 9, 0]), 0.0)

    def test_empirical_weights(self):
        """Test the empirical constructor"""
        ctx = SpaceContext.empirical(4)
        np.testing.assert_allclose(ctx.weights, [0.25] * 4)
        self.assertAlmostEqual(norm(ctx, [1, 2, 2, 3]) ** 2, 4.5)


class GramStateTestCase(SimpleTestCase):
    """Test incremental orthogonalization and projection"""

    def setUp(self):
        self.ctx2 = SpaceContext.euclidean(2)
        self.ctx3 = SpaceContext.euclidean(3)

    def test_axis_projection(self):
        """Test projection of (3,4) onto e1"""
        state, degenerate = gram_extend(self.ctx2, GramState.empty(2), [1, 0])
        self.assertFalse(degenerate)
        result = project_onto_span(self.ctx2, state, [3, 4])
        np.testing.assert_allclose(result.proj, [3, 0], atol=1e-14)
        np.testing.assert_allclose(result.coeffs, [3], atol=1e-14)

    def test_full_span_identity(self):
        """Test projecting onto the full space returns f"""
        state = GramState.from_atoms(self.ctx2, np.eye(2))
        f = np.array([-1.5, 2.25])
        np.testing.assert_allclose(project_onto_span(self.ctx2, state, f).proj, f, atol=1e-14)

    def test_dense_least_squares_oracle(self):
        """Test projection onto a skewed 2-span in R^3"""
        s = 1 / np.sqrt(2)
        state = GramState.from_atoms(self.ctx3, np.array([[1, 0, 0], [s, s, 0]]))
        result = project_onto_span(self.ctx3, state, [0, 1, 1])
        np.testing.assert_allclose(result.proj, [0, 1, 0], atol=1e-12)
        np.testing.assert_allclose(result.coeffs, [-1, np.sqrt(2)], atol=1e-12)

    def test_incremental_skewed_projection(self):
        """Test extend {e1} with a diagonal atom then project"""
        s = 1 / np.sqrt(2)
        state, _ = gram_extend(self.ctx3, GramState.empty(3), [1, 0, 0])
        state, degenerate = gram_extend(self.ctx3, state, [s, s, 0])
        self.assertFalse(degenerate)
        np.testing.assert_allclose(project_onto_span(self.ctx3, state, [0, 1, 1]).proj, [0, 1, 0], atol=1e-12)

    def test_one_dimensional_projection(self):
        """Test one atom projection equals <f,g>g/<g,g>"""
        g = np.array([1.0, 2.0, -2.0])
        f = np.array([0.5, -1.0, 4.0])
        state, _ = gram_extend(self.ctx3, GramState.empty(3), g)
        expected = np.dot(f, g) / np.dot(g, g) * g
        np.testing.assert_allclose(project_onto_span(self.ctx3, state, f).proj, expected, atol=1e-12)

    def test_duplicate_atom_degenerate(self):
        """Test duplicate atoms set the degeneracy flag and leave state unchanged"""
        state, _ = gram_extend(self.ctx3, GramState.empty(3), [1, 1, 0])
        again, degenerate = gram_extend(self.ctx3, state, [1, 1, 0])
        self.assertTrue(degenerate)
        self.assertIs(again, state)
        self.assertEqual(again.k, 1)

    def test_batch_records_skipped(self):
        """Test batch build skips dependent atoms and flags projections"""
        atoms = np.array([[1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype=float)
        state = GramState.from_atoms(self.ctx3, atoms)
        self.assertEqual(state.k, 2)
        self.assertEqual(state.skipped, (2,))
        result = project_onto_span(self.ctx3, state, [1, 2, 3])
        self.assertTrue(result.degenerate)
        np.testing.assert_allclose(result.proj, [1, 2, 0], atol=1e-12)

    def test_empty_state_projection(self):
        """Test projecting onto the empty span gives zero"""
        result = project_onto_span(self.ctx3, GramState.empty(3), [1, 2, 3])
        self.assertEqual(result.coeffs.size, 0)
        np.testing.assert_array_equal(result.proj, np.zeros(3))

    def test_random_span_properties(self):
        """Test orthogonality, Pythagoras and idempotence on 100 random instances"""
        rng = np.random.default_rng(2008)
        for _ in range(100):
            dim = int(rng.integers(2, 33))
            k = int(rng.integers(1, min(8, dim) + 1))
            ctx = SpaceContext(rng.random(dim) + 0.05)
            atoms = rng.standard_normal((k, dim))
            f = rng.standard_normal(dim)
            state = GramState.from_atoms(ctx, atoms)
            result = project_onto_span(ctx, state, f)
            residual = f - result.proj
            f_norm = norm(ctx, f)
            self.assertLessEqual(np.max(np.abs(ctx.inner_many(atoms, residual))), 1e-8 * f_norm)
            lhs = f_norm ** 2
            rhs = norm(ctx, result.proj) ** 2 + norm(ctx, residual) ** 2
            self.assertLessEqual(abs(lhs - rhs), 1e-8 * lhs)
            again = project_onto_span(ctx, state, result.proj)
            np.testing.assert_allclose(again.proj, result.proj, atol=1e-10 * f_norm)
            np.testing.assert_allclose(result.coeffs @ atoms, result.proj, atol=1e-8 * f_norm)

    def test_gram_factor_reproduces_gram(self):
        """Test R^T R matches the recomputed Gram matrix"""
        rng = np.random.default_rng(7)
        ctx = SpaceContext(rng.random(20) + 0.1)
        state = GramState.from_atoms(ctx, rng.standard_normal((6, 20)))
        gram = state.gram_matrix(ctx)
        error = np.linalg.norm(state.factored_gram() - gram) / np.linalg.norm(gram)
        self.assertLessEqual(error, 1e-10)

    def test_one_atom_identity(self):
        """Test ||f - <f,g>g||^2 = ||f||^2 - <f,g>^2 for unit g"""
        rng = np.random.default_rng(11)
        ctx = SpaceContext.euclidean(9)
        for _ in range(20):
            g = rng.standard_normal(9)
            g /= norm(ctx, g)
            f = rng.standard_normal(9)
            c = inner(ctx, f, g)
            self.assertAlmostEqual(norm(ctx, f - c * g) ** 2, norm(ctx, f) ** 2 - c ** 2, delta=1e-10)

    def test_incremental_matches_batch(self):
        """Test a chain of extensions agrees with a batch rebuild"""
        rng = np.random.default_rng(3)
        ctx = SpaceContext(rng.random(24) + 0.2)
        atoms = rng.standard_normal((7, 24))
        f = rng.standard_normal(24)
        state = GramState.empty(24)
        for atom in atoms:
            state, _ = gram_extend(ctx, state, atom)
        batch = GramState.from_atoms(ctx, atoms)
        np.testing.assert_allclose(
            project_onto_span(ctx, state, f).proj,
            project_onto_span(ctx, batch, f).proj,
            atol=1e-10,
        )

    def test_orthogonal_components(self):
        """Test components orthogonal to the span"""
        state = GramState.from_atoms(self.ctx3, np.array([[1.0, 0, 0]]))
        components = orthogonal_components(self.ctx3, state, np.array([[2.0, 3.0, 4.0], [5.0, 0, 0]]))
        np.testing.assert_allclose(components, [[0, 3, 4], [0, 0, 0]], atol=1e-14)
