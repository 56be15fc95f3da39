"""
Inner-product space kernel.

Functions are represented by their values on a coordinate grid (or a
sample design). A SpaceContext carries the diagonal measure that turns
that grid into a Hilbert space: unit weights give the Euclidean inner
product, weights 1/n give the empirical norm of a sample set.

GramState keeps the selected atoms together with an orthonormal basis of
their span, built by classical Gram-Schmidt with one reorthogonalization
pass. Projections never form the Gram matrix explicitly.
"""

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.linalg import solve_triangular

from core.exceptions import DimensionMismatchError

logger = logging.getLogger(__name__)

DEFAULT_RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class SpaceContext:
    """Diagonal measure on a finite coordinate set"""

    weights: np.ndarray

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float)
        if weights.ndim != 1 or weights.size == 0:
            raise ValueError("weights must be a nonempty 1-d sequence")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValueError("weights must be finite and nonnegative")
        if not np.any(weights > 0):
            raise ValueError("at least one weight must be positive")
        weights.setflags(write=False)
        object.__setattr__(self, 'weights', weights)

    @classmethod
    def euclidean(cls, dim):
        """Plain Euclidean structure on dim coordinates"""
        return cls(np.ones(dim))

    @classmethod
    def empirical(cls, n):
        """Empirical measure (1/n) sum of point masses"""
        return cls(np.full(n, 1.0 / n))

    @property
    def dim(self):
        return self.weights.size

    def conform(self, u):
        """Return u as a float array, checking its trailing length"""
        arr = np.asarray(u, dtype=float)
        if arr.ndim == 0 or arr.shape[-1] != self.dim:
            raise DimensionMismatchError(
                f"vector of shape {arr.shape} does not conform to a space of dim {self.dim}"
            )
        return arr

    def inner(self, u, v):
        u, v = self.conform(u), self.conform(v)
        return float(np.dot(self.weights, u * v))

    def norm(self, u):
        return float(np.sqrt(max(self.inner(u, u), 0.0)))

    def inner_many(self, rows, v):
        """Inner products of every row of a matrix with v"""
        rows, v = self.conform(rows), self.conform(v)
        return rows @ (self.weights * v)

    def norms(self, rows):
        rows = self.conform(rows)
        squares = (rows * rows) @ self.weights
        return np.sqrt(np.maximum(squares, 0.0))

    def equal(self, u, v, tol=1e-12):
        """Equality in this space; zero-weight coordinates are ignored"""
        return self.norm(self.conform(u) - self.conform(v)) <= tol


def inner(ctx, u, v):
    """Weighted inner product sum_i w_i u_i v_i"""
    return ctx.inner(u, v)


def norm(ctx, u):
    return ctx.norm(u)


@dataclass(frozen=True, eq=False)
class GramState:
    """
    Selected atoms g_1..g_k with an orthonormal basis of their span.

    atoms[j] = sum_i factor[i, j] * basis[i], so factor is the upper
    triangular R of a QR factorization in the weighted inner product and
    factor.T @ factor reproduces the Gram matrix.
    """

    atoms: np.ndarray
    basis: np.ndarray
    factor: np.ndarray
    rank_tol: float = DEFAULT_RANK_TOL
    atom_scale: float = 0.0
    skipped: tuple = field(default=())

    @classmethod
    def empty(cls, dim, rank_tol=DEFAULT_RANK_TOL):
        return cls(
            atoms=np.zeros((0, dim)),
            basis=np.zeros((0, dim)),
            factor=np.zeros((0, 0)),
            rank_tol=rank_tol,
        )

    @classmethod
    def from_atoms(cls, ctx, atoms, rank_tol=DEFAULT_RANK_TOL):
        """Batch build; atoms inside the running span are skipped and recorded"""
        atoms = ctx.conform(np.atleast_2d(atoms))
        state = cls.empty(ctx.dim, rank_tol)
        skipped = []
        for position, atom in enumerate(atoms):
            state, degenerate = gram_extend(ctx, state, atom)
            if degenerate:
                skipped.append(position)
        if skipped:
            logger.warning(f"Gram build skipped {len(skipped)} numerically dependent atoms")
        return GramState(
            atoms=state.atoms,
            basis=state.basis,
            factor=state.factor,
            rank_tol=state.rank_tol,
            atom_scale=state.atom_scale,
            skipped=tuple(skipped),
        )

    @property
    def k(self):
        return self.atoms.shape[0]

    @property
    def degenerate(self):
        return bool(self.skipped)

    def gram_matrix(self, ctx):
        """G_k with entries <g_i, g_j>, recomputed from the atoms"""
        return (self.atoms * ctx.weights) @ self.atoms.T

    def factored_gram(self):
        return self.factor.T @ self.factor


class GramExtension(NamedTuple):
    state: GramState
    degenerate: bool


class Projection(NamedTuple):
    coeffs: np.ndarray
    proj: np.ndarray
    degenerate: bool


def _orthogonalize(ctx, basis, g):
    """Classical Gram-Schmidt against an orthonormal basis, applied twice"""
    if basis.shape[0] == 0:
        return np.zeros(0), np.array(g, dtype=float)
    coeffs = basis @ (ctx.weights * g)
    v = g - coeffs @ basis
    correction = basis @ (ctx.weights * v)
    v = v - correction @ basis
    return coeffs + correction, v


def gram_extend(ctx, state, g):
    """
    Append one atom to a GramState.

    Returns a new state and a degeneracy flag. When g lies numerically in
    the current span the input state is returned unchanged with the flag
    set, so greedy loops can skip the atom and carry on.
    """
    g = ctx.conform(g)
    g_norm = ctx.norm(g)
    scale = max(state.atom_scale, g_norm)
    coeffs, v = _orthogonalize(ctx, state.basis, g)
    v_norm = ctx.norm(v)
    if scale == 0.0 or v_norm <= state.rank_tol * scale:
        logger.debug(f"gram_extend: pivot {v_norm:.3e} below tolerance at k={state.k}")
        return GramExtension(state, True)

    k = state.k
    factor = np.zeros((k + 1, k + 1))
    factor[:k, :k] = state.factor
    factor[:k, k] = coeffs
    factor[k, k] = v_norm
    new_state = GramState(
        atoms=np.vstack([state.atoms, g]),
        basis=np.vstack([state.basis, v / v_norm]),
        factor=factor,
        rank_tol=state.rank_tol,
        atom_scale=scale,
        skipped=state.skipped,
    )
    return GramExtension(new_state, False)


def project_onto_span(ctx, state, f):
    """
    Orthogonal projection of f onto Span{g_1..g_k}.

    coeffs solve the normal equations G_k a = b_k through the triangular
    factor; proj = sum_j a_j g_j.
    """
    f = ctx.conform(f)
    if state.k == 0:
        return Projection(np.zeros(0), np.zeros_like(f), state.degenerate)
    basis_coeffs, _ = _orthogonalize(ctx, state.basis, f)
    proj = basis_coeffs @ state.basis
    coeffs = solve_triangular(state.factor, basis_coeffs, lower=False)
    return Projection(coeffs, proj, state.degenerate)


def orthogonal_components(ctx, state, vectors):
    """Components of each row orthogonal to the span of the state (two passes)"""
    vectors = ctx.conform(np.atleast_2d(vectors))
    if state.k == 0:
        return np.array(vectors, dtype=float)
    weighted_basis = state.basis * ctx.weights
    components = vectors - (vectors @ weighted_basis.T) @ state.basis
    components = components - (components @ weighted_basis.T) @ state.basis
    return components
