"""
Dictionaries of atoms over a finite coordinate set.

A Dictionary is an immutable description (kind plus parameters) that can
evaluate any atom of its exhaustion order at a set of points. Greedy
engines never see the functional form: they work on an AtomBank, the
dense matrix of the first m atoms evaluated on the working grid or sample
design and normalized in a SpaceContext.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np
from scipy.fft import dct
from scipy.special import expit
from scipy.stats import norm as normal, qmc

from core.exceptions import DeadDictionaryError, EmptyDictionaryError

logger = logging.getLogger(__name__)

DEAD_TOL = 1e-12

KIND_CANONICAL = 'orthonormal_canonical'
KIND_UNION = 'union_of_bases'
KIND_RIDGE = 'ridge'
KIND_GAUSSIAN = 'gaussian'

DICTIONARY_KINDS = [
    (KIND_CANONICAL, 'Canonical basis on a grid'),
    (KIND_UNION, 'Canonical basis united with the DCT-II basis'),
    (KIND_RIDGE, 'Ridge functions sigma(<v,x> + w)'),
    (KIND_GAUSSIAN, 'Seeded random atoms on a grid'),
]

ACTIVATIONS = [
    ('heaviside', 'Heaviside step'),
    ('logistic', 'Logistic sigmoid'),
]

GRID_KINDS = (KIND_CANONICAL, KIND_UNION, KIND_GAUSSIAN)


class AtomRef(NamedTuple):
    index: int


def as_points(points):
    """Coerce a point set to shape (n, D)"""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr[:, None]
    return arr


def dyadic_level(j):
    """Offset position in (0,1) for level j: 1/2, 1/4, 3/4, 1/8, 3/8, ..."""
    depth = int(math.floor(math.log2(j + 1)))
    position = j + 1 - 2 ** depth
    return (2 * position + 1) / 2 ** (depth + 1)


def ridge_exhaustion(n_directions, n_levels):
    """
    Order (direction, level) pairs shell by shell.

    Shell s holds the pairs with max(i, j) = s: first the new level s for
    the older directions, then direction s with every level up to s.
    """
    pairs = [(i, j) for i in range(n_directions) for j in range(n_levels)]
    pairs.sort(key=lambda p: (max(p), p[0] == max(p), p[0], p[1]))
    return tuple(pairs)


def quasi_random_directions(count, input_dim, fan_in=None):
    """Unit directions from an unscrambled Halton sequence mapped through the normal quantile"""
    if input_dim == 1:
        signs = np.array([[1.0], [-1.0]])
        return np.resize(signs, (count, 1))
    sampler = qmc.Halton(d=input_dim, scramble=False)
    points = sampler.random(count + 1)[1:]
    directions = normal.ppf(points)
    if fan_in is not None and fan_in < input_dim:
        drop = np.argsort(-np.abs(directions), axis=1, kind='stable')[:, fan_in:]
        np.put_along_axis(directions, drop, 0.0, axis=1)
    lengths = np.linalg.norm(directions, axis=1, keepdims=True)
    return directions / lengths


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Immutable dictionary description with a fixed exhaustion order"""

    kind: str
    size: int = 0
    count: int = 0
    seed: int = 0
    input_dim: int = 1
    activation: str = 'heaviside'
    steepness: float = 1.0
    n_directions: int = 0
    n_levels: int = 0
    fan_in: Optional[int] = None
    directions: Optional[tuple] = None
    offsets: Optional[tuple] = None
    dead_tol: float = DEAD_TOL

    def __post_init__(self):
        if self.kind not in dict(DICTIONARY_KINDS):
            raise ValueError(f"unknown dictionary kind {self.kind!r}")
        if self.kind in GRID_KINDS and self.size < 1:
            raise ValueError("grid dictionaries need size >= 1")
        if self.kind == KIND_GAUSSIAN and self.count < 1:
            raise ValueError("gaussian dictionaries need count >= 1")
        if self.kind == KIND_RIDGE:
            if self.activation not in dict(ACTIVATIONS):
                raise ValueError(f"unknown activation {self.activation!r}")
            if self.direction_matrix.shape[1] != self.input_dim:
                raise ValueError("direction vectors must have input_dim coordinates")
            if self.total < 1:
                raise ValueError("ridge dictionaries need at least one direction and one offset")

    @property
    def total(self):
        """Number of atoms in the full (finite) dictionary"""
        if self.kind == KIND_CANONICAL:
            return self.size
        if self.kind == KIND_UNION:
            return 2 * self.size
        if self.kind == KIND_GAUSSIAN:
            return self.count
        return self.direction_matrix.shape[0] * self.offset_count

    @property
    def is_orthonormal(self):
        return self.kind == KIND_CANONICAL

    @property
    def offset_count(self):
        return len(self.offsets) if self.offsets is not None else self.n_levels

    @cached_property
    def direction_matrix(self):
        if self.directions is not None:
            return np.atleast_2d(np.asarray(self.directions, dtype=float))
        return quasi_random_directions(self.n_directions, self.input_dim, self.fan_in)

    @cached_property
    def order(self):
        if self.kind != KIND_RIDGE:
            return None
        return ridge_exhaustion(self.direction_matrix.shape[0], self.offset_count)

    @cached_property
    def dct_basis(self):
        return dct(np.eye(self.size), type=2, norm='ortho', axis=0)

    def grid_points(self):
        """Cell centers (j + 1/2)/size of a grid dictionary"""
        return (np.arange(self.size) + 0.5) / self.size

    def cells(self, points):
        pts = as_points(points)
        return np.clip(np.floor(pts[:, 0] * self.size).astype(int), 0, self.size - 1)

    def ridge_parameters(self, index):
        """Direction v and offset w of a ridge atom"""
        i, j = self.order[index]
        v = self.direction_matrix[i]
        if self.offsets is not None:
            return v, float(self.offsets[j])
        lo = float(np.sum(np.minimum(v, 0.0)))
        hi = float(np.sum(np.maximum(v, 0.0)))
        return v, -(lo + dyadic_level(j) * (hi - lo))

    def activate(self, t):
        if self.activation == 'heaviside':
            return (t > 0).astype(float)
        return expit(self.steepness * t)

    def evaluate(self, indices, points=None):
        """Raw atom values, one row per index, one column per point"""
        indices = np.asarray(indices, dtype=int)
        if indices.size and (indices.min() < 0 or indices.max() >= self.total):
            raise IndexError(f"atom index out of range for a dictionary of {self.total} atoms")
        if points is None:
            if self.kind not in GRID_KINDS:
                raise ValueError("ridge dictionaries need explicit points")
            points = self.grid_points()
        pts = as_points(points)

        if self.kind == KIND_RIDGE:
            rows = np.empty((indices.size, pts.shape[0]))
            for row, index in enumerate(indices):
                v, w = self.ridge_parameters(int(index))
                rows[row] = self.activate(pts @ v + w)
            return rows

        cells = self.cells(pts)
        if self.kind == KIND_CANONICAL:
            return (cells[None, :] == indices[:, None]).astype(float)
        if self.kind == KIND_UNION:
            rows = np.empty((indices.size, pts.shape[0]))
            for row, index in enumerate(indices):
                basis_index = int(index) // 2
                if index % 2 == 0:
                    rows[row] = (cells == basis_index).astype(float)
                else:
                    rows[row] = self.dct_basis[basis_index, cells]
            return rows
        rows = np.empty((indices.size, pts.shape[0]))
        for row, index in enumerate(indices):
            values = np.random.default_rng([self.seed, int(index)]).standard_normal(self.size)
            rows[row] = values[cells]
        return rows

    def describe(self):
        """Plain description for reports"""
        info = {'kind': self.kind, 'total': self.total}
        if self.kind in GRID_KINDS:
            info['size'] = self.size
        if self.kind == KIND_GAUSSIAN:
            info.update(count=self.count, seed=self.seed)
        if self.kind == KIND_UNION:
            info['exhaustion'] = 'canonical and DCT-II atoms interleaved'
        if self.kind == KIND_RIDGE:
            info.update(
                input_dim=self.input_dim,
                activation=self.activation,
                steepness=self.steepness,
                directions=self.direction_matrix.shape[0],
                offsets=self.offset_count,
                fan_in=self.fan_in,
                exhaustion='shells of max(direction, offset level), older directions first',
            )
        return info


class NormalizedAtom(NamedTuple):
    values: np.ndarray
    raw_norm: float
    dead: bool


class Selection(NamedTuple):
    atom: AtomRef
    corr: float


@dataclass(frozen=True, eq=False)
class AtomBank:
    """
    The exhaustion prefix D_m materialized in one SpaceContext.

    atoms holds unit-norm rows; dead atoms (raw norm <= dead_tol in this
    context) are zero rows with live[i] False and are never selected.
    """

    raw: np.ndarray
    atoms: np.ndarray
    live: np.ndarray
    norms: np.ndarray
    dictionary: Optional[Dictionary] = None
    points: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def from_vectors(cls, vectors, ctx, dead_tol=DEAD_TOL, dictionary=None, points=None):
        raw = ctx.conform(np.atleast_2d(np.asarray(vectors, dtype=float)))
        norms = ctx.norms(raw)
        live = norms > dead_tol
        atoms = np.zeros_like(raw)
        atoms[live] = raw[live] / norms[live, None]
        if not np.all(live):
            logger.warning(f"{int(np.sum(~live))} of {live.size} atoms are dead in this context")
        return cls(raw=raw, atoms=atoms, live=live, norms=norms, dictionary=dictionary, points=points)

    @property
    def m(self):
        return self.atoms.shape[0]

    @property
    def live_count(self):
        return int(np.sum(self.live))

    def prefix(self, m):
        if m > self.m:
            raise IndexError(f"prefix of {m} atoms requested from a bank of {self.m}")
        return AtomBank(
            raw=self.raw[:m], atoms=self.atoms[:m], live=self.live[:m],
            norms=self.norms[:m], dictionary=self.dictionary, points=self.points,
        )

    def correlations(self, ctx, r):
        return ctx.inner_many(self.atoms, r)

    def select(self, ctx, r):
        """Argmax of |<r, g>| over live atoms, lowest index on ties"""
        if self.live_count == 0:
            raise DeadDictionaryError("every atom of the dictionary prefix is dead")
        corr = self.correlations(ctx, r)
        scores = np.where(self.live, np.abs(corr), -1.0)
        index = int(np.argmax(scores))
        return Selection(AtomRef(index), float(corr[index]))

    def synthesize(self, coefficients, indices=None):
        """Sum of coefficients times normalized atoms"""
        coefficients = np.asarray(coefficients, dtype=float)
        rows = self.atoms if indices is None else self.atoms[np.asarray(indices, dtype=int)]
        if coefficients.size == 0:
            return np.zeros(self.atoms.shape[1])
        return coefficients @ rows


def materialize(d, m, ctx, points=None):
    """Evaluate and normalize the first m atoms of d"""
    if m < 1:
        raise EmptyDictionaryError("dictionary truncation is empty")
    if m > d.total:
        raise IndexError(f"truncation {m} exceeds the {d.total} atoms of the dictionary")
    if points is None and d.kind in GRID_KINDS:
        points = d.grid_points()
    raw = d.evaluate(np.arange(m), points)
    return AtomBank.from_vectors(raw, ctx, dead_tol=d.dead_tol, dictionary=d, points=points)


def as_bank(d, m, ctx, points=None):
    """Accept either a Dictionary or an already materialized AtomBank"""
    if isinstance(d, AtomBank):
        return d if m is None or m == d.m else d.prefix(m)
    return materialize(d, d.total if m is None else m, ctx, points)


def atom_eval(d, a, ctx, points=None):
    """Raw values of one atom at the given points"""
    values = d.evaluate([a.index], points)[0]
    return ctx.conform(values)


def normalize(d, a, ctx, points=None):
    """Unit-norm version of one atom, or a dead marker"""
    values = atom_eval(d, a, ctx, points)
    raw_norm = ctx.norm(values)
    if raw_norm <= d.dead_tol:
        logger.warning(f"atom {a.index} is dead in this context (norm {raw_norm:.3e})")
        return NormalizedAtom(np.zeros_like(values), raw_norm, True)
    return NormalizedAtom(values / raw_norm, raw_norm, False)


def select_max_correlation(d, m, ctx, r, points=None):
    bank = as_bank(d, m, ctx, points)
    return bank.select(ctx, r)


def truncation_size(n, a_exp, total=None):
    """m(n) = floor(n^a), capped at the dictionary size"""
    if n < 1:
        raise ValueError("sample count must be >= 1")
    m = int(math.floor(n ** a_exp * (1 + 1e-12)))
    if total is not None:
        m = min(m, total)
    return m
