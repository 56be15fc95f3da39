"""
Explicit expansions and synthetic targets with known class membership.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from apps.dictionary.dictionaries import AtomBank, AtomRef, as_bank
from apps.hilbert.space import SpaceContext

logger = logging.getLogger(__name__)


def as_generator(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True, eq=False)
class Representation:
    """Finite expansion sum_g c_g g over normalized atoms"""

    indices: tuple
    coeffs: np.ndarray
    vector: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, 'indices', tuple(int(i) for i in self.indices))
        object.__setattr__(self, 'coeffs', np.asarray(self.coeffs, dtype=float))
        if len(self.indices) != self.coeffs.size:
            raise ValueError("one coefficient per atom is required")

    @classmethod
    def empty(cls, dim=None):
        return cls((), np.zeros(0), None if dim is None else np.zeros(dim))

    @property
    def atoms(self):
        return [AtomRef(i) for i in self.indices]

    def pairs(self):
        return list(zip(self.atoms, self.coeffs.tolist()))

    @property
    def l1(self):
        """sum |c_g|, an upper bound on the L1 norm of the synthesized vector"""
        return float(np.sum(np.abs(self.coeffs)))

    def synthesize(self, bank):
        return bank.synthesize(self.coeffs, self.indices)

    def with_vector(self, bank):
        return Representation(self.indices, self.coeffs, self.synthesize(bank))


def default_context(d, points=None):
    if isinstance(d, AtomBank):
        return SpaceContext.euclidean(d.atoms.shape[1])
    if points is None:
        return SpaceContext.euclidean(d.size)
    return SpaceContext.euclidean(len(points))


def _signed(rng, magnitudes):
    signs = rng.choice([-1.0, 1.0], size=magnitudes.size)
    return signs * magnitudes


def synth_bp_function(d, m, p, seed, ctx=None, points=None):
    """
    Target with coefficients j^(-1/p), j = 1..m, and random signs.

    Its weak-lp quasi-norm is 1 by construction; for an orthonormal
    dictionary this places it in the interpolation class of index p.
    """
    if p <= 0:
        raise ValueError("p must be positive")
    ctx = ctx or default_context(d, points)
    bank = as_bank(d, m, ctx, points)
    rng = as_generator(seed)
    magnitudes = np.arange(1, m + 1, dtype=float) ** (-1.0 / p)
    rep = Representation(range(m), _signed(rng, magnitudes))
    rep = rep.with_vector(bank)
    return rep.vector, rep


def synth_l1_function(d, m, seed, support_size=None, ctx=None, points=None):
    """Target in the unit L1 ball: random coefficients on a random support with sum |c| = 1"""
    ctx = ctx or default_context(d, points)
    bank = as_bank(d, m, ctx, points)
    rng = as_generator(seed)
    size = support_size or m
    support = np.sort(rng.choice(m, size=min(size, m), replace=False))
    coeffs = rng.standard_normal(support.size)
    coeffs /= np.sum(np.abs(coeffs))
    rep = Representation(support, coeffs).with_vector(bank)
    return rep.vector, rep


def synth_l1r_function(d, total, r, seed, ctx=None, points=None):
    """
    Target for truncated dictionaries: c_j proportional to j^-(1+r) with
    sum |c| = 1, so every prefix D_m carries an expansion of L1 norm <= 1
    at distance <= m^-r from the target.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    ctx = ctx or default_context(d, points)
    bank = as_bank(d, total, ctx, points)
    rng = as_generator(seed)
    magnitudes = np.arange(1, total + 1, dtype=float) ** (-(1.0 + r))
    magnitudes /= magnitudes.sum()
    rep = Representation(range(total), _signed(rng, magnitudes)).with_vector(bank)
    return rep.vector, rep
