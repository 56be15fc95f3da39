"""
Exact oracles for small instances: best N-term approximation by
enumeration and the L1 (basis pursuit) norm by linear programming.
These are reference computations, not production solvers.
"""

import itertools
import logging
import math
from typing import NamedTuple

import numpy as np
from scipy.optimize import linprog

from apps.dictionary.dictionaries import as_bank
from apps.greedy.export import write_table
from apps.hilbert.space import GramState
from core.exceptions import GuardExceededError, InfeasibleError, NotInSpanError
from .synthesis import Representation

logger = logging.getLogger(__name__)

BRUTEFORCE_GUARD = 10 ** 6
LP_ATOM_GUARD = 64
SPAN_TOL = 1e-8

ORACLE_COLUMNS = ['instance', 'N', 'sigma_N', 'algorithm', 'residual_norm', 'bound_kind', 'bound', 'passed']


class BestNTerm(NamedTuple):
    error: float
    support: tuple
    coefficients: np.ndarray


class L1Norm(NamedTuple):
    value: float
    representation: Representation
    distance: float


def _weighted_lstsq(ctx, rows, f):
    """Least-squares coefficients of f over the given atom rows in ctx"""
    root = np.sqrt(ctx.weights)
    coeffs, *_ = np.linalg.lstsq((rows * root).T, f * root, rcond=None)
    return coeffs


def best_n_term_bruteforce(f, d, m, N, ctx, points=None):
    """
    sigma_N(f) over D_m by enumerating every support of size N.

    Ties keep the lexicographically first support.
    """
    f = ctx.conform(f)
    bank = as_bank(d, m, ctx, points)
    f_norm = ctx.norm(f)
    live = np.flatnonzero(bank.live)
    size = min(N, live.size)
    if size == 0:
        return BestNTerm(f_norm, (), np.zeros(0))
    combinations = math.comb(live.size, size)
    if combinations > BRUTEFORCE_GUARD:
        raise GuardExceededError(f"C({live.size}, {size}) = {combinations} supports exceed the guard")

    best = BestNTerm(math.inf, (), np.zeros(0))
    for support in itertools.combinations(live.tolist(), size):
        rows = bank.atoms[list(support)]
        coeffs = _weighted_lstsq(ctx, rows, f)
        error = ctx.norm(f - coeffs @ rows)
        if error < best.error:
            best = BestNTerm(error, support, coeffs)
    logger.debug(f"best {size}-term error over {combinations} supports: {best.error:.6e}")
    return best


def min_l1_expansion(bank, ctx, f):
    """
    Minimal sum |c_g| expansion of the projection of f onto span(D_m).

    Solved as an LP in split variables c = u - v over the coordinates of
    an orthonormal basis of the span. Returns (coefficients over live
    atoms, live indices, distance from f to the span).
    """
    live = np.flatnonzero(bank.live)
    if live.size > LP_ATOM_GUARD:
        raise GuardExceededError(f"LP oracle limited to {LP_ATOM_GUARD} atoms, got {live.size}")
    if live.size == 0:
        return np.zeros(0), live, ctx.norm(f)
    rows = bank.atoms[live]
    state = GramState.from_atoms(ctx, rows)
    weighted_basis = state.basis * ctx.weights
    constraint = weighted_basis @ rows.T
    target = weighted_basis @ f
    distance = ctx.norm(f - target @ state.basis)

    size = live.size
    result = linprog(
        c=np.ones(2 * size),
        A_eq=np.hstack([constraint, -constraint]),
        b_eq=target,
        bounds=(0, None),
        method='highs',
    )
    if not result.success:
        raise InfeasibleError(f"basis pursuit LP failed: {result.message}")
    coeffs = result.x[:size] - result.x[size:]
    return coeffs, live, distance


def l1_norm_lp(f, d, m, ctx, points=None):
    """
    ||f||_L1 over D_m: min sum |c_g| subject to sum c_g g = f.

    Raises NotInSpanError when f is farther than 1e-8 (relative) from the span.
    """
    f = ctx.conform(f)
    bank = as_bank(d, m, ctx, points)
    coeffs, live, distance = min_l1_expansion(bank, ctx, f)
    if distance > SPAN_TOL * max(1.0, ctx.norm(f)):
        raise NotInSpanError(f"target is {distance:.3e} away from the span of D_{bank.m}", distance)
    keep = np.abs(coeffs) > 1e-12 * max(1.0, float(np.max(np.abs(coeffs), initial=0.0)))
    rep = Representation(live[keep], coeffs[keep])
    return L1Norm(float(np.sum(np.abs(coeffs))), rep.with_vector(bank), distance)


def write_oracle_csv(target, rows):
    """Oracle comparison table for cross-implementation checks"""
    write_table(target, ORACLE_COLUMNS, rows)
