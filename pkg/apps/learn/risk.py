"""
Synthetic regression models with known f_rho and the risk measurements
made against them.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np
from scipy.stats import qmc

from apps.analysis.synthesis import Representation, as_generator
from apps.dictionary.dictionaries import GRID_KINDS, Dictionary, as_points
from core.exceptions import GuardExceededError, InsufficientTrialsError
from .samples import SampleSet

logger = logging.getLogger(__name__)

GRID = 'grid'
CUBE = 'cube'

MARGINALS = [
    (GRID, 'Uniform on a finite grid'),
    (CUBE, 'Uniform on the unit cube'),
]

MIN_TRIALS = 30
DESIGN_GUARD = 10 ** 6
MC_POINTS = 4096


class ExcessRisk(NamedTuple):
    value: float
    stderr: float
    exact: bool


class L1nCheck(NamedTuple):
    mean_sq_l1n: float
    l1_sq: float
    stderr: float
    passed: bool


@dataclass(frozen=True, eq=False)
class SyntheticModel:
    """
    y = f_rho(x) + e with x drawn from the marginal and e uniform on
    [-noise, noise].

    f_rho is an expansion over atoms normalized in L2(rho_X). On the cube
    the normalization uses a Sobol reference set of 2^reference_log2
    points. Outputs beyond B are clipped.
    """

    dictionary: Dictionary
    f_rho: Representation
    B: float = 1.0
    noise: float = 0.0
    marginal: str = GRID
    grid_size: Optional[int] = None
    reference_log2: int = 14

    def __post_init__(self):
        if self.marginal not in dict(MARGINALS):
            raise ValueError(f"unknown marginal {self.marginal!r}")
        if not self.B > 0:
            raise ValueError("B must be positive")
        if self.noise < 0:
            raise ValueError("noise amplitude must be nonnegative")
        if self.marginal == GRID and self.grid_size is None:
            if self.dictionary.kind not in GRID_KINDS:
                raise ValueError("a grid marginal over a ridge dictionary needs grid_size")
            object.__setattr__(self, 'grid_size', self.dictionary.size)
        sup = self.sup_norm
        if sup > self.B:
            raise ValueError(f"sup |f_rho| = {sup:.6g} exceeds B = {self.B:g}")
        if self.noise > self.B - sup:
            logger.warning(
                f"noise {self.noise:g} exceeds B - sup|f_rho| = {self.B - sup:.6g}; samples will be clipped"
            )

    @property
    def input_dim(self):
        return self.dictionary.input_dim

    @cached_property
    def reference_points(self):
        """Grid support of rho_X, or the Sobol reference set on the cube"""
        if self.marginal == GRID:
            axis = (np.arange(self.grid_size) + 0.5) / self.grid_size
            mesh = np.meshgrid(*[axis] * self.input_dim, indexing='ij')
            return np.column_stack([coordinate.ravel() for coordinate in mesh])
        sampler = qmc.Sobol(d=self.input_dim, scramble=False)
        return sampler.random_base2(self.reference_log2)

    def atom_scales(self, indices):
        """L2(rho_X) norms of the raw atoms"""
        if len(indices) == 0:
            return np.zeros(0)
        raw = self.dictionary.evaluate(indices, self.reference_points)
        scales = np.sqrt(np.mean(raw ** 2, axis=1))
        if np.any(scales == 0):
            raise ValueError("an atom of the model vanishes under the marginal")
        return scales

    @cached_property
    def scales(self):
        return self.atom_scales(self.f_rho.indices)

    def normalized_atoms(self, indices, points, scales=None):
        scales = self.atom_scales(indices) if scales is None else scales
        return self.dictionary.evaluate(indices, points) / scales[:, None]

    def evaluate(self, points):
        """f_rho at the given points"""
        if not self.f_rho.indices:
            return np.zeros(as_points(points).shape[0])
        return self.f_rho.coeffs @ self.normalized_atoms(self.f_rho.indices, points, self.scales)

    @cached_property
    def sup_norm(self):
        values = self.evaluate(self.reference_points)
        return float(np.max(np.abs(values), initial=0.0))

    @property
    def norm(self):
        """||f_rho|| in L2(rho_X)"""
        return float(np.sqrt(np.mean(self.evaluate(self.reference_points) ** 2)))

    def draw_points(self, n, rng):
        rng = as_generator(rng)
        if self.marginal == GRID:
            ref = self.reference_points
            return ref[rng.integers(0, ref.shape[0], size=n)]
        return rng.random((n, self.input_dim))

    def sample(self, n, rng):
        """n independent draws (x, y)"""
        rng = as_generator(rng)
        xs = self.draw_points(n, rng)
        ys = self.evaluate(xs) + rng.uniform(-self.noise, self.noise, size=n)
        outside = np.abs(ys) > self.B
        if np.any(outside):
            logger.warning(f"clipped {int(np.sum(outside))} of {n} outputs to [-B, B]")
            ys = np.clip(ys, -self.B, self.B)
        return SampleSet(xs, ys, self.B)

    def describe(self):
        return {
            'dictionary': self.dictionary.describe(),
            'atoms': list(self.f_rho.indices),
            'coefficients': self.f_rho.coeffs.tolist(),
            'B': self.B,
            'noise': self.noise,
            'marginal': self.marginal,
            'grid_size': self.grid_size,
        }


def excess_risk(model, truth, eval_points=None, rng=None, mc_points=MC_POINTS):
    """
    ||T f - f_rho||^2 in L2(rho_X).

    Exact on a grid marginal; otherwise a Monte Carlo mean over
    eval_points (or mc_points fresh draws) with its standard error.
    """
    if truth.marginal == GRID and eval_points is None:
        points = truth.reference_points
        diff = model.predict(points) - truth.evaluate(points)
        return ExcessRisk(float(np.mean(diff ** 2)), 0.0, True)
    if eval_points is None:
        eval_points = truth.draw_points(mc_points, as_generator(rng))
    squares = (model.predict(eval_points) - truth.evaluate(eval_points)) ** 2
    stderr = float(np.std(squares, ddof=1) / math.sqrt(squares.size)) if squares.size > 1 else math.inf
    return ExcessRisk(float(np.mean(squares)), stderr, False)


def _l1n_values(h, truth, designs):
    """(sum |c_j| ||g_j||_n)^2 for each design, with g_j normalized in L2(rho_X)"""
    scales = truth.atom_scales(h.indices)
    values = []
    for xs in designs:
        atoms = truth.normalized_atoms(h.indices, xs, scales)
        empirical_norms = np.sqrt(np.mean(atoms ** 2, axis=1))
        values.append(float(np.sum(np.abs(h.coeffs) * empirical_norms)) ** 2)
    return np.array(values)


def l1n_vs_l1_check(h, truth, trials, n, rng=None):
    """
    Monte Carlo check that the empirical L1 norm of h does not exceed
    its L1 norm in mean square.

    Each trial draws a fresh design of n points and renormalizes the
    expansion of h empirically.
    """
    if trials < MIN_TRIALS:
        raise InsufficientTrialsError(f"at least {MIN_TRIALS} trials are needed, got {trials}")
    l1_sq = h.l1 ** 2
    if not h.indices:
        return L1nCheck(0.0, l1_sq, 0.0, True)
    rng = as_generator(rng)
    values = _l1n_values(h, truth, (truth.draw_points(n, rng) for _ in range(trials)))
    mean = float(np.mean(values))
    stderr = float(np.std(values, ddof=1) / math.sqrt(trials))
    stderr_rel = stderr / mean if mean > 0 else 0.0
    passed = mean <= l1_sq * (1 + 3 * stderr_rel)
    logger.info(f"empirical L1 check over {trials} designs: {mean:.6g} vs {l1_sq:.6g} ({'pass' if passed else 'FAIL'})")
    return L1nCheck(mean, l1_sq, stderr, passed)


def l1n_exact_expectation(h, truth, n):
    """Exact mean square empirical L1 norm by enumerating every design of a grid marginal"""
    if truth.marginal != GRID:
        raise ValueError("design enumeration needs a grid marginal")
    ref = truth.reference_points
    designs = ref.shape[0] ** n
    if designs > DESIGN_GUARD:
        raise GuardExceededError(f"{designs} designs exceed the enumeration guard")
    if not h.indices:
        return 0.0
    grids = itertools.product(range(ref.shape[0]), repeat=n)
    values = _l1n_values(h, truth, (ref[list(cells)] for cells in grids))
    return float(np.mean(values))
