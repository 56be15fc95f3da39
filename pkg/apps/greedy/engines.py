"""
Greedy engines: PGA, OGA, RGA and SPA.

Every engine takes a target f, a Dictionary (or an AtomBank already
materialized in ctx), a GreedyConfig and a SpaceContext, and returns a
GreedyTrace. Selection always breaks ties towards the lowest atom index.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from apps.dictionary.dictionaries import AtomRef, as_bank
from apps.hilbert.space import GramState, gram_extend, orthogonal_components, project_onto_span
from core.exceptions import DeadDictionaryError
from .schedules import OGA, PGA, RGA, SPA

logger = logging.getLogger(__name__)

STOP_MAX_STEPS = 'max_steps'
STOP_TOL = 'tol'
STOP_DEGENERATE = 'degenerate'


class GreedyStep(NamedTuple):
    atom: AtomRef
    beta: float
    alpha: float
    residual_norm: float


@dataclass
class GreedyTrace:
    """
    Step-by-step record of one greedy run.

    approximants[k] is f_k (approximants[0] is the zero function) and
    coefficient_path[k] holds the coefficients of f_k over support[:len]
    so that any prefix of the run can be re-expanded.
    """

    algorithm: str
    initial_norm: float
    steps: list = field(default_factory=list)
    support: list = field(default_factory=list)
    coefficients: np.ndarray = field(default_factory=lambda: np.zeros(0))
    coefficient_path: list = field(default_factory=list)
    approximants: list = field(default_factory=list)
    stopped_reason: str = STOP_MAX_STEPS

    @property
    def k(self):
        return len(self.steps)

    @property
    def residual_norms(self):
        """||r_0|| = ||f||, then one entry per step"""
        return [self.initial_norm] + [step.residual_norm for step in self.steps]

    @property
    def final_residual_norm(self):
        return self.residual_norms[-1]

    @property
    def atom_indices(self):
        return [step.atom.index for step in self.steps]

    def approximant(self, k=None):
        return self.approximants[self.k if k is None else k]

    def coefficients_at(self, k):
        """(support indices, coefficients) describing f_k"""
        coeffs = self.coefficient_path[k]
        return self.support[:coeffs.size], coeffs

    def expand(self, bank, k=None):
        """Re-synthesize f_k from its coefficients"""
        support, coeffs = self.coefficients_at(self.k if k is None else k)
        return bank.synthesize(coeffs, support)

    def to_csv(self, target):
        from .export import write_trace_csv
        write_trace_csv(self, target)


class _Run:
    """Mutable bookkeeping shared by the engines"""

    def __init__(self, algorithm, f, d, cfg, ctx, points):
        self.f = ctx.conform(f)
        self.ctx = ctx
        self.cfg = cfg
        self.bank = as_bank(d, cfg.m, ctx, points)
        f_norm = ctx.norm(self.f)
        self.trace = GreedyTrace(algorithm=algorithm, initial_norm=f_norm)
        self.tol = cfg.stop_tol(f_norm)
        self.approx = np.zeros_like(self.f)
        self.coeffs = np.zeros(0)
        self.residual = self.f.copy()
        self.trace.approximants.append(self.approx.copy())
        self.trace.coefficient_path.append(self.coeffs.copy())

    def converged(self):
        return self.ctx.norm(self.residual) <= self.tol

    def position(self, index):
        """Position of an atom in the support, appending it when new"""
        support = self.trace.support
        if index not in support:
            support.append(index)
            self.coeffs = np.append(self.coeffs, 0.0)
        return support.index(index)

    def record(self, index, beta, alpha):
        residual_norm = self.ctx.norm(self.residual)
        self.trace.steps.append(GreedyStep(AtomRef(index), float(beta), float(alpha), residual_norm))
        self.trace.approximants.append(self.approx.copy())
        self.trace.coefficient_path.append(self.coeffs.copy())

    def stop(self, reason):
        self.trace.stopped_reason = reason
        self.trace.coefficients = self.coeffs.copy()
        logger.debug(
            f"{self.trace.algorithm} stopped ({reason}) after {self.trace.k} steps, "
            f"residual {self.trace.final_residual_norm:.3e}"
        )
        return self.trace

    def select(self, target):
        try:
            return self.bank.select(self.ctx, target)
        except DeadDictionaryError:
            logger.warning(f"{self.trace.algorithm}: no live atom left to select")
            return None


def run_pga(f, d, cfg, ctx, points=None):
    """f_k = f_{k-1} + <r_{k-1}, g_k> g_k"""
    run = _Run(PGA, f, d, cfg, ctx, points)
    for _ in range(cfg.max_steps):
        if run.converged():
            return run.stop(STOP_TOL)
        selection = run.select(run.residual)
        if selection is None:
            return run.stop(STOP_DEGENERATE)
        if selection.corr == 0.0:
            return run.stop(STOP_TOL)
        index = selection.atom.index
        g = run.bank.atoms[index]
        run.approx = run.approx + selection.corr * g
        run.residual = run.residual - selection.corr * g
        position = run.position(index)
        run.coeffs[position] += selection.corr
        run.record(index, selection.corr, 1.0)
    return run.stop(STOP_MAX_STEPS)


def run_oga(f, d, cfg, ctx, points=None):
    """f_k is the orthogonal projection of f onto the span of the selected atoms"""
    run = _Run(OGA, f, d, cfg, ctx, points)
    state = GramState.empty(ctx.dim)
    for _ in range(cfg.max_steps):
        if run.converged():
            return run.stop(STOP_TOL)
        selection = run.select(run.residual)
        if selection is None:
            return run.stop(STOP_DEGENERATE)
        index = selection.atom.index
        if selection.corr == 0.0 or index in run.trace.support:
            return run.stop(STOP_TOL)
        state, degenerate = gram_extend(ctx, state, run.bank.atoms[index])
        if degenerate:
            logger.warning(f"OGA: atom {index} is numerically inside the current span")
            return run.stop(STOP_DEGENERATE)
        _project(run, state, index)
        run.record(index, selection.corr, math.nan)
    return run.stop(STOP_MAX_STEPS)


def run_spa(f, d, cfg, ctx, points=None):
    """
    Stepwise projection: pick the atom whose addition minimizes the
    post-projection error, then project.

    The error decrease of a candidate g is <r, u>^2 / ||u||^2 with u the
    component of g orthogonal to the current span, which costs O(m k)
    inner products per step.
    """
    run = _Run(SPA, f, d, cfg, ctx, points)
    state = GramState.empty(ctx.dim)
    bank = run.bank
    for _ in range(cfg.max_steps):
        if run.converged():
            return run.stop(STOP_TOL)
        components = orthogonal_components(ctx, state, bank.atoms)
        component_norms = ctx.norms(components)
        eligible = bank.live & (component_norms > state.rank_tol)
        eligible[np.asarray(run.trace.support, dtype=int)] = False
        if not np.any(eligible):
            logger.warning("SPA: every remaining atom lies in the current span")
            return run.stop(STOP_DEGENERATE)
        overlap = ctx.inner_many(components, run.residual)
        safe_norms = np.where(eligible, component_norms, 1.0)
        gains = np.where(eligible, (overlap / safe_norms) ** 2, -1.0)
        index = int(np.argmax(gains))
        if gains[index] == 0.0:
            return run.stop(STOP_TOL)
        state, degenerate = gram_extend(ctx, state, bank.atoms[index])
        if degenerate:
            return run.stop(STOP_DEGENERATE)
        beta = ctx.inner(run.residual, bank.atoms[index])
        _project(run, state, index)
        run.record(index, beta, math.nan)
    return run.stop(STOP_MAX_STEPS)


def run_rga(f, d, cfg, ctx, points=None):
    """f_k = alpha_k f_{k-1} + beta_k g_k with beta_k = <f - alpha_k f_{k-1}, g_k>"""
    run = _Run(RGA, f, d, cfg, ctx, points)
    for k in range(1, cfg.max_steps + 1):
        if run.converged():
            return run.stop(STOP_TOL)
        alpha_k = cfg.alpha(k)
        target = run.f - alpha_k * run.approx
        selection = run.select(target)
        if selection is None:
            return run.stop(STOP_DEGENERATE)
        if selection.corr == 0.0:
            return run.stop(STOP_TOL)
        index = selection.atom.index
        run.approx = alpha_k * run.approx + selection.corr * run.bank.atoms[index]
        run.residual = run.f - run.approx
        run.coeffs = alpha_k * run.coeffs
        position = run.position(index)
        run.coeffs[position] += selection.corr
        run.record(index, selection.corr, alpha_k)
    return run.stop(STOP_MAX_STEPS)


def _project(run, state, index):
    run.position(index)
    projection = project_onto_span(run.ctx, state, run.f)
    run.approx = projection.proj
    run.coeffs = projection.coeffs
    run.residual = run.f - run.approx


ENGINES = {
    PGA: run_pga,
    OGA: run_oga,
    RGA: run_rga,
    SPA: run_spa,
}


def run_greedy(f, d, cfg, ctx, points=None):
    """Dispatch on cfg.algorithm"""
    return ENGINES[cfg.algorithm](f, d, cfg, ctx, points)
