"""
Independent experiment cells.

Each cell is a top-level function of one picklable task so that cells run
unchanged in a process pool. Cells never read Django settings: everything
they need travels in the task, and their generator is derived from the
task key by the documented splitting rule
default_rng(SeedSequence([master_seed, experiment_code, n, seed_index])).
"""

import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import NamedTuple, Optional

import numpy as np
from scipy.stats import qmc

from apps.analysis.oracles import best_n_term_bruteforce
from apps.analysis.synthesis import Representation, synth_bp_function, synth_l1_function, synth_l1r_function
from apps.dictionary.dictionaries import GRID_KINDS, materialize
from apps.greedy.bounds import TRUNCATED, bound_rhs, default_bound_kind, within_bound
from apps.greedy.engines import run_greedy
from apps.greedy.schedules import OGA, GreedyConfig
from apps.hilbert.space import SpaceContext
from apps.learn.estimator import estimate
from apps.learn.risk import excess_risk

logger = logging.getLogger(__name__)

TARGET_L1 = 'l1'
TARGET_BP = 'bp'
TARGET_L1R = 'l1r'
TARGET_ZERO = 'zero'

ORTHONORMAL_TOL = 1e-10


def rng_for(key):
    return np.random.default_rng(np.random.SeedSequence([int(part) for part in key]))


def run_cells(cell, tasks, jobs=1):
    """Results in task order, serially or from a process pool"""
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) <= 1:
        return [cell(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(cell, tasks))


def design(d, n_points):
    """Points and empirical context on which a dictionary is materialized"""
    if d.kind in GRID_KINDS:
        return d.grid_points(), SpaceContext.empirical(d.size)
    points = qmc.Halton(d=d.input_dim, scramble=False).random(n_points)
    return points, SpaceContext.empirical(n_points)


class TargetSpec(NamedTuple):
    kind: str = TARGET_L1
    p: float = 1.0
    r: float = 0.5
    support_size: Optional[int] = None


def synthesize_target(spec, bank, ctx, rng):
    """(f, representation) with f exactly the synthesized expansion"""
    if spec.kind == TARGET_ZERO:
        return np.zeros(ctx.dim), Representation.empty(ctx.dim)
    if spec.kind == TARGET_BP:
        return synth_bp_function(bank, bank.m, spec.p, rng, ctx)
    if spec.kind == TARGET_L1R:
        return synth_l1r_function(bank, bank.m, spec.r, rng, ctx)
    return synth_l1_function(bank, bank.m, rng, spec.support_size, ctx)


def padded_residuals(trace, n_max):
    """||r_N|| for N = 0..n_max, holding the last value after an early stop"""
    norms = trace.residual_norms[:n_max + 1]
    return norms + [norms[-1]] * (n_max + 1 - len(norms))


class AlgorithmRun(NamedTuple):
    algorithm: str
    residuals: list
    bound_kind: Optional[str]
    bounds: list
    passed: list
    stopped_reason: str


def check_run(cfg, trace, n_max, rep, ctx, f, bound=None):
    """Residuals of one run with the proven bound evaluated at every N"""
    residuals = padded_residuals(trace, n_max)
    kind = bound or default_bound_kind(cfg)
    if kind is None or not rep.indices:
        return AlgorithmRun(cfg.algorithm, residuals, None, [], [], trace.stopped_reason)
    steps = list(range(1, n_max + 1))
    f_norm = ctx.norm(f)
    rhs = bound_rhs(kind, steps, rep.l1, h_norm=f_norm, lam=cfg.lam)
    passed = [within_bound(residuals[N], float(rhs[N - 1]), f_norm) for N in steps]
    return AlgorithmRun(cfg.algorithm, residuals, kind, [float(v) for v in rhs], passed, trace.stopped_reason)


class ApproxTask(NamedTuple):
    key: tuple
    dictionary: object
    m: int
    n_points: int
    target: TargetSpec
    greedy: tuple
    n_max: int
    bound: Optional[str] = None


class ApproxOutcome(NamedTuple):
    seed_index: int
    f_norm: float
    l1: float
    runs: list


def approx_cell(task):
    """Synthesize one target and run every configured algorithm on it"""
    rng = rng_for(task.key)
    points, ctx = design(task.dictionary, task.n_points)
    bank = materialize(task.dictionary, task.m, ctx, points)
    f, rep = synthesize_target(task.target, bank, ctx, rng)
    runs = []
    for cfg in task.greedy:
        cfg = dataclasses.replace(cfg, max_steps=task.n_max, m=task.m)
        trace = run_greedy(f, bank, cfg, ctx)
        runs.append(check_run(cfg, trace, task.n_max, rep, ctx, f, task.bound))
    return ApproxOutcome(task.key[-1], ctx.norm(f), rep.l1, runs)


class LearnTask(NamedTuple):
    key: tuple
    model: object
    learn: object
    n: int
    mc_points: int


class LearnOutcome(NamedTuple):
    n: int
    seed_index: int
    k_star: int
    excess_risk: float
    stderr: float


def learn_cell(task):
    """Sample, fit and measure the excess risk of one (n, seed) cell"""
    rng = rng_for(task.key)
    s = task.model.sample(task.n, rng)
    result = estimate(s, task.model.dictionary, task.learn)
    risk = excess_risk(result, task.model, rng=rng, mc_points=task.mc_points)
    return LearnOutcome(task.n, task.key[-1], result.k_star, risk.value, risk.stderr)


class OracleTask(NamedTuple):
    key: tuple
    dictionary: object
    m: int
    n_points: int
    target: TargetSpec
    greedy: tuple
    n_max: int
    brute_force: bool = True
    truncations: tuple = ()
    c0: float = 2.0


class OracleOutcome(NamedTuple):
    instance: int
    rows: list
    sigma_ok: bool
    bounds_ok: bool
    orthonormal_ok: bool


def oracle_cell(task):
    """
    Compare greedy residuals with sigma_N and the bounds on one instance.

    Rows follow the oracle table: instance, N, sigma_N, algorithm,
    residual_norm, bound_kind, bound, passed.
    """
    rng = rng_for(task.key)
    instance = task.key[-1]
    points, ctx = design(task.dictionary, task.n_points)
    bank = materialize(task.dictionary, task.m, ctx, points)
    f, rep = synthesize_target(task.target, bank, ctx, rng)
    f_norm = ctx.norm(f)
    slack = ORTHONORMAL_TOL * max(1.0, f_norm)

    sigma = {}
    if task.brute_force:
        for N in range(1, task.n_max + 1):
            sigma[N] = best_n_term_bruteforce(f, bank, None, N, ctx).error

    rows = []
    sigma_ok = bounds_ok = orthonormal_ok = True
    for cfg in task.greedy:
        cfg = dataclasses.replace(cfg, max_steps=task.n_max, m=task.m)
        run = check_run(cfg, run_greedy(f, bank, cfg, ctx), task.n_max, rep, ctx, f)
        for N in range(1, task.n_max + 1):
            residual = run.residuals[N]
            passed = run.passed[N - 1] if run.passed else True
            bounds_ok &= passed
            if N in sigma:
                dominated = sigma[N] <= residual + slack
                sigma_ok &= dominated
                passed &= dominated
                if task.dictionary.is_orthonormal and cfg.algorithm == OGA:
                    orthonormal_ok &= abs(residual - sigma[N]) <= slack
            bound = run.bounds[N - 1] if run.bounds else None
            rows.append([instance, N, sigma.get(N), cfg.algorithm, residual, run.bound_kind, bound, passed])

    for m in task.truncations:
        cfg = GreedyConfig(OGA, max_steps=task.n_max, m=m)
        residuals = padded_residuals(run_greedy(f, bank.prefix(m), cfg, ctx), task.n_max)
        steps = list(range(1, task.n_max + 1))
        rhs = bound_rhs(TRUNCATED, steps, rep.l1, C0=task.c0, m=m, r=task.target.r)
        for N in steps:
            passed = within_bound(residuals[N], float(rhs[N - 1]), f_norm)
            bounds_ok &= passed
            rows.append([f"{instance}/m={m}", N, None, OGA, residuals[N], TRUNCATED, float(rhs[N - 1]), passed])

    if not (sigma_ok and bounds_ok and orthonormal_ok):
        logger.warning(f"oracle instance {instance}: sigma {sigma_ok}, bounds {bounds_ok}, orthonormal {orthonormal_ok}")
    return OracleOutcome(instance, rows, bool(sigma_ok), bool(bounds_ok), bool(orthonormal_ok))
