"""
Right-hand sides of the greedy error bounds and per-step checks of a trace.

All bounds are expressed for a surrogate h with ||h||_L1 <= h_l1,
||f - h|| = h_dist and ||h|| = h_norm. Passing h_norm = 0 always gives a
valid (weaker) bound. Quadratic bounds are compared after taking square
roots, so every reported right-hand side is in norm units.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from core.exceptions import UnsupportedBoundError
from .schedules import LAMBDA_SCHEDULE, OGA, ONE_MINUS_1_OVER_K, ONE_MINUS_2_OVER_K, RGA, SPA

logger = logging.getLogger(__name__)

BOUND_SLACK = 1e-9

THM21 = 'thm21'
THM22 = 'thm22'
THM23 = 'thm23'
THM24 = 'thm24'
THM24_NONQUADRATIC = 'thm24_nonquadratic'
REM25 = 'rem25'
TRUNCATED = 'truncated'

BOUND_KINDS = [
    (THM21, 'OGA: ||r_N|| <= ||f||_L1 (N+1)^-1/2'),
    (THM22, 'RGA (1 - 1/k): ||r_N|| <= (||f||_L1^2 - ||f||^2)^1/2 N^-1/2'),
    (THM23, 'OGA: ||r_N||^2 <= ||f-h||^2 + 4 ||h||_L1^2 / N'),
    (THM24, 'RGA (1 - 2/k): ||r_N||^2 <= ||f-h||^2 + 4 (||h||_L1^2 - ||h||^2) / N'),
    (THM24_NONQUADRATIC, 'RGA (1 - 1/k): ||r_N|| <= ||f-h|| + (||h||_L1^2 - ||h||^2)^1/2 N^-1/2'),
    (REM25, 'RGA (1 - lambda/k)+: ||r_N||^2 <= ||f-h||^2 + C (||h||_L1^2 - ||h||^2) / N'),
    (TRUNCATED, 'Truncated dictionary: ||r_k|| <= C0 M (k^-s + k^(1/2-s) m^-r)'),
]


def rem25_constant(lam):
    """C = lambda^2 / (lambda - 1)"""
    if lam is None or lam <= 1:
        raise UnsupportedBoundError(f"no known bound for the lambda schedule with lambda = {lam}")
    return lam ** 2 / (lam - 1)


def bound_rhs(kind, steps, h_l1, h_dist=0.0, h_norm=0.0, lam=None, C0=None, m=None, r=None, s=0.5):
    """Bound on ||r_N|| for each N in steps"""
    N = np.asarray(steps, dtype=float)
    excess = max(h_l1 ** 2 - h_norm ** 2, 0.0)
    if kind == THM21:
        return h_l1 / np.sqrt(N + 1)
    if kind == THM22:
        return np.sqrt(excess / N)
    if kind == THM23:
        return np.sqrt(h_dist ** 2 + 4 * h_l1 ** 2 / N)
    if kind == THM24:
        return np.sqrt(h_dist ** 2 + 4 * excess / N)
    if kind == THM24_NONQUADRATIC:
        return h_dist + np.sqrt(excess / N)
    if kind == REM25:
        return np.sqrt(h_dist ** 2 + rem25_constant(lam) * excess / N)
    if kind == TRUNCATED:
        if C0 is None or m is None or r is None:
            raise ValueError("the truncated bound needs C0, m and r")
        return C0 * h_l1 * (N ** -s + N ** (0.5 - s) * float(m) ** -r)
    raise ValueError(f"unknown bound kind {kind!r}")


@dataclass
class BoundReport:
    kind: str
    steps: list
    residuals: list
    rhs: list
    passed: list = field(default_factory=list)
    first_violation: Optional[int] = None

    @property
    def ok(self):
        return self.first_violation is None

    def rows(self):
        return list(zip(self.steps, self.residuals, self.rhs, self.passed))


def within_bound(residual, bound, initial_norm):
    """residual <= bound up to the relative slack BOUND_SLACK"""
    return bool(residual <= bound * (1 + BOUND_SLACK) + BOUND_SLACK * max(initial_norm, 1e-300))


def residual_bound_check(trace, h_l1, h_dist=0.0, kind=THM21, lam=None, h_norm=0.0, **truncation):
    """
    Compare each ||r_N|| of a trace against the bound of the given kind.

    Returns a BoundReport with the right-hand side per step and the first
    violating step, if any.
    """
    steps = list(range(1, trace.k + 1))
    residuals = [step.residual_norm for step in trace.steps]
    if not steps:
        return BoundReport(kind=kind, steps=[], residuals=[], rhs=[])
    rhs = bound_rhs(kind, steps, h_l1, h_dist=h_dist, h_norm=h_norm, lam=lam, **truncation)
    passed = [within_bound(res, bound, trace.initial_norm) for res, bound in zip(residuals, rhs)]
    first_violation = next((N for N, ok in zip(steps, passed) if not ok), None)
    if first_violation is not None:
        logger.warning(
            f"{kind} bound violated at step {first_violation}: "
            f"{residuals[first_violation - 1]:.6e} > {rhs[first_violation - 1]:.6e}"
        )
    return BoundReport(
        kind=kind,
        steps=steps,
        residuals=residuals,
        rhs=[float(value) for value in rhs],
        passed=passed,
        first_violation=first_violation,
    )


def default_bound_kind(cfg, exact=True):
    """
    Bound proven for the configured algorithm, or None.

    exact means the surrogate h is the target itself (||f - h|| = 0).
    """
    if cfg.algorithm in (OGA, SPA):
        return THM21 if exact else THM23
    if cfg.algorithm != RGA:
        return None
    if cfg.alpha_schedule == ONE_MINUS_1_OVER_K:
        return THM22 if exact else THM24_NONQUADRATIC
    if cfg.alpha_schedule == ONE_MINUS_2_OVER_K:
        return THM24
    if cfg.alpha_schedule == LAMBDA_SCHEDULE and cfg.lam > 1:
        return REM25
    return None
