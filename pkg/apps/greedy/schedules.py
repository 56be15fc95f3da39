"""
Greedy algorithm configuration and the relaxation schedules of the RGA.
"""

import logging
from dataclasses import dataclass
from typing import Optional

logger = logging.getLogger(__name__)

PGA = 'PGA'
OGA = 'OGA'
RGA = 'RGA'
SPA = 'SPA'

ALGORITHMS = [
    (PGA, 'Pure greedy algorithm'),
    (OGA, 'Orthogonal greedy algorithm'),
    (RGA, 'Relaxed greedy algorithm'),
    (SPA, 'Stepwise projection algorithm'),
]

ONE_MINUS_1_OVER_K = 'one_minus_1_over_k'
ONE_MINUS_2_OVER_K = 'one_minus_2_over_k_with_alpha1_zero'
LAMBDA_SCHEDULE = 'lambda_schedule'

SCHEDULES = [
    (ONE_MINUS_1_OVER_K, 'alpha_k = 1 - 1/k'),
    (ONE_MINUS_2_OVER_K, 'alpha_k = 1 - 2/k, alpha_1 = 0'),
    (LAMBDA_SCHEDULE, 'alpha_k = (1 - lambda/k)+'),
]

SCHEDULE_ALIASES = {
    '2.5': ONE_MINUS_1_OVER_K,
    '2.6': ONE_MINUS_2_OVER_K,
    'one_minus_2_over_k': ONE_MINUS_2_OVER_K,
    'lambda': LAMBDA_SCHEDULE,
}


def resolve_schedule(name):
    if name is None:
        return None
    return SCHEDULE_ALIASES.get(name, name)


def alpha(schedule, k, lam=None):
    """Relaxation weight alpha_k for step k >= 1"""
    if k < 1:
        raise ValueError("steps are numbered from 1")
    if schedule == ONE_MINUS_1_OVER_K:
        return 1.0 - 1.0 / k
    if schedule == ONE_MINUS_2_OVER_K:
        return 0.0 if k == 1 else 1.0 - 2.0 / k
    if schedule == LAMBDA_SCHEDULE:
        return max(0.0, 1.0 - lam / k)
    raise ValueError(f"unknown alpha schedule {schedule!r}")


@dataclass(frozen=True)
class GreedyConfig:
    """Parameters of one greedy run"""

    algorithm: str
    alpha_schedule: Optional[str] = None
    lam: Optional[float] = None
    max_steps: int = 64
    residual_stop_tol: Optional[float] = None
    m: Optional[int] = None

    def __post_init__(self):
        if self.algorithm not in dict(ALGORITHMS):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")
        if self.residual_stop_tol is not None and self.residual_stop_tol < 0:
            raise ValueError("residual_stop_tol must be nonnegative")
        schedule = resolve_schedule(self.alpha_schedule)
        object.__setattr__(self, 'alpha_schedule', schedule)
        if self.algorithm != RGA:
            return
        if schedule not in dict(SCHEDULES):
            raise ValueError(f"RGA needs an alpha schedule, got {self.alpha_schedule!r}")
        if schedule == LAMBDA_SCHEDULE:
            if self.lam is None or self.lam < 1:
                raise ValueError("the lambda schedule needs lambda >= 1")
            if self.lam == 1:
                logger.warning("lambda = 1 schedule has no known rate bound")

    def alpha(self, k):
        return alpha(self.alpha_schedule, k, self.lam)

    def stop_tol(self, f_norm):
        """Absolute residual tolerance for a target of norm f_norm"""
        if self.residual_stop_tol is not None:
            return self.residual_stop_tol
        return 1e-12 * f_norm

    def describe(self):
        info = {'algorithm': self.algorithm, 'max_steps': self.max_steps}
        if self.algorithm == RGA:
            info['alpha_schedule'] = self.alpha_schedule
            if self.lam is not None:
                info['lambda'] = self.lam
        if self.m is not None:
            info['m'] = self.m
        return info
