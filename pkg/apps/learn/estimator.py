"""
Greedy regression estimator.

The configured greedy engine runs once on y in the empirical norm over
the truncated dictionary D_m, m = floor(n^a). Every prefix f_k of the run
is truncated at level B and the model size k* is chosen either by the
penalized empirical risk ||y - T f_k||_n^2 + kappa k log n / n or on a
hold-out subset.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from apps.dictionary.dictionaries import as_points, materialize, truncation_size
from apps.greedy.engines import run_greedy
from apps.greedy.export import format_value
from apps.greedy.schedules import OGA, ONE_MINUS_2_OVER_K, PGA, RGA, GreedyConfig
from core.exceptions import EmptyDictionaryError
from .samples import empirical_context, truncate

logger = logging.getLogger(__name__)

PENALIZED = 'penalized'
HOLDOUT = 'holdout'

SELECTIONS = [
    (PENALIZED, 'Penalized empirical risk'),
    (HOLDOUT, 'Hold-out validation'),
]

RISK_COLUMNS = ['k', 'empirical_risk', 'penalty', 'penalized_risk']


def kappa0(B, a_exp):
    """Penalty constant 2568 B^4 (a + 5) under which the risk bound is proven"""
    if not B > 0:
        raise ValueError("B must be positive")
    return 2568.0 * B ** 4 * (a_exp + 5.0)


def oracle_k(M, n, s=0.5):
    """Step count ceil(((M + 1)^2 n / log n)^(1/(1 + 2s)))"""
    if n < 2:
        return 1
    return int(math.ceil(((M + 1.0) ** 2 * n / math.log(n)) ** (1.0 / (1.0 + 2.0 * s))))


def risk_bound_rhs(h_l1, h_dist, k):
    """Explicit part 8 ||h||_L1^2 / k + 2 ||f_rho - h||^2 of the risk bound"""
    if k < 1:
        raise ValueError("k must be positive")
    return 8.0 * h_l1 ** 2 / k + 2.0 * h_dist ** 2


@dataclass(frozen=True)
class LearnConfig:
    kappa: float = 1.0
    a_exp: float = 1.0
    greedy: GreedyConfig = field(default_factory=lambda: GreedyConfig(OGA))
    selection: str = PENALIZED
    split_fraction: float = 0.5
    k_cap: Optional[int] = None

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.a_exp < 1:
            raise ValueError("a_exp must be >= 1")
        if self.selection not in dict(SELECTIONS):
            raise ValueError(f"unknown selection {self.selection!r}")
        if self.selection == HOLDOUT and not 0 < self.split_fraction < 1:
            raise ValueError("split_fraction must lie in (0, 1)")
        if self.k_cap is not None and self.k_cap < 0:
            raise ValueError("k_cap must be nonnegative")
        if self.greedy.algorithm == PGA:
            raise ValueError("the estimator runs OGA, SPA or RGA")
        if self.greedy.algorithm == RGA and self.greedy.alpha_schedule != ONE_MINUS_2_OVER_K:
            logger.warning(
                f"estimator RGA uses alpha_k = 1 - 2/k; ignoring schedule {self.greedy.alpha_schedule}"
            )
            object.__setattr__(
                self, 'greedy', dataclasses.replace(self.greedy, alpha_schedule=ONE_MINUS_2_OVER_K, lam=None)
            )

    def resolve_k_cap(self, n, m, B):
        """Largest model size worth computing for n samples and m atoms"""
        if self.selection == PENALIZED:
            cap = min(int(math.ceil(B * n / self.kappa)), m, n)
        else:
            cap = min(m, n)
        if self.k_cap is not None:
            cap = min(cap, self.k_cap)
        return cap

    def describe(self):
        info = {
            'kappa': self.kappa,
            'a_exp': self.a_exp,
            'selection': self.selection,
            'greedy': self.greedy.describe(),
        }
        if self.selection == HOLDOUT:
            info['split_fraction'] = self.split_fraction
        if self.k_cap is not None:
            info['k_cap'] = self.k_cap
        return info


@dataclass
class FitResult:
    """
    The selected model T f_{k*}.

    atoms and coefficients describe f_{k*} before truncation over atoms
    normalized in the fit's empirical norm; scales are the raw empirical
    norms of those atoms, so predictions at new points divide by them.
    """

    k_star: int
    atoms: tuple
    coefficients: np.ndarray
    scales: np.ndarray
    B: float
    kappa: float
    n: int
    m: int
    algorithm: str
    selection: str
    dictionary: object = field(repr=False, default=None)
    empirical_risks: np.ndarray = field(default_factory=lambda: np.zeros(0))
    penalties: np.ndarray = field(default_factory=lambda: np.zeros(0))
    penalized_risks: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def penalized_risk(self):
        return float(self.penalized_risks[self.k_star])

    def raw_predict(self, points):
        """f_{k*} at the given points, before truncation"""
        if not self.atoms:
            return np.zeros(as_points(points).shape[0])
        raw = self.dictionary.evaluate(self.atoms, points)
        return self.coefficients @ (raw / self.scales[:, None])

    def predict(self, points):
        return truncate(self.raw_predict(points), self.B)

    def risk_rows(self):
        for k in range(self.penalized_risks.size):
            yield [k, self.empirical_risks[k], self.penalties[k], self.penalized_risks[k]]

    def to_text(self):
        """Structured text: header fields, then the per-k risk table"""
        lines = [
            f"algorithm = {self.algorithm}",
            f"selection = {self.selection}",
            f"n = {self.n}",
            f"m = {self.m}",
            f"B = {format_value(self.B)}",
            f"kappa = {format_value(self.kappa)}",
            f"k_star = {self.k_star}",
            f"atoms = {', '.join(str(i) for i in self.atoms)}",
            f"coefficients = {', '.join(format_value(c) for c in self.coefficients.tolist())}",
            '',
            '[risk]',
            ','.join(RISK_COLUMNS),
        ]
        lines.extend(','.join(format_value(value) for value in row) for row in self.risk_rows())
        return '\n'.join(lines) + '\n'


def _greedy_sequence(s, d, cfg):
    """One greedy run on y over D_m in the empirical context of s"""
    ctx = empirical_context(s)
    m = truncation_size(s.n, cfg.a_exp, d.total)
    bank = materialize(d, m, ctx, s.xs)
    if bank.live_count == 0:
        raise EmptyDictionaryError(f"all {m} atoms vanish on the sample points")
    cap = cfg.resolve_k_cap(s.n, m, s.B)
    if cap < 1:
        return ctx, bank, None
    greedy = dataclasses.replace(cfg.greedy, max_steps=cap, m=m)
    trace = run_greedy(s.ys, bank, greedy, ctx)
    logger.debug(f"{greedy.algorithm} sequence of {trace.k} steps on {s.n} samples (m = {m})")
    return ctx, bank, trace


def _result(k_star, trace, bank, s, cfg, d, empirical, penalties):
    if trace is None or k_star == 0:
        atoms, coeffs = (), np.zeros(0)
    else:
        support, coeffs = trace.coefficients_at(k_star)
        atoms = tuple(int(i) for i in support)
    return FitResult(
        k_star=int(k_star),
        atoms=atoms,
        coefficients=np.asarray(coeffs, dtype=float),
        scales=bank.norms[list(atoms)] if atoms else np.zeros(0),
        B=s.B,
        kappa=cfg.kappa,
        n=s.n,
        m=bank.m,
        algorithm=cfg.greedy.algorithm,
        selection=cfg.selection,
        dictionary=d,
        empirical_risks=empirical,
        penalties=penalties,
        penalized_risks=empirical + penalties,
    )


def fit(s, d, cfg):
    """Penalized least-squares selection of k* over one greedy run"""
    ctx, bank, trace = _greedy_sequence(s, d, cfg)
    approximants = [np.zeros(s.n)] if trace is None else trace.approximants
    empirical = np.array([ctx.norm(s.ys - truncate(f_k, s.B)) ** 2 for f_k in approximants])
    k = np.arange(empirical.size)
    penalties = cfg.kappa * k * math.log(s.n) / s.n
    k_star = int(np.argmin(empirical + penalties))
    logger.info(f"penalized fit on {s.n} samples: k* = {k_star} of {empirical.size - 1}")
    return _result(k_star, trace, bank, s, cfg, d, empirical, penalties)


def holdout_fit(s, d, cfg):
    """Greedy sequence on the first subset, k* chosen on the second"""
    train, validation = s.split(cfg.split_fraction)
    _, bank, trace = _greedy_sequence(train, d, cfg)
    if trace is None:
        paths = [((), np.zeros(0))]
    else:
        paths = [trace.coefficients_at(k) for k in range(trace.k + 1)]
    support = [] if trace is None else trace.support
    raw = d.evaluate(support, validation.xs) if support else np.zeros((0, validation.n))
    scaled = raw / bank.norms[support][:, None] if support else raw
    risks = []
    for _, coeffs in paths:
        values = coeffs @ scaled[:coeffs.size] if coeffs.size else np.zeros(validation.n)
        risks.append(float(np.mean((validation.ys - truncate(values, s.B)) ** 2)))
    risks = np.array(risks)
    k_star = int(np.argmin(risks))
    logger.info(f"hold-out fit on {train.n} + {validation.n} samples: k* = {k_star}")
    return _result(k_star, trace, bank, train, cfg, d, risks, np.zeros_like(risks))


def estimate(s, d, cfg):
    """Dispatch on cfg.selection"""
    if cfg.selection == HOLDOUT:
        return holdout_fit(s, d, cfg)
    return fit(s, d, cfg)
