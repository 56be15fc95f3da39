"""
Sequence quasi-norms, soft thresholding and K-functional estimates.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.linear_model import lasso_path

from apps.dictionary.dictionaries import as_bank
from core.exceptions import GuardExceededError, InfeasibleError
from .oracles import LP_ATOM_GUARD, min_l1_expansion
from .rates import rate_slope

logger = logging.getLogger(__name__)

ORTHONORMAL_TOL = 1e-10
DEFAULT_GRID_POINTS = 32


def weak_lp_quasinorm(c, p):
    """(sup_eta eta^p #{|c_g| >= eta})^(1/p), scanned over the distinct |c_g|"""
    if p <= 0:
        raise ValueError("p must be positive")
    magnitudes = np.sort(np.abs(np.asarray(c, dtype=float)).ravel())
    magnitudes = magnitudes[magnitudes > 0]
    if magnitudes.size == 0:
        return 0.0
    counts = magnitudes.size - np.searchsorted(magnitudes, magnitudes, side='left')
    return float(np.max(magnitudes ** p * counts) ** (1.0 / p))


def soft_threshold(c, t):
    """c - (t/2) sign(c) when |c| > t/2, else 0"""
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    values = np.asarray(c, dtype=float)
    shrunk = np.sign(values) * np.maximum(np.abs(values) - t / 2.0, 0.0)
    if np.ndim(c) == 0:
        return float(shrunk)
    return shrunk


@dataclass
class KProfile:
    t_grid: np.ndarray
    K_values: np.ndarray
    theta: Optional[float] = None
    p: Optional[float] = None
    membership_constant: Optional[float] = None
    exact: bool = False

    def rows(self):
        return list(zip(self.t_grid.tolist(), self.K_values.tolist()))


def is_orthonormal_bank(bank, ctx):
    live = bank.atoms[bank.live]
    gram = (live * ctx.weights) @ live.T
    return np.allclose(gram, np.eye(live.shape[0]), atol=ORTHONORMAL_TOL)


def default_t_grid(f_norm, l1_estimate, points=DEFAULT_GRID_POINTS):
    scale = f_norm / max(1.0, l1_estimate)
    return np.logspace(-3, 1, points) * scale


def orthonormal_k_value(magnitudes, orth_energy, t):
    """
    Exact K(f, t) for an orthonormal dictionary.

    The minimizer is a soft thresholding of the coefficients at some level
    s; the objective sqrt(A + k s^2) + t (S_k - k s) is convex on each
    segment between consecutive sorted magnitudes, so the optimum is the
    stationary point clipped to the segment.
    """
    a = np.sort(np.abs(magnitudes))[::-1]
    a = a[a > 0]
    tail_energy = np.concatenate([np.cumsum((a ** 2)[::-1])[::-1], [0.0]])
    heads = np.concatenate([[0.0], np.cumsum(a)])
    best = np.sqrt(orth_energy + tail_energy[0])
    bounds = np.concatenate([a, [0.0]])
    for k in range(1, a.size + 1):
        upper, lower = bounds[k - 1], bounds[k]
        A = orth_energy + tail_energy[k]
        if k * t * t < 1.0:
            s = t * np.sqrt(A / (1.0 - k * t * t))
        else:
            s = upper
        s = min(max(s, lower), upper)
        value = np.sqrt(A + k * s * s) + t * (heads[k] - k * s)
        best = min(best, value)
    return float(best)


def _lasso_candidates(bank, ctx, f):
    """(error, l1) pairs along the penalized path, plus h = 0"""
    live = np.flatnonzero(bank.live)
    root = np.sqrt(ctx.weights)
    X = (bank.atoms[live] * root).T
    y = f * root
    candidates = [(ctx.norm(f), 0.0)]
    alpha_max = np.max(np.abs(X.T @ y)) / X.shape[0]
    if alpha_max == 0.0:
        return candidates
    alphas = np.geomspace(alpha_max, alpha_max * 1e-5, 80)
    _, coefs, _ = lasso_path(X, y, alphas=alphas, max_iter=10000, tol=1e-8)
    for column in coefs.T:
        h = column @ bank.atoms[live]
        candidates.append((ctx.norm(f - h), float(np.sum(np.abs(column)))))
    return candidates


def k_functional_estimate(f, d, m, t_grid, ctx, points=None, theta=None):
    """
    K(f, t) = inf_h ||f - h|| + t ||h||_L1 over the prefix D_m.

    Exact for orthonormal dictionaries; for general dictionaries an upper
    bound from the lasso path together with h = 0 and h = P f (the
    projection with its minimal L1 expansion). t_grid=None selects the
    default logarithmic grid.
    """
    f = ctx.conform(f)
    bank = as_bank(d, m, ctx, points)
    f_norm = ctx.norm(f)

    if is_orthonormal_bank(bank, ctx):
        coeffs = ctx.inner_many(bank.atoms[bank.live], f)
        orth_energy = max(f_norm ** 2 - float(np.sum(coeffs ** 2)), 0.0)
        grid = default_t_grid(f_norm, float(np.sum(np.abs(coeffs)))) if t_grid is None else np.asarray(t_grid, float)
        values = np.array([orthonormal_k_value(coeffs, orth_energy, t) for t in grid])
        exact = True
    else:
        if bank.live_count > LP_ATOM_GUARD:
            raise GuardExceededError(f"K-functional estimate limited to {LP_ATOM_GUARD} atoms")
        candidates = _lasso_candidates(bank, ctx, f)
        try:
            lp_coeffs, _, distance = min_l1_expansion(bank, ctx, f)
            l1_estimate = float(np.sum(np.abs(lp_coeffs)))
            candidates.append((distance, l1_estimate))
        except InfeasibleError:
            logger.warning("LP candidate for the K-functional failed; using the lasso path only")
            l1_estimate = min(l1 for _, l1 in candidates if l1 > 0) if len(candidates) > 1 else 0.0
        grid = default_t_grid(f_norm, l1_estimate) if t_grid is None else np.asarray(t_grid, float)
        errors = np.array([error for error, _ in candidates])
        norms = np.array([l1 for _, l1 in candidates])
        values = np.min(errors[None, :] + grid[:, None] * norms[None, :], axis=1)
        exact = False

    profile = KProfile(t_grid=grid, K_values=values, exact=exact)
    if theta is None:
        theta = _estimate_theta(grid, values, f_norm)
    if theta is not None:
        profile.theta = theta
        profile.p = 2.0 / (1.0 + theta)
        profile.membership_constant = float(np.max(values / grid ** theta))
    return profile


def _estimate_theta(grid, values, f_norm):
    """Log-log slope of K over the range where K stays below ||f||"""
    mask = (values > 0) & (values < f_norm * (1 - 1e-9))
    if np.count_nonzero(mask) < 3:
        return None
    fit = rate_slope(list(zip(grid[mask], values[mask])))
    return float(np.clip(fit.slope, 1e-6, 1 - 1e-6))
