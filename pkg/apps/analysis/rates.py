from typing import NamedTuple

import numpy as np
from scipy.stats import linregress


class RateFit(NamedTuple):
    slope: float
    intercept: float
    r2: float


def rate_slope(points):
    """Least-squares fit of log err against log N"""
    points = list(points)
    if len(points) < 3:
        raise ValueError("a rate fit needs at least 3 points")
    N = np.array([p[0] for p in points], dtype=float)
    err = np.array([p[1] for p in points], dtype=float)
    if np.any(err <= 0) or np.any(N <= 0):
        raise ValueError("rate fits need positive N and positive errors")
    if np.all(err == err[0]):
        return RateFit(0.0, float(np.log(err[0])), 0.0)
    fit = linregress(np.log(N), np.log(err))
    return RateFit(float(fit.slope), float(fit.intercept), float(fit.rvalue ** 2))
