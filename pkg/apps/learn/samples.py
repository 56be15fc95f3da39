"""
Regression samples z_i = (x_i, y_i) with outputs bounded by B.
"""

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from apps.dictionary.dictionaries import as_points
from apps.greedy.export import write_table
from apps.hilbert.space import SpaceContext
from core.exceptions import SampleSetError

logger = logging.getLogger(__name__)

BOUND_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class SampleSet:
    """n feature points in R^D with real outputs |y_i| <= B"""

    xs: np.ndarray
    ys: np.ndarray
    B: float

    def __post_init__(self):
        try:
            xs = as_points(self.xs)
            ys = np.asarray(self.ys, dtype=float).ravel()
        except (TypeError, ValueError) as e:
            raise SampleSetError(f"invalid sample data: {e}")
        if ys.size < 1:
            raise SampleSetError("a sample set needs at least one sample")
        if xs.shape[0] != ys.size:
            raise SampleSetError(f"{xs.shape[0]} feature points for {ys.size} outputs")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise SampleSetError("samples must be finite")
        if not self.B > 0:
            raise SampleSetError("the output bound B must be positive")
        worst = float(np.max(np.abs(ys)))
        if worst > self.B * (1 + BOUND_SLACK):
            raise SampleSetError(f"output {worst:.6g} exceeds the bound B = {self.B:g}")
        object.__setattr__(self, 'xs', xs)
        object.__setattr__(self, 'ys', ys)
        object.__setattr__(self, 'B', float(self.B))

    @property
    def n(self):
        return self.ys.size

    @property
    def input_dim(self):
        return self.xs.shape[1]

    def subset(self, indices):
        indices = np.asarray(indices, dtype=int)
        return SampleSet(self.xs[indices], self.ys[indices], self.B)

    def split(self, fraction):
        """First floor(fraction * n) samples, then the rest"""
        if not 0 < fraction < 1:
            raise SampleSetError("split fraction must lie in (0, 1)")
        cut = int(math.floor(fraction * self.n))
        if cut < 1 or cut >= self.n:
            raise SampleSetError(f"splitting {self.n} samples at {fraction} leaves an empty subset")
        return self.subset(range(cut)), self.subset(range(cut, self.n))

    @classmethod
    def from_csv(cls, source, B):
        """Read columns x_0..x_{D-1}, y (header row required)"""
        if hasattr(source, 'read'):
            rows = list(csv.reader(source))
        else:
            with Path(source).open(newline='') as stream:
                rows = list(csv.reader(stream))
        if not rows:
            raise SampleSetError("sample file is empty")
        header = [column.strip() for column in rows[0]]
        expected = [f"x_{i}" for i in range(len(header) - 1)] + ['y']
        if len(header) < 2 or header != expected:
            raise SampleSetError(f"sample header must be x_0..x_{{D-1}},y, got {','.join(header)}")
        body = [row for row in rows[1:] if row]
        try:
            table = np.array([[float(value) for value in row] for row in body], dtype=float)
        except ValueError as e:
            raise SampleSetError(f"non-numeric sample value: {e}")
        if table.ndim != 2 or table.shape[1] != len(header):
            raise SampleSetError("every sample row needs one value per column")
        logger.debug(f"read {table.shape[0]} samples with {len(header) - 1} features")
        return cls(table[:, :-1], table[:, -1], B)

    def to_csv(self, target):
        header = [f"x_{i}" for i in range(self.input_dim)] + ['y']
        rows = (list(x) + [y] for x, y in zip(self.xs.tolist(), self.ys.tolist()))
        write_table(target, header, rows)


def empirical_context(s):
    """Uniform weights 1/n over the sample coordinates; repeats stay separate"""
    return SpaceContext.empirical(s.n)


def truncate(v, B):
    """Truncation at level B: min(B, |v|) sgn(v)"""
    if not B > 0:
        raise ValueError("truncation level must be positive")
    clipped = np.clip(v, -B, B)
    if np.ndim(v) == 0:
        return float(clipped)
    return clipped
