"""
CSV export of traces and result tables.

Floats are written with 17 significant digits so that a table read back
reproduces the binary values exactly; NaN and None become empty cells.
"""

import csv
import math
from contextlib import contextmanager
from pathlib import Path

import numpy as np

TRACE_COLUMNS = ['step', 'atom_index', 'alpha', 'beta', 'residual_norm']


def format_value(value):
    if value is None:
        return ''
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return ''
        return format(float(value), '.17g')
    return str(value)


@contextmanager
def open_target(target):
    """Yield a text stream for a path or pass an open stream through"""
    if hasattr(target, 'write'):
        yield target
        return
    path = Path(target)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='') as stream:
        yield stream


def write_table(target, header, rows):
    """Write a header row and data rows"""
    with open_target(target) as stream:
        writer = csv.writer(stream, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(value) for value in row])


def trace_rows(trace):
    for number, step in enumerate(trace.steps, start=1):
        yield [number, step.atom.index, step.alpha, step.beta, step.residual_norm]


def write_trace_csv(trace, target):
    """Trace CSV: step, atom_index, alpha, beta, residual_norm"""
    write_table(target, TRACE_COLUMNS, trace_rows(trace))
