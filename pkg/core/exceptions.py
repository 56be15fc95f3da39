"""
Exception hierarchy shared by every app of the greedy lab.

Each error also derives from the builtin it specializes, so callers may
catch either the lab-specific class or the plain ValueError/RuntimeError.
"""


class GreedyLabError(Exception):
    """Base class for all lab errors"""


class DimensionMismatchError(GreedyLabError, ValueError):
    """A vector does not conform to its SpaceContext"""


class DeadDictionaryError(GreedyLabError, ValueError):
    """Every atom of the truncated dictionary is dead"""


class EmptyDictionaryError(GreedyLabError, ValueError):
    """Truncation left no atom to work with"""


class GuardExceededError(GreedyLabError, ValueError):
    """A brute-force or LP size guard was exceeded"""


class NotInSpanError(GreedyLabError, ValueError):
    """Target is not in the span of the truncated dictionary"""

    def __init__(self, message, distance):
        super().__init__(message)
        self.distance = distance


class UnsupportedBoundError(GreedyLabError, ValueError):
    """Requested bound has no known proof for the given parameters"""


class InfeasibleError(GreedyLabError, RuntimeError):
    """An optimizer failed to return a solution"""


class InsufficientTrialsError(GreedyLabError, ValueError):
    """Monte Carlo check requested with too few trials"""


class SampleSetError(GreedyLabError, ValueError):
    """Invalid regression data or hold-out split"""


class ConfigError(GreedyLabError, ValueError):
    """Experiment configuration could not be parsed or validated"""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
