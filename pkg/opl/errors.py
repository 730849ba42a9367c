"""
Error hierarchy for the off-policy learning toolkit

Every error derives from OPLError and from the closest builtin so callers
can catch either. Errors that carry context keep it as keyword-only
attributes, which BaseException pickles through __dict__ so they survive
worker processes.
"""

from typing import Optional, Tuple


class OPLError(Exception):
    """Base class for all toolkit errors"""


class ConfigurationError(OPLError, ValueError):
    """A parameter or dimension is outside its allowed range"""


class DatasetError(OPLError, ValueError):
    """A logged dataset violates its structural invariants"""


class FullSupportError(OPLError, ValueError):
    """The logging policy gives zero probability to a logged action"""


class InvalidPropensityError(OPLError, ValueError):
    """An observation probability is not strictly positive"""


class MissingRewardError(OPLError, ValueError):
    """An estimator that needs every target reward met an unobserved one"""


class MissingModelError(OPLError, ValueError):
    """A nuisance model needed by an estimator was not fitted"""


class InsufficientDataError(OPLError, ValueError):
    """Too few usable rows to fit a model"""


class NonFiniteGradientError(OPLError, FloatingPointError):
    """A gradient estimate contains NaN or Inf"""


class TrainingDivergedError(OPLError, RuntimeError):
    """Gradient ascent produced a non-finite gradient"""

    def __init__(self, message: str, *, iteration: Optional[int] = None):
        super().__init__(message)
        self.iteration = iteration


class TuningError(OPLError, RuntimeError):
    """A training run inside gamma tuning failed"""

    def __init__(self, message: str, *, gamma: Optional[float] = None, replicate: Optional[int] = None):
        super().__init__(message)
        self.gamma = gamma
        self.replicate = replicate


class EnumerationLimitError(OPLError, ValueError):
    """A finite instance is too large to enumerate exactly"""


class DegenerateEnvironmentError(OPLError, ValueError):
    """Optimal and uniform policies have the same value"""


class IngestionError(OPLError, ValueError):
    """A delimited input file could not be turned into an interaction matrix"""

    def __init__(
        self,
        message: str,
        *,
        row: Optional[int] = None,
        cell: Optional[Tuple[object, object]] = None,
    ):
        super().__init__(message)
        self.row = row
        self.cell = cell


class OutputError(OPLError, OSError):
    """Result files cannot be written"""
