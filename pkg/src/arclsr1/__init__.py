"""ARCs-LSR1: adaptive cubic regularization with limited-memory SR1 matrices."""
from .arcs import ArcsConfig, ArcsResult, ArcsState, IterRecord, minimize, step
from .errors import (
    ArcError,
    ConfigError,
    IllConditionedMetric,
    InvalidArgument,
    NumericFailure,
    ParseError,
    SingularMemory,
    SingularSystem,
)
from .memory import LsrEigFactors, PairBuffer

__version__ = "0.1.0"
