"""Exception types shared across the package."""

from __future__ import annotations


class FlowmaxError(Exception):
    """Base class for all package errors."""


class DegenerateBasis(FlowmaxError):
    """Basis columns are numerically dependent (Gram log-determinant below -60)."""


class DimensionMismatch(FlowmaxError):
    """Operands disagree on lattice dimension."""


class InvalidFrame(FlowmaxError):
    """Frame fails a structural invariant (shape, signs, unimodularity)."""


class InvalidFlow(FlowmaxError):
    """Flow exponents do not sum to zero or have the wrong arity."""


class InvalidSchedule(FlowmaxError):
    """Sparse schedule parameters out of range (m0 <= 0, q <= 1, n < 1)."""


class InvalidDimension(FlowmaxError):
    """Dimension argument outside the supported range."""


class IndexOutOfRange(FlowmaxError):
    """Order-statistic index k outside 1..len(values)."""


class InsufficientTail(FlowmaxError):
    """Too few admissible grid points with enough exceedances to fit a tail."""


class EmptyInput(FlowmaxError):
    """An operation received an empty sample set."""


class InfiniteValue(FlowmaxError):
    """Observable diverged (distance below resolution of the return target)."""


class DomainError(FlowmaxError):
    """Scalar argument outside the mathematical domain of the function."""


class ConfigError(FlowmaxError):
    """Experiment configuration failed validation. CLI exit code 2."""


class NumericError(FlowmaxError):
    """Numerical failure inside a pipeline (non-finite value, no convergence). CLI exit code 3."""


class IoError(FlowmaxError):
    """Report emission could not write its output files."""
