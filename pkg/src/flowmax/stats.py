"""Empirical distribution machinery: ECDFs, KS distances, DKW bands, and
exponential tail regression.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, EmptyInput, InsufficientTail

MIN_TAIL_COUNT = 50
MIN_TAIL_POINTS = 3


@dataclass(frozen=True)
class EmpiricalCDF:
    """Right-continuous step function u -> #{x_i <= u}/n."""

    sorted_samples: np.ndarray

    @property
    def n(self) -> int:
        return self.sorted_samples.size

    def evaluate(self, u):
        idx = np.searchsorted(self.sorted_samples, u, side="right")
        out = idx / self.n
        if np.ndim(u) == 0:
            return float(out)
        return out

    __call__ = evaluate


def empirical_cdf(samples) -> EmpiricalCDF:
    arr = np.asarray(samples, dtype=np.float64)
    if arr.size == 0:
        raise EmptyInput("empirical_cdf needs at least one sample")
    if not np.all(np.isfinite(arr)):
        raise DomainError("samples must be finite")
    return EmpiricalCDF(sorted_samples=np.sort(arr.ravel()))


def ks_distance(a: EmpiricalCDF, b) -> float:
    """Sup-norm distance from an ECDF to another ECDF or an analytic CDF.

    Step-vs-step is evaluated over the pooled jump points, where the sup is
    attained. Against a callable the one-sided gaps at each sample point
    bracket the sup exactly for any nondecreasing target.
    """
    if isinstance(b, EmpiricalCDF):
        pooled = np.union1d(a.sorted_samples, b.sorted_samples)
        return float(np.max(np.abs(a.evaluate(pooled) - b.evaluate(pooled))))
    xs = a.sorted_samples
    fx = np.asarray(b(xs), dtype=np.float64)
    steps = np.arange(1, a.n + 1) / a.n
    d_plus = np.max(steps - fx)
    d_minus = np.max(fx - (steps - 1.0 / a.n))
    return float(max(d_plus, d_minus, 0.0))


def dkw_epsilon(n: int, alpha: float) -> float:
    """Half-width of the (1 - alpha) DKW confidence band for an ECDF."""
    n = int(n)
    if n < 1:
        raise DomainError("n must be >= 1")
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * n))


@dataclass(frozen=True)
class TailFit:
    """Least-squares fit of log survival log(w) - v z over an admissible grid."""

    log_w_hat: float
    v_hat: float
    z_grid: np.ndarray
    residual_rms: float

    @property
    def w_hat(self) -> float:
        return math.exp(self.log_w_hat)


def tail_fit(samples, z_grid) -> TailFit:
    """Fit w e^{-v z} to the empirical survival function over z_grid.

    Grid points keep only levels with at least MIN_TAIL_COUNT exceedances;
    points every sample exceeds carry no tail information and are dropped
    too. Fewer than MIN_TAIL_POINTS admissible levels is an error rather
    than a degenerate line.
    """
    arr = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    grid = np.asarray(z_grid, dtype=np.float64).ravel()
    n = arr.size
    counts = n - np.searchsorted(arr, grid, side="right")
    admissible = (counts >= MIN_TAIL_COUNT) & (counts < n)
    if np.count_nonzero(admissible) < MIN_TAIL_POINTS:
        raise InsufficientTail(
            f"need >= {MIN_TAIL_POINTS} grid points with "
            f">= {MIN_TAIL_COUNT} exceedances, got {np.count_nonzero(admissible)}"
        )
    zs = grid[admissible]
    log_surv = np.log(counts[admissible] / n)
    slope, intercept = np.polyfit(zs, log_surv, 1)
    resid = log_surv - (slope * zs + intercept)
    return TailFit(
        log_w_hat=float(intercept),
        v_hat=float(-slope),
        z_grid=zs,
        residual_rms=float(np.sqrt(np.mean(resid**2))),
    )
