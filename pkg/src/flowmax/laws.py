"""Closed-form target laws: Gumbel limits, Poisson partial sums, and the
lattice constant C_d = V_d / (2 zeta(d)) controlling the shortest-vector tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, InvalidDimension

_ZETA_CUTOFF = 1_000_000


@dataclass(frozen=True)
class GumbelLaw:
    """CDF r -> exp(-w e^{-v r})."""

    w: float
    v: float

    def __post_init__(self):
        if not (self.w > 0 and math.isfinite(self.w)):
            raise DomainError(f"scale w must be positive, got {self.w}")
        if not (self.v > 0 and math.isfinite(self.v)):
            raise DomainError(f"exponent v must be positive, got {self.v}")


@lru_cache(maxsize=32)
def _zeta(d: int) -> float:
    # Truncated series plus Euler-Maclaurin tail from a = cutoff + 1:
    # sum_{n>=a} n^{-d} = a^{1-d}/(d-1) + a^{-d}/2 + d a^{-d-1}/12 - O(a^{-d-3})
    ns = np.arange(_ZETA_CUTOFF, 0, -1, dtype=np.float64)
    head = float(np.sum(ns ** float(-d)))
    a = float(_ZETA_CUTOFF + 1)
    tail = a ** (1 - d) / (d - 1) + 0.5 * a ** (-d) + d * a ** (-d - 1) / 12.0
    return head + tail


def siegel_constant(d: int) -> float:
    """V_d / (2 zeta(d)): the tail constant of the shortest-vector law."""
    d = int(d)
    if d < 2:
        raise InvalidDimension("siegel_constant needs d >= 2 (zeta(1) diverges)")
    log_vd = (d / 2) * math.log(math.pi) - math.lgamma(d / 2 + 1)
    return math.exp(log_vd) / (2.0 * _zeta(d))


def gumbel_cdf(r, law: GumbelLaw):
    """exp(-w e^{-v r}), elementwise; exact 0/1 beyond float range."""
    r_arr = np.asarray(r, dtype=np.float64)
    with np.errstate(over="ignore", under="ignore"):
        out = np.exp(-law.w * np.exp(-law.v * r_arr))
    out = np.clip(out, 0.0, 1.0)
    if np.ndim(r) == 0:
        return float(out)
    return out


def kth_target_cdf(r, law: GumbelLaw, k: int):
    """Poisson partial sum e^{-x} sum_{i<k} x^i/i! at x = w e^{-v r}.

    The limit law of the k-th largest rescaled maximum; k=1 is the Gumbel.
    """
    k = int(k)
    if k < 1:
        raise DomainError("k must be >= 1")
    r_arr = np.atleast_1d(np.asarray(r, dtype=np.float64))
    log_x = math.log(law.w) - law.v * r_arr
    with np.errstate(over="ignore"):
        x = np.exp(log_x)  # may overflow to inf; handled below
    # log of term i is -x + i log x - lgamma(i+1); i=0 avoids 0 * inf.
    terms = np.full((k, r_arr.size), -np.inf)
    terms[0] = -x
    for i in range(1, k):
        terms[i] = -x + i * log_x - math.lgamma(i + 1)
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        log_cdf = np.logaddexp.reduce(terms, axis=0)
        out = np.exp(log_cdf)
    out = np.where(np.isfinite(x), out, 0.0)  # x = inf: CDF is exactly 0
    out = np.clip(out, 0.0, 1.0)
    if np.ndim(r) == 0:
        return float(out[0])
    return out


def iid_exact_kth_cdf(p, N: int, k: int):
    """P(at most k-1 of N independent exceedances), exceedance prob p.

    Binomial partial sum sum_{i<k} C(N,i) p^i (1-p)^{N-i} in log domain.
    """
    N = int(N)
    k = int(k)
    if N < 1:
        raise DomainError("N must be >= 1")
    if not 1 <= k <= N:
        raise DomainError(f"need 1 <= k <= N, got k={k}, N={N}")
    p_arr = np.atleast_1d(np.asarray(p, dtype=np.float64))
    if np.any((p_arr < 0) | (p_arr > 1)) or not np.all(np.isfinite(p_arr)):
        raise DomainError("p must lie in [0, 1]")
    with np.errstate(divide="ignore", invalid="ignore"):
        log_p = np.log(p_arr)
        log_1mp = np.log1p(-p_arr)
    terms = np.full((k, p_arr.size), -np.inf)
    # i = 0 term handles p = 0 exactly; p = 1 leaves all terms at -inf.
    ok0 = p_arr < 1.0
    terms[0][ok0] = N * log_1mp[ok0]
    for i in range(1, k):
        log_c = (
            math.lgamma(N + 1) - math.lgamma(i + 1) - math.lgamma(N - i + 1)
        )
        mid = (p_arr > 0.0) & (p_arr < 1.0)
        terms[i][mid] = log_c + i * log_p[mid] + (N - i) * log_1mp[mid]
    log_cdf = np.logaddexp.reduce(terms, axis=0)
    out = np.clip(np.exp(log_cdf), 0.0, 1.0)
    if np.ndim(p) == 0:
        return float(out[0])
    return out
