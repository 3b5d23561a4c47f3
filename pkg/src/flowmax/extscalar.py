"""Sign/log-magnitude scalar arithmetic.

Flow times of order 10^3..10^4 produce basis entries like e^{+-5000} that no
float can hold, so frames store each entry as (sign, log|x|).  Addition goes
through log-sum-exp on the magnitudes, which never overflows: the exponential
is only ever taken of a non-positive difference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

NEG_INF = float("-inf")

# Largest log-magnitude that converts to a finite float (log of ~1.8e308).
FLOAT_SAFE_LOG = 709.0


def log_add(a: float, b: float) -> float:
    """ln(e^a + e^b) without overflow."""
    if a < b:
        a, b = b, a
    if b == NEG_INF:
        return a
    return a + math.log1p(math.exp(b - a))


def log_sub(a: float, b: float) -> float:
    """ln(e^a - e^b) for a >= b; returns -inf on cancellation.

    Differences below one ulp of the operands also count as cancellation:
    exp(b - a) rounds to exactly 1 there and the true gap is unresolvable.
    """
    d = b - a
    if d >= 0.0:
        return NEG_INF
    e = math.exp(d)
    if e >= 1.0:
        return NEG_INF
    return a + math.log1p(-e)


def ext_add(s1: int, l1: float, s2: int, l2: float) -> tuple[int, float]:
    """Signed addition on (sign, log_mag) pairs."""
    if s1 == 0:
        return s2, l2
    if s2 == 0:
        return s1, l1
    if s1 == s2:
        return s1, log_add(l1, l2)
    # Opposite signs: result carries the sign of the larger magnitude.
    if l1 == l2:
        return 0, NEG_INF
    if l1 > l2:
        return s1, log_sub(l1, l2)
    return s2, log_sub(l2, l1)


def ext_mul(s1: int, l1: float, s2: int, l2: float) -> tuple[int, float]:
    if s1 == 0 or s2 == 0:
        return 0, NEG_INF
    return s1 * s2, l1 + l2


def ext_sum(terms: list[tuple[int, float]]) -> tuple[int, float]:
    """Sum of (sign, log_mag) terms, largest magnitudes first for stability."""
    s, l = 0, NEG_INF
    for ts, tl in sorted(terms, key=lambda t: t[1], reverse=True):
        s, l = ext_add(s, l, ts, tl)
    return s, l


_LN2 = math.log(2.0)


def ext_round_to_int(sign: int, log_mag: float):
    """Nearest integer (ties to even) of sign * e^{log_mag} as a Python int.

    Magnitudes beyond 2^53 keep 53 significant bits, which is all the input
    representation carries in the first place.
    """
    if sign == 0 or log_mag == NEG_INF:
        return 0
    if log_mag < 36.0:  # e^36 < 2^53, exact float path
        return int(round(sign * math.exp(log_mag)))
    if log_mag <= FLOAT_SAFE_LOG:
        return int(sign) * int(round(math.exp(log_mag)))
    # Huge: split off a power of two so the mantissa stays in float range.
    shift = int(log_mag / _LN2) - 64
    mantissa = math.exp(log_mag - shift * _LN2)  # in [2^63-ish, 2^65-ish]
    return int(sign) * (int(round(mantissa)) << shift)


@dataclass(frozen=True)
class ExtendedScalar:
    """A real number stored as (sign, ln|x|); sign 0 encodes exact zero."""

    sign: int
    log_mag: float

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise DomainError(f"sign must be -1, 0 or 1, got {self.sign}")
        if self.sign == 0 and self.log_mag != NEG_INF:
            object.__setattr__(self, "log_mag", NEG_INF)
        if self.sign != 0 and not math.isfinite(self.log_mag):
            raise DomainError("nonzero value needs a finite log magnitude")

    @staticmethod
    def from_float(x: float) -> "ExtendedScalar":
        if x != x:
            raise DomainError("cannot represent NaN")
        if x == 0.0:
            return ExtendedScalar(0, NEG_INF)
        if math.isinf(x):
            raise DomainError("cannot represent infinity")
        return ExtendedScalar(1 if x > 0 else -1, math.log(abs(x)))

    def to_float(self) -> float:
        """Float value; overflows to signed inf beyond float range."""
        if self.sign == 0:
            return 0.0
        if self.log_mag > FLOAT_SAFE_LOG:
            return math.inf * self.sign
        return self.sign * math.exp(self.log_mag)

    def is_zero(self) -> bool:
        return self.sign == 0

    def __neg__(self) -> "ExtendedScalar":
        return ExtendedScalar(-self.sign, self.log_mag)

    def __abs__(self) -> "ExtendedScalar":
        return ExtendedScalar(abs(self.sign), self.log_mag)

    def __add__(self, other: "ExtendedScalar") -> "ExtendedScalar":
        s, l = ext_add(self.sign, self.log_mag, other.sign, other.log_mag)
        return ExtendedScalar(s, l)

    def __sub__(self, other: "ExtendedScalar") -> "ExtendedScalar":
        return self + (-other)

    def __mul__(self, other: "ExtendedScalar") -> "ExtendedScalar":
        s, l = ext_mul(self.sign, self.log_mag, other.sign, other.log_mag)
        return ExtendedScalar(s, l)

    def __truediv__(self, other: "ExtendedScalar") -> "ExtendedScalar":
        if other.sign == 0:
            raise ZeroDivisionError("division by extended zero")
        if self.sign == 0:
            return ExtendedScalar(0, NEG_INF)
        return ExtendedScalar(self.sign * other.sign, self.log_mag - other.log_mag)

    def scaled_by_int(self, m: int) -> "ExtendedScalar":
        """Product with an exact integer (arbitrary precision accepted)."""
        if m == 0 or self.sign == 0:
            return ExtendedScalar(0, NEG_INF)
        s = self.sign if m > 0 else -self.sign
        return ExtendedScalar(s, self.log_mag + math.log(abs(m)))

    def round_to_int(self):
        return ext_round_to_int(self.sign, self.log_mag)

    # Total order consistent with the represented real values.
    def _key(self):
        return (self.sign, self.sign * self.log_mag if self.sign else 0.0)

    def __lt__(self, other: "ExtendedScalar") -> bool:
        if self.sign != other.sign:
            return self.sign < other.sign
        if self.sign == 0:
            return False
        return self.sign * self.log_mag < other.sign * other.log_mag

    def __le__(self, other: "ExtendedScalar") -> bool:
        return not other < self

    def __gt__(self, other: "ExtendedScalar") -> bool:
        return other < self

    def __ge__(self, other: "ExtendedScalar") -> bool:
        return not self < other
