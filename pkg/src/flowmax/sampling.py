"""Exact Haar sampling on SL(2,R)/SL(2,Z) and splittable deterministic seeding.

The fundamental-domain chart makes d=2 sampling exact: x uniform on
[-1/2, 1/2], y by inverse CDF of the y^{-2} marginal on [sqrt(3)/2, inf),
rejection on x^2 + y^2 >= 1, and an independent uniform rotation angle.

Seeding uses a splitmix64-style finalizer so that any (master, index) pair
maps to a stream-independent subseed: results never depend on scheduling
order, chunk size, or worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import LatticeFrame

SQRT3_2 = math.sqrt(3.0) / 2.0

# Expected acceptance rate of the rejection step: the fundamental domain has
# hyperbolic area pi/3 inside a proposal region of area 2/sqrt(3).
ACCEPTANCE_RATE = math.pi * math.sqrt(3.0) / 6.0

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class Seed:
    """64-bit master seed."""

    master: int

    def __post_init__(self):
        object.__setattr__(self, "master", int(self.master) & _MASK64)


def _splitmix64(z: int) -> int:
    """Avalanche finalizer of splitmix64 (Steele-Lea-Flood constants)."""
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_subseed(seed: Seed, index: int) -> Seed:
    """Deterministic, platform-independent subseed for stream #index."""
    return Seed(_splitmix64((_splitmix64(seed.master) + int(index)) & _MASK64))


def make_rng(seed: Seed) -> np.random.Generator:
    """Counter-based generator; identical draws on every platform."""
    return np.random.Generator(np.random.Philox(seed.master))


@dataclass(frozen=True)
class FundamentalDomainPoint:
    """Chart coordinates: |x| <= 1/2, y >= sqrt(3)/2, x^2 + y^2 >= 1."""

    x: float
    y: float
    theta: float


def sample_fundamental_domain(rng: np.random.Generator) -> FundamentalDomainPoint:
    """One exact draw from normalized dx dy / y^2 on the fundamental domain.

    Draw order per proposal is fixed (x, then the y-inverse-CDF uniform);
    theta is drawn once after acceptance.
    """
    while True:
        x = rng.uniform(-0.5, 0.5)
        u = rng.uniform(0.0, 1.0)
        y = SQRT3_2 / (1.0 - u)
        if x * x + y * y >= 1.0:
            break
    theta = rng.uniform(0.0, 2.0 * math.pi)
    return FundamentalDomainPoint(x=x, y=y, theta=theta)


def _sample_fd_batch(rng: np.random.Generator, count: int):
    """Vectorized rejection sampling.

    Returns (x, y, theta) arrays of length count plus the number of proposals
    consumed.  Equivalent in distribution to the scalar sampler; the exact
    draw sequence differs (documented: batch paths own their subseeds).
    """
    xs = np.empty(count)
    ys = np.empty(count)
    filled = 0
    proposals = 0
    while filled < count:
        todo = count - filled
        n = max(64, int(todo * 1.2))
        x = rng.uniform(-0.5, 0.5, size=n)
        u = rng.uniform(0.0, 1.0, size=n)
        y = SQRT3_2 / (1.0 - u)
        ok = x * x + y * y >= 1.0
        take = min(int(ok.sum()), todo)
        xs[filled : filled + take] = x[ok][:take]
        ys[filled : filled + take] = y[ok][:take]
        # Count proposals up to and including the one that filled the last
        # slot, so the acceptance-rate estimate is unbiased.
        if take == int(ok.sum()):
            proposals += n
        else:
            idx = np.nonzero(ok)[0][take - 1]
            proposals += int(idx) + 1
        filled += take
    theta = rng.uniform(0.0, 2.0 * math.pi, size=count)
    return xs, ys, theta, proposals


def frame_from_point(p: FundamentalDomainPoint) -> LatticeFrame:
    """Frame R(theta) (1/sqrt(y)) [[1, x], [0, y]]; unimodular by design."""
    c, s = math.cos(p.theta), math.sin(p.theta)
    ry = 1.0 / math.sqrt(p.y)
    m = [
        [c * ry, (c * p.x - s * p.y) * ry],
        [s * ry, (s * p.x + c * p.y) * ry],
    ]
    return LatticeFrame.from_floats(m, check=False)


def sample_haar_sl2(rng: np.random.Generator) -> LatticeFrame:
    """One Haar draw on SL(2,R)/SL(2,Z) as a lattice frame."""
    return frame_from_point(sample_fundamental_domain(rng))
