"""Diagonal one-parameter subgroups and their action on lattice frames.

Only diagonal flows a_t = diag(e^{t w_1}, ..., e^{t w_d}) are supported;
their adjoint action is already diagonal in the elementary-matrix basis,
which keeps the spectrum computation exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidFlow
from .lattice import LatticeFrame

_SUM_TOL = 1e-12
_HYPERBOLIC_TOL = 1e-12


@dataclass(frozen=True)
class FlowSpec:
    """Exponent vector of a trace-zero diagonal flow."""

    exponents: tuple

    def __post_init__(self):
        exps = tuple(float(w) for w in self.exponents)
        if len(exps) < 2:
            raise InvalidFlow("need at least two exponents")
        if not all(math.isfinite(w) for w in exps):
            raise InvalidFlow("exponents must be finite")
        if abs(sum(exps)) > _SUM_TOL:
            raise InvalidFlow(
                f"exponents must sum to zero, got {sum(exps):.3e}"
            )
        object.__setattr__(self, "exponents", exps)

    @property
    def dim(self) -> int:
        return len(self.exponents)

    @classmethod
    def standard(cls) -> "FlowSpec":
        """Geodesic-flow normalization on d=2: diag(e^{t/2}, e^{-t/2})."""
        return cls((0.5, -0.5))

    @classmethod
    def parse(cls, text: str) -> "FlowSpec":
        try:
            exps = tuple(float(p) for p in text.split(","))
        except ValueError as exc:
            raise InvalidFlow(f"cannot parse flow exponents {text!r}") from exc
        return cls(exps)

    def to_json_dict(self) -> dict:
        return {"exponents": list(self.exponents)}


@dataclass(frozen=True)
class AdjointSpectrum:
    """Exponents of Ad(a_t) on trace-zero matrices."""

    eigen_exponents: tuple
    gamma: float
    partially_hyperbolic: bool


def adjoint_spectrum(flow: FlowSpec) -> AdjointSpectrum:
    """All pairwise differences w_i - w_j plus d-1 zeros (Cartan directions)."""
    w = flow.exponents
    d = len(w)
    exps = [w[i] - w[j] for i in range(d) for j in range(d) if i != j]
    exps.extend([0.0] * (d - 1))
    exps.sort()
    gamma = max(exps)
    hyperbolic = any(abs(e) > _HYPERBOLIC_TOL for e in exps)
    return AdjointSpectrum(
        eigen_exponents=tuple(exps), gamma=gamma, partially_hyperbolic=hyperbolic
    )


def apply_flow(frame: LatticeFrame, flow: FlowSpec, t: float) -> LatticeFrame:
    """Frame of a_t * (lattice): row i scaled by e^{t w_i}, then renormalized.

    The scaling is a pure shift of log magnitudes, so arbitrarily large t is
    exact up to one float addition per entry.
    """
    if flow.dim != frame.dim:
        raise DimensionMismatch(
            f"flow dim {flow.dim} vs frame dim {frame.dim}"
        )
    shifts = np.asarray(flow.exponents, dtype=np.float64) * float(t)
    logs = frame.logs + shifts[:, None]
    out = LatticeFrame(frame.dim, frame.signs, logs)
    # Sum of exponents is zero only to 1e-12, which drifts over repeated
    # applications at large t; renormalizing pins |log det| back near 0.
    return out.renormalized()
