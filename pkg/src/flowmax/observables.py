"""Observable families evaluated on lattice frames.

Three kinds: the shortest-vector observable (delegated to lattice), a
cusp-excursion distance built from singular values, and the closest-return
-log distance.  The exact Riemannian metric of the coset space has no closed
form, so two surrogates split the job: a Frobenius quotient distance d_A for
small separations (locally bi-Lipschitz to any Riemannian metric, so the
small-ball exponent dim G = 3 survives) and a singular-value log-norm d_S for
large ones (genuinely exponential tail; d_A would decay polynomially there).

Both quotient distances minimize over a bounded candidate set of SL(2,Z)
matrices applied to canonical representatives; canonicalization keeps the
true minimizer inside the candidate set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .errors import (
    DegenerateBasis,
    DimensionMismatch,
    DomainError,
    InfiniteValue,
)
from .extscalar import ext_add, ext_mul, ext_sum
from .lattice import (
    LatticeFrame,
    _gauss_reduce_ext,
    _gram_ext,
    delta_observable,
    reduce2_float,
)

_TIE_TOL = 1e-12

# Cosets closer than this in d_A count as coincident; -log would overflow
# to a value that means nothing at 53-bit resolution anyway.
_RETURN_FLOOR = 1e-14


@dataclass(frozen=True)
class BasePoint:
    """Reference coset x0 plus the candidate-set radius for the quotient min.

    frame0 is canonicalized on construction so that returns to x0 are always
    measured against the representative the search set is built around.
    """

    frame0: LatticeFrame = None
    search_bound: int = 3

    def __post_init__(self):
        if self.frame0 is None:
            object.__setattr__(self, "frame0", LatticeFrame.identity(2))
        if self.frame0.dim != 2:
            raise DimensionMismatch("base points are dim-2 only")
        self.frame0.require_unimodular()
        if int(self.search_bound) < 1:
            raise DomainError("search_bound must be >= 1")
        object.__setattr__(self, "search_bound", int(self.search_bound))
        object.__setattr__(
            self, "frame0", canonical_representative(self.frame0)
        )


class ObservableTag(Enum):
    SHORTEST_VECTOR = "delta"
    EXCURSION_DISTANCE = "excursion"
    NEG_LOG_RETURN = "neglog"


@dataclass(frozen=True)
class ObservableKind:
    """Which observable to run, with its base point when one is required."""

    tag: ObservableTag
    base: BasePoint = None

    def __post_init__(self):
        if self.tag is ObservableTag.SHORTEST_VECTOR:
            if self.base is not None:
                raise DomainError("shortest-vector observable takes no base point")
        elif self.base is None:
            object.__setattr__(self, "base", BasePoint())


@lru_cache(maxsize=8)
def _sl2z_candidates_cached(bound: int):
    rng = range(-bound, bound + 1)
    rows = [
        (p, q, r, s)
        for p in rng
        for q in rng
        for r in rng
        for s in rng
        if p * s - q * r == 1
    ]
    arr = np.array(rows, dtype=np.int64).reshape(-1, 2, 2)
    arr.flags.writeable = False
    return arr


def sl2z_candidates(bound: int) -> np.ndarray:
    """All SL(2,Z) matrices with entries bounded by `bound`, lex-ordered."""
    if bound < 1:
        raise DomainError("bound must be >= 1")
    return _sl2z_candidates_cached(int(bound))


def _entry_key(sign: int, log_mag: float):
    # Orders extended scalars by value; zeros sit between the signs.
    return (sign, sign * log_mag if sign else 0.0)


def _frame_key(S, L):
    # Column-major scan: the dominant comparison is the first nonzero entry
    # of b1, which the maximum therefore drives positive.
    return tuple(
        _entry_key(S[r][j], L[r][j]) for j in (0, 1) for r in (0, 1)
    )


def _negate_col(S, L, j):
    S2 = [row[:] for row in S]
    return [[-S2[r][c] if c == j else S2[r][c] for c in range(2)] for r in range(2)], L


def _flip(S, L):
    return [[-s for s in row] for row in S], L


def _swap_det_preserving(S, L):
    # (b1, b2) -> (b2, -b1)
    S2 = [[S[r][1], -S[r][0]] for r in range(2)]
    L2 = [[L[r][1], L[r][0]] for r in range(2)]
    return S2, L2


def _shift_col(S, L, m):
    # b2 -> b2 - m b1 in extended arithmetic
    S2 = [row[:] for row in S]
    L2 = [row[:] for row in L]
    lm = math.log(abs(m))
    ms = 1 if m > 0 else -1
    for r in range(2):
        S2[r][1], L2[r][1] = ext_add(
            S[r][1], L[r][1], -ms * S[r][0], lm + L[r][0]
        )
    return S2, L2


def _neighbors(S, L):
    """Canonical-orbit moves available from a reduced basis: the global flip
    always; the rotation swap on a norm tie; the shear on a |mu| = 1/2 tie."""
    out = [_flip(S, L)]
    g = [
        ext_sum([ext_mul(S[r][a], L[r][a], S[r][b], L[r][b]) for r in range(2)])
        for (a, b) in ((0, 0), (0, 1), (1, 1))
    ]
    g11, g12, g22 = g
    if abs(g11[1] - g22[1]) <= _TIE_TOL:
        out.append(_swap_det_preserving(S, L))
    if g12[0] != 0 and abs((g12[1] - g11[1]) - math.log(0.5)) <= _TIE_TOL:
        out.append(_shift_col(S, L, g12[0]))
    return out


def canonical_representative(frame: LatticeFrame) -> LatticeFrame:
    """Deterministic representative of the coset frame*SL(2,Z).

    Gauss-reduces, restores the determinant sign that column swaps may have
    flipped, then maximizes a lexicographic key over the orbit of reduced
    bases (sign flips plus tie moves).  The maximum makes the first nonzero
    entry of b1 positive and is the same for any basis of the lattice.
    """
    if frame.dim != 2:
        raise DimensionMismatch("canonical_representative handles d=2 only")
    reduced, U = _gauss_reduce_ext(frame)
    S = reduced.signs.tolist()
    L = reduced.logs.tolist()
    if U[0][0] * U[1][1] - U[0][1] * U[1][0] == -1:
        S, L = _negate_col(S, L, 1)
    # Breadth-first closure over tie moves; generic frames stop at {r, -r}.
    def node_key(S, L):
        return tuple(
            (S[r][c], round(L[r][c], 9) if S[r][c] else 0.0)
            for r in range(2)
            for c in range(2)
        )

    seen = {node_key(S, L)}
    queue = [(S, L)]
    best = (S, L)
    best_key = _frame_key(S, L)
    while queue:
        cur = queue.pop()
        for nxt in _neighbors(*cur):
            k = node_key(*nxt)
            if k in seen or len(seen) > 64:
                continue
            seen.add(k)
            queue.append(nxt)
            fk = _frame_key(*nxt)
            if fk > best_key:
                best_key = fk
                best = nxt
    S, L = best
    return LatticeFrame(2, np.array(S, dtype=np.int8), np.array(L, dtype=np.float64))


def _canonical_float(mat: np.ndarray) -> np.ndarray:
    """Float twin of canonical_representative for batch pipelines.

    Skips tie moves (measure zero under any continuous ensemble); restores
    the determinant sign and applies the sign normalization.
    """
    ax, ay, bx, by = mat[0, 0], mat[1, 0], mat[0, 1], mat[1, 1]
    det_in = ax * by - ay * bx
    rax, ray, rbx, rby = reduce2_float(ax, ay, bx, by)
    det_out = rax * rby - ray * rbx
    if det_in * det_out < 0:
        rbx, rby = -rbx, -rby
    lead = rax if rax != 0.0 else ray
    if lead < 0:
        rax, ray, rbx, rby = -rax, -ray, -rbx, -rby
    return np.array([[rax, rbx], [ray, rby]])


def _canonicalize_batch(mats: np.ndarray) -> np.ndarray:
    """Vectorized _canonical_float over an (n, 2, 2) stack."""
    m = np.array(mats, dtype=np.float64)
    det_in = m[:, 0, 0] * m[:, 1, 1] - m[:, 0, 1] * m[:, 1, 0]
    b1 = m[:, :, 0].copy()
    b2 = m[:, :, 1].copy()
    na = np.sum(b1 * b1, axis=1)
    nb = np.sum(b2 * b2, axis=1)
    if np.any(na == 0.0) or np.any(nb == 0.0):
        raise DegenerateBasis("zero column in batch reduction")
    for _ in range(20000):
        swap = nb < na
        if np.any(swap):
            b1[swap], b2[swap] = b2[swap].copy(), b1[swap].copy()
            na[swap], nb[swap] = nb[swap], na[swap]
        mcoef = np.round(np.sum(b1 * b2, axis=1) / na)
        live = mcoef != 0.0
        if not np.any(live):
            break
        b2[live] -= mcoef[live, None] * b1[live]
        nb[live] = np.sum(b2[live] * b2[live], axis=1)
    else:
        raise DegenerateBasis("batch reduction did not converge")
    det_out = b1[:, 0] * b2[:, 1] - b1[:, 1] * b2[:, 0]
    flip2 = det_in * det_out < 0
    b2[flip2] = -b2[flip2]
    lead = np.where(b1[:, 0] != 0.0, b1[:, 0], b1[:, 1])
    neg = lead < 0
    b1[neg] = -b1[neg]
    b2[neg] = -b2[neg]
    return np.stack([b1, b2], axis=2)


def _excursion_values(mats: np.ndarray, base: BasePoint) -> np.ndarray:
    """d_S for an (n, 2, 2) stack of canonical float frames."""
    f0 = base.frame0.to_float_matrix()
    f0_inv = np.linalg.inv(f0)
    cand = sl2z_candidates(base.search_bound).astype(np.float64)
    m = np.einsum("ab,nbc,kcd->nkad", f0_inv, mats, cand)
    t = np.sum(m * m, axis=(2, 3))
    det = m[:, :, 0, 0] * m[:, :, 1, 1] - m[:, :, 0, 1] * m[:, :, 1, 0]
    dabs = np.abs(det)
    if np.any(dabs < 1e-300):
        raise DegenerateBasis("singular matrix in excursion distance")
    disc = np.clip(t * t - 4.0 * dabs * dabs, 0.0, None)
    s1sq = 0.5 * (t + np.sqrt(disc))
    log_s1 = 0.5 * np.log(s1sq)
    log_s2 = np.log(dabs) - log_s1
    vals = np.sqrt(log_s1 * log_s1 + log_s2 * log_s2)
    return np.min(vals, axis=1)


def _neglog_values(mats: np.ndarray, base: BasePoint) -> np.ndarray:
    """-log d_A for an (n, 2, 2) stack of canonical float frames."""
    f0 = base.frame0.to_float_matrix()
    cand = sl2z_candidates(base.search_bound).astype(np.float64)
    m = np.einsum("nab,kbc->nkac", mats, cand) - f0[None, None, :, :]
    dist = np.sqrt(np.sum(m * m, axis=(2, 3)))
    dmin = np.min(dist, axis=1)
    if np.any(dmin < _RETURN_FLOOR):
        raise InfiniteValue("coset coincides with the base point")
    return -np.log(dmin)


# Candidate sets run to a few hundred matrices, so slice big stacks to keep
# the (n, k, 2, 2) intermediates under ~100 MB.
_BATCH_SLICE = 8192


def _excursion_batch(mats: np.ndarray, base: BasePoint) -> np.ndarray:
    out = np.empty(len(mats))
    for lo in range(0, len(mats), _BATCH_SLICE):
        part = mats[lo : lo + _BATCH_SLICE]
        out[lo : lo + len(part)] = _excursion_values(
            _canonicalize_batch(part), base
        )
    return out


def _neglog_batch(mats: np.ndarray, base: BasePoint) -> np.ndarray:
    out = np.empty(len(mats))
    for lo in range(0, len(mats), _BATCH_SLICE):
        part = mats[lo : lo + _BATCH_SLICE]
        out[lo : lo + len(part)] = _neglog_values(
            _canonicalize_batch(part), base
        )
    return out


def excursion_distance(frame: LatticeFrame, base: BasePoint) -> float:
    """min over candidates gamma of the log-singular-value norm of
    frame0^{-1} g gamma, g the canonical representative; 0 at the base."""
    if frame.dim != 2:
        raise DimensionMismatch("excursion_distance handles d=2 only")
    g = canonical_representative(frame)
    return float(_excursion_values(g.to_float_matrix()[None], base)[0])


def neg_log_return(frame: LatticeFrame, base: BasePoint) -> float:
    """-log of the Frobenius quotient distance to the base point."""
    if frame.dim != 2:
        raise DimensionMismatch("neg_log_return handles d=2 only")
    g = canonical_representative(frame)
    return float(_neglog_values(g.to_float_matrix()[None], base)[0])


def evaluate_observable(kind: ObservableKind, frame: LatticeFrame) -> float:
    if kind.tag is ObservableTag.SHORTEST_VECTOR:
        return delta_observable(frame)
    if kind.tag is ObservableTag.EXCURSION_DISTANCE:
        return excursion_distance(frame, kind.base)
    return neg_log_return(frame, kind.base)
