"""Unimodular lattice frames and shortest-vector machinery.

A frame is a d x d basis matrix with |det| = 1, columns are the basis
vectors.  Entries live in (sign, log-magnitude) form so that frames stay
meaningful after diagonal flows with exponents of order 10^3..10^4.
Reduction runs on the Gram matrix assembled in that extended arithmetic;
raw row scales e^{t w_i} never materialize as floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateBasis,
    DimensionMismatch,
    DomainError,
    InvalidFrame,
    NumericError,
)
from .extscalar import (
    FLOAT_SAFE_LOG,
    NEG_INF,
    ExtendedScalar,
    ext_add,
    ext_mul,
    ext_round_to_int,
    ext_sum,
)

# Gram log-determinant below this means the columns are numerically dependent.
DEGENERACY_LOG_THRESHOLD = -60.0

# |log|det|| must stay below this for a frame to count as unimodular.
UNIMODULAR_LOG_TOL = 1e-9

_REDUCE_ITER_CAP = 20000


@dataclass(frozen=True)
class LatticeFrame:
    """Basis of a unimodular lattice; column j of (signs, logs) is vector b_j."""

    dim: int
    signs: np.ndarray
    logs: np.ndarray

    def __post_init__(self):
        signs = np.ascontiguousarray(self.signs, dtype=np.int8)
        logs = np.ascontiguousarray(self.logs, dtype=np.float64)
        if signs.shape != (self.dim, self.dim) or logs.shape != (self.dim, self.dim):
            raise InvalidFrame(f"expected {self.dim}x{self.dim} sign/log matrices")
        if not np.all(np.isin(signs, (-1, 0, 1))):
            raise InvalidFrame("signs must be -1, 0 or +1")
        bad = (signs != 0) & ~np.isfinite(logs)
        if np.any(bad):
            raise InvalidFrame("nonzero entries need finite log magnitudes")
        logs = np.where(signs == 0, NEG_INF, logs)
        signs.flags.writeable = False
        logs.flags.writeable = False
        object.__setattr__(self, "signs", signs)
        object.__setattr__(self, "logs", logs)

    @classmethod
    def from_floats(cls, matrix, check: bool = True) -> "LatticeFrame":
        m = np.asarray(matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidFrame("expected a square matrix")
        if not np.all(np.isfinite(m)):
            raise InvalidFrame("entries must be finite")
        signs = np.sign(m).astype(np.int8)
        with np.errstate(divide="ignore"):
            logs = np.where(m == 0.0, NEG_INF, np.log(np.abs(m)))
        frame = cls(m.shape[0], signs, logs)
        if check:
            frame.require_unimodular()
        return frame

    @classmethod
    def identity(cls, dim: int = 2) -> "LatticeFrame":
        return cls.from_floats(np.eye(dim), check=False)

    def entry(self, i: int, j: int) -> ExtendedScalar:
        return ExtendedScalar(int(self.signs[i, j]), float(self.logs[i, j]))

    def to_float_matrix(self) -> np.ndarray:
        """Dense float matrix; raises when an entry exceeds float range."""
        if np.any(self.logs > FLOAT_SAFE_LOG):
            raise NumericError("frame entry exceeds float range")
        return self.signs * np.exp(self.logs)

    def is_float_safe(self, margin: float = 0.0) -> bool:
        return bool(np.all(self.logs <= FLOAT_SAFE_LOG - margin))

    def det(self) -> ExtendedScalar:
        s, l = _det_ext(self.signs.tolist(), self.logs.tolist())
        return ExtendedScalar(s, l)

    def log_det_abs(self) -> float:
        return self.det().log_mag

    def require_unimodular(self, tol: float = UNIMODULAR_LOG_TOL) -> None:
        d = self.det()
        if d.sign == 0 or abs(d.log_mag) > tol:
            raise InvalidFrame(
                f"frame is not unimodular: log|det| = {d.log_mag:.3e}"
            )

    def renormalized(self) -> "LatticeFrame":
        """Rescale by |det|^{1/d} so that log|det| returns to 0."""
        d = self.det()
        if d.sign == 0:
            raise DegenerateBasis("zero determinant")
        shift = d.log_mag / self.dim
        return LatticeFrame(self.dim, self.signs, self.logs - shift)

    def column_transform(self, U) -> "LatticeFrame":
        """Right-multiply by an integer matrix U (columns become B @ U)."""
        d = self.dim
        S = self.signs.tolist()
        L = self.logs.tolist()
        out_s = [[0] * d for _ in range(d)]
        out_l = [[NEG_INF] * d for _ in range(d)]
        for j in range(d):
            for r in range(d):
                terms = []
                for i in range(d):
                    u = U[i][j]
                    if u == 0 or S[r][i] == 0:
                        continue
                    us = 1 if u > 0 else -1
                    terms.append((S[r][i] * us, L[r][i] + math.log(abs(u))))
                out_s[r][j], out_l[r][j] = ext_sum(terms)
        return LatticeFrame(d, np.array(out_s, dtype=np.int8), np.array(out_l))

    def to_json_dict(self) -> dict:
        # Zero entries use null for the log so the payload stays strict JSON.
        pairs = [
            [int(self.signs[i, j]),
             float(self.logs[i, j]) if self.signs[i, j] else None]
            for i in range(self.dim)
            for j in range(self.dim)
        ]
        return {"dim": self.dim, "basis": pairs}

    @classmethod
    def from_json_dict(cls, data: dict, check: bool = True) -> "LatticeFrame":
        try:
            dim = int(data["dim"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidFrame(f"bad frame payload: {exc}") from exc
        if "basis_floats" in data:
            return cls.from_floats(np.asarray(data["basis_floats"], dtype=float), check=check)
        pairs = data.get("basis")
        if pairs is None or len(pairs) != dim * dim:
            raise InvalidFrame("basis must hold dim*dim [sign, log_mag] pairs")
        signs = np.zeros((dim, dim), dtype=np.int8)
        logs = np.full((dim, dim), NEG_INF)
        for idx, pair in enumerate(pairs):
            i, j = divmod(idx, dim)
            s, l = pair
            signs[i, j] = int(s)
            logs[i, j] = NEG_INF if (l is None or int(s) == 0) else float(l)
        frame = cls(dim, signs, logs)
        if check:
            frame.require_unimodular()
        return frame


@dataclass(frozen=True)
class ShortestVectorResult:
    """log of the shortest nonzero vector norm plus its basis coefficients."""

    log_norm: float
    coeffs: tuple


def _det_ext(S, L):
    d = len(S)
    if d == 1:
        return S[0][0], L[0][0]
    if d == 2:
        return ext_add(
            *ext_mul(S[0][0], L[0][0], S[1][1], L[1][1]),
            *ext_mul(-S[0][1], L[0][1], S[1][0], L[1][0]),
        )
    terms = []
    for j in range(d):
        if S[0][j] == 0:
            continue
        minor_s = [row[:j] + row[j + 1 :] for row in S[1:]]
        minor_l = [row[:j] + row[j + 1 :] for row in L[1:]]
        ms, ml = _det_ext(minor_s, minor_l)
        if ms == 0:
            continue
        sgn = -1 if j % 2 else 1
        terms.append((sgn * S[0][j] * ms, L[0][j] + ml))
    return ext_sum(terms)


def _gram_ext(frame: LatticeFrame):
    """Gram matrix of the columns as a d x d list of (sign, log) pairs."""
    d = frame.dim
    S = frame.signs.tolist()
    L = frame.logs.tolist()
    G = [[None] * d for _ in range(d)]
    for j in range(d):
        for k in range(j, d):
            terms = [
                ext_mul(S[r][j], L[r][j], S[r][k], L[r][k])
                for r in range(d)
                if S[r][j] != 0 and S[r][k] != 0
            ]
            G[j][k] = G[k][j] = ext_sum(terms)
    return G


def _check_not_degenerate(frame: LatticeFrame) -> None:
    det = frame.det()
    if det.sign == 0 or 2.0 * det.log_mag < DEGENERACY_LOG_THRESHOLD:
        raise DegenerateBasis(
            "Gram log-determinant below -60; columns numerically dependent"
        )


def _gauss_reduce_ext(frame: LatticeFrame):
    """Lagrange reduction for d=2 on the extended Gram; returns (frame', U)."""
    if frame.dim != 2:
        raise DimensionMismatch("gauss_reduce handles d=2 only")
    _check_not_degenerate(frame)
    G = _gram_ext(frame)
    g11, g12, g22 = G[0][0], G[0][1], G[1][1]
    u00, u01, u10, u11 = 1, 0, 0, 1
    for _ in range(_REDUCE_ITER_CAP):
        # Order so that |b1| <= |b2| (compare log norms; both are positive).
        if g11[1] > g22[1]:
            g11, g22 = g22, g11
            u00, u01 = u01, u00
            u10, u11 = u11, u10
        if g12[0] == 0:
            break
        mu_sign = g12[0]
        mu_log = g12[1] - g11[1]
        m = ext_round_to_int(mu_sign, mu_log)
        if m == 0:
            break
        # b2 <- b2 - m b1 on the Gram entries.
        lm = math.log(abs(m))
        ms = 1 if m > 0 else -1
        g22 = ext_sum(
            [g22, (-ms * g12[0], lm + g12[1]), (-ms * g12[0], lm + g12[1]),
             (g11[0], 2.0 * lm + g11[1])]
        )
        if g22[0] != 1:
            # A squared norm came out <= 0: the update cancelled past the
            # 53-bit budget.  Happens when the input is many log-units from
            # reduced; callers must shorten the flow step, not retry here.
            raise NumericError(
                "cancellation exhausted float precision in gauss reduction"
            )
        g12 = ext_add(*g12, -ms * g11[0], lm + g11[1])
        u01 -= m * u00
        u11 -= m * u10
    else:
        raise NumericError("gauss reduction did not converge")
    U = [[u00, u01], [u10, u11]]
    return frame.column_transform(U), U


def gauss_reduce(frame: LatticeFrame) -> LatticeFrame:
    """Reduced basis with |b1| <= |b2| and |<b1,b2>| <= |b1|^2 / 2."""
    reduced, _ = _gauss_reduce_ext(frame)
    return reduced


class _ExtGS:
    """Gram-Schmidt data over extended scalars for the LLL loop."""

    def __init__(self, S, L, d):
        self.d = d
        self.mu_s = [[0] * d for _ in range(d)]
        self.mu_l = [[NEG_INF] * d for _ in range(d)]
        self.bn = [None] * d  # squared norms of the orthogonalized vectors
        star_s = [[0] * d for _ in range(d)]
        star_l = [[NEG_INF] * d for _ in range(d)]
        for i in range(d):
            vs = [S[r][i] for r in range(d)]
            vl = [L[r][i] for r in range(d)]
            for j in range(i):
                dot = ext_sum(
                    [
                        ext_mul(S[r][i], L[r][i], star_s[j][r], star_l[j][r])
                        for r in range(d)
                    ]
                )
                bjs, bjl = self.bn[j]
                if bjs == 0:
                    raise DegenerateBasis("vanishing Gram-Schmidt norm")
                if bjs < 0:
                    raise NumericError(
                        "cancellation exhausted float precision in LLL"
                    )
                ms, ml = dot[0] * bjs, dot[1] - bjl
                self.mu_s[i][j], self.mu_l[i][j] = ms, ml
                if ms != 0:
                    for r in range(d):
                        vs[r], vl[r] = ext_add(
                            vs[r],
                            vl[r],
                            -ms * star_s[j][r],
                            ml + star_l[j][r],
                        )
            star_s[i] = vs
            star_l[i] = vl
            self.bn[i] = ext_sum([ext_mul(vs[r], vl[r], vs[r], vl[r]) for r in range(d)])


def _lll_reduce_ext(frame: LatticeFrame, delta: float):
    if not 0.25 < delta <= 1.0:
        raise DomainError(f"delta must lie in (0.25, 1], got {delta}")
    d = frame.dim
    if d < 2:
        raise DimensionMismatch("lll_reduce needs dim >= 2")
    _check_not_degenerate(frame)
    S = [row[:] for row in frame.signs.tolist()]
    L = [row[:] for row in frame.logs.tolist()]
    U = [[1 if i == j else 0 for j in range(d)] for i in range(d)]

    def col_sub(k, j, m):
        # b_k <- b_k - m b_j
        lm = math.log(abs(m))
        ms = 1 if m > 0 else -1
        for r in range(d):
            S[r][k], L[r][k] = ext_add(S[r][k], L[r][k], -ms * S[r][j], lm + L[r][j])
        for r in range(d):
            U[r][k] -= m * U[r][j]

    def col_swap(k, j):
        for r in range(d):
            S[r][k], S[r][j] = S[r][j], S[r][k]
            L[r][k], L[r][j] = L[r][j], L[r][k]
            U[r][k], U[r][j] = U[r][j], U[r][k]

    iters = 0
    k = 1
    while k < d:
        iters += 1
        if iters > _REDUCE_ITER_CAP:
            raise NumericError("LLL did not converge")
        gs = _ExtGS(S, L, d)
        # Size-reduce b_k, updating mu coefficients incrementally.
        mu_s = gs.mu_s
        mu_l = gs.mu_l
        for j in range(k - 1, -1, -1):
            m = ext_round_to_int(mu_s[k][j], mu_l[k][j])
            if m == 0:
                continue
            col_sub(k, j, m)
            lm = math.log(abs(m))
            ms = 1 if m > 0 else -1
            for jj in range(j):
                mu_s[k][jj], mu_l[k][jj] = ext_add(
                    mu_s[k][jj], mu_l[k][jj], -ms * mu_s[j][jj], lm + mu_l[j][jj]
                )
            mu_s[k][j], mu_l[k][j] = ext_add(mu_s[k][j], mu_l[k][j], -ms, lm)
        # Lovasz condition: |b*_k|^2 >= (delta - mu^2) |b*_{k-1}|^2.
        bn_k = gs.bn[k]
        bn_prev = gs.bn[k - 1]
        mu_sq_log = 2.0 * mu_l[k][k - 1] if mu_s[k][k - 1] != 0 else NEG_INF
        fac_s, fac_l = ext_add(
            1, math.log(delta), -1 if mu_s[k][k - 1] != 0 else 0, mu_sq_log
        )
        if fac_s <= 0:
            ok = True
        else:
            ok = bn_k[0] == 1 and bn_k[1] >= fac_l + bn_prev[1]
        if ok:
            k += 1
        else:
            col_swap(k, k - 1)
            k = max(1, k - 1)

    if d == 2:
        # Lagrange tail: with delta < 1 the pair can terminate with
        # |b2| slightly below |b1|; iterate until fully reduced.
        for _ in range(_REDUCE_ITER_CAP):
            n = [
                ext_sum([ext_mul(S[r][j], L[r][j], S[r][j], L[r][j]) for r in range(d)])
                for j in range(2)
            ]
            if n[0][1] > n[1][1]:
                col_swap(0, 1)
                n = [n[1], n[0]]
            dot = ext_sum(
                [ext_mul(S[r][0], L[r][0], S[r][1], L[r][1]) for r in range(d)]
            )
            m = ext_round_to_int(dot[0], dot[1] - n[0][1])
            if m == 0:
                break
            col_sub(1, 0, m)
        else:
            raise NumericError("Lagrange tail did not converge")

    out = LatticeFrame(
        d, np.array(S, dtype=np.int8), np.array(L, dtype=np.float64)
    )
    return out, U


def lll_reduce(frame: LatticeFrame, delta: float = 0.99) -> LatticeFrame:
    """LLL-reduced basis (size-reduced, Lovasz condition with given delta)."""
    reduced, _ = _lll_reduce_ext(frame, delta)
    return reduced


def _cholesky(G):
    """Upper-triangular R with G = R^T R; plain float, d small."""
    d = len(G)
    R = [[0.0] * d for _ in range(d)]
    for i in range(d):
        s = G[i][i] - sum(R[k][i] * R[k][i] for k in range(i))
        if s <= 0.0:
            raise DegenerateBasis("Gram matrix lost positive definiteness")
        R[i][i] = math.sqrt(s)
        for j in range(i + 1, d):
            t = G[i][j] - sum(R[k][i] * R[k][j] for k in range(i))
            R[i][j] = t / R[i][i]
    return R


def _minkowski_log_bound(d: int) -> float:
    """log of Minkowski's bound 2/V_d^{1/d} on lambda_1 at covolume one."""
    log_vd = (d / 2) * math.log(math.pi) - math.lgamma(d / 2 + 1)
    return math.log(2.0) - log_vd / d


def _enumerate_shortest(G):
    """Fincke-Pohst search for the minimum of c^T G c over nonzero integer c.

    Returns (min_value, coeffs).  Deterministic: candidates are visited in a
    fixed order and replacement requires strict improvement.
    """
    d = len(G)
    R = _cholesky(G)
    ratio = [[R[i][j] / R[i][i] for j in range(d)] for i in range(d)]
    diag2 = [R[i][i] * R[i][i] for i in range(d)]

    best = min(G[i][i] for i in range(d))
    best_c = [0] * d
    best_c[min(range(d), key=lambda i: G[i][i])] = 1
    slack = 1.0 + 1e-12

    c = [0] * d

    def rec(i, partial):
        nonlocal best, best_c
        center = sum(ratio[i][j] * c[j] for j in range(i + 1, d))
        budget = best * slack - partial
        if budget < 0.0:
            return
        half = math.sqrt(budget / diag2[i])
        lo = math.ceil(-center - half)
        hi = math.floor(-center + half)
        if all(c[j] == 0 for j in range(i + 1, d)):
            lo = max(lo, 0)  # sign symmetry: canonical rep has last nonzero > 0
        for ci in range(lo, hi + 1):
            c[i] = ci
            term = diag2[i] * (ci + center) ** 2
            total = partial + term
            if total > best * slack:
                c[i] = 0
                continue
            if i == 0:
                if any(c) and total < best * (1.0 - 1e-12):
                    best = total
                    best_c = c[:]
            else:
                rec(i - 1, total)
            c[i] = 0

    rec(d - 1, 0.0)
    return best, best_c


def shortest_vector(frame: LatticeFrame) -> ShortestVectorResult:
    """Exact shortest nonzero lattice vector.

    d=2 reads it off the Lagrange-reduced basis (b1 is optimal there, at any
    log scale); d>=3 reduces with LLL and closes the gap by enumeration.
    coeffs are expressed in the frame's own (input) basis.
    """
    d = frame.dim
    if d == 2:
        reduced, U = _gauss_reduce_ext(frame)
        Gext = _gram_ext(reduced)
        if Gext[0][0][0] <= 0:
            raise NumericError("nonpositive squared norm in shortest_vector")
        log_norm = 0.5 * Gext[0][0][1]
        _check_minkowski(frame, log_norm)
        return ShortestVectorResult(
            log_norm=log_norm, coeffs=(U[0][0], U[1][0])
        )
    reduced, U = _lll_reduce_ext(frame, 0.99)
    Gext = _gram_ext(reduced)
    # Rescale so the largest entry sits at 1; the argmin is scale-free.
    shift = max(Gext[i][i][1] for i in range(d))
    if any(
        Gext[i][j][0] != 0 and abs(Gext[i][j][1] - shift) > FLOAT_SAFE_LOG
        for i in range(d)
        for j in range(d)
    ):
        raise NumericError("reduced Gram exceeds float dynamic range")
    G = [
        [
            Gext[i][j][0] * math.exp(Gext[i][j][1] - shift) if Gext[i][j][0] else 0.0
            for j in range(d)
        ]
        for i in range(d)
    ]
    _, c_red = _enumerate_shortest(G)
    coeffs = tuple(
        sum(U[i][j] * c_red[j] for j in range(d)) for i in range(d)
    )
    # Recompute the norm in extended arithmetic from the reduced-basis combo;
    # the float minimum is only used for the argmin.
    terms = []
    for i in range(d):
        for j in range(d):
            if c_red[i] == 0 or c_red[j] == 0 or Gext[i][j][0] == 0:
                continue
            m = c_red[i] * c_red[j]
            ms = 1 if m > 0 else -1
            terms.append((Gext[i][j][0] * ms, Gext[i][j][1] + math.log(abs(m))))
    ns, nl = ext_sum(terms)
    if ns <= 0:
        raise NumericError("nonpositive squared norm in shortest_vector")
    log_norm = 0.5 * nl
    _check_minkowski(frame, log_norm)
    return ShortestVectorResult(log_norm=log_norm, coeffs=coeffs)


def _check_minkowski(frame: LatticeFrame, log_norm: float) -> None:
    """Reject results that provably overshoot the true minimum.

    Every covolume-one lattice has lambda_1 <= 2/V_d^{1/d}; a reduction that
    lands above that bound silently lost the short vector to cancellation
    (deeply sheared inputs can exhaust 53-bit precision without tripping the
    in-loop sign guards).
    """
    covol_correction = frame.log_det_abs() / frame.dim
    if log_norm > _minkowski_log_bound(frame.dim) + covol_correction + 1e-6:
        raise NumericError(
            "reduction lost the shortest vector to cancellation; "
            "evaluate long flows incrementally"
        )


def delta_observable(frame: LatticeFrame) -> float:
    """max over nonzero lattice vectors of log(1 / |v|) = -log lambda_1."""
    return -shortest_vector(frame).log_norm


def reduce2_float(ax: float, ay: float, bx: float, by: float):
    """Lagrange reduction on a float 2x2 basis (columns (ax,ay), (bx,by)).

    Fast path for trajectory stepping; the caller guarantees entries are
    comfortably inside float range.  Returns the reduced columns with
    |b1| <= |b2| and |mu| <= 1/2 (ties rounded to even).
    """
    na = ax * ax + ay * ay
    nb = bx * bx + by * by
    if na == 0.0 or nb == 0.0:
        raise DegenerateBasis("zero column in float reduction")
    for _ in range(_REDUCE_ITER_CAP):
        if nb < na:
            ax, ay, bx, by = bx, by, ax, ay
            na, nb = nb, na
        m = round((ax * bx + ay * by) / na)
        if m == 0:
            return ax, ay, bx, by
        bx -= m * ax
        by -= m * ay
        nb = bx * bx + by * by
    raise NumericError("float reduction did not converge")
