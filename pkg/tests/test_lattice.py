import json
import math

import numpy as np
import pytest

from flowmax.errors import (
    DegenerateBasis,
    DimensionMismatch,
    DomainError,
    InvalidFrame,
)
from flowmax.lattice import (
    LatticeFrame,
    delta_observable,
    gauss_reduce,
    lll_reduce,
    reduce2_float,
    shortest_vector,
)

# Shortest squared norm by direct search over a coefficient box.  Independent
# of the reduction code: plain float linear algebra on the input matrix.
def brute_shortest_lognorm(matrix, box=8):
    m = np.asarray(matrix, dtype=float)
    d = m.shape[0]
    rng = range(-box, box + 1)
    best = math.inf
    coords = np.stack(np.meshgrid(*([list(rng)] * d), indexing="ij"), axis=-1)
    coords = coords.reshape(-1, d)
    keep = np.any(coords != 0, axis=1)
    vecs = coords[keep] @ m.T
    norms2 = np.sum(vecs * vecs, axis=1)
    best = float(np.min(norms2))
    return 0.5 * math.log(best)


def random_unimodular_2d(rng):
    """Iwasawa-style frame with moderate skew; shortest coeffs stay small."""
    y = rng.uniform(0.5, 4.0)
    x = rng.uniform(-2.0, 2.0)
    theta = rng.uniform(0.0, 2.0 * math.pi)
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    base = np.array([[1.0 / math.sqrt(y), x / math.sqrt(y)], [0.0, math.sqrt(y)]])
    return rot @ base


def random_unimodular_3d(rng):
    s1, s2 = rng.uniform(-1.0, 1.0, size=2)
    diag = np.diag([math.exp(s1), math.exp(s2), math.exp(-s1 - s2)])
    upper = np.eye(3)
    upper[0, 1], upper[0, 2], upper[1, 2] = rng.uniform(-1.5, 1.5, size=3)
    return upper @ diag


def random_sl2z(rng, length=12):
    """Word in the two standard generators; entries stay moderate."""
    s = np.array([[0, -1], [1, 0]], dtype=object)
    t = np.array([[1, 1], [0, 1]], dtype=object)
    t_inv = np.array([[1, -1], [0, 1]], dtype=object)
    u = np.eye(2, dtype=object)
    for _ in range(length):
        u = u @ [s, t, t_inv][rng.integers(0, 3)]
    return [[int(u[0, 0]), int(u[0, 1])], [int(u[1, 0]), int(u[1, 1])]]


def test_from_floats_validates_unimodularity():
    LatticeFrame.from_floats(np.eye(2))
    with pytest.raises(InvalidFrame):
        LatticeFrame.from_floats([[2.0, 0.0], [0.0, 1.0]])
    with pytest.raises(InvalidFrame):
        LatticeFrame.from_floats([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(InvalidFrame):
        LatticeFrame.from_floats([[1.0, float("nan")], [0.0, 1.0]])


def test_identity_round_trip():
    f = LatticeFrame.identity(3)
    m = f.to_float_matrix()
    assert np.allclose(m, np.eye(3))
    assert f.log_det_abs() == pytest.approx(0.0, abs=1e-15)


def test_renormalized_restores_unit_determinant():
    f = LatticeFrame.from_floats(np.eye(2) * 1.5, check=False)
    g = f.renormalized()
    assert abs(g.log_det_abs()) < 1e-12
    g.require_unimodular()


def test_gauss_reduce_known_example():
    # b1=(1,0), b2=(0.6,1): already reduced up to the size condition; the
    # shortest vector is b1 itself with norm exactly 1.
    f = LatticeFrame.from_floats([[1.0, 0.6], [0.0, 1.0]])
    r = gauss_reduce(f)
    m = r.to_float_matrix()
    n1 = m[0, 0] ** 2 + m[1, 0] ** 2
    n2 = m[0, 1] ** 2 + m[1, 1] ** 2
    assert n1 <= n2
    assert abs(m[0, 0] * m[0, 1] + m[1, 0] * m[1, 1]) <= 0.5 * n1 * (1 + 1e-12)
    res = shortest_vector(f)
    assert res.log_norm == pytest.approx(0.0, abs=1e-12)


def test_shortest_vector_diagonal():
    f = LatticeFrame.from_floats([[2.0, 0.0], [0.0, 0.5]])
    res = shortest_vector(f)
    assert res.log_norm == pytest.approx(-math.log(2), abs=1e-12)
    assert delta_observable(f) == pytest.approx(math.log(2), abs=1e-12)
    # The witness must actually be a vector of that norm.
    v = f.to_float_matrix() @ np.array(res.coeffs, dtype=float)
    assert 0.5 * math.log(v @ v) == pytest.approx(res.log_norm, abs=1e-12)


def test_shortest_vector_diagonal_3d():
    f = LatticeFrame.from_floats(np.diag([4.0, 1.0, 0.25]))
    res = shortest_vector(f)
    assert res.log_norm == pytest.approx(math.log(0.25), abs=1e-12)
    assert delta_observable(f) == pytest.approx(math.log(4.0), abs=1e-12)


def test_integer_lattice_delta_zero():
    for d in (2, 3, 4):
        f = LatticeFrame.identity(d)
        assert delta_observable(f) == pytest.approx(0.0, abs=1e-12)


def test_shortest_vector_matches_brute_force_2d():
    rng = np.random.default_rng(2024)
    for _ in range(400):
        m = random_unimodular_2d(rng)
        f = LatticeFrame.from_floats(m)
        got = shortest_vector(f).log_norm
        ref = brute_shortest_lognorm(m, box=8)
        assert got == pytest.approx(ref, abs=1e-10)


def test_shortest_vector_matches_brute_force_3d():
    rng = np.random.default_rng(5150)
    for i in range(60):
        m = random_unimodular_3d(rng)
        f = LatticeFrame.from_floats(m)
        got = shortest_vector(f).log_norm
        ref = brute_shortest_lognorm(m, box=8)
        if i < 10:
            # Spot-check that the box is large enough to contain the optimum.
            assert ref == pytest.approx(brute_shortest_lognorm(m, box=12), abs=1e-13)
        assert got == pytest.approx(ref, abs=1e-10)


def test_minkowski_bound_2d():
    # lambda_1 <= 2/sqrt(pi) for unit covolume, so -log lambda_1 >= -0.12079.
    rng = np.random.default_rng(99)
    floor = -math.log(2.0 / math.sqrt(math.pi))
    for _ in range(300):
        f = LatticeFrame.from_floats(random_unimodular_2d(rng))
        assert delta_observable(f) >= floor - 1e-10


def test_delta_invariant_under_basis_change():
    rng = np.random.default_rng(31337)
    for _ in range(100):
        m = random_unimodular_2d(rng)
        f = LatticeFrame.from_floats(m)
        u = random_sl2z(rng)
        g = f.column_transform(u)
        assert delta_observable(g) == pytest.approx(delta_observable(f), abs=1e-9)


def test_lll_agrees_with_gauss_2d():
    rng = np.random.default_rng(7777)
    for _ in range(1000):
        m = random_unimodular_2d(rng)
        f = LatticeFrame.from_floats(m)
        a = gauss_reduce(f)
        b = lll_reduce(f)
        na = a.logs[:, 0]
        nb = b.logs[:, 0]
        ga = 0.5 * math.log(np.sum(np.exp(2 * na[np.isfinite(na)])))
        gb = 0.5 * math.log(np.sum(np.exp(2 * nb[np.isfinite(nb)])))
        assert ga == pytest.approx(gb, abs=1e-9)


def test_lll_reduces_3d_shortest_first_vector():
    rng = np.random.default_rng(404)
    for _ in range(50):
        m = random_unimodular_3d(rng)
        f = LatticeFrame.from_floats(m)
        r = lll_reduce(f)
        b = r.to_float_matrix()
        first = math.sqrt(b[:, 0] @ b[:, 0])
        ref = math.exp(brute_shortest_lognorm(m, box=8))
        # LLL guarantees b1 within 2^{(d-1)/2} of the minimum; with
        # delta=0.99 and d=3 these mild frames come out much closer.
        assert first <= ref * 2.0 ** ((3 - 1) / 2) * (1 + 1e-9)


def test_extreme_log_scale_reduction():
    # Columns with log-magnitudes around +-900 never fit in floats; the
    # reduction must still find the short combination.  Lattice spanned by
    # (e^900, 0), (0, e^-900): shortest is the second column.
    signs = np.array([[1, 0], [0, 1]], dtype=np.int8)
    logs = np.array([[900.0, float("-inf")], [float("-inf"), -900.0]])
    f = LatticeFrame(2, signs, logs)
    res = shortest_vector(f)
    assert res.log_norm == pytest.approx(-900.0, abs=1e-9)


def test_gauss_requires_2d():
    with pytest.raises(DimensionMismatch):
        gauss_reduce(LatticeFrame.identity(3))


def test_lll_delta_range():
    with pytest.raises(DomainError):
        lll_reduce(LatticeFrame.identity(2), delta=0.1)
    with pytest.raises(DomainError):
        lll_reduce(LatticeFrame.identity(2), delta=1.5)


def test_degenerate_basis_rejected():
    f = LatticeFrame.from_floats([[1e-20, 0.0], [0.0, 1e-20]], check=False)
    with pytest.raises(DegenerateBasis):
        gauss_reduce(f)


def test_reduce2_float_matches_gauss():
    rng = np.random.default_rng(555)
    for _ in range(500):
        m = random_unimodular_2d(rng)
        ax, ay, bx, by = m[0, 0], m[1, 0], m[0, 1], m[1, 1]
        rax, ray, rbx, rby = reduce2_float(ax, ay, bx, by)
        na = rax * rax + ray * ray
        nb = rbx * rbx + rby * rby
        assert na <= nb * (1 + 1e-12)
        assert abs(rax * rbx + ray * rby) <= 0.5 * na * (1 + 1e-12)
        f = LatticeFrame.from_floats(m)
        assert 0.5 * math.log(na) == pytest.approx(
            shortest_vector(f).log_norm, abs=1e-12
        )


def test_json_round_trip():
    rng = np.random.default_rng(8)
    for _ in range(20):
        f = LatticeFrame.from_floats(random_unimodular_2d(rng))
        payload = json.dumps(f.to_json_dict(), allow_nan=False)
        g = LatticeFrame.from_json_dict(json.loads(payload))
        assert np.array_equal(f.signs, g.signs)
        assert np.array_equal(f.logs, g.logs)
    # Zero entries serialize as null and come back as exact zeros.
    f = LatticeFrame.identity(2)
    payload = json.dumps(f.to_json_dict(), allow_nan=False)
    g = LatticeFrame.from_json_dict(json.loads(payload))
    assert np.array_equal(f.signs, g.signs)


def test_from_json_floats_key():
    g = LatticeFrame.from_json_dict(
        {"dim": 2, "basis_floats": [[1.0, 0.6], [0.0, 1.0]]}
    )
    assert np.allclose(g.to_float_matrix(), [[1.0, 0.6], [0.0, 1.0]])


def test_from_json_rejects_malformed():
    with pytest.raises(InvalidFrame):
        LatticeFrame.from_json_dict({"dim": 2, "basis": [[1, 0.0]]})
    with pytest.raises(InvalidFrame):
        LatticeFrame.from_json_dict({"basis": []})
