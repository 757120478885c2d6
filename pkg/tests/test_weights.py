import numpy as np
import pytest
from hypothesis import given, strategies as st

from mwlab.errors import DomainError, IllConditionedError, InvalidInputError
from mwlab.grid import DyadicCube, GridGeometry
from mwlab.scalar import fujii_ainfty, scalar_a1, scalar_ap
from mwlab.spd import frac_power, op_norm
from mwlab.weights import (MatrixWeight, ainfty_sc, generate_weight, identity_weight,
                           load_mwt, matrix_a1, matrix_ap, matrix_ap_report, matrix_rh_check,
                           reducing_matrix, reducing_matrix_p2_closed_form, save_mwt,
                           scalar_embedded, weight_from_json)

G1 = GridGeometry(1, 5)
G2 = GridGeometry(2, 3)


def brute_matrix_ap(W, p):
    """Direct quadruple loop over cube, x and y."""
    g = W.geometry
    pp = p / (p - 1)
    A, B = W.power(1 / p), W.power(-1 / p)
    best = 0.0
    for cube in g.all_cubes():
        box = cube.box(g).slices
        a = A[box].reshape(-1, W.n, W.n)
        b = B[box].reshape(-1, W.n, W.n)
        inner = [np.mean([np.linalg.norm(x @ y, 2) ** pp for y in b]) ** (p / pp) for x in a]
        best = max(best, float(np.mean(inner)))
    return best


def test_identity_constants():
    W = identity_weight(G1, 2)
    assert matrix_ap(W, 2) == pytest.approx(1.0)
    assert matrix_ap(W, 3.5) == pytest.approx(1.0)
    assert matrix_a1(W) == pytest.approx(1.0)
    assert ainfty_sc(W, 2) == pytest.approx(1.0)
    assert matrix_rh_check(W, 2, np.eye(2), 1.5) == pytest.approx(1.0)
    rm = reducing_matrix(W, 3.0, DyadicCube(1, (0,)), "dual")
    np.testing.assert_allclose(rm.matrix, np.eye(2), atol=1e-9)
    assert rm.lower == pytest.approx(1.0) and rm.upper == pytest.approx(1.0)


def test_domain_errors():
    W = identity_weight(G1, 2)
    with pytest.raises(DomainError):
        matrix_ap(W, 1.0)
    with pytest.raises(DomainError):
        matrix_rh_check(W, 2, np.eye(2), 1.0)
    with pytest.raises(DomainError):
        generate_weight("spiral", G1, 2)


def test_reducing_matrix_diagonal_p2_closed_form():
    x = (np.arange(32) + 0.5) / 32
    w1, w2 = 1 + x, np.exp(np.sin(6 * x))
    W = MatrixWeight(G1, np.stack([np.diag([a, b]) for a, b in zip(w1, w2)]))
    for cube in (G1.root(), DyadicCube(2, (3,))):
        sl = cube.box(G1).slices
        expect = np.diag([w1[sl].mean() ** 0.5, w2[sl].mean() ** 0.5])
        np.testing.assert_allclose(reducing_matrix_p2_closed_form(W, cube), expect, rtol=1e-12)
        rm = reducing_matrix(W, 2.0, cube)
        # the fitted ellipsoid of a Euclidean norm is the norm's own ellipsoid
        np.testing.assert_allclose(rm.matrix, expect, rtol=1e-6)
        assert rm.lower <= 1 + 1e-9 and rm.upper <= rm.factor * (1 + 1e-9)


@pytest.mark.parametrize("geo", [G1, G2])
def test_reducing_matrix_bracket_holds_on_random_directions(geo, rng):
    W = generate_weight("random-log-lipschitz", geo, 3, {"lip": 3.0}, seed=4)
    cube = geo.root()
    rm = reducing_matrix(W, 1.5, cube, "direct")
    e = rng.standard_normal((200, 3))
    cells = W.power(1 / 1.5).reshape(-1, 3, 3)
    rho = np.mean(np.linalg.norm(np.einsum("cij,kj->kci", cells, e), axis=2) ** 1.5,
                  axis=1) ** (1 / 1.5)
    me = np.linalg.norm(e @ rm.matrix, axis=1)
    # upper half holds for every direction, lower half is certified on probes only
    assert np.all(rho <= rm.factor * me * (1 + 1e-9))
    assert np.all(me <= rho * (1 + 1e-3))
    assert rm.lower >= 1 - 1e-9
    assert rm.factor <= np.sqrt(3) * (1 + 1e-6)


def test_scalar_embedded_reduces_to_scalar_constants():
    x = (np.arange(32) + 0.5) / 32
    w = np.abs(x - 0.4) ** 0.6
    W = scalar_embedded(w, 2)
    assert matrix_ap(W, 2) == pytest.approx(scalar_ap(w, 2), rel=1e-12)
    assert matrix_ap(W, 3) == pytest.approx(scalar_ap(w, 3), rel=1e-12)
    assert matrix_a1(W) == pytest.approx(scalar_a1(w), rel=1e-12)
    # the direction does not matter for w I
    assert ainfty_sc(W, 2, n_dirs=4) == pytest.approx(fujii_ainfty(w), rel=1e-12)
    assert ainfty_sc(W, 2, n_dirs=16) == pytest.approx(fujii_ainfty(w), rel=1e-12)


@pytest.mark.parametrize("kind", ["rotating-power", "block-diagonal", "random-log-lipschitz"])
def test_matrix_ap_matches_brute_force(kind):
    g = GridGeometry(1, 4)
    W = generate_weight(kind, g, 2, seed=3)
    assert matrix_ap(W, 2) == pytest.approx(brute_matrix_ap(W, 2), rel=1e-10)
    assert matrix_ap(W, 1.5) == pytest.approx(brute_matrix_ap(W, 1.5), rel=1e-10)


def test_ap_proxy_comparable():
    W = generate_weight("rotating-power", G1, 2, {"a": 0.6}, seed=0)
    rep = matrix_ap_report(W, 2)
    # the proxy and the integral form agree up to dimensional factors
    assert 1 / 4 <= rep.ratio <= 4


def test_generator_special_cases():
    W = generate_weight("scalar-embedded", G1, 3, {"profile": "constant", "c": 1.0})
    np.testing.assert_array_equal(W.values, np.broadcast_to(np.eye(3), W.values.shape))
    W = generate_weight("rotating-power", G2, 2, {"a": 0.0})
    assert np.ptp(W.values, axis=(0, 1)).max() == 0
    assert matrix_ap(W, 2) == pytest.approx(1.0)


def test_condition_cap_rejects():
    vals = np.broadcast_to(np.diag([1.0, 1e-9]), G1.shape + (2, 2))
    with pytest.raises((IllConditionedError, InvalidInputError)):
        MatrixWeight(G1, vals)


def test_mwt_round_trip(tmp_path):
    W = generate_weight("block-diagonal", G2, 2, {"rotation": 0.4}, seed=1)
    save_mwt(tmp_path / "w.mwt", W)
    back = load_mwt(tmp_path / "w.mwt")
    np.testing.assert_array_equal(back.values, W.values)
    assert back.metadata() == W.metadata()
    via_json = weight_from_json({"path": str(tmp_path / "w.mwt")})
    np.testing.assert_array_equal(via_json.values, W.values)


def test_power_cache_consistency():
    W = generate_weight("random-log-lipschitz", G1, 3, seed=2)
    x = W.values[5]
    np.testing.assert_allclose(W.power(-0.5)[5], frac_power(x, -0.5), rtol=1e-10)
    np.testing.assert_allclose(W.power(0.5)[5] @ W.power(-0.5)[5], np.eye(3), atol=1e-10)


rotations = st.floats(0, 2 * np.pi)


@given(st.integers(0, 2 ** 31), st.floats(0.1, 10.0), rotations)
def test_ap_invariant_under_scaling_and_rotation(seed, c, angle):
    g = GridGeometry(1, 4)
    W = generate_weight("random-log-lipschitz", g, 2, {"lip": 2.0}, seed=seed)
    a = matrix_ap(W, 2)
    assert a >= 1 - 1e-12
    assert matrix_ap(W.scaled(c), 2) == pytest.approx(a, rel=1e-9)
    U = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    Wr = MatrixWeight(g, np.einsum("ij,xjk,lk->xil", U, W.values, U))
    assert matrix_ap(Wr, 2) == pytest.approx(a, rel=1e-9)


@given(st.integers(0, 2 ** 31))
def test_a1_dominates_ap_and_ainfty_at_least_one(seed):
    g = GridGeometry(1, 4)
    W = generate_weight("random-log-lipschitz", g, 2, {"lip": 2.0}, seed=seed)
    assert ainfty_sc(W, 2) >= 1 - 1e-12
    assert matrix_a1(W) >= 1 - 1e-12
    # |W(x)W^{-1}(y)| >= 1 on the diagonal, and A_p at p=2 is bounded by A_1 up to n
    assert matrix_ap(W, 2) <= 2 * matrix_a1(W) * (1 + 1e-12)


def test_rh_check_power_weight():
    x = (np.arange(64) + 0.5) / 64
    W = scalar_embedded(np.abs(x - 0.3) ** -0.5, 2)
    A = frac_power(np.diag([2.0, 1.0]), -0.5)
    val = matrix_rh_check(W, 2, A, 1 + 2 ** -12)
    assert 1.0 <= val <= 2.0
    assert op_norm(A) > 0
