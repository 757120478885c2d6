import numpy as np
import pytest
from hypothesis import given, strategies as st

from mwlab.errors import DomainError
from mwlab.grid import GridFunction, GridGeometry
from mwlab.operators import (KernelError, KernelOperator, apply, apply_adjoint, apply_naive,
                             bilinear_sharp_maximal, grand_maximal, hormander_constant,
                             kernel_from_spec, mpt_maximal, omega_profile, rough_kernel,
                             weak_norm_estimate)
from mwlab.weights import generate_weight, identity_weight, reducing_matrix

G1 = GridGeometry(1, 5)
G2 = GridGeometry(2, 3)
HILBERT = KernelOperator("hilbert")
ROUGH = rough_kernel(omega_profile("sign-x"))


def test_zero_inputs_give_zero():
    assert not np.any(apply(HILBERT, np.zeros(32)))
    assert not np.any(bilinear_sharp_maximal(HILBERT, np.zeros(32), np.ones(32)))
    assert not np.any(mpt_maximal(HILBERT, np.zeros(32), 2.0))
    zero = rough_kernel(np.zeros(8))
    assert zero.warnings
    assert not np.any(apply(zero, np.ones((8, 8))))


def test_hilbert_indicator_matches_double_sum():
    f = np.zeros(32)
    f[:16] = 1.0
    np.testing.assert_allclose(apply(HILBERT, f), apply_naive(HILBERT, f), rtol=1e-13, atol=1e-15)


def test_rough_matches_double_sum(rng):
    f = rng.standard_normal((8, 8))
    f -= f.mean()
    assert abs(ROUGH.omega_mean()) < 1e-12
    np.testing.assert_allclose(apply(ROUGH, f), apply_naive(ROUGH, f), rtol=1e-10, atol=1e-12)
    # sign of the first coordinate gives an odd kernel
    t = np.array([[0.3, 0.1], [0.05, -0.2]])
    np.testing.assert_allclose(ROUGH.k(-t), -ROUGH.k(t))


def test_riesz_and_hormander_match_double_sum(rng):
    f = rng.standard_normal((8, 8, 2))
    T = KernelOperator("riesz")
    np.testing.assert_allclose(apply(T, f), apply_naive(T, f), rtol=1e-10, atol=1e-12)
    T = KernelOperator("hormander-example")
    f = rng.standard_normal(32)
    np.testing.assert_allclose(apply(T, f), apply_naive(T, f), rtol=1e-12, atol=1e-14)


def test_rough_needs_enough_samples():
    with pytest.raises(DomainError):
        rough_kernel(np.ones(4))
    with pytest.raises(DomainError):
        KernelOperator("poisson")


def test_nonfinite_kernel_rejected():
    class Bad(KernelOperator):
        def k(self, t):
            return np.full(np.shape(t), np.inf)
    with pytest.raises(KernelError):
        apply(Bad("hilbert"), np.ones(8))


def test_adjoint_of_hilbert_is_minus(rng):
    f, g = rng.standard_normal(32), rng.standard_normal(32)
    lhs = np.dot(apply(HILBERT, f), g)
    rhs = np.dot(f, apply_adjoint(HILBERT, g))
    assert lhs == pytest.approx(rhs, rel=1e-12)
    assert lhs == pytest.approx(-np.dot(f, apply(HILBERT, g)), rel=1e-10)


@given(st.integers(0, 2 ** 31))
def test_hilbert_antisymmetric(seed):
    rng = np.random.default_rng(seed)
    f, g = rng.standard_normal(64), rng.standard_normal(64)
    tf, tg = apply(HILBERT, f), apply(HILBERT, g)
    scale = np.linalg.norm(tf) * np.linalg.norm(g) + np.linalg.norm(f) * np.linalg.norm(tg)
    assert abs(tf @ g + f @ tg) <= 1e-10 * scale


@given(st.integers(0, 2 ** 31), st.floats(0, 2 * np.pi))
def test_vector_extension_basis_independent(seed, angle):
    rng = np.random.default_rng(seed)
    f = rng.standard_normal((8, 8, 2))
    U = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    a = apply(ROUGH, f @ U.T)
    b = apply(ROUGH, f) @ U.T
    np.testing.assert_allclose(a, b, atol=1e-10 * np.abs(b).max())


def brute_sharp(T, f, g, p=1.0, inf=False):
    """sup over dyadic Q of the average over Q of |T(f chi_{outside 3Q})|^p |g|."""
    geo = GridGeometry(f.ndim, int(np.log2(f.shape[0])))
    out = np.zeros(f.shape)
    for cube in geo.all_cubes():
        mask = cube.triple(geo).mask(geo)
        v = np.abs(apply_naive(T, np.where(mask, 0.0, f)))
        box = cube.box(geo).slices
        if inf:
            stat = v[box].max()
        else:
            stat = np.mean(v[box] ** p * np.abs(g[box])) ** (1 / p)
        np.maximum(out[box], stat, out=out[box])
    return out


def test_sharp_maximal_single_cell_matches_brute_force():
    f = np.zeros(32)
    f[9] = 1.0
    g = np.ones(32)
    np.testing.assert_allclose(bilinear_sharp_maximal(HILBERT, f, g), brute_sharp(HILBERT, f, g),
                               rtol=1e-12, atol=1e-14)


def test_sharp_maximal_2d_matches_brute_force(rng):
    f, g = rng.standard_normal((8, 8)), rng.random((8, 8))
    np.testing.assert_allclose(bilinear_sharp_maximal(ROUGH, f, g), brute_sharp(ROUGH, f, g),
                               rtol=1e-10, atol=1e-12)


def test_mpt_examples(rng):
    f = rng.standard_normal(32)
    m1 = mpt_maximal(HILBERT, f, 1.0)
    np.testing.assert_allclose(m1, bilinear_sharp_maximal(HILBERT, f, np.ones(32)), rtol=1e-14)
    m2, m3 = mpt_maximal(HILBERT, f, 2.0), mpt_maximal(HILBERT, f, 3.0)
    minf = mpt_maximal(HILBERT, f, np.inf)
    assert np.all(m1 <= m2 * (1 + 1e-12)) and np.all(m2 <= m3 * (1 + 1e-12))
    assert np.all(m3 <= minf * (1 + 1e-12))
    np.testing.assert_allclose(m2, brute_sharp(HILBERT, f, np.ones(32), p=2.0), rtol=1e-10)
    np.testing.assert_allclose(minf, brute_sharp(HILBERT, f, None, inf=True), rtol=1e-10)


@given(st.integers(0, 2 ** 31), st.floats(1.0, 4.0))
def test_sharp_maximal_monotone_and_holder(seed, r):
    rng = np.random.default_rng(seed)
    f, g = rng.standard_normal(32), rng.standard_normal(32)
    base = bilinear_sharp_maximal(HILBERT, f, g)
    bigger = bilinear_sharp_maximal(HILBERT, f, 2.0 * np.abs(g) + 0.1)
    assert np.all(base <= bigger * (1 + 1e-12))
    if r > 1:
        rp = r / (r - 1)
        from mwlab.scalar import maximal_function
        mr = maximal_function(np.abs(g) ** r) ** (1 / r)
        assert np.all(base <= mpt_maximal(HILBERT, f, rp) * mr * (1 + 1e-10) + 1e-14)


def test_grand_maximal_examples(rng):
    W = identity_weight(G1, 2)
    h = GridFunction(G1, np.tile([3.0, 4.0], (32, 1)))
    np.testing.assert_allclose(grand_maximal(h, W, lambda c: np.eye(2), 2.0, 1.0), 5.0)
    with pytest.raises(DomainError):
        grand_maximal(h, W, lambda c: np.zeros((2, 2)), 2.0, 1.0)


def test_grand_maximal_matches_brute_force(rng):
    g = GridGeometry(1, 4)
    W = generate_weight("rotating-power", g, 2, seed=0)
    h = GridFunction(g, rng.standard_normal((16, 2)))
    V = {c: reducing_matrix(W, 2.0, c, "dual").matrix for c in g.all_cubes()}
    got = grand_maximal(h, W, V, 2.0, 1.0)
    Wm = W.power(-0.5)
    want = np.zeros(16)
    for c, M in V.items():
        box = c.box(g).slices
        u = np.einsum("ij,xjk,xk->xi", np.linalg.inv(M), Wm[box], h.values[box])
        want[box] = np.maximum(want[box], np.mean(np.linalg.norm(u, axis=1)))
    np.testing.assert_allclose(got, want, rtol=1e-12)
    assert np.all(got <= grand_maximal(h, W, V, 2.0, 2.5) * (1 + 1e-12))


def test_hormander_examples():
    zero = rough_kernel(np.zeros(8))
    rep = hormander_constant(zero, 2.0, 3)
    assert rep.H1 == 0 and rep.H2 == 0
    rep = hormander_constant(HILBERT, 64.0, 8)
    t = rep.terms1
    assert all(t[k + 1] / t[k] < 0.75 for k in range(3, len(t) - 1))
    assert rep.H1 == pytest.approx(rep.H2, rel=1e-10)
    longer = hormander_constant(HILBERT, 2.0, 10)
    shorter = hormander_constant(HILBERT, 2.0, 6)
    assert abs(longer.H1 - shorter.H1) < 0.05 * longer.H1
    with pytest.raises(DomainError):
        hormander_constant(HILBERT, 1.0, 3)


def test_hormander_example_finite():
    rep = hormander_constant(KernelOperator("hormander-example"), 3.0, 8)
    assert np.isfinite(rep.H1) and rep.H1 > 0


def test_weak_norm_estimate_examples():
    zero = rough_kernel(np.zeros(8))
    assert weak_norm_estimate(zero, 1.0, 4, 0, G2).weak_norm == 0.0
    small = weak_norm_estimate(HILBERT, 1.5, 4, 3, G1)
    big = weak_norm_estimate(HILBERT, 1.5, 8, 3, G1)
    assert big.weak_norm >= small.weak_norm
    assert small.weak_norm == pytest.approx(max(small.per_trial))
    assert 0 < small.weak_norm < np.inf


def test_kernel_spec_round_trip():
    T = kernel_from_spec({"kind": "rough", "omega_samples": "sign-xy", "n_samples": 16})
    again = kernel_from_spec(T.spec())
    np.testing.assert_array_equal(again.omega, T.omega)
