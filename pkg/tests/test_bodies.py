import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mwlab.bodies import ConvexBodyAverage, body_product_bracket, john_normalize
from mwlab.errors import DegenerateBodyError
from mwlab.grid import DyadicCube, GridFunction, GridGeometry, p_average
from mwlab.john import mvee_centered, probe_directions, round_norm
from mwlab.spd import frac_power, op_norm, random_spd

G = GridGeometry(1, 4)


def gf(values):
    return GridFunction(G, np.asarray(values, dtype=float))


def test_mvee_of_ellipse_points():
    t = np.linspace(0, np.pi, 50, endpoint=False)
    A = np.array([[3.0, 1.0], [1.0, 2.0]])
    pts = np.column_stack([np.cos(t), np.sin(t)]) @ A.T
    res = mvee_centered(pts)
    # the sampled ellipse is its own minimum enclosing ellipsoid
    np.testing.assert_allclose(res.shape * res.kappa, A @ A.T, rtol=1e-6)
    assert res.kappa <= 2 * (1 + 1e-8)


def test_round_norm_euclidean_recovers_matrix():
    A = random_spd(np.random.default_rng(3), 3, 50.0)
    fit = round_norm(lambda e: np.linalg.norm(e @ A, axis=1), 3)
    np.testing.assert_allclose(fit.matrix, A, rtol=1e-6)
    assert fit.lower == pytest.approx(1.0) and fit.upper == pytest.approx(1.0)
    # the certified factor is the John bound, not the observed fit
    assert fit.factor <= np.sqrt(3) * (1 + 1e-6)


def _near_euclidean_points(n, seed):
    # many nearly active points: the case where coordinate ascent crawls
    rng = np.random.default_rng(seed)
    dirs = probe_directions(n)
    return dirs * (1.0 + 1e-3 * rng.standard_normal(len(dirs)))[:, None]


@pytest.mark.parametrize("n", [3, 4])
def test_mvee_barrier_finisher_certifies(n):
    pts = _near_euclidean_points(n, n)
    res = mvee_centered(pts, max_iter=0)
    assert res.kappa / n - 1.0 <= 1e-9
    assert np.all(res.weights >= 0) and res.weights.sum() == pytest.approx(1.0)
    # the returned kappa is the measured max leverage of the returned weights
    X = (pts * res.weights[:, None]).T @ pts
    lev = np.einsum("ki,ij,kj->k", pts, np.linalg.inv(X), pts)
    assert lev.max() == pytest.approx(res.kappa, rel=1e-9)


def test_mvee_paths_agree():
    pts = _near_euclidean_points(3, 0)
    a = mvee_centered(pts)
    b = mvee_centered(pts, max_iter=0)
    np.testing.assert_allclose(a.shape * a.kappa, b.shape * b.kappa, rtol=1e-6)


def test_probe_directions_are_unit_and_deterministic():
    for n in (2, 3, 4):
        dirs = probe_directions(n)
        assert dirs.shape == (64 * n, n)
        np.testing.assert_allclose(np.linalg.norm(dirs, axis=1), 1.0)
        np.testing.assert_array_equal(dirs, probe_directions(n))


def test_support_of_constant_is_segment():
    c = np.array([1.0, -2.0, 0.5])
    body = ConvexBodyAverage(gf(np.tile(c, (16, 1))), G.root(), 3.0)
    for e in np.random.default_rng(0).standard_normal((10, 3)):
        assert body.support(e) == pytest.approx(abs(c @ e), rel=1e-14)


def test_support_p2_is_gram_form(rng):
    f = rng.standard_normal((16, 3))
    body = ConvexBodyAverage(gf(f), G.root(), 2.0)
    gram = f.T @ f / 16
    for e in rng.standard_normal((10, 3)):
        assert body.support(e) ** 2 == pytest.approx(e @ gram @ e, rel=1e-12)


def projected_ascent(f, e, p, steps=3000):
    """max of <e, mean(f phi)> over the normalized L^{p'} ball, p in {1, 2}."""
    t = f @ e
    phi = np.zeros_like(t)
    for k in range(steps):
        phi = phi + 0.5 / np.sqrt(k + 1) * t
        if p == 1:
            phi = np.clip(phi, -1.0, 1.0)
        else:
            phi = phi / max(1.0, np.sqrt(np.mean(phi ** 2)))
    return float(np.mean(t * phi))


@pytest.mark.parametrize("p", [1.0, 2.0])
def test_support_matches_duality_oracle(p, rng):
    f = rng.standard_normal((16, 2))
    body = ConvexBodyAverage(gf(f), G.root(), p)
    for e in rng.standard_normal((5, 2)):
        assert projected_ascent(f, e, p) == pytest.approx(body.support(e), abs=1e-3)
        a = body.support_point(e)
        assert a @ e == pytest.approx(body.support(e), rel=1e-12)


def test_surrogate_of_zero_is_degenerate():
    body = ConvexBodyAverage(gf(np.zeros((16, 2))), G.root(), 2.0)
    with pytest.raises(DegenerateBodyError) as err:
        body.ellipsoid_surrogate()
    assert err.value.rank == 0


def test_surrogate_p2_is_gram_root(rng):
    f = rng.standard_normal((16, 3))
    body = ConvexBodyAverage(gf(f), G.root(), 2.0)
    np.testing.assert_allclose(body.ellipsoid_surrogate(), frac_power(f.T @ f / 16, 0.5),
                               atol=1e-8)


def test_surrogate_bracket_p1_two_valued():
    f = np.where(np.arange(16)[:, None] < 8, [1.0, 0.2], [-0.3, 2.0])
    body = ConvexBodyAverage(gf(f), G.root(), 1.0)
    M, factor = body.surrogate()
    fitted = body.surrogate_fit().probes @ body.basis.T
    for dirs, tol in ((fitted, 1e-9), (probe_directions(2), 2e-2)):
        me = np.linalg.norm(dirs @ M, axis=1)
        h = body.support(dirs)
        # lower half is certified on the fitted probes only
        assert np.all(me <= h * (1 + tol))
        assert np.all(h <= factor * me * (1 + 1e-9))
    assert factor <= np.sqrt(2) * (1 + 1e-6)


def test_product_of_segments_is_one():
    f = np.tile([1.0, 0.0], (16, 1))
    A = ConvexBodyAverage(gf(f), G.root(), 1.0)
    lo, hi = body_product_bracket(A, A).as_tuple()
    assert lo <= 1.0 + 1e-12 <= hi + 2e-12
    assert lo == pytest.approx(1.0)


def test_product_p2_contains_closed_form(rng):
    A = ConvexBodyAverage(gf(rng.standard_normal((16, 3))), G.root(), 2.0)
    B = ConvexBodyAverage(gf(rng.standard_normal((16, 3))), G.root(), 2.0)
    exact = op_norm(frac_power(B.gram, 0.5) @ frac_power(A.gram, 0.5))
    br = body_product_bracket(A, B)
    assert br.lower <= exact * (1 + 1e-9) and exact <= br.upper * (1 + 1e-9)
    assert br.lower == pytest.approx(exact, rel=1e-6)


def sign_pattern_oracle(f, g):
    pats = np.array(list(itertools.product((-1.0, 1.0), repeat=f.shape[0])))
    a = pats @ f / f.shape[0]
    b = pats @ g / g.shape[0]
    return float(np.max(a @ b.T))


def test_product_p1_sign_pattern_oracle():
    geo = GridGeometry(1, 3)
    for seed in range(3):
        rng = np.random.default_rng(seed)
        f, g = rng.standard_normal((8, 2)), rng.standard_normal((8, 2))
        A = ConvexBodyAverage(GridFunction(geo, f), geo.root(), 1.0)
        B = ConvexBodyAverage(GridFunction(geo, g), geo.root(), 1.0)
        exact = sign_pattern_oracle(f, g)
        br = body_product_bracket(A, B)
        assert br.lower <= exact * (1 + 1e-12) <= br.upper * (1 + 1e-12)


def test_john_normalize_examples(rng):
    f = np.zeros((16, 2))
    f[:8, 0] = np.sqrt(2.0)
    f[8:, 1] = np.sqrt(2.0)
    res = john_normalize(gf(f), G.root(), 2.0)
    np.testing.assert_allclose(res.matrix, np.eye(2), atol=1e-8)
    res = john_normalize(gf(np.tile([3.0, 0.0], (16, 1))), G.root(), 2.0)
    assert res.degenerate and res.rank == 1
    g = gf(rng.standard_normal((16, 3)) @ random_spd(rng, 3, 100.0))
    res = john_normalize(g, G.root(), 1.5)
    np.testing.assert_allclose(res.normalized.values @ res.matrix.T, g.values, atol=1e-10)
    for j in range(3):
        assert p_average(res.normalized.component(j), G.root(), 1.5) <= np.sqrt(3) + 1e-6


vectors = st.lists(st.floats(-3, 3), min_size=2, max_size=2).map(np.array)


@given(st.integers(0, 2 ** 31), vectors, vectors, st.floats(-5, 5),
       st.sampled_from([1.0, 1.5, 2.0, 4.0]))
def test_support_is_a_seminorm(seed, e, e2, lam, p):
    f = np.random.default_rng(seed).standard_normal((16, 2))
    body = ConvexBodyAverage(gf(f), DyadicCube(1, (1,)), p)
    h = body.support
    assert h(e + e2) <= h(e) + h(e2) + 1e-12
    assert h(lam * e) == pytest.approx(abs(lam) * h(e), rel=1e-12, abs=1e-12)
    assert h(-e) == h(e)
    # Jensen in the exponent
    hi = ConvexBodyAverage(gf(f), DyadicCube(1, (1,)), p + 1).support(e)
    assert h(e) <= hi + 1e-12


@given(st.integers(0, 2 ** 31), st.sampled_from([(1.0, 1.0), (1.5, 3.0), (2.0, 2.0)]))
def test_product_bracket_sandwich(seed, ps):
    rng = np.random.default_rng(seed)
    A = ConvexBodyAverage(gf(rng.standard_normal((16, 2))), G.root(), ps[0])
    B = ConvexBodyAverage(gf(rng.standard_normal((16, 2))), G.root(), ps[1])
    br = body_product_bracket(A, B)
    assert br.lower <= br.upper
    assert br.upper <= 2 * br.lower + 1e-6 * br.upper
