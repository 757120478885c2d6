import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mwlab.corpus import sparse_corpus
from mwlab.errors import DomainError
from mwlab.grid import DyadicCube, GridFunction, GridGeometry, from_morton
from mwlab.operators import KernelOperator, apply, weak_norm_estimate
from mwlab.sparse import (SparseEngine, SparseFamily, build_global_sparse, build_local_sparse,
                          carleson_constant, domination_ratio, exceptional_set, ring_partition,
                          sparse_certify, support_cube)
from scalar_oracle import ScalarSparse, kernel_matrix

HILBERT = KernelOperator("hilbert")
G1 = GridGeometry(1, 6)


def gf(vals, geo=G1):
    vals = np.asarray(vals, dtype=float)
    return GridFunction(geo, vals if vals.ndim > geo.d else vals[..., None])


def chain(levels):
    return [DyadicCube(l, (0,)) for l in levels]


def test_nested_chain_packing():
    fam = SparseFamily(G1, chain([0, 1, 2]), False, Fraction(1, 2))
    cert = sparse_certify(fam, Fraction(1, 2))
    # exact packing 1 + 1/2 + 1/4; the limit of longer chains is 2
    assert cert.carleson == pytest.approx(1.75)
    assert cert.flow_feasible
    assert not sparse_certify(fam, 1).flow_feasible
    longer = SparseFamily(G1, chain(range(7)), False, Fraction(1, 2))
    assert sparse_certify(longer, Fraction(1, 2)).carleson <= 2


def test_partition_packing():
    fam = SparseFamily(G1, G1.cubes(3), False, Fraction(1))
    cert = sparse_certify(fam, 1)
    assert cert.carleson == 1.0 and cert.flow_feasible
    # a partition needs every cell of every member
    for member, parts in cert.assignment.items():
        assert sum(amount for _, amount in parts) == fam.boxes()[member].n_cells


def test_assignment_is_a_valid_packing():
    fam = SparseFamily(G1, chain([0, 1, 2, 3]), False, Fraction(1, 2))
    cert = sparse_certify(fam, Fraction(1, 2))
    used = {}
    for member, parts in cert.assignment.items():
        box = fam.boxes()[member]
        got = Fraction(0)
        for atom, amount in parts:
            cells = cert.atoms[atom]
            assert all(box.lo[0] <= c < box.hi[0] for c in cells)
            used[atom] = used.get(atom, 0) + amount
            got += amount
        assert got == Fraction(1, 2) * box.n_cells
    assert all(used[a] <= len(cert.atoms[a]) for a in used)


def test_certify_rejects_bad_eta():
    with pytest.raises(DomainError):
        sparse_certify(SparseFamily(G1, [], False, Fraction(1)), 0)


@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 31)), min_size=1, max_size=20),
       st.sampled_from([Fraction(1, 4), Fraction(1, 2), Fraction(2, 3), Fraction(1)]))
def test_flow_feasible_implies_carleson(raw, eta):
    cubes = [DyadicCube(l, (i % 2 ** l,)) for l, i in raw]
    fam = SparseFamily(G1, cubes, False, eta)
    cert = sparse_certify(fam, eta)
    if cert.flow_feasible:
        assert cert.carleson <= 1 / eta + 1e-12


def brute_carleson(boxes):
    return max(sum(p.n_cells for p in boxes if q.contains(p)) / q.n_cells for q in boxes)


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 7), st.integers(0, 7)),
                min_size=1, max_size=12))
def test_carleson_matches_brute_force_2d(raw):
    geo = GridGeometry(2, 3)
    boxes = [DyadicCube(l, (i % 2 ** l, j % 2 ** l)).triple(geo) for l, i, j in raw]
    assert carleson_constant(boxes) == pytest.approx(brute_carleson(boxes))


def test_zero_input_gives_empty_family():
    res = build_global_sparse(HILBERT, gf(np.zeros(64)), gf(np.ones(64)), 1, 1)
    assert len(res.family) == 0
    dom = domination_ratio(HILBERT, gf(np.zeros(64)), gf(np.ones(64)), res.family, 1, 1)
    assert (dom.lhs, dom.rhs_lower, dom.rhs_upper) == (0.0, 0.0, 0.0)


def test_single_cell_family_is_ancestor_chain():
    f = np.zeros(64)
    f[21] = 1.0
    fam, trace = build_local_sparse(HILBERT, gf(f), gf(np.ones(64)), G1.root(), 1, 1)
    cell = DyadicCube(6, (21,))
    assert fam.cubes and all(c.contains(cell) for c in fam.cubes)
    assert sparse_certify(fam, Fraction(1, 2)).carleson <= 2
    assert all(all(r.checks.values()) for r in trace)


def test_support_cube_and_ring_partition():
    f = np.zeros(64)
    f[20:24] = 1.0
    q0 = support_cube(gf(f))
    assert q0 == DyadicCube(4, (5,))
    parts = ring_partition(q0)
    cover = np.zeros(64, int)
    for c in parts:
        a, b = c.morton_range(G1)
        cover[a:b] += 1
    assert np.all(cover == 1)
    assert all(c.triple(G1).contains(q0.box(G1)) for c in parts)


def test_exceptional_set_limits(rng):
    f, g = gf(rng.standard_normal(64)), gf(rng.standard_normal(64))
    mask, sizes = exceptional_set(HILBERT, gf(np.zeros(64)), g, G1.root(), 1.0, 1.0, 1, 1, 1)
    assert not mask.any() and sizes["omega"] == 0
    mask, sizes = exceptional_set(HILBERT, f, g, G1.root(), np.inf, np.inf, 1, 1, 1)
    assert not mask.any()


def test_exceptional_set_matches_cellwise_oracle(rng):
    L = 5
    geo = GridGeometry(1, L)
    f, g = rng.standard_normal(32), rng.standard_normal(32)
    q0 = DyadicCube(1, (1,))
    A1, A2 = 0.8, 1.2
    mask, _ = exceptional_set(HILBERT, gf(f, geo), gf(g, geo), q0, A1, A2, 1.0, 1.5, 1.5)
    K = kernel_matrix(HILBERT, L)
    a3, b3 = 0, 32          # the clipped triple of the right half is the domain
    s0, e0 = 16, 32
    fa = np.zeros(32)
    fa[a3:b3] = f[a3:b3]
    t0 = K @ fa
    E1 = np.abs(t0) > A1 * np.mean(np.abs(f[a3:b3]))
    v2 = np.zeros(32)
    for cube in geo.all_cubes():
        if not q0.contains(cube) or cube == q0:
            continue
        lo, hi = cube.triple(geo).lo[0], cube.triple(geo).hi[0]
        fo = fa.copy()
        fo[lo:hi] = 0.0
        box = cube.box(geo).slices
        val = np.mean(np.abs((K @ fo)[box]) * np.abs(g[box]))
        v2[box] = np.maximum(v2[box], val)
    norm = np.mean(np.abs(f) ** 1.5) ** (1 / 1.5) * np.mean(np.abs(g) ** 1.5) ** (1 / 1.5)
    E2 = v2 > A2 * norm
    want = np.zeros(32, bool)
    want[s0:e0] = (E1 | E2)[s0:e0]
    np.testing.assert_array_equal(mask, want)


CORPUS = sparse_corpus(seed=0, size=10)


@pytest.mark.parametrize("inst", CORPUS, ids=lambda i: f"{i.kind}-{i.index}")
def test_corpus_instance_structure(inst):
    L = 7 if inst.d == 1 else 4
    geo, f, g = inst.functions(L)
    r, s = inst.exponents
    res = build_global_sparse(inst.operator(), f, g, r, s)
    for rec in res.trace:
        assert all(rec.checks.values()), rec.checks
        assert rec.omega * 2 ** (geo.d + 2) <= rec.cells
    loc = sparse_certify(res.local_family, Fraction(1, 2))
    assert loc.flow_feasible and loc.carleson <= 2
    cert = sparse_certify(res.family, res.family.eta_claimed)
    assert cert.flow_feasible
    assert cert.carleson <= 2 * 3 ** geo.d
    dom = domination_ratio(inst.operator(), f, g, res.family, r, s, engine=res.engine)
    assert dom.rhs_lower <= dom.rhs_upper <= inst.n * dom.rhs_lower * (1 + 1e-6)
    assert np.isfinite(dom.ratio_upper)


SCALAR = [i for i in sparse_corpus(seed=0, size=20) if i.n == 1 and i.d == 1]


@pytest.mark.parametrize("inst", SCALAR, ids=lambda i: f"{i.kind}-{i.index}")
def test_scalar_instances_match_independent_oracle(inst):
    L = 7
    geo, f, g = inst.functions(L)
    r, s = inst.exponents
    T = inst.operator()
    res = build_global_sparse(T, f, g, r, s)
    oracle = ScalarSparse(T, f.values[:, 0], g.values[:, 0], r, s)
    fam = oracle.run()
    assert sorted((c.level, c.coords[0]) for c in res.local_family.cubes) == sorted(fam)
    dom = domination_ratio(T, f, g, res.family, r, s, engine=res.engine)
    assert dom.rhs_lower == dom.rhs_upper
    assert dom.rhs_upper == pytest.approx(oracle.rhs(), rel=1e-8)
    assert dom.lhs == pytest.approx(oracle.lhs(), rel=1e-8)


def test_norm_threshold_mode_runs(rng):
    geo = GridGeometry(1, 6)
    f, g = gf(rng.standard_normal(64), geo), gf(rng.standard_normal(64), geo)
    prof = weak_norm_estimate(HILBERT, 1.0, 4, 0, geo, r=1.0, s=1.0)
    res = build_global_sparse(HILBERT, f, g, 1, 1, mode="norm-thresholds", profile=prof)
    assert all(rec.mode == "norm-thresholds" for rec in res.trace)
    assert res.trace[0].A1 >= prof.weak_norm
    assert sparse_certify(res.family, res.family.eta_claimed).flow_feasible
    with pytest.raises(DomainError):
        SparseEngine(HILBERT, f, g, 1, 1, mode="norm-thresholds")
    with pytest.raises(DomainError):
        SparseEngine(HILBERT, f, g, 1, 1, mode="greedy")


def test_trace_json_is_plain():
    import json
    inst = CORPUS[1]
    geo, f, g = inst.functions(6)
    res = build_global_sparse(inst.operator(), f, g, *inst.exponents)
    lines = [json.dumps(r.to_json()) for r in res.trace]
    assert len(lines) == len(res.trace) > 0
    assert json.loads(lines[0])["checks"]["omega_bound"] is True
