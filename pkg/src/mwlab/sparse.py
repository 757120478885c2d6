"""Constructive convex-body sparse domination on dyadic grids.

The engine runs the stopping time cube by cube:

1. John-normalise f on 3Q0 (exponent r) and g on 3Q0 (exponent s).
2. Build the exceptional set Omega = E1 u E2 inside Q0 from the truncated
   operator T(f~ chi_{3Q0}) and the localised bilinear maximal operator.
3. Pick thresholds so that |Omega| <= 2^-(d+2) |Q0|.
4. Calderon-Zygmund decompose chi_Omega at height 2^-(d+1) and recurse on
   the selected cubes.

All per-cube work happens on Morton-ordered arrays, where a dyadic cube and
all of its sub-cubes are contiguous blocks.  The operator enters only
through the local pyramid P_l(x) = T(f chi_{3Q_l(x)})(x).
"""

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from .bodies import ConvexBodyAverage, body_product_bracket
from .errors import DomainError, InvalidInputError, ResolutionExhausted
from .grid import Box, DyadicCube, GridFunction, block_means, cube_at, from_morton, to_morton
from .operators import pyramid

THRESHOLD_MODES = ("adaptive", "norm-thresholds")
MAX_DOUBLINGS = 200
# ratio between admissible thresholds; doubling makes the sparse constant
# jump by 2x between refinement levels, 2^(1/8) keeps it within a few percent
DEFAULT_GROWTH = 2.0 ** 0.125


# --- families and certificates ----------------------------------------------

@dataclass
class SparseFamily:
    """Cubes of a sparse family; ``tripled`` members stand for their clipped 3Q."""

    geometry: object
    cubes: list
    tripled: bool
    eta_claimed: Fraction
    carleson_constant: float = None
    flow_feasible: bool = None
    disjoint_assignment: dict = None

    def boxes(self):
        g = self.geometry
        return [c.triple(g) if self.tripled else c.box(g) for c in self.cubes]

    def __len__(self):
        return len(self.cubes)

    def to_json(self):
        return [{"level": c.level, "coords": list(c.coords), "tripled": self.tripled}
                for c in self.cubes]


@dataclass
class Certificate:
    carleson: float
    flow_feasible: bool
    eta: Fraction
    demand: int
    flow_value: int
    assignment: dict = None
    atoms: list = None


def _box_arrays(boxes):
    lo = np.array([b.lo for b in boxes], dtype=np.int64).reshape(len(boxes), -1)
    hi = np.array([b.hi for b in boxes], dtype=np.int64).reshape(len(boxes), -1)
    return lo, hi


def carleson_constant(boxes, chunk=512):
    """max over members Q of sum_{P in family, P subset Q} |P| / |Q| (multiset)."""
    if not boxes:
        return 0.0
    lo, hi = _box_arrays(boxes)
    size = np.prod(hi - lo, axis=1).astype(float)
    best = 0.0
    for start in range(0, len(boxes), chunk):
        qlo, qhi = lo[start:start + chunk], hi[start:start + chunk]
        inside = np.all((lo[None] >= qlo[:, None]) & (hi[None] <= qhi[:, None]), axis=2)
        ratio = inside @ size / size[start:start + chunk]
        best = max(best, float(ratio.max()))
    return best


def _membership_atoms(boxes, geometry, chunk=1024):
    """Group cells by the set of members containing them.

    Returns (atom_cells: list of flat cell-index arrays, atom_members: bool
    array (atoms, members)) for atoms covered by at least one member.
    """
    F = len(boxes)
    ncell = geometry.n_cells
    packed = []
    for start in range(0, F, chunk):
        part = boxes[start:start + chunk]
        mat = np.zeros((len(part),) + geometry.shape, dtype=bool)
        for k, b in enumerate(part):
            mat[(k,) + b.slices] = True
        packed.append(np.packbits(mat.reshape(len(part), ncell), axis=0))
    bits = np.concatenate(packed, axis=0) if len(packed) > 1 else packed[0]
    # regroup so each row describes one cell
    rows = np.ascontiguousarray(bits.T)
    uniq, inverse = np.unique(rows, axis=0, return_inverse=True)
    inverse = np.ravel(inverse)
    members = np.unpackbits(uniq, axis=1)[:, :F].astype(bool)
    keep = np.flatnonzero(members.any(axis=1))
    order = np.argsort(inverse, kind="stable")
    bounds = np.searchsorted(inverse[order], np.arange(len(uniq) + 1))
    atom_cells = [order[bounds[a]:bounds[a + 1]] for a in keep]
    return atom_cells, members[keep]


def sparse_certify(family_or_boxes, eta, geometry=None, with_assignment=True):
    """Exact Carleson packing and eta-sparseness via an integral max-flow.

    Members demand eta |Q| and every cell supplies its own measure; flows
    are integral in units of 1/den(eta) cells, so the stored assignment may
    split a cell between members (cells are intervals or squares, so any
    fraction of one is a legitimate subset).
    """
    if isinstance(family_or_boxes, SparseFamily):
        geometry = family_or_boxes.geometry
        boxes = family_or_boxes.boxes()
    else:
        boxes = list(family_or_boxes)
    eta = Fraction(eta).limit_denominator(10 ** 6)
    if not 0 < eta <= 1:
        raise DomainError("eta must lie in (0, 1]")
    if not boxes:
        return Certificate(0.0, True, eta, 0, 0, {}, [])
    carl = carleson_constant(boxes)
    atom_cells, members = _membership_atoms(boxes, geometry)
    F, A = len(boxes), len(atom_cells)
    num, den = eta.numerator, eta.denominator
    sizes = np.array([b.n_cells for b in boxes], dtype=np.int64)
    demand = num * sizes
    supply = den * np.array([len(c) for c in atom_cells], dtype=np.int64)
    if demand.sum() > np.iinfo(np.int32).max or supply.sum() > np.iinfo(np.int32).max:
        raise DomainError("flow capacities exceed int32")
    src, sink = 0, F + A + 1
    mi, ai = np.nonzero(members.T)
    rows = np.concatenate([np.zeros(F, dtype=np.int64), 1 + mi, F + 1 + np.arange(A)])
    cols = np.concatenate([1 + np.arange(F), F + 1 + ai, np.full(A, sink)])
    caps = np.concatenate([demand, supply[ai], supply]).astype(np.int32)
    graph = csr_matrix((caps, (rows, cols)), shape=(F + A + 2, F + A + 2))
    res = maximum_flow(graph, src, sink)
    total = int(demand.sum())
    feasible = int(res.flow_value) == total
    assignment = None
    if feasible and with_assignment:
        flow = res.flow.tocoo()
        sel = (flow.row >= 1) & (flow.row <= F) & (flow.col > F) & (flow.col <= F + A) & (flow.data > 0)
        assignment = {}
        for r, c, v in zip(flow.row[sel], flow.col[sel], flow.data[sel]):
            assignment.setdefault(int(r - 1), []).append((int(c - F - 1), Fraction(int(v), den)))
    return Certificate(carl, feasible, eta, total, int(res.flow_value), assignment,
                       [c.tolist() for c in atom_cells] if with_assignment else None)


# --- the stopping-time engine -----------------------------------------------

@dataclass
class IterationRecord:
    cube: DyadicCube
    depth: int
    A1: float
    A2: float
    doublings1: int
    doublings2: int
    E1: int
    E2: int
    omega: int
    budget: int
    cells: int
    cz_count: int
    cz_cells: int
    mode: str
    local_lhs: float
    children_lhs: float
    bracket_upper: float
    bracket_lower: float
    triple_cells: int
    checks: dict = field(default_factory=dict)

    def to_json(self):
        return {
            "cube": self.cube.to_json(), "depth": self.depth, "A1": self.A1, "A2": self.A2,
            "doublings1": self.doublings1, "doublings2": self.doublings2, "E1": self.E1,
            "E2": self.E2, "omega": self.omega, "budget": self.budget, "cells": self.cells,
            "cz_count": self.cz_count, "cz_cells": self.cz_cells, "mode": self.mode,
            "local_lhs": self.local_lhs, "children_lhs": self.children_lhs,
            "bracket_upper": self.bracket_upper, "bracket_lower": self.bracket_lower,
            "triple_cells": self.triple_cells, "checks": self.checks,
        }


def _threshold(values, budget, base=1.0, growth=DEFAULT_GROWTH):
    """Smallest base * growth^k (k >= 0) with #{values > A} <= budget."""
    if values.size <= budget:
        return base, 0
    kth = np.partition(values, values.size - budget - 1)[values.size - budget - 1]
    if kth <= base:
        return base, 0
    k = max(0, int(np.floor(np.log(kth / base) / np.log(growth))) - 1)
    while base * growth ** k < kth:
        k += 1
        if k > MAX_DOUBLINGS * 64:
            raise ResolutionExhausted("threshold search did not terminate")
    return base * growth ** k, k


def _cz_local(omega, d, height):
    """Maximal sub-blocks (relative level, index) of a Morton block with mean > height."""
    size = omega.shape[0]
    per = 2 ** d
    out = []
    covered = np.zeros(1, dtype=bool)
    block = size
    rel = 0
    x = omega.astype(float)
    means_by_level = []
    b = size
    while b >= 1:
        means_by_level.append(block_means(x, b))
        b //= per
    for rel, means in enumerate(means_by_level):
        if rel > 0:
            covered = np.repeat(covered, per)
        sel = (means > height) & ~covered
        for idx in np.flatnonzero(sel):
            out.append((rel, int(idx)))
        covered = covered | sel
        block //= per
    return out


def _avg_p(vals, p):
    """Per-component normalized L^p averages of the rows of vals."""
    return np.mean(np.abs(vals) ** p, axis=0) ** (1.0 / p)


class SparseEngine:
    """Shared state for one (T, f, g) instance: pyramid, bodies and brackets."""

    def __init__(self, T, f, g, r, s, q=1.0, mode="adaptive", profile=None, seed=0,
                 growth=DEFAULT_GROWTH):
        if mode not in THRESHOLD_MODES:
            raise DomainError(f"unknown threshold mode {mode!r}")
        if not 1 <= q <= r:
            raise DomainError("need 1 <= q <= r")
        if s < 1:
            raise DomainError("s must be >= 1")
        if mode == "norm-thresholds" and profile is None:
            raise DomainError("norm-thresholds mode needs an OperatorProfile")
        if f.geometry != g.geometry or f.n != g.n:
            raise InvalidInputError("f and g must share geometry and dimension")
        self.T, self.f, self.g = T, f, g
        self.r, self.s, self.q = float(r), float(s), float(q)
        self.mode = mode
        self.profile = profile
        self.seed = seed
        if growth <= 1:
            raise DomainError("threshold growth factor must exceed 1")
        self.growth = float(growth)
        self.geometry = geo = f.geometry
        self.n = f.n
        self.pyr = pyramid(T, f)
        self.gm = to_morton(g.values, geo)
        self.fm = to_morton(f.values, geo)
        self._bodies = {}
        self._brackets = {}
        self.trace = []
        nu = 1.0 / (1.0 / self.r + 1.0 / self.s)
        d, n = geo.d, self.n
        if profile is not None:
            self.A1_norm = profile.weak_norm * 3 ** (d / q) * 2 ** ((d + 3) / q) * n ** (1 / q)
            self.A2_norm = profile.mt_norm * 3 ** (d / nu) * 2 ** ((d + 3) / nu) * n ** (1 / nu)
        else:
            self.A1_norm = self.A2_norm = None

    # bodies on clipped triples, shared by construction and domination sums
    def body(self, which, box, p):
        key = (which, box, p)
        if key not in self._bodies:
            src = self.f if which == "f" else self.g
            self._bodies[key] = ConvexBodyAverage(src, box, p)
        return self._bodies[key]

    def bracket(self, box):
        if box not in self._brackets:
            A = self.body("f", box, self.r)
            B = self.body("g", box, self.s)
            self._brackets[box] = body_product_bracket(A, B, seed=self.seed)
        return self._brackets[box]

    def _normalizer(self, body):
        M, _ = body.surrogate()
        if body.rank == 0:
            return np.zeros_like(M)
        Bs = body.basis
        return Bs @ np.linalg.inv(Bs.T @ M @ Bs) @ Bs.T

    def exceptional(self, q0, inv1, inv2, A1=None, A2=None):
        """Ratios v1, v2 on the cells of q0 (Morton) and the normalized averages.

        E1 = {v1 > A1}, E2 = {v2 > A2}.  ``inv1``/``inv2`` map f, g to f~, g~.
        """
        geo = self.geometry
        s0, e0 = q0.morton_range(geo)
        box3 = q0.triple(geo)
        l0 = q0.level
        f3 = self.f.restrict(box3) @ inv1.T
        g3 = self.g.restrict(box3) @ inv2.T
        fq = _avg_p(f3, self.q)
        fr = _avg_p(f3, self.r)
        gs = _avg_p(g3, self.s)
        tf0 = self.pyr.local[l0][s0:e0] @ inv1.T
        live1 = fq > 0
        v1 = np.zeros(e0 - s0)
        if np.any(live1):
            v1 = np.max(np.abs(tf0[:, live1]) / fq[live1], axis=1)
        gq = np.abs(self.gm[s0:e0] @ inv2.T)
        mloc = np.zeros((e0 - s0, self.n))
        for level in range(l0 + 1, geo.L + 1):
            block = 2 ** (geo.d * (geo.L - level))
            diff = (self.pyr.local[l0][s0:e0] - self.pyr.local[level][s0:e0]) @ inv1.T
            u = np.abs(diff) * gq
            means = block_means(u, block) if block > 1 else u
            np.maximum(mloc, np.repeat(means, block, axis=0), out=mloc)
        live2 = (fr > 0) & (gs > 0)
        v2 = np.zeros(e0 - s0)
        if np.any(live2):
            v2 = np.max(mloc[:, live2] / (fr[live2] * gs[live2]), axis=1)
        return v1, v2

    def process(self, q0, depth):
        """One stopping-time step on q0; returns the selected CZ cubes."""
        geo = self.geometry
        d, L = geo.d, geo.L
        s0, e0 = q0.morton_range(geo)
        cells = e0 - s0
        box3 = q0.triple(geo)
        if not np.any(self.gm[s0:e0]) or not np.any(self.f.values[box3.slices]):
            return None, []
        bf = self.body("f", box3, self.r)
        bg = self.body("g", box3, self.s)
        inv1 = self._normalizer(bf)
        inv2 = self._normalizer(bg)
        v1, v2 = self.exceptional(q0, inv1, inv2)
        budget = cells // 2 ** (d + 3)
        base1 = 1.0 if self.mode == "adaptive" else self.A1_norm
        base2 = 1.0 if self.mode == "adaptive" else self.A2_norm
        A1, k1 = _threshold(v1, budget, base1, self.growth)
        A2, k2 = _threshold(v2, budget, base2, self.growth)
        e1 = v1 > A1
        e2 = v2 > A2
        omega = e1 | e2
        height = 2.0 ** -(d + 1)
        picks = _cz_local(omega, d, height)
        children = []
        cz_cells = 0
        ok_upper = ok_lower = ok_hit = True
        for rel, idx in picks:
            level = q0.level + rel
            bs = 2 ** (d * (L - level))
            start = s0 + idx * bs
            cube = cube_at(level, start // bs, d)
            children.append(cube)
            cz_cells += bs
            hit = int(np.count_nonzero(omega[start - s0:start - s0 + bs]))
            ok_lower &= hit * 2 ** (d + 1) > bs
            ok_upper &= 2 * hit <= bs
            ok_hit &= hit < bs
        covered = np.zeros(cells, dtype=bool)
        for c in children:
            a, b = c.morton_range(geo)
            covered[a - s0:b - s0] = True
        cm = geo.cell_measure
        tf0 = self.pyr.local[q0.level][s0:e0]
        local_lhs = float(np.sum(np.abs(np.sum(tf0 * self.gm[s0:e0], axis=1))) * cm)
        child_lhs = 0.0
        for c in children:
            a, b = c.morton_range(geo)
            tfc = self.pyr.local[c.level][a:b]
            child_lhs += float(np.sum(np.abs(np.sum(tfc * self.gm[a:b], axis=1))) * cm)
        br = self.bracket(box3)
        omega_count = int(np.count_nonzero(omega))
        checks = {
            "omega_bound": omega_count * 2 ** (d + 2) <= cells,
            "cz_sum_half": 2 * cz_cells <= cells,
            "cz_density": bool(ok_lower and ok_upper),
            "omega_covered": bool(np.all(covered[omega])),
            "cz_meets_complement": bool(ok_hit),
        }
        rec = IterationRecord(q0, depth, float(A1), float(A2), int(k1), int(k2),
                              int(np.count_nonzero(e1)), int(np.count_nonzero(e2)), omega_count,
                              int(budget), int(cells), len(children), int(cz_cells), self.mode,
                              local_lhs, child_lhs, br.upper, br.lower, box3.n_cells, checks)
        self.trace.append(rec)
        return rec, children

    def local(self, q0):
        """Family of sub-cubes of q0 from the iterated stopping time."""
        family = []
        queue = [(q0, 0)]
        while queue:
            nxt = []
            for cube, depth in queue:
                if depth > self.geometry.L:
                    raise ResolutionExhausted("recursion deeper than the grid")
                rec, children = self.process(cube, depth)
                if rec is None:
                    continue
                family.append(cube)
                nxt.extend((c, depth + 1) for c in children)
            queue = nxt
        return family


def support_cube(f):
    """Smallest dyadic cube containing the support of f (None if f = 0)."""
    geo = f.geometry
    fm = to_morton(f.values, geo)
    nz = np.flatnonzero(np.any(fm != 0, axis=1))
    if nz.size == 0:
        return None
    lo, hi = int(nz[0]), int(nz[-1])
    level = geo.L
    per = 2 ** geo.d
    while level > 0 and lo // per ** (geo.L - level) != hi // per ** (geo.L - level):
        level -= 1
    return cube_at(level, lo // per ** (geo.L - level), geo.d)


def ring_partition(q0):
    """q0 plus the siblings of each of its ancestors: a partition of the
    domain into dyadic cubes R with q0 inside the clipped 3R."""
    parts = [q0]
    cube = q0
    while cube.level > 0:
        parent = cube.parent()
        parts.extend(c for c in parent.children() if c != cube)
        cube = parent
    return parts


@dataclass
class GlobalResult:
    family: SparseFamily            # tripled cubes
    local_family: SparseFamily      # untripled union of the local families
    partition: list
    trace: list
    engine: SparseEngine


def build_local_sparse(T, f, g, q0, r, s, q=1.0, mode="adaptive", profile=None, seed=0,
                       growth=DEFAULT_GROWTH):
    eng = SparseEngine(T, f, g, r, s, q, mode, profile, seed, growth)
    fam = eng.local(q0)
    return SparseFamily(f.geometry, fam, False, Fraction(1, 2)), eng.trace


def build_global_sparse(T, f, g, r, s, q=1.0, mode="adaptive", profile=None, seed=0,
                        engine=None, growth=DEFAULT_GROWTH):
    """Run the local construction on every cube of the ring partition and
    triple the union; the claimed sparseness is 1/(2*3^d)."""
    eng = engine or SparseEngine(T, f, g, r, s, q, mode, profile, seed, growth)
    geo = f.geometry
    eta = Fraction(1, 2 * 3 ** geo.d)
    q0 = support_cube(f)
    if q0 is None:
        empty = SparseFamily(geo, [], True, eta)
        return GlobalResult(empty, SparseFamily(geo, [], False, Fraction(1, 2)), [], [], eng)
    parts = ring_partition(q0)
    union = []
    for R in parts:
        union.extend(eng.local(R))
    fam = SparseFamily(geo, union, True, eta)
    loc = SparseFamily(geo, list(union), False, Fraction(1, 2))
    return GlobalResult(fam, loc, parts, eng.trace, eng)


def exceptional_set(T, f_norm, g_norm, q0, A1, A2, q, r, s):
    """Omega = E1 u E2 in q0 for already normalized inputs (natural-order mask)."""
    eng = SparseEngine(T, f_norm, g_norm, r, s, q)
    eye = np.eye(f_norm.n)
    v1, v2 = eng.exceptional(q0, eye, eye)
    geo = f_norm.geometry
    e1m = v1 > A1
    e2m = v2 > A2
    s0, e0 = q0.morton_range(geo)
    full = np.zeros(geo.n_cells, dtype=bool)
    full[s0:e0] = e1m | e2m
    mask = from_morton(full, geo)
    return mask, {"E1": int(e1m.sum()), "E2": int(e2m.sum()), "omega": int(mask.sum())}


@dataclass
class DominationResult:
    lhs: float
    rhs_lower: float
    rhs_upper: float

    @property
    def ratio_lower(self):
        return self.lhs / self.rhs_lower if self.rhs_lower > 0 else (0.0 if self.lhs == 0 else np.inf)

    @property
    def ratio_upper(self):
        return self.lhs / self.rhs_upper if self.rhs_upper > 0 else (0.0 if self.lhs == 0 else np.inf)

    def to_json(self):
        return {"lhs": self.lhs, "rhs_lower": self.rhs_lower, "rhs_upper": self.rhs_upper,
                "ratio_lower": self.ratio_lower, "ratio_upper": self.ratio_upper}


def domination_ratio(T, f, g, family, r, s, engine=None, seed=0):
    """lhs = sum |<Tf, g>| |cell|, rhs = sum over family boxes of the body
    product bracket times the box measure."""
    geo = f.geometry
    if engine is None:
        engine = SparseEngine(T, f, g, r, s, 1.0, seed=seed)
    tf = engine.pyr.full
    lhs = float(np.sum(np.abs(np.sum(tf * engine.gm, axis=1))) * geo.cell_measure)
    lo = hi = 0.0
    for box in family.boxes():
        br = engine.bracket(box)
        meas = box.n_cells * geo.cell_measure
        lo += br.lower * meas
        hi += br.upper * meas
    return DominationResult(lhs, lo, hi)


__all__ = [
    "SparseFamily", "Certificate", "carleson_constant", "sparse_certify", "SparseEngine",
    "IterationRecord", "build_local_sparse", "build_global_sparse", "support_cube",
    "ring_partition", "exceptional_set", "DominationResult", "domination_ratio",
    "THRESHOLD_MODES", "GlobalResult", "Box",
]
