"""Discrete convolution-type singular integrals on dyadic grids.

A kernel operator acts on cell values by

    (T f)(x_i) = sum_{j != i} k(x_i - x_j) f(x_j) |cell|,

with x_i the cell centres, so the principal value is the exclusion of the
diagonal cell.  All kernels here are translation invariant, so the cell
kernel is a table over integer offsets.

The "local pyramid" P_l(x) = T(f chi_{3Q_l(x)})(x), with Q_l(x) the level-l
dyadic cube containing x, is the workhorse behind every truncated operator:
T(f chi_{outside 3Q}) = Tf - P_l on Q, and T(f chi_{3Q0 minus 3Q}) =
P_{l0} - P_l for Q inside Q0.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import as_strided
from scipy.signal import fftconvolve

from .errors import DomainError, InvalidInputError
from .grid import (GridFunction, GridGeometry, block_means, expand_level, from_morton,
                   geometry_of, to_morton)

KERNEL_KINDS = ("hilbert", "rough", "riesz", "hormander-example")
DENSE_LIMIT = 1024          # d=1 grids up to this side use a dense Toeplitz product
GEMM_BLOCK_LIMIT = 64       # cubes with at most this many cells use batched GEMM


class KernelError(InvalidInputError):
    """Kernel table has non-finite entries off the diagonal."""


class KernelOperator:
    """Translation-invariant kernel k(t) with the diagonal cell excluded.

    kinds
    -----
    hilbert            d=1, k(t) = 1 / (pi t).
    rough              d=2, k(t) = Omega(angle of t) / |t|^2 with Omega
                       piecewise constant on ``len(omega)`` equal sectors.
    riesz              d=2, k(t) = t_1 / |t|^3 (smooth Omega = cos).
    hormander-example  d=1, k(t) = sign(t) (1 + amp * s(log2|t| / period)) / (pi |t|)
                       with s a +-1 square wave: L^r-Hormander for every
                       r < inf but not a standard kernel (jumps).
    """

    def __init__(self, kind, omega=None, mean_zero=True, amplitude=0.5, period=0.5,
                 r_prime=None, k_max=None):
        if kind not in KERNEL_KINDS:
            raise DomainError(f"unknown kernel kind {kind!r}")
        self.kind = kind
        self.d = 2 if kind in ("rough", "riesz") else 1
        self.amplitude = float(amplitude)
        self.period = float(period)
        self.r_prime = r_prime
        self.k_max = k_max
        self.mean_zero = bool(mean_zero)
        self.warnings = []
        self.omega = None
        if kind == "rough":
            om = np.asarray(omega if omega is not None else [], dtype=float)
            if om.size < 8:
                raise DomainError("rough kernels need at least 8 angular samples")
            if mean_zero:
                om = om - np.mean(om)
            if not np.any(om):
                self.warnings.append("degenerate kernel: Omega vanishes identically")
            self.omega = om
        self._tables = {}

    # --- pointwise kernel -------------------------------------------------
    def omega_at(self, theta):
        """Omega on angles (radians); rough and riesz kinds only."""
        theta = np.mod(theta, 2 * np.pi)
        if self.kind == "riesz":
            return np.cos(theta)
        m = self.omega.size
        idx = np.minimum((theta * (m / (2 * np.pi))).astype(int), m - 1)
        return self.omega[idx]

    def omega_mean(self):
        if self.kind == "riesz":
            return 0.0
        return float(np.mean(self.omega))

    def omega_sup(self):
        if self.kind == "riesz":
            return 1.0
        if self.kind == "rough":
            return float(np.max(np.abs(self.omega)))
        return 1.0 + self.amplitude

    def k(self, t):
        """Kernel at displacement t: shape (...,) for d=1, (..., 2) for d=2.

        Returns 0 at t = 0.
        """
        t = np.asarray(t, dtype=float)
        if self.d == 1:
            with np.errstate(divide="ignore", invalid="ignore"):
                if self.kind == "hilbert":
                    out = 1.0 / (np.pi * t)
                else:
                    a = np.abs(t)
                    phase = np.floor(np.log2(a) / self.period)
                    wave = np.where(np.mod(phase, 2) == 0, 1.0, -1.0)
                    out = np.sign(t) * (1.0 + self.amplitude * wave) / (np.pi * a)
            return np.where(t == 0, 0.0, out)
        r2 = np.sum(t ** 2, axis=-1)
        theta = np.arctan2(t[..., 1], t[..., 0])
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.omega_at(theta) / r2
        return np.where(r2 == 0, 0.0, out)

    def table(self, geometry, radius=None):
        """Cell kernel over offsets [-(radius-1), radius-1]^d (radius = 2N)."""
        radius = 2 * geometry.side if radius is None else radius
        key = (geometry.L, radius)
        if key not in self._tables:
            h = geometry.cell_size
            off = np.arange(-(radius - 1), radius) * h
            if self.d == 1:
                tab = self.k(off)
            else:
                X, Y = np.meshgrid(off, off, indexing="ij")
                tab = self.k(np.stack([X, Y], axis=-1))
            centre = (radius - 1,) * self.d
            tab[centre] = 0.0
            mask = np.ones(tab.shape, dtype=bool)
            mask[centre] = False
            if not np.all(np.isfinite(tab[mask])):
                raise KernelError("kernel table has non-finite off-diagonal entries")
            tab.setflags(write=False)
            self._tables[key] = tab
        return self._tables[key]

    def adjoint(self):
        """Operator with kernel K(y, x) = k(-t)."""
        return _AdjointOperator(self)

    def spec(self):
        out = {"kind": self.kind}
        if self.omega is not None:
            out["omega_samples"] = self.omega.tolist()
            out["mean_zero"] = self.mean_zero
        if self.kind == "hormander-example":
            out["amplitude"] = self.amplitude
            out["period"] = self.period
        if self.r_prime is not None:
            out["r_prime"] = self.r_prime
        if self.k_max is not None:
            out["k_max"] = self.k_max
        return out


class _AdjointOperator(KernelOperator):
    def __init__(self, base):
        self.__dict__.update({k: v for k, v in base.__dict__.items() if k != "_tables"})
        self._base = base
        self._tables = {}
        self.kind = base.kind

    def k(self, t):
        return self._base.k(-np.asarray(t, dtype=float))

    def adjoint(self):
        return self._base


def rough_kernel(omega_samples, enforce_mean_zero=True):
    return KernelOperator("rough", omega=omega_samples, mean_zero=enforce_mean_zero)


def kernel_from_spec(spec):
    """KernelOperator from a config fragment {kind, omega_samples?, ...}."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    omega = spec.pop("omega_samples", None)
    if kind == "rough" and isinstance(omega, str):
        omega = omega_profile(omega, int(spec.pop("n_samples", 16)))
    return KernelOperator(kind, omega=omega, mean_zero=spec.pop("mean_zero", True),
                          amplitude=spec.pop("amplitude", 0.5), period=spec.pop("period", 0.5),
                          r_prime=spec.pop("r_prime", None), k_max=spec.pop("k_max", None))


def omega_profile(name, m=16):
    """Named Omega tables sampled at sector midpoints."""
    mid = (np.arange(m) + 0.5) * 2 * np.pi / m
    if name == "sign-x":
        return np.sign(np.cos(mid))
    if name == "sign-xy":
        return np.sign(np.cos(mid) * np.sin(mid))
    if name == "cos2":
        return np.cos(2 * mid)
    raise DomainError(f"unknown Omega profile {name!r}")


# --- application -------------------------------------------------------------

def _values(f):
    """(array with trailing component axis, geometry, was_scalar)."""
    if isinstance(f, GridFunction):
        return f.values, f.geometry, False
    arr = np.asarray(f, dtype=float)
    try:
        g = geometry_of(arr)
        return arr[..., None], g, True
    except InvalidInputError:
        g = geometry_of(arr[..., 0])
        return arr, g, False


def _check_dim(T, geometry):
    if T.d != geometry.d:
        raise InvalidInputError(f"{T.kind} kernel lives in d={T.d}, grid has d={geometry.d}")


def _convolve(T, vals, geometry):
    """sum_j k(x_i - x_j) vals_j |cell| for vals of shape grid + (n,)."""
    N, d = geometry.side, geometry.d
    tab = T.table(geometry)
    R = 2 * N
    if d == 1 and N <= DENSE_LIMIT:
        i = np.arange(N)
        mat = tab[(i[:, None] - i[None, :]) + R - 1]
        return (mat @ vals) * geometry.cell_measure
    core = tab[tuple(slice(R - N, R + N - 1) for _ in range(d))]
    out = np.empty_like(vals)
    sl = tuple(slice(N - 1, 2 * N - 1) for _ in range(d))
    for c in range(vals.shape[-1]):
        full = fftconvolve(vals[..., c], core, mode="full")
        out[..., c] = full[sl]
    return out * geometry.cell_measure


def apply(T, f):
    """Apply T to a scalar array or (vector) GridFunction, componentwise."""
    vals, g, scalar = _values(f)
    _check_dim(T, g)
    out = _convolve(T, vals, g)
    if scalar:
        return out[..., 0]
    return GridFunction(g, out) if isinstance(f, GridFunction) else out


def apply_adjoint(T, f):
    return apply(T.adjoint(), f)


def apply_naive(T, f):
    """O(N^2) double-sum oracle (also usable for 2D on small grids)."""
    vals, g, scalar = _values(f)
    h = g.cell_size
    if g.d == 1:
        x = (np.arange(g.side) + 0.5) * h
        out = np.zeros_like(vals)
        for i in range(g.side):
            for j in range(g.side):
                if i != j:
                    out[i] += T.k(np.array(x[i] - x[j])) * vals[j] * g.cell_measure
    else:
        idx = np.array([(a, b) for a in range(g.side) for b in range(g.side)])
        flat = vals.reshape(-1, vals.shape[-1])
        res = np.zeros_like(flat)
        for p, (a, b) in enumerate(idx):
            for q, (c, e) in enumerate(idx):
                if p != q:
                    res[p] += T.k(np.array([(a - c) * h, (b - e) * h])) * flat[q] * g.cell_measure
        out = res.reshape(vals.shape)
    return out[..., 0] if scalar else out


# --- local pyramid -----------------------------------------------------------

def _windows(padded, m, d, nc_side, n):
    """View of the (3m)^d windows starting at multiples of m."""
    s = padded.strides
    if d == 1:
        return as_strided(padded, shape=(nc_side, 3 * m, n),
                          strides=(s[0] * m, s[0], s[1]), writeable=False)
    return as_strided(padded, shape=(nc_side, nc_side, 3 * m, 3 * m, n),
                      strides=(s[0] * m, s[1] * m, s[0], s[1], s[2]), writeable=False)


def local_pyramid(T, vals, geometry):
    """P[l] = T(f chi_{3Q_l(x)})(x) for every level l, shape grid + (n,).

    3Q is the concentric triple clipped to the domain (zero padding).
    """
    _check_dim(T, geometry)
    N, d, L = geometry.side, geometry.d, geometry.L
    n = vals.shape[-1]
    tab = T.table(geometry)
    R = 2 * N
    out = []
    for level in range(L + 1):
        m = 2 ** (L - level)
        nc = N // m
        pad = [(m, m)] * d + [(0, 0)]
        padded = np.ascontiguousarray(np.pad(vals, pad))
        win = _windows(padded, m, d, nc, n)
        if d == 1 or m ** d <= GEMM_BLOCK_LIMIT:
            # block kernel between the m^d cube cells and its (3m)^d window
            a = np.arange(m)
            b = np.arange(3 * m)
            if d == 1:
                kb = tab[(a[:, None] + m - b[None, :]) + R - 1]
                res = np.einsum("ab,cbk->cak", kb, win)
                P = res.reshape(N, n)
            else:
                da = (a[:, None] + m - b[None, :]) + R - 1
                kb = tab[da[:, None, :, None], da[None, :, None, :]]
                kb = kb.reshape(m * m, 9 * m * m)
                res = np.einsum("ab,xybk->xyak", kb, win.reshape(nc, nc, 9 * m * m, n))
                P = res.reshape(nc, nc, m, m, n).transpose(0, 2, 1, 3, 4).reshape(N, N, n)
        else:
            small = tab[tuple(slice(R - 2 * m, R + 2 * m - 1) for _ in range(d))]
            kern = small[None, None, :, :, None]
            full = fftconvolve(np.asarray(win), kern, mode="full", axes=(2, 3))
            res = full[:, :, 3 * m - 1:4 * m - 1, 3 * m - 1:4 * m - 1, :]
            P = res.transpose(0, 2, 1, 3, 4).reshape(N, N, n)
        out.append(P * geometry.cell_measure)
    return out


@dataclass
class Pyramid:
    """Morton-ordered full application and local pyramid of one input."""

    geometry: GridGeometry
    full: np.ndarray            # (cells, n) T f
    local: list                 # per level (cells, n)

    def outside(self, level):
        """T(f chi_{outside 3Q_l(x)})(x), Morton order."""
        return self.full - self.local[level]


def pyramid(T, f):
    vals, g, _ = _values(f)
    full = _convolve(T, vals, g)
    loc = local_pyramid(T, vals, g)
    return Pyramid(g, to_morton(full, g), [to_morton(p, g) for p in loc])


# --- maximal operators -------------------------------------------------------

def _scalar_input(f):
    vals, g, scalar = _values(f)
    if vals.shape[-1] != 1:
        raise InvalidInputError("expected a scalar grid function")
    return vals, g


def _sup_over_levels(per_level, g, reducer="mean"):
    """max over levels l of the level-l cube statistic of per_level[l]."""
    out = np.full(g.n_cells, -np.inf)
    for level, vals in enumerate(per_level):
        block = 2 ** (g.d * (g.L - level))
        if reducer == "max":
            stat = vals.reshape(-1, block).max(axis=1)
        else:
            stat = block_means(vals, block)
        np.maximum(out, expand_level(stat, level, g), out=out)
    return from_morton(out, g)


def bilinear_sharp_maximal(T, f, g_fn, pyr=None):
    """M_T(f, g)(x) = sup_{Q containing x} avg_Q |T(f chi_{outside 3Q})| |g|."""
    vals, geo = _scalar_input(f)
    gm = np.abs(to_morton(np.asarray(_scalar_input(g_fn)[0][..., 0]), geo))
    pyr = pyramid(T, vals) if pyr is None else pyr
    per = [np.abs(pyr.outside(l)[:, 0]) * gm for l in range(geo.L + 1)]
    return _sup_over_levels(per, geo)


def mpt_maximal(T, f, p, pyr=None):
    """M_{p,T} f(x) = sup_{Q containing x} <|T(f chi_{outside 3Q})|>_{p,Q}; p = inf gives the max."""
    if p < 1:
        raise DomainError("p must be >= 1")
    vals, geo = _scalar_input(f)
    pyr = pyramid(T, vals) if pyr is None else pyr
    if np.isinf(p):
        per = [np.abs(pyr.outside(l)[:, 0]) for l in range(geo.L + 1)]
        return _sup_over_levels(per, geo, reducer="max")
    if p == 1:
        per = [np.abs(pyr.outside(l)[:, 0]) for l in range(geo.L + 1)]
        return _sup_over_levels(per, geo)
    per = [np.abs(pyr.outside(l)[:, 0]) ** p for l in range(geo.L + 1)]
    return _sup_over_levels(per, geo) ** (1.0 / p)


def grand_maximal(h, W, V, p, r, sign=-1):
    """z -> sup_{Q containing z} (avg_Q |V_Q^{-1} W^{sign/p}(x) h(x)|^r)^{1/r}.

    ``V`` maps a DyadicCube to an invertible matrix (callable or dict).
    """
    if r < 1:
        raise DomainError("r must be >= 1")
    g = h.geometry
    field = W.power_morton(sign / p)
    hv = to_morton(h.values, g)
    u = np.einsum("xij,xj->xi", field, hv)
    getter = V if callable(V) else V.__getitem__
    out = np.full(g.n_cells, -np.inf)
    for level in range(g.L + 1):
        cubes = g.cubes(level)
        mats = np.array([getter(c) for c in cubes], dtype=float)
        try:
            inv = np.linalg.inv(mats)
        except np.linalg.LinAlgError as exc:
            raise DomainError("non-invertible V_Q") from exc
        block = 2 ** (g.d * (g.L - level))
        uu = u.reshape(len(cubes), block, -1)
        vv = np.einsum("cij,cbj->cbi", inv, uu)
        mags = np.sqrt(np.sum(vv ** 2, axis=-1)) ** r
        stat = mags.mean(axis=1) ** (1.0 / r)
        np.maximum(out, np.repeat(stat, block), out=out)
    return from_morton(out, g)


# --- Hormander constants -----------------------------------------------------

def _gauss_panels(a, b, breaks, nodes, panels):
    """Composite Gauss-Legendre nodes/weights on [a, b] split at breaks."""
    xs, ws = np.polynomial.legendre.leggauss(nodes)
    cuts = np.unique(np.concatenate([[a, b], [t for t in breaks if a < t < b]]))
    X, Wt = [], []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        edges = np.linspace(lo, hi, panels + 1)
        for p0, p1 in zip(edges[:-1], edges[1:]):
            half = 0.5 * (p1 - p0)
            X.append(0.5 * (p0 + p1) + half * xs)
            Wt.append(half * ws)
    return np.concatenate(X), np.concatenate(Wt)


def _breakpoints_1d(T, centres, lo, hi):
    """Jump points of y -> k(c - y) for the hormander example within [lo, hi]."""
    if T.kind != "hormander-example":
        return []
    j0 = int(np.floor(np.log2(max(min(abs(lo), abs(hi)), 1e-300)) / T.period)) - 4
    j1 = int(np.ceil(np.log2(max(abs(lo), abs(hi)) + 2 * max(abs(c) for c in centres)) / T.period)) + 4
    radii = 2.0 ** (T.period * np.arange(j0, j1 + 1))
    pts = []
    for c in centres:
        pts.extend(c - radii)
        pts.extend(c + radii)
    return pts


@dataclass
class HormanderReport:
    H1: float
    H2: float
    terms1: list
    terms2: list
    r_prime: float
    k_max: int
    normalized: bool
    worst: dict = field(default_factory=dict)


def hormander_constant(T, r_prime, k_max, scales=(1.0, 2 ** 0.25, 2 ** 0.5, 2 ** 0.75),
                       points=None, normalized=True, nodes=8, panels=8):
    """Truncated H_{r',1}, H_{r',2} of the continuous kernel.

    Base cubes are centred at the origin with the given side lengths
    (the kernels are translation invariant); x, z run over a
    ``points``-per-axis grid of Q/2 (5 in d=1, 3 in d=2 by default) and the annuli 2^k Q minus 2^{k-1} Q,
    k = 1..k_max, are integrated by composite Gauss rules (split at the
    kernel's jumps in d=1).  ``normalized`` selects average L^{r'} norms.
    """
    if r_prime <= 1:
        raise DomainError("r_prime must exceed 1")
    if k_max < 1:
        raise DomainError("k_max must be >= 1")
    if points is None:
        points = 5 if T.d == 1 else 3
    best = {1: (-np.inf, None, None), 2: (-np.inf, None, None)}
    for ell in scales:
        grid1 = np.linspace(-ell / 4, ell / 4, points)
        if T.d == 1:
            pts = grid1[:, None]
        else:
            X, Y = np.meshgrid(grid1, grid1, indexing="ij")
            pts = np.stack([X.ravel(), Y.ravel()], axis=1)
        iu = np.triu_indices(len(pts), 1)
        xs, zs = pts[iu[0]], pts[iu[1]]
        totals = {1: np.zeros(len(xs)), 2: np.zeros(len(xs))}
        terms = {1: [], 2: []}
        for k in range(1, k_max + 1):
            outer = 2.0 ** (k - 1) * ell          # half side of 2^k Q
            inner = outer / 2
            if T.d == 1:
                cents = list(grid1)
                ys, wts = [], []
                for a, b in ((-outer, -inner), (inner, outer)):
                    yq, wq = _gauss_panels(a, b, _breakpoints_1d(T, cents, a, b), nodes, panels)
                    ys.append(yq)
                    wts.append(wq)
                y = np.concatenate(ys)[:, None]
                w = np.concatenate(wts)
            else:
                edges = np.linspace(-outer, outer, 5)
                blocks = []
                for i in range(4):
                    for j in range(4):
                        if 1 <= i <= 2 and 1 <= j <= 2:
                            continue
                        gx, wx = _gauss_panels(edges[i], edges[i + 1], [], nodes, 2)
                        gy, wy = _gauss_panels(edges[j], edges[j + 1], [], nodes, 2)
                        GX, GY = np.meshgrid(gx, gy, indexing="ij")
                        blocks.append((np.stack([GX.ravel(), GY.ravel()], 1),
                                       np.outer(wx, wy).ravel()))
                y = np.concatenate([b[0] for b in blocks])
                w = np.concatenate([b[1] for b in blocks])
            vol = (2 * outer) ** T.d
            scale = vol if normalized else 1.0
            for which in (1, 2):
                if which == 1:
                    dx = T.k(xs[:, None, :] - y[None, :, :]) if T.d == 2 else T.k(xs - y.T)
                    dz = T.k(zs[:, None, :] - y[None, :, :]) if T.d == 2 else T.k(zs - y.T)
                else:
                    dx = T.k(y[None, :, :] - xs[:, None, :]) if T.d == 2 else T.k(y.T - xs)
                    dz = T.k(y[None, :, :] - zs[:, None, :]) if T.d == 2 else T.k(y.T - zs)
                diff = np.abs(dx - dz)
                if np.isinf(r_prime):
                    norm = np.max(diff, axis=1)
                else:
                    norm = (np.sum(diff ** r_prime * w, axis=1) / scale) ** (1.0 / r_prime)
                term = (2 * outer) ** T.d * norm
                totals[which] += term
                terms[which].append(term)
        for which in (1, 2):
            i = int(np.argmax(totals[which]))
            if totals[which][i] > best[which][0]:
                best[which] = (float(totals[which][i]),
                               [float(t[i]) for t in terms[which]],
                               {"side": ell, "x": pts[iu[0][i]].tolist(), "z": pts[iu[1][i]].tolist()})
    return HormanderReport(best[1][0], best[2][0], best[1][1], best[2][1], float(r_prime),
                           int(k_max), normalized, {"H1": best[1][2], "H2": best[2][2]})


# --- weak-type profile -------------------------------------------------------

def weak_quasinorm(values, q, cell_measure):
    """sup_lambda lambda |{|v| > lambda}|^{1/q}, exact over the attained values.

    For lambda just below the k-th largest |v| the level set has k cells,
    so the supremum is max_k v_(k) (k |cell|)^{1/q}.
    """
    v = np.sort(np.abs(np.ravel(values)))[::-1]
    if v.size == 0 or v[0] == 0:
        return 0.0
    k = np.arange(1, v.size + 1)
    return float(np.max(v * (k * cell_measure) ** (1.0 / q)))


def lq_norm(values, q, cell_measure):
    return float((np.sum(np.abs(np.ravel(values)) ** q) * cell_measure) ** (1.0 / q))


def trial_input(geometry, rng, kind=None, n=1):
    """Deterministic stress input: indicator, Rademacher, atom or gaussian."""
    kinds = ("indicator", "rademacher", "atom", "gaussian")
    kind = kinds[int(rng.integers(4))] if kind is None else kind
    shape = geometry.shape + (n,)
    if kind == "atom":
        out = np.zeros(shape)
        idx = tuple(int(rng.integers(geometry.side)) for _ in range(geometry.d))
        out[idx] = rng.standard_normal(n)
        return out
    level = int(rng.integers(0, max(geometry.L - 1, 1)))
    cube = geometry.cubes(level)[int(rng.integers(2 ** (geometry.d * level)))]
    mask = cube.box(geometry).mask(geometry)[..., None]
    if kind == "indicator":
        return mask * rng.standard_normal(n)
    if kind == "rademacher":
        return mask * rng.choice([-1.0, 1.0], size=shape)
    return rng.standard_normal(shape)


@dataclass
class OperatorProfile:
    """Empirical weak (q,q) norm of T and bilinear norm of M_T."""

    weak_norm: float
    mt_norm: float
    q: float
    r: float
    s: float
    trials: int
    seed: int
    per_trial: list = field(default_factory=list)

    def to_json(self):
        return {"weak_norm": self.weak_norm, "mt_norm": self.mt_norm, "q": self.q,
                "r": self.r, "s": self.s, "trials": self.trials, "seed": self.seed}


def weak_norm_estimate(T, q, trials, seed, geometry, r=None, s=None):
    """Empirical profile; trial k uses rng([seed, k]) so prefixes are stable.

    With r, s given the bilinear M_T : L^r x L^s -> L^{nu,inf} ratio is
    estimated on the same trials (g drawn alongside f).
    """
    if trials < 1:
        raise DomainError("trials must be >= 1")
    if q < 1:
        raise DomainError("q must be >= 1")
    cm = geometry.cell_measure
    best, best_mt, per = 0.0, 0.0, []
    for k in range(trials):
        rng = np.random.default_rng([seed, k])
        f = trial_input(geometry, rng)[..., 0]
        nf = lq_norm(f, q, cm)
        if nf == 0:
            per.append(0.0)
            continue
        ratio = weak_quasinorm(apply(T, f), q, cm) / nf
        per.append(ratio)
        best = max(best, ratio)
        if r is not None and s is not None:
            g = np.abs(trial_input(geometry, rng, kind="gaussian")[..., 0]) + 0.0
            nu = 1.0 / (1.0 / r + 1.0 / s)
            mt = bilinear_sharp_maximal(T, f, g)
            den = lq_norm(f, r, cm) * lq_norm(g, s, cm)
            if den > 0:
                best_mt = max(best_mt, weak_quasinorm(mt, nu, cm) / den)
    return OperatorProfile(float(best), float(best_mt), float(q), r, s, trials, seed, per)


__all__ = [
    "KernelOperator", "KernelError", "rough_kernel", "kernel_from_spec", "omega_profile",
    "apply", "apply_adjoint", "apply_naive", "local_pyramid", "pyramid", "Pyramid",
    "bilinear_sharp_maximal", "mpt_maximal", "grand_maximal", "hormander_constant",
    "HormanderReport", "weak_quasinorm", "lq_norm", "trial_input", "OperatorProfile",
    "weak_norm_estimate", "KERNEL_KINDS",
]
