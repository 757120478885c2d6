"""Matrix weights on dyadic grids and their Muckenhoupt-type constants."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InvalidInputError
from .grid import (GridGeometry, _read_container, _write_container, geometry_of, level_means,
                   to_morton)
from .john import round_norm, halton_directions
from .scalar import fujii_ainfty, fujii_ainfty_many
from .spd import COND_CAP, jacobi_eigh, op_norm, power_from_eigh, validate_spd

_MWT_MAGIC = b"MWT1"
PAIR_CHUNK = 1 << 21      # matrix entries per chunk in pairwise sweeps


def conjugate(p):
    if p == 1:
        return np.inf
    if np.isinf(p):
        return 1.0
    return p / (p - 1.0)


class MatrixWeight:
    """Cellwise SPD matrix field W(x) with cached spectral powers.

    ``values`` has shape ``geometry.shape + (n, n)``.  The eigendecomposition
    of every cell is computed once at construction; ``power(alpha)`` reuses
    it.  Exponents listed in ``powers`` are materialised eagerly.
    """

    def __init__(self, geometry, values, kind="custom", params=None, seed=None,
                 powers=()):
        values = np.array(values, dtype=float)
        if values.shape[:-2] != geometry.shape or values.shape[-1] != values.shape[-2]:
            raise InvalidInputError(f"weight of shape {values.shape} does not fit {geometry}")
        self.geometry = geometry
        self.n = values.shape[-1]
        self._eig = validate_spd(values, cond_cap=COND_CAP)
        values.setflags(write=False)
        self.values = values
        self.kind = kind
        self.params = dict(params or {})
        self.seed = seed
        self._cache = {}
        for alpha in powers:
            self.power(alpha)

    def power(self, alpha):
        """Field W(x)^alpha, shape grid + (n, n)."""
        key = float(alpha)
        if key not in self._cache:
            if key == 1.0:
                out = self.values
            else:
                out = power_from_eigh(self._eig[0], self._eig[1], key)
                out.setflags(write=False)
            self._cache[key] = out
        return self._cache[key]

    def power_morton(self, alpha):
        key = ("morton", float(alpha))
        if key not in self._cache:
            out = to_morton(self.power(alpha), self.geometry)
            out.setflags(write=False)
            self._cache[key] = out
        return self._cache[key]

    def power_weight(self, beta):
        """The weight W^beta as a new MatrixWeight."""
        return MatrixWeight(self.geometry, self.power(beta), kind=f"{self.kind}^{beta}",
                            params=self.params, seed=self.seed)

    def scaled(self, c):
        return MatrixWeight(self.geometry, c * self.values, kind=self.kind,
                            params=self.params, seed=self.seed)

    def eigenvalues(self):
        return self._eig[0]

    def metadata(self):
        return {"kind": self.kind, "params": self.params, "seed": self.seed,
                "d": self.geometry.d, "L": self.geometry.L, "n": self.n}


def identity_weight(geometry, n):
    vals = np.broadcast_to(np.eye(n), geometry.shape + (n, n))
    return MatrixWeight(geometry, vals, kind="identity")


def scalar_embedded(w, n, kind="scalar-embedded", params=None, seed=None):
    """W(x) = w(x) I_n from a positive scalar array."""
    w = np.asarray(w, dtype=float)
    geometry = GridGeometry(w.ndim, w.shape[0].bit_length() - 1)
    vals = w[..., None, None] * np.eye(n)
    return MatrixWeight(geometry, vals, kind=kind, params=params, seed=seed)


# --- reducing matrices -----------------------------------------------------

@dataclass
class ReducingMatrix:
    """SPD matrix R with |R e| <= rho(e) <= factor |R e| (bracket on probes)."""

    cube: object
    p: float
    side: str
    matrix: np.ndarray
    lower: float
    upper: float
    factor: float
    iterations: int = 0

    def to_json(self):
        return {"cube": self.cube.to_json() if hasattr(self.cube, "to_json") else None,
                "p": self.p, "side": self.side, "matrix": self.matrix.tolist(),
                "bracket": [self.lower, self.upper], "factor": self.factor}


def field_norm(field_cells, exponent):
    """Norm e -> (mean_x |F(x) e|^exponent)^{1/exponent} on a set of cells.

    ``field_cells`` has shape (k, n, n); the returned callable maps a
    (m, n) array of directions to m values.
    """
    F = np.asarray(field_cells, dtype=float)

    def rho(dirs):
        vecs = np.einsum("kij,mj->kmi", F, dirs)
        mags = np.sqrt(np.sum(vecs ** 2, axis=-1))
        if np.isinf(exponent):
            return np.max(mags, axis=0)
        return np.mean(mags ** exponent, axis=0) ** (1.0 / exponent)

    return rho


def _cells_of(weight_field_morton, cube, geometry):
    start, stop = cube.morton_range(geometry)
    return weight_field_morton[start:stop]


def reducing_matrix_of_field(field_cells, exponent, n, rounds=2):
    return round_norm(field_norm(field_cells, exponent), n, rounds=rounds)


def reducing_matrix(W, p, cube, side="direct", rounds=2):
    """John-type reducing matrix of the L^p cube norm of W^{1/p} e (direct)
    or the L^{p'} cube norm of W^{-1/p} e (dual)."""
    if p < 1:
        raise DomainError("p must be >= 1")
    if side == "direct":
        cells = _cells_of(W.power_morton(1.0 / p), cube, W.geometry)
        exponent = p
    elif side == "dual":
        if p <= 1:
            raise DomainError("dual side needs p > 1")
        cells = _cells_of(W.power_morton(-1.0 / p), cube, W.geometry)
        exponent = conjugate(p)
    else:
        raise DomainError(f"unknown side {side!r}")
    fit = reducing_matrix_of_field(cells, exponent, W.n, rounds=rounds)
    return ReducingMatrix(cube, float(p), side, fit.matrix, fit.lower, fit.upper,
                          fit.factor, fit.iterations)


def reducing_matrix_p2_closed_form(W, cube):
    """((1/|Q|) sum_Q W)^{1/2}, the exact reducing matrix for p = 2."""
    cells = _cells_of(W.power_morton(1.0), cube, W.geometry)
    mean = np.mean(cells, axis=0)
    w, v = jacobi_eigh(mean)
    return power_from_eigh(w, v, 0.5)


# --- pairwise sweeps -------------------------------------------------------

def _pair_level_means(A, B, power, geometry):
    """For each cell x and level l: mean over y in Q_l(x) of |A(x) B(y)|^power.

    A, B are Morton-ordered (N, n, n) fields.  Returns an (L+1, N) array.
    """
    N, n, _ = A.shape
    L, d = geometry.L, geometry.d
    out = np.empty((L + 1, N))
    rows = max(1, PAIR_CHUNK // (N * n * n))
    scalar = n == 1
    for start in range(0, N, rows):
        stop = min(N, start + rows)
        if scalar:
            vals = np.abs(A[start:stop, 0, 0][:, None] * B[None, :, 0, 0])
        else:
            prod = np.einsum("xij,yjk->xyik", A[start:stop], B)
            vals = op_norm(prod)
        vals = vals ** power
        xs = np.arange(start, stop)
        cur = vals
        out[L, start:stop] = cur[np.arange(stop - start), xs]
        per = 2 ** d
        for level in range(L - 1, -1, -1):
            k = cur.shape[1] // per
            x = cur.reshape(cur.shape[0], k, per)
            while x.shape[2] > 1:
                x = x[:, :, 0::2] + x[:, :, 1::2]
            cur = x[:, :, 0] / per
            block = 2 ** (d * (L - level))
            out[level, start:stop] = cur[np.arange(stop - start), xs // block]
    return out


@dataclass
class ApReport:
    value: float
    cube: object
    proxy: float = None
    proxy_cube: object = None
    ratio: float = None
    extras: dict = field(default_factory=dict)


def matrix_ap_report(W, p, proxy=True, rounds=2):
    """Matrix A_p constant (both integrals normalised) plus the reducing
    matrix proxy sup_Q |W_{p,Q} W'_{p,Q}|^p."""
    if p <= 1:
        raise DomainError("p must exceed 1")
    g = W.geometry
    pp = conjugate(p)
    inner = _pair_level_means(W.power_morton(1.0 / p), W.power_morton(-1.0 / p), pp, g)
    best, best_cube = -np.inf, None
    for level in range(g.L + 1):
        block = 2 ** (g.d * (g.L - level))
        vals = (inner[level] ** (p / pp)).reshape(-1, block)
        x = vals
        while x.shape[1] > 1:
            x = x[:, 0::2] + x[:, 1::2]
        means = x[:, 0] / block
        k = int(np.argmax(means))
        if means[k] > best:
            best, best_cube = float(means[k]), g.cubes(level)[k]
    rep = ApReport(best, best_cube)
    if proxy:
        pbest, pcube = -np.inf, None
        for cube in g.all_cubes():
            a = reducing_matrix(W, p, cube, "direct", rounds=rounds).matrix
            b = reducing_matrix(W, p, cube, "dual", rounds=rounds).matrix
            val = float(op_norm(a @ b)) ** p
            if val > pbest:
                pbest, pcube = val, cube
        rep.proxy, rep.proxy_cube = pbest, pcube
        rep.ratio = pbest / best
    return rep


def matrix_ap(W, p):
    """sup_Q avg_x (avg_y |W^{1/p}(x) W^{-1/p}(y)|^{p'})^{p/p'} over dyadic Q."""
    return matrix_ap_report(W, p, proxy=False).value


def matrix_a1(W, return_cube=False):
    """sup_Q max_{y in Q} avg_{x in Q} |W(x) W^{-1}(y)|.

    The outer extremum over y is a maximum: with a minimum the scalar case
    would give <w>_Q / max_Q w <= 1 instead of the A_1 constant.
    """
    g = W.geometry
    # |W(x) W^{-1}(y)| = |W^{-1}(y) W(x)|; rows indexed by y
    inner = _pair_level_means(W.power_morton(-1.0), W.power_morton(1.0), 1.0, g)
    best, best_cube = -np.inf, None
    for level in range(g.L + 1):
        block = 2 ** (g.d * (g.L - level))
        tops = inner[level].reshape(-1, block).max(axis=1)
        k = int(np.argmax(tops))
        if tops[k] > best:
            best, best_cube = float(tops[k]), g.cubes(level)[k]
    return (best, best_cube) if return_cube else best


# --- A_inf^{sc} -------------------------------------------------------------

def ainfty_directions(n, n_dirs):
    """Deterministic direction set; the set for 2k contains the set for k."""
    if n == 1:
        return np.ones((1, 1))
    if n_dirs < 2 * n:
        raise DomainError("n_dirs must be at least 2n")
    if n == 2:
        theta = np.pi * np.arange(n_dirs) / n_dirs
        return np.column_stack([np.cos(theta), np.sin(theta)])
    axes = np.eye(n)
    return np.vstack([axes, halton_directions(n, n_dirs - n)])


@dataclass
class AinftyReport:
    value: float
    direction: np.ndarray
    n_dirs: int
    mode: str
    lower_bound: bool = True


def ainfty_sc_field(field, exponent, directions, mode="all-cubes"):
    """max_e fujii(|F(x) e|^exponent) over the given directions."""
    vec = np.einsum("...ij,mj->m...i", field, np.asarray(directions, dtype=float))
    ws = np.sum(vec ** 2, axis=-1) ** (exponent / 2.0)
    geometry = geometry_of(ws[0])
    vals, _ = fujii_ainfty_many(ws, geometry, mode=mode)
    k = int(np.argmax(vals))
    return float(vals[k]), directions[k]


def ainfty_sc_report(W, p, n_dirs=None, mode="all-cubes"):
    if p < 1:
        raise DomainError("p must be >= 1")
    n_dirs = 8 * W.n if n_dirs is None else n_dirs
    dirs = ainfty_directions(W.n, n_dirs)
    val, e = ainfty_sc_field(W.power(1.0 / p), p, dirs, mode=mode)
    return AinftyReport(val, e, len(dirs), mode)


def ainfty_sc(W, p, n_dirs=None, mode="all-cubes"):
    """Sampled lower bound for [W]_{A^{sc}_{inf,p}}."""
    return ainfty_sc_report(W, p, n_dirs, mode).value


def rh_matrix_exponent(ainfty, d):
    return 1.0 + 1.0 / (2.0 ** (d + 11) * ainfty)


def matrix_rh_check(W, p, A, r):
    """sup_Q <|W^{1/p} A|^r>^{1/r} / <|W^{1/p} A|> over dyadic Q."""
    if r <= 1:
        raise DomainError("r must exceed 1")
    g = W.geometry
    A = np.asarray(A, dtype=float)
    phi = op_norm(W.power_morton(1.0 / p) @ A)
    phi = phi / np.max(phi)
    a = level_means(phi ** r, g)
    b = level_means(phi, g)
    return float(max(np.max(a[k] ** (1.0 / r) / b[k]) for k in range(g.L + 1)))


# --- generators ------------------------------------------------------------

WEIGHT_KINDS = ("scalar-embedded", "rotating-power", "random-log-lipschitz",
                "block-diagonal", "identity")


def cell_centers(geometry):
    h = geometry.cell_size
    axes = [(np.arange(geometry.side) + 0.5) * h] * geometry.d
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def _distance(geometry, x0):
    x = cell_centers(geometry)
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (geometry.d,))
    return np.sqrt(np.sum((x - x0) ** 2, axis=-1))


def scalar_profile(geometry, params):
    """Scalar weight used by the generators: power, two-valued or constant."""
    profile = params.get("profile", "power")
    if profile == "constant":
        return np.full(geometry.shape, float(params.get("c", 1.0)))
    if profile == "power":
        a = float(params.get("a", 0.0))
        x0 = params.get("x0", 0.5)
        return _distance(geometry, x0) ** a
    if profile == "two-valued":
        K = float(params.get("K", 2.0))
        x = cell_centers(geometry)[..., 0]
        return np.where(x < 0.5, 1.0, K)
    raise DomainError(f"unknown scalar profile {profile!r}")


def _rotation(theta, n):
    R = np.broadcast_to(np.eye(n), np.shape(theta) + (n, n)).copy()
    c, s = np.cos(theta), np.sin(theta)
    R[..., 0, 0], R[..., 0, 1] = c, -s
    R[..., 1, 0], R[..., 1, 1] = s, c
    return R


def generate_weight(kind, geometry, n, params=None, seed=0):
    """Deterministic corpus weight of the given kind.

    kinds
    -----
    scalar-embedded      w(x) I_n with w from ``scalar_profile``.
    rotating-power       R(t(x)) diag(|x-x0|^a, s_2, ..., s_n) R(t(x))^T with
                         t(x) = theta0 + twist * a * x_1 (a = 0 gives a constant
                         matrix).
    random-log-lipschitz exp(S(x)), S a random smooth symmetric field with
                         Lipschitz scale ``lip``.
    block-diagonal       U diag(|x - c_i|^{a_i}) U^T for a fixed rotation U.
    identity             W = I.
    """
    params = dict(params or {})
    rng = np.random.default_rng(seed)
    if kind == "identity":
        vals = np.broadcast_to(np.eye(n), geometry.shape + (n, n))
    elif kind == "scalar-embedded":
        w = scalar_profile(geometry, params)
        vals = w[..., None, None] * np.eye(n)
    elif kind == "rotating-power":
        a = float(params.get("a", 0.5))
        twist = float(params.get("twist", 2.0))
        theta0 = float(params.get("theta0", 0.3))
        spread = params.get("spread", [1.0 + k for k in range(n)])
        dist = _distance(geometry, params.get("x0", 0.5))
        diag = np.broadcast_to(np.asarray(spread[:n], dtype=float), geometry.shape + (n,)).copy()
        diag[..., 0] = diag[..., 0] * dist ** a
        if n == 1:
            vals = diag[..., None]
        else:
            theta = theta0 + twist * a * cell_centers(geometry)[..., 0]
            R = _rotation(theta, n)
            vals = np.einsum("...ij,...j,...kj->...ik", R, diag, R)
    elif kind == "random-log-lipschitz":
        lip = float(params.get("lip", 1.0))
        modes = int(params.get("modes", 4))
        x = cell_centers(geometry)
        S = np.zeros(geometry.shape + (n, n))
        for _ in range(modes):
            B = rng.standard_normal((n, n))
            B = (B + B.T) / 2.0
            B /= max(np.linalg.norm(B, 2), 1e-12)
            freq = rng.integers(1, 4, size=geometry.d)
            phase = rng.uniform(0, 2 * np.pi)
            arg = 2 * np.pi * (x @ freq) + phase
            # each mode has Lipschitz constant <= lip / modes
            amp = lip / (modes * 2 * np.pi * np.linalg.norm(freq))
            S += amp * np.cos(arg)[..., None, None] * B
        w, v = jacobi_eigh(S)
        vals = power_from_eigh(np.exp(w), v, 1.0)
    elif kind == "block-diagonal":
        exps = params.get("exponents", [0.5 * (-1) ** k for k in range(n)])
        centers = params.get("centers", [0.5 + 0.1 * k for k in range(n)])
        # short parameter lists repeat cyclically so one spec serves every n
        diag = np.stack([_distance(geometry, centers[k % len(centers)])
                         ** float(exps[k % len(exps)]) for k in range(n)], axis=-1)
        angle = float(params.get("rotation", 0.0))
        if n == 1 or angle == 0.0:
            vals = diag[..., None] * np.eye(n)
        else:
            U = _rotation(np.array(angle), n)
            vals = np.einsum("ij,...j,kj->...ik", U, diag, U)
    else:
        raise DomainError(f"unknown weight kind {kind!r}")
    return MatrixWeight(geometry, vals, kind=kind, params=params, seed=seed)


def save_mwt(path, W):
    header = {"d": W.geometry.d, "L": W.geometry.L, "n": W.n, "kind": W.kind,
              "params": W.params, "seed": W.seed}
    _write_container(path, _MWT_MAGIC, header, W.values.reshape(-1))


def load_mwt(path):
    header, payload = _read_container(path, _MWT_MAGIC)
    geometry = GridGeometry(header["d"], header["L"])
    n = header["n"]
    if payload.size != geometry.n_cells * n * n:
        raise InvalidInputError(f"{path}: payload size mismatch")
    return MatrixWeight(geometry, payload.reshape(geometry.shape + (n, n)),
                        kind=header.get("kind", "custom"), params=header.get("params"),
                        seed=header.get("seed"))


def weight_from_json(obj, geometry=None, n=None):
    """Weight from a config fragment {kind, params, seed} or {path}."""
    if "path" in obj:
        return load_mwt(obj["path"])
    return generate_weight(obj["kind"], geometry, n, obj.get("params"), obj.get("seed", 0))


__all__ = [
    "MatrixWeight", "identity_weight", "scalar_embedded", "ReducingMatrix", "reducing_matrix",
    "reducing_matrix_p2_closed_form", "matrix_ap", "matrix_ap_report", "matrix_a1",
    "ainfty_sc", "ainfty_sc_report", "ainfty_sc_field", "ainfty_directions",
    "matrix_rh_check", "rh_matrix_exponent", "generate_weight", "save_mwt", "load_mwt",
    "weight_from_json", "conjugate", "field_norm", "cell_centers",
]
