"""Dyadic geometry on [0,1)^d: cubes, grid functions, cube averages, file I/O.

Cells are stored in natural array order (``values[i]`` or ``values[i, j]``)
but every cube-wise reduction goes through the Morton (Z-order) layout, in
which each dyadic cube is a contiguous run of cells.  That makes one- and
two-dimensional code identical and keeps reductions in a fixed tree order.
"""

import json
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, InvalidInputError

MAX_CELLS_LOG2 = 24


@dataclass(frozen=True)
class GridGeometry:
    """Uniform dyadic grid of ``2**L`` cells per side over ``[0,1)^d``."""

    d: int
    L: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise InvalidInputError("dimension must be 1 or 2")
        if self.L < 1 or self.d * self.L > MAX_CELLS_LOG2:
            raise InvalidInputError(f"need 1 <= L and d*L <= {MAX_CELLS_LOG2}")

    @property
    def side(self):
        return 2 ** self.L

    @property
    def shape(self):
        return (self.side,) * self.d

    @property
    def n_cells(self):
        return self.side ** self.d

    @property
    def cell_size(self):
        return 2.0 ** -self.L

    @property
    def cell_measure(self):
        return 2.0 ** (-self.d * self.L)

    def cubes(self, level):
        """All dyadic cubes of a level, in Morton order."""
        count = 2 ** level
        if self.d == 1:
            return [DyadicCube(level, (i,)) for i in range(count)]
        perm = morton_permutation(2, level)
        return [DyadicCube(level, (int(k) // count, int(k) % count)) for k in perm]

    def all_cubes(self):
        out = []
        for level in range(self.L + 1):
            out.extend(self.cubes(level))
        return out

    def root(self):
        return DyadicCube(0, (0,) * self.d)

    def to_json(self):
        return {"d": self.d, "L": self.L}


@dataclass(frozen=True)
class Box:
    """Axis-aligned block of cells ``[lo_k, hi_k)`` in cell coordinates."""

    lo: tuple
    hi: tuple

    @property
    def slices(self):
        return tuple(slice(a, b) for a, b in zip(self.lo, self.hi))

    @property
    def n_cells(self):
        out = 1
        for a, b in zip(self.lo, self.hi):
            out *= b - a
        return out

    def contains(self, other):
        return all(a <= c and d <= b for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))

    def mask(self, geometry):
        m = np.zeros(geometry.shape, dtype=bool)
        m[self.slices] = True
        return m


@dataclass(frozen=True, order=True)
class DyadicCube:
    """Dyadic cube ``2^-level * (coords + [0,1)^d)``."""

    level: int
    coords: tuple

    def side_cells(self, geometry):
        return 2 ** (geometry.L - self.level)

    def measure(self, d=None):
        d = len(self.coords) if d is None else d
        return 2.0 ** (-d * self.level)

    def box(self, geometry):
        m = self.side_cells(geometry)
        return Box(tuple(c * m for c in self.coords), tuple((c + 1) * m for c in self.coords))

    def triple(self, geometry):
        """Concentric tripled cube, clipped to the domain."""
        m = self.side_cells(geometry)
        lo = tuple(max(0, (c - 1) * m) for c in self.coords)
        hi = tuple(min(geometry.side, (c + 2) * m) for c in self.coords)
        return Box(lo, hi)

    def children(self):
        d = len(self.coords)
        out = []
        for bits in range(2 ** d):
            offs = [(bits >> (d - 1 - k)) & 1 for k in range(d)]
            out.append(DyadicCube(self.level + 1, tuple(2 * c + o for c, o in zip(self.coords, offs))))
        return out

    def parent(self):
        if self.level == 0:
            return None
        return DyadicCube(self.level - 1, tuple(c // 2 for c in self.coords))

    def ancestor(self, level):
        shift = self.level - level
        if shift < 0:
            raise DomainError("ancestor level below cube level")
        return DyadicCube(level, tuple(c >> shift for c in self.coords))

    def contains(self, other):
        return other.level >= self.level and other.ancestor(self.level) == self

    def morton_range(self, geometry):
        """Half-open range of this cube's cells in Morton order."""
        size = self.side_cells(geometry) ** geometry.d
        idx = morton_index(self.coords)
        return idx * size, (idx + 1) * size

    def to_json(self):
        return {"level": self.level, "coords": list(self.coords)}


def morton_index(coords):
    if len(coords) == 1:
        return coords[0]
    i, j = coords
    out = 0
    bit = 0
    while (i >> bit) or (j >> bit):
        out |= ((i >> bit) & 1) << (2 * bit + 1)
        out |= ((j >> bit) & 1) << (2 * bit)
        bit += 1
    return out


def cube_at(level, index, d):
    """Dyadic cube of a level from its Morton index."""
    if d == 1:
        return DyadicCube(level, (int(index),))
    i = j = 0
    for bit in range(level):
        j |= ((index >> (2 * bit)) & 1) << bit
        i |= ((index >> (2 * bit + 1)) & 1) << bit
    return DyadicCube(level, (int(i), int(j)))


@lru_cache(maxsize=None)
def morton_permutation(d, L):
    """``perm[k]`` = flat natural index of the k-th cell in Morton order."""
    side = 2 ** L
    if d == 1:
        return np.arange(side)
    k = np.arange(side * side)
    i = np.zeros_like(k)
    j = np.zeros_like(k)
    for bit in range(L):
        j |= ((k >> (2 * bit)) & 1) << bit
        i |= ((k >> (2 * bit + 1)) & 1) << bit
    perm = i * side + j
    perm.setflags(write=False)
    return perm


@lru_cache(maxsize=None)
def inverse_morton_permutation(d, L):
    perm = morton_permutation(d, L)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    inv.setflags(write=False)
    return inv


def to_morton(arr, geometry):
    """Flatten the grid axes of ``arr`` into Morton order."""
    flat = arr.reshape((geometry.n_cells,) + arr.shape[geometry.d:])
    return flat[morton_permutation(geometry.d, geometry.L)]


def from_morton(arr, geometry):
    flat = arr[inverse_morton_permutation(geometry.d, geometry.L)]
    return flat.reshape(geometry.shape + arr.shape[1:])


def tree_sum(arr, axis=0):
    """Pairwise sum along ``axis`` (length must be a power of two)."""
    arr = np.moveaxis(np.asarray(arr, dtype=float), axis, 0)
    size = arr.shape[0]
    if size & (size - 1):
        raise InvalidInputError("tree_sum needs a power-of-two length")
    while arr.shape[0] > 1:
        arr = arr[0::2] + arr[1::2]
    return arr[0]


def block_means(morton_arr, block):
    """Means over consecutive blocks of ``block`` cells (tree order)."""
    m = morton_arr.shape[0] // block
    x = morton_arr.reshape((m, block) + morton_arr.shape[1:])
    while x.shape[1] > 1:
        x = x[:, 0::2] + x[:, 1::2]
    return x[:, 0] / block


def level_means(morton_arr, geometry):
    """List over levels 0..L of per-cube means (cubes in Morton order)."""
    out = [None] * (geometry.L + 1)
    cur = np.asarray(morton_arr, dtype=float)
    out[geometry.L] = cur
    per = 2 ** geometry.d
    for level in range(geometry.L - 1, -1, -1):
        m = cur.shape[0] // per
        x = cur.reshape((m, per) + cur.shape[1:])
        while x.shape[1] > 1:
            x = x[:, 0::2] + x[:, 1::2]
        cur = x[:, 0] / per
        out[level] = cur
    return out


def expand_level(per_cube, level, geometry):
    """Broadcast per-cube values of a level back to Morton-ordered cells."""
    reps = 2 ** (geometry.d * (geometry.L - level))
    return np.repeat(per_cube, reps, axis=0)


class GridFunction:
    """R^n-valued piecewise constant function on the cells of a grid.

    ``values`` has shape ``geometry.shape + (n,)``.
    """

    def __init__(self, geometry, values):
        values = np.array(values, dtype=float)
        if values.shape == geometry.shape:
            values = values[..., None]
        if values.shape[:-1] != geometry.shape:
            raise InvalidInputError(f"values shape {values.shape} does not fit {geometry}")
        if not 1 <= values.shape[-1] <= 8:
            raise InvalidInputError("value dimension must be in [1, 8]")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("grid function has non-finite values")
        values.setflags(write=False)
        self.geometry = geometry
        self.values = values

    @property
    def n(self):
        return self.values.shape[-1]

    def norms(self):
        """Pointwise Euclidean norm |f(x)|."""
        return np.sqrt(np.sum(self.values ** 2, axis=-1))

    def restrict(self, box):
        """Values on a box as a (cells, n) array in natural order."""
        return self.values[box.slices].reshape(-1, self.n)

    def component(self, i):
        return self.values[..., i]


def as_scalar(w):
    """Accept a scalar GridFunction or a plain array; return (array, geometry)."""
    if isinstance(w, GridFunction):
        if w.n != 1:
            raise InvalidInputError("expected a scalar grid function")
        return w.values[..., 0], w.geometry
    w = np.asarray(w, dtype=float)
    return w, geometry_of(w)


def geometry_of(arr):
    arr = np.asarray(arr)
    side = arr.shape[0]
    if arr.ndim not in (1, 2) or any(s != side for s in arr.shape) or side & (side - 1) or side < 2:
        raise InvalidInputError(f"array of shape {arr.shape} is not a dyadic grid")
    return GridGeometry(arr.ndim, side.bit_length() - 1)


def p_average(f, cube, p):
    """Normalized L^p average of |f| over a cube (or Box)."""
    if p < 1:
        raise DomainError("p must be >= 1")
    if isinstance(f, GridFunction):
        mags = f.norms()
        geometry = f.geometry
    else:
        mags, geometry = as_scalar(f)
        mags = np.abs(mags)
    box = cube.box(geometry) if isinstance(cube, DyadicCube) else cube
    vals = mags[box.slices]
    if np.isinf(p):
        return float(np.max(vals))
    if isinstance(cube, DyadicCube):
        total = tree_sum(vals.reshape(-1) ** p)
    else:
        total = np.sum(vals ** p)
    return float((total / vals.size) ** (1.0 / p))


# --- binary container ------------------------------------------------------

_GFN_MAGIC = b"GFN1"
_MWT_MAGIC = b"MWT1"


def _write_container(path, magic, header, payload):
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        fh.write(np.ascontiguousarray(payload, dtype="<f8").tobytes())


def _read_container(path, magic):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != magic:
        raise InvalidInputError(f"{path}: bad magic bytes")
    (size,) = struct.unpack("<I", blob[4:8])
    header = json.loads(blob[8:8 + size].decode("utf-8"))
    payload = np.frombuffer(blob[8 + size:], dtype="<f8").astype(float)
    return header, payload


def save_gfn(path, f):
    g = f.geometry
    _write_container(path, _GFN_MAGIC, {"d": g.d, "L": g.L, "n": f.n}, f.values.reshape(-1))


def load_gfn(path):
    header, payload = _read_container(path, _GFN_MAGIC)
    geometry = GridGeometry(header["d"], header["L"])
    n = header["n"]
    if payload.size != geometry.n_cells * n:
        raise InvalidInputError(f"{path}: payload size mismatch")
    return GridFunction(geometry, payload.reshape(geometry.shape + (n,)))
