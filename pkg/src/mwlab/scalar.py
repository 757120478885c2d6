"""Scalar weights on dyadic grids: maximal functions, A_p / A_inf constants,
Calderon-Zygmund selection and reverse Holder ratios."""

import numpy as np
from scipy.ndimage import maximum_filter, maximum_filter1d

from .errors import DomainError, InvalidInputError
from .grid import (DyadicCube, as_scalar, expand_level, from_morton, level_means,
                   to_morton)

MAXIMAL_MODES = ("dyadic", "all-cubes")


def _window_sums(arr, s):
    """Sums of ``arr`` over every s-cube inside the array, indexed by corner."""
    if arr.ndim == 1:
        c = np.concatenate(([0.0], np.cumsum(arr)))
        return c[s:] - c[:-s]
    c = np.zeros((arr.shape[0] + 1, arr.shape[1] + 1))
    c[1:, 1:] = np.cumsum(np.cumsum(arr, axis=0), axis=1)
    return c[s:, s:] - c[:-s, s:] - c[s:, :-s] + c[:-s, :-s]


def _spread_max(corner_vals, s, out_shape):
    """For each cell, the max of corner_vals over the s-cubes covering it."""
    pad = s - 1
    padded = np.pad(corner_vals, pad, mode="constant", constant_values=-np.inf)
    shift = s // 2
    if corner_vals.ndim == 1:
        filt = maximum_filter1d(padded, size=s, mode="constant", cval=-np.inf)
        return filt[shift:shift + out_shape[0]]
    filt = maximum_filter(padded, size=s, mode="constant", cval=-np.inf)
    return filt[shift:shift + out_shape[0], shift:shift + out_shape[1]]


def all_cubes_maximal(arr, max_side=None):
    """Maximal function over every grid-aligned cube contained in ``arr``'s box.

    ``max_side`` limits the cube sides considered (defaults to the box side).
    """
    arr = np.asarray(arr, dtype=float)
    side = min(arr.shape)
    if max_side is not None:
        side = min(side, max_side)
    out = arr.copy()
    for s in range(2, side + 1):
        avg = _window_sums(arr, s) / s ** arr.ndim
        np.maximum(out, _spread_max(avg, s, arr.shape), out=out)
    return out


def _level_morton(level):
    from .grid import morton_permutation
    return morton_permutation(2, level)


def _batched_window_sums(stack, s):
    d = stack.ndim - 1
    c = stack
    for ax in range(1, d + 1):
        c = np.cumsum(c, axis=ax)
        pad = [(0, 0)] * (d + 1)
        pad[ax] = (1, 0)
        c = np.pad(c, pad)
    if d == 1:
        return c[:, s:] - c[:, :-s]
    return c[:, s:, s:] - c[:, :-s, s:] - c[:, s:, :-s] + c[:, :-s, :-s]


def _batched_all_cubes_maximal(stack, max_side):
    """all_cubes_maximal applied to each stack[b] independently."""
    d = stack.ndim - 1
    shape = stack.shape[1:]
    side = min(min(shape), max_side)
    out = stack.astype(float, copy=True)
    for s in range(2, side + 1):
        avg = _batched_window_sums(stack, s) / s ** d
        padded = np.pad(avg, ((0, 0),) + ((s - 1, s - 1),) * d, constant_values=-np.inf)
        filt = maximum_filter(padded, size=(1,) + (s,) * d, mode="constant", cval=-np.inf)
        shift = s // 2
        sl = (slice(None),) + tuple(slice(shift, shift + n) for n in shape)
        np.maximum(out, filt[sl], out=out)
    return out


def dyadic_maximal(arr, geometry):
    means = level_means(to_morton(arr, geometry), geometry)
    out = means[geometry.L].copy()
    for level in range(geometry.L):
        np.maximum(out, expand_level(means[level], level, geometry), out=out)
    return from_morton(out, geometry)


def maximal_function(w, mode="dyadic"):
    """Hardy-Littlewood maximal function of a nonnegative grid function."""
    arr, geometry = as_scalar(w)
    if np.any(arr < 0):
        raise InvalidInputError("maximal_function expects w >= 0")
    if mode == "dyadic":
        return dyadic_maximal(arr, geometry)
    if mode == "all-cubes":
        return all_cubes_maximal(arr)
    raise DomainError(f"unknown maximal mode {mode!r}")


def _check_weight(arr):
    if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
        raise InvalidInputError("weights must be positive and finite")


def _fujii_all_cubes(stack, geometry):
    """All-cubes Fujii-Wilson constant of each weight in stack (k,) + grid."""
    d, L = geometry.d, geometry.L
    k = stack.shape[0]
    best = np.full(k, -np.inf)
    where = [None] * k
    for level in range(L + 1):
        m = 2 ** (L - level)
        count = 2 ** level
        # rows (weight, cube) with cubes in Morton order
        order = (0,) + tuple(range(1, 2 * d + 1, 2)) + tuple(range(2, 2 * d + 1, 2))
        blocks = stack.reshape((k,) + (count, m) * d).transpose(order)
        blocks = blocks.reshape((k, count ** d) + (m,) * d)
        if d == 2:
            blocks = blocks[:, _level_morton(level)]
        blocks = blocks.reshape((k * count ** d,) + (m,) * d)
        if d == 2:
            # cubes meeting Q but not inside it still see chi_Q w
            blocks = np.pad(blocks, ((0, 0),) + ((m - 1, m - 1),) * d)
            inner = (slice(None),) + (slice(m - 1, 2 * m - 1),) * d
        else:
            # sub-intervals of Q dominate in one dimension
            inner = (slice(None),) * 2
        mx = _batched_all_cubes_maximal(blocks, m)[inner]
        mass = blocks[inner].reshape(k, count ** d, -1).sum(axis=2)
        vals = mx.reshape(k, count ** d, -1).sum(axis=2) / mass
        arg = np.argmax(vals, axis=1)
        top = vals[np.arange(k), arg]
        cubes = geometry.cubes(level)
        for i in np.nonzero(top > best)[0]:
            best[i], where[i] = top[i], cubes[arg[i]]
    return best, where


def fujii_ainfty_many(stack, geometry, mode="all-cubes"):
    """fujii_ainfty of each weight in a (k,) + grid stack; returns (values, cubes)."""
    stack = np.asarray(stack, dtype=float)
    if stack.shape[1:] != geometry.shape:
        raise InvalidInputError("stack does not match the geometry")
    _check_weight(stack)
    if mode == "all-cubes":
        top = stack.reshape(stack.shape[0], -1).max(axis=1)
        return _fujii_all_cubes(stack / top.reshape((-1,) + (1,) * geometry.d), geometry)
    out = [fujii_ainfty(w, mode=mode, return_cube=True) for w in stack]
    return np.array([v for v, _ in out]), [c for _, c in out]


def fujii_ainfty(w, mode="all-cubes", return_cube=False):
    """Fujii-Wilson constant sup_Q w(Q)^-1 * integral_Q M(chi_Q w).

    The supremum runs over dyadic cubes Q.  With ``mode="all-cubes"`` the
    inner maximal function uses every grid-aligned cube in the domain;
    ``mode="dyadic"`` uses dyadic cubes only.
    """
    arr, geometry = as_scalar(w)
    _check_weight(arr)
    # scale invariant; dividing by the max makes constant weights exactly 1
    arr = arr / arr.max()
    best, best_cube = -np.inf, None
    if mode == "dyadic":
        # M_dyadic(chi_Q w) on Q only sees sub-cubes of Q
        means = level_means(to_morton(arr, geometry), geometry)
        for level in range(geometry.L + 1):
            acc = expand_level(means[level], level, geometry)
            run = acc.copy()
            for deeper in range(level + 1, geometry.L + 1):
                np.maximum(run, expand_level(means[deeper], deeper, geometry), out=run)
            # run(x) = max over dyadic sub-cubes of Q(x, level) containing x
            block = 2 ** (geometry.d * (geometry.L - level))
            num = run.reshape(-1, block).sum(axis=1)
            den = means[level] * block
            vals = num / den
            k = int(np.argmax(vals))
            if vals[k] > best:
                best, best_cube = vals[k], geometry.cubes(level)[k]
    elif mode == "all-cubes":
        vals, cubes = _fujii_all_cubes(arr[None], geometry)
        best, best_cube = vals[0], cubes[0]
    else:
        raise DomainError(f"unknown maximal mode {mode!r}")
    best = float(best)
    return (best, best_cube) if return_cube else best


def scalar_ap(w, p, return_cube=False):
    """Dyadic A_p constant sup_Q <w>_Q <w^{-1/(p-1)}>_Q^{p-1}."""
    if p <= 1:
        raise DomainError("p must exceed 1")
    arr, geometry = as_scalar(w)
    _check_weight(arr)
    a = level_means(to_morton(arr, geometry), geometry)
    b = level_means(to_morton(arr ** (-1.0 / (p - 1.0)), geometry), geometry)
    best, best_cube = -np.inf, None
    for level in range(geometry.L + 1):
        vals = a[level] * b[level] ** (p - 1.0)
        k = int(np.argmax(vals))
        if vals[k] > best:
            best, best_cube = float(vals[k]), geometry.cubes(level)[k]
    return (best, best_cube) if return_cube else best


def scalar_a1(w):
    """Dyadic A_1 constant sup_Q <w>_Q / min_Q w."""
    arr, geometry = as_scalar(w)
    _check_weight(arr)
    mort = to_morton(arr, geometry)
    means = level_means(mort, geometry)
    best = -np.inf
    for level in range(geometry.L + 1):
        block = 2 ** (geometry.d * (geometry.L - level))
        mins = mort.reshape(-1, block).min(axis=1)
        best = max(best, float(np.max(means[level] / mins)))
    return best


def reverse_holder_ratio(w, r):
    """sup over dyadic Q of <w^r>_Q^{1/r} / <w>_Q."""
    if r <= 1:
        raise DomainError("r must exceed 1")
    arr, geometry = as_scalar(w)
    _check_weight(arr)
    # rescale to avoid overflow in w**r
    arr = arr / np.max(arr)
    a = level_means(to_morton(arr ** r, geometry), geometry)
    b = level_means(to_morton(arr, geometry), geometry)
    return float(max(np.max(a[k] ** (1.0 / r) / b[k]) for k in range(geometry.L + 1)))


def rh_exponent(ainfty, d):
    """Reverse Holder exponent 1 + 1/(2^{d+11} [w]_{A_inf})."""
    return 1.0 + 1.0 / (2.0 ** (d + 11) * ainfty)


def cz_decompose(phi, q0, height):
    """Maximal dyadic sub-cubes of ``q0`` on which the average of phi exceeds height.

    Returns ``[q0]`` when q0 itself exceeds the height.  Cubes come back in
    (level, Morton) order.
    """
    if not 0.0 < height < 1.0:
        raise DomainError("height must lie in (0, 1)")
    arr, geometry = as_scalar(phi)
    if np.any(arr < 0):
        raise InvalidInputError("phi must be nonnegative")
    means = level_means(to_morton(arr, geometry), geometry)

    def avg(cube):
        start, _ = cube.morton_range(geometry)
        size = cube.side_cells(geometry) ** geometry.d
        return means[cube.level][start // size]

    if avg(q0) > height:
        return [q0]
    selected = []
    frontier = [q0]
    while frontier:
        nxt = []
        for cube in frontier:
            if cube.level == geometry.L:
                continue
            for child in cube.children():
                a = avg(child)
                if a > height:
                    selected.append(child)
                elif a > 0:
                    nxt.append(child)
        frontier = nxt
    selected.sort(key=lambda c: (c.level, c.morton_range(geometry)[0]))
    return selected


def cube_average(arr, cube, geometry):
    """Average of a scalar array over a dyadic cube (tree order)."""
    start, stop = cube.morton_range(geometry)
    block = to_morton(arr, geometry)[start:stop]
    x = block
    while x.shape[0] > 1:
        x = x[0::2] + x[1::2]
    return float(x[0] / block.shape[0])


__all__ = ["fujii_ainfty_many", 
    "MAXIMAL_MODES", "all_cubes_maximal", "dyadic_maximal", "maximal_function",
    "fujii_ainfty", "scalar_ap", "scalar_a1", "reverse_holder_ratio", "rh_exponent",
    "cz_decompose", "cube_average", "DyadicCube",
]
