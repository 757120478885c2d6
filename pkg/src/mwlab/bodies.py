"""Convex body averages <<f>>_{p,Q} through their support functions.

The body {avg_Q(f phi) : ||phi||_{L^{p'}(Q), normalized} <= 1} is never
stored.  Its support function is the normalized L^p norm of <f, e> on Q,
which is exact and cheap, and its ellipsoidal surrogate comes from the same
rounding routine as reducing matrices.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBodyError, DomainError, InvalidInputError
from .grid import Box, DyadicCube, GridFunction
from .john import round_norm
from .spd import jacobi_eigh, op_norm

RANK_TOL = 1e-12
PRODUCT_ROUNDS = 20
PRODUCT_STARTS = 4


def _region_box(region, geometry):
    if isinstance(region, DyadicCube):
        return region.box(geometry)
    if isinstance(region, Box):
        return region
    raise InvalidInputError("region must be a DyadicCube or a Box")


def _dual_power(t, p):
    """phi in the normalized L^{p'} unit ball attaining mean(t * phi)."""
    if p == 1:
        return np.sign(t)
    h = np.mean(np.abs(t) ** p) ** (1.0 / p)
    if h == 0:
        return np.zeros_like(t)
    return np.sign(t) * (np.abs(t) / h) ** (p - 1.0)


class ConvexBodyAverage:
    """<<f>>_{p,Q} for a vector grid function f, a cube or box Q and p >= 1."""

    def __init__(self, f, region, p):
        if p < 1:
            raise DomainError("p must be >= 1")
        if isinstance(f, GridFunction):
            self.values = f.restrict(_region_box(region, f.geometry))
        else:
            self.values = np.asarray(f, dtype=float).reshape(-1, np.shape(f)[-1])
        self.region = region
        self.p = float(p)
        self.n = self.values.shape[1]
        gram = self.values.T @ self.values / self.values.shape[0]
        w, v = jacobi_eigh(gram)
        keep = w > RANK_TOL * max(float(w[-1]), np.finfo(float).tiny)
        if w[-1] <= 0:
            keep[:] = False
        self.gram = gram
        self.rank = int(np.sum(keep))
        self.basis = v[:, keep][:, ::-1]
        self._surrogate = None

    def support(self, e):
        """h(e) = (mean_Q |<f, e>|^p)^{1/p}; accepts (n,) or (m, n)."""
        e = np.asarray(e, dtype=float)
        t = self.values @ np.atleast_2d(e).T
        if np.isinf(self.p):
            out = np.max(np.abs(t), axis=0)
        else:
            out = np.mean(np.abs(t) ** self.p, axis=0) ** (1.0 / self.p)
        return out if e.ndim == 2 else float(out[0])

    def support_point(self, e):
        """A point a of the body with <a, e> = h(e)."""
        t = self.values @ np.asarray(e, dtype=float)
        phi = _dual_power(t, self.p)
        return self.values.T @ phi / self.values.shape[0]

    def surrogate(self):
        """(M, factor) with M B subset K subset factor * M B; M is PSD of the
        body's rank, acting on its span."""
        if self._surrogate is None:
            r = self.rank
            if r == 0:
                self._surrogate = (np.zeros((self.n, self.n)), 1.0, None)
            else:
                B = self.basis
                fit = round_norm(lambda dirs: self.support(dirs @ B.T), r)
                M = B @ fit.matrix @ B.T
                self._surrogate = (0.5 * (M + M.T), fit.factor, fit)
        return self._surrogate[0], self._surrogate[1]

    def ellipsoid_surrogate(self):
        """Full-rank surrogate; degenerate bodies raise with their span."""
        if self.rank < self.n:
            raise DegenerateBodyError(self.rank, self.basis)
        return self.surrogate()[0]

    def surrogate_fit(self):
        self.surrogate()
        return self._surrogate[2]


def support(body, e):
    return body.support(e)


def ellipsoid_surrogate(body):
    return body.ellipsoid_surrogate()


@dataclass
class ProductBracket:
    lower: float
    upper: float
    surrogate_value: float
    inflation: float

    def as_tuple(self):
        return self.lower, self.upper


def body_product_bracket(A, B, seed=0, rounds=PRODUCT_ROUNDS, starts=PRODUCT_STARTS):
    """Bracket for sup{<a, b> : a in A, b in B}.

    Lower: alternating maximisation (given b the best a is a support point
    of A in direction b, and vice versa) from ``starts`` random directions
    plus one direction taken from the surrogates.  Upper: if K subset c M B
    for both bodies, the sup is at most c_A c_B |M_A M_B|; the inflation is
    max(n, c_A c_B) so the bound stays valid when c_A c_B exceeds n by the
    solver tolerance.
    """
    if A.n != B.n:
        raise InvalidInputError("bodies must share the value dimension")
    n = A.n
    if A.rank == 0 or B.rank == 0:
        return ProductBracket(0.0, 0.0, 0.0, 1.0)
    if n == 1:
        val = A.support(np.ones(1)) * B.support(np.ones(1))
        return ProductBracket(val, val, val, 1.0)
    MA, cA = A.surrogate()
    MB, cB = B.surrogate()
    prod = MA @ MB
    sval = float(op_norm(prod))
    inflation = max(float(n), cA * cB)
    upper = inflation * sval
    rng = np.random.default_rng(seed)
    inits = [rng.standard_normal(n) for _ in range(starts)]
    _, _, vt = np.linalg.svd(prod)
    inits.append(MB @ vt[0])
    lower = 0.0
    for e in inits:
        if not np.any(e):
            continue
        for _ in range(rounds):
            a = A.support_point(e)
            if not np.any(a):
                break
            lower = max(lower, B.support(a))
            e = B.support_point(a)
            if not np.any(e):
                break
            lower = max(lower, A.support(e))
    return ProductBracket(float(lower), float(max(upper, lower)), sval, inflation)


@dataclass
class JohnNormalization:
    """f = matrix @ normalized on the region; normalized's body is John-rounded."""

    matrix: np.ndarray
    inverse: np.ndarray
    normalized: GridFunction
    rank: int
    basis: np.ndarray
    factor: float

    @property
    def degenerate(self):
        return self.rank < self.matrix.shape[0]


def john_normalize(f, region, p):
    """Rescale f by the inverse surrogate of <<f>>_{p,region}.

    The John ellipsoid of the normalized body is the unit ball (on the span
    for degenerate bodies), so every coordinate average obeys
    <f~_j>_{p,Q} <= factor ~ sqrt(n).
    """
    body = ConvexBodyAverage(f, region, p)
    M, factor = body.surrogate()
    if body.rank == 0:
        inv = np.zeros_like(M)
    else:
        B = body.basis
        # inverse on the span, zero on its complement
        inv = B @ np.linalg.inv(B.T @ M @ B) @ B.T
    vals = f.values @ inv.T
    return JohnNormalization(M, inv, GridFunction(f.geometry, vals), body.rank,
                             body.basis, factor)


__all__ = ["ConvexBodyAverage", "support", "ellipsoid_surrogate", "body_product_bracket",
           "ProductBracket", "john_normalize", "JohnNormalization"]
