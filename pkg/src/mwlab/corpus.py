"""Seeded instance generators shared by the CLI, the tests and the acceptance suite.

Inputs are built on a coarse dyadic level and refined by repetition, so
the same seed describes the same continuum function at every depth L.
"""

from dataclasses import dataclass

import numpy as np

from .grid import GridFunction, GridGeometry
from .operators import KernelOperator, omega_profile, rough_kernel
from .weights import generate_weight

COARSE_LEVEL = 3
SPARSE_CORPUS_SIZE = 50

# (r, s) used for the domination bracket of each kernel kind; the exponent
# on f is r, on g is s.
DOMINATION_EXPONENTS = {
    "hilbert": (1.0, 1.0),
    "riesz": (1.0, 1.0),
    "rough": (1.0, 1.5),
    "hormander-example": (2.0, 1.0),
}


def refine(coarse, L, d):
    """Repeat a (2^c,)*d + (n,) array up to level L."""
    c = int(round(np.log2(coarse.shape[0])))
    rep = 2 ** (L - c)
    out = coarse
    for ax in range(d):
        out = np.repeat(out, rep, axis=ax)
    return out


def operator_for(kind, variant=0):
    if kind == "rough":
        names = ("sign-x", "sign-xy", "cos2")
        return rough_kernel(omega_profile(names[variant % 3], 16))
    if kind == "hormander-example":
        return KernelOperator(kind, r_prime=2.0)
    return KernelOperator(kind)


@dataclass
class SparseInstance:
    index: int
    seed: int
    d: int
    n: int
    kind: str
    variant: int
    f_coarse: np.ndarray
    g_coarse: np.ndarray

    @property
    def exponents(self):
        return DOMINATION_EXPONENTS[self.kind]

    def operator(self):
        return operator_for(self.kind, self.variant)

    def functions(self, L):
        geo = GridGeometry(self.d, L)
        return (geo, GridFunction(geo, refine(self.f_coarse, L, self.d)),
                GridFunction(geo, refine(self.g_coarse, L, self.d)))

    def default_L(self):
        return 10 if self.d == 1 else 6

    def to_json(self):
        r, s = self.exponents
        return {"index": self.index, "seed": self.seed, "d": self.d, "n": self.n,
                "kind": self.kind, "variant": self.variant, "r": r, "s": s}


def _coarse_input(rng, d, n, style):
    side = 2 ** COARSE_LEVEL
    shape = (side,) * d
    if style == "block":
        # vector coefficients on a random dyadic sub-cube
        lev = int(rng.integers(0, COARSE_LEVEL))
        w = side >> lev
        corner = [int(rng.integers(0, 2 ** lev)) * w for _ in range(d)]
        out = np.zeros(shape + (n,))
        sl = tuple(slice(c, c + w) for c in corner)
        out[sl] = rng.standard_normal((w,) * d + (n,))
        return out
    if style == "sparse":
        mask = rng.random(shape + (1,)) < 0.3
        return rng.standard_normal(shape + (n,)) * mask
    if style == "rank-one":
        v = rng.standard_normal(n)
        return rng.choice([-1.0, 1.0], size=shape + (1,)) * v
    return rng.standard_normal(shape + (n,))


STYLES = ("block", "sparse", "rank-one", "dense")


def sparse_corpus(seed=0, size=SPARSE_CORPUS_SIZE):
    """Mixed d=1 (n<=3) and d=2 (n=2) instances, deterministic in seed."""
    out = []
    for k in range(size):
        rng = np.random.default_rng([seed, k])
        if k % 5 == 4:
            d, n = 2, 2
            kind = "rough" if k % 10 == 4 else "riesz"
        else:
            d, n = 1, 1 + k % 3
            kind = "hilbert" if k % 2 == 0 else "hormander-example"
        style = STYLES[(k // 5) % len(STYLES)]
        f = _coarse_input(rng, d, n, style)
        if not np.any(f):
            f[(0,) * d] = rng.standard_normal(n)
        g = _coarse_input(rng, d, n, "dense")
        out.append(SparseInstance(k, seed, d, n, kind, k // 10, f, g))
    return out


# --- weights ---------------------------------------------------------------

WEIGHT_CORPUS = (
    ("identity", {}),
    ("scalar-embedded", {"profile": "power", "a": 0.3}),
    ("scalar-embedded", {"profile": "power", "a": -0.4}),
    ("rotating-power", {"a": 0.4, "twist": 2.0}),
    ("random-log-lipschitz", {"lip": 1.0}),
    ("block-diagonal", {"exponents": [0.3, -0.3]}),
)


def weight_corpus(geometry, n=2, seed=0):
    """Named corpus weights at a given geometry."""
    return [generate_weight(kind, geometry, n, dict(params), seed=seed + i)
            for i, (kind, params) in enumerate(WEIGHT_CORPUS)]


__all__ = ["refine", "operator_for", "SparseInstance", "sparse_corpus", "weight_corpus",
           "DOMINATION_EXPONENTS", "WEIGHT_CORPUS", "COARSE_LEVEL"]
