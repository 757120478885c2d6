"""Sweeps of the auxiliary inequalities: exponent bookkeeping in exact
rationals, the SPD power inequalities on random matrices, and the scalar
and matrix reverse Holder bounds on the weight corpus."""

import logging
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np

from .errors import DomainError
from .scalar import fujii_ainfty, reverse_holder_ratio
from .spd import frac_power, op_norm, random_spd
from .weights import ainfty_directions, ainfty_sc, matrix_rh_check, rh_matrix_exponent

log = logging.getLogger(__name__)

GRID_K = 64
GRID_DEN = 8
TAUS = (3, 4, 8)
KAPPAS = (1, 2, 4, 16)
ALPHAS = tuple(k / 10 for k in range(1, 10))
MP_DIGITS = 40


def conj(x):
    """Exact Holder conjugate of a Fraction > 1."""
    return x / (x - 1)


@dataclass
class GridSpec:
    k_max: int = GRID_K
    den: int = GRID_DEN
    taus: tuple = TAUS
    kappas: tuple = KAPPAS

    def values(self):
        """1 + k/den for k = 1..k_max."""
        return [1 + Fraction(k, self.den) for k in range(1, self.k_max + 1)]

    def to_json(self):
        return {"k_max": self.k_max, "den": self.den, "taus": list(self.taus),
                "kappas": list(self.kappas)}


@dataclass
class ClaimResult:
    claim: str
    checked: int = 0
    skipped: int = 0
    violations: list = field(default_factory=list)
    worst_margin: float = float("inf")   # min over points of (bound - value) / bound

    @property
    def passed(self):
        return not self.violations

    def record(self, point, value, bound):
        self.checked += 1
        margin = float((bound - value) / bound)
        self.worst_margin = min(self.worst_margin, margin)
        if value > bound:
            self.violations.append({"point": {k: str(v) for k, v in point.items()},
                                    "value": float(value), "bound": float(bound)})

    def to_json(self, max_violations=20):
        return {"claim": self.claim, "checked": self.checked, "skipped": self.skipped,
                "violation_count": len(self.violations),
                "violations": self.violations[:max_violations],
                "worst_margin": self.worst_margin, "passed": self.passed}


# --- exponent lemmas ------------------------------------------------------------

def param_conjugate_bound(rho, beta):
    """(rho'/(rho beta)')' with its closed form (rho beta - 1)/(beta - 1) and rho beta'."""
    lhs = conj(conj(rho) / conj(rho * beta))
    closed = (rho * beta - 1) / (beta - 1)
    return lhs, closed, rho * conj(beta)


def param_split_identity(rho, beta):
    """Both sides of 1/(rho beta)' = 1/beta' + 1/(rho' beta)."""
    return 1 / conj(rho * beta), 1 / conj(beta) + 1 / (conj(rho) * beta)


def param_power_bound(rho, gamma, tau, kappa):
    """[(rho'/(rho beta)')']^{1/(gamma beta)'} against 2 e rho tau kappa^{1/gamma'}
    with beta = 1 + 1/(tau kappa); returns (beta', value, bound) as mpf."""
    beta = 1 + Fraction(1, tau * kappa)
    base = (rho * beta - 1) / (beta - 1)
    expo = 1 / conj(gamma * beta)
    with mpmath.workdps(MP_DIGITS):
        value = mpmath.power(_mpf(base), _mpf(expo))
        bound = 2 * mpmath.e * _mpf(rho) * tau * mpmath.power(kappa, _mpf(1 / conj(gamma)))
    return conj(beta), value, bound


def param_second(p, tau, delta):
    """Exponent lemma with beta = 1 + 1/(((p'+1)/2) tau delta) and s beta = 1 + 1/(tau delta).

    Returns (premise_gap, identity_lhs, identity_rhs, value, closed, bound):
    premise_gap = p' - s (p beta)' must be positive, identity is
    (p beta - 1) - s (p - 1) beta = 1/((p'+1) tau delta), value is
    (p'/(s (p beta)'))' with closed form (p beta - 1)(p'+1) tau delta, and
    bound = 2 p tau delta.
    """
    pc = conj(p)
    td = tau * delta
    beta = 1 + 1 / ((pc + 1) / 2 * td)
    s = (1 + Fraction(1, td)) / beta
    gap = pc - s * conj(p * beta)
    ident_l = (p * beta - 1) - s * (p - 1) * beta
    ident_r = 1 / ((pc + 1) * td)
    value = conj(pc / (s * conj(p * beta))) if gap > 0 else None
    closed = (p * beta - 1) * (pc + 1) * td
    return gap, ident_l, ident_r, value, closed, 2 * p * td


def _mpf(x):
    return mpmath.mpf(x.numerator) / x.denominator


@dataclass
class ParamReport:
    grid: dict
    claims: list

    @property
    def points(self):
        return sum(c.checked for c in self.claims)

    @property
    def passed(self):
        return all(c.passed for c in self.claims)

    def to_json(self):
        return {"grid": self.grid, "points": self.points, "passed": self.passed,
                "claims": [c.to_json() for c in self.claims]}


def param_lemma_checks(grid=None):
    """Exact-rational sweep of the four exponent claims over the grid.

    (i) conjugate bound and its closed form, (ii) the split identity,
    (iii) the power bound (mpmath at 40 digits, both sides irrational),
    (iv) the second lemma's premise identity and conclusion.  rho, beta,
    gamma and p range over the grid values; tau over taus; kappa and delta
    over kappas.
    """
    grid = grid or GridSpec()
    vals = grid.values()
    c1 = ClaimResult("(i) (rho'/(rho beta)')' <= rho beta'")
    c1c = ClaimResult("(i) closed form (rho beta - 1)/(beta - 1)")
    c2 = ClaimResult("(ii) 1/(rho beta)' = 1/beta' + 1/(rho' beta)")
    c3b = ClaimResult("(iii) beta' = tau kappa + 1")
    c3 = ClaimResult("(iii) power bound <= 2 e rho tau kappa^(1/gamma')")
    c4i = ClaimResult("(iv) premise identity")
    c4 = ClaimResult("(iv) (p'/(s (p beta)'))' <= 2 p tau delta")
    c4c = ClaimResult("(iv) closed form (p beta - 1)(p'+1) tau delta")
    for rho in vals:
        for beta in vals:
            pt = {"rho": rho, "beta": beta}
            lhs, closed, bound = param_conjugate_bound(rho, beta)
            c1.record(pt, lhs, bound)
            _exact(c1c, pt, lhs, closed)
            a, b = param_split_identity(rho, beta)
            _exact(c2, pt, a, b)
    for tau in grid.taus:
        for kappa in grid.kappas:
            bc, _, _ = param_power_bound(vals[0], vals[0], tau, kappa)
            _exact(c3b, {"tau": tau, "kappa": kappa}, bc, tau * kappa + 1)
            for rho in vals:
                for gamma in vals:
                    _, value, bound = param_power_bound(rho, gamma, tau, kappa)
                    c3.record({"rho": rho, "gamma": gamma, "tau": tau, "kappa": kappa},
                              value, bound)
            for p in vals:
                pt = {"p": p, "tau": tau, "delta": kappa}
                gap, il, ir, value, closed, bound = param_second(p, tau, kappa)
                _exact(c4i, pt, il, ir)
                if gap <= 0:
                    c4.skipped += 1
                    log.info("param (iv): premise p' > s (p beta)' fails at %s", pt)
                    continue
                c4.record(pt, value, bound)
                _exact(c4c, pt, value, closed)
    return ParamReport(grid.to_json(), [c1, c1c, c2, c3b, c3, c4i, c4, c4c])


def _exact(claim, point, a, b):
    """Record an identity: the violation margin is the exact difference."""
    claim.checked += 1
    if a != b:
        claim.violations.append({"point": {k: str(v) for k, v in point.items()},
                                 "value": str(a), "bound": str(b)})
    else:
        claim.worst_margin = min(claim.worst_margin, 0.0)


# --- SPD power inequalities ------------------------------------------------------------

@dataclass
class SweepReport:
    name: str
    pairs: int
    checks: int
    violations: int
    worst_ratio: float          # max lhs / rhs
    seconds: float = 0.0

    @property
    def passed(self):
        return self.violations == 0

    def to_json(self):
        return {"name": self.name, "pairs": self.pairs, "checks": self.checks,
                "violations": self.violations, "worst_ratio": self.worst_ratio,
                "passed": self.passed}


SWEEP_REL_TOL = 1e-9


def _sweep_matrices(pairs, seed, max_n, max_cond):
    """Pairs split evenly over n = 1..max_n, reproducible from seed."""
    rng = np.random.default_rng(seed)
    out = []
    per = -(-pairs // max_n)
    for n in range(1, max_n + 1):
        count = min(per, pairs - per * (n - 1))
        if count <= 0:
            break
        A = random_spd(rng, n, max_cond, size=count)
        B = random_spd(rng, n, max_cond, size=count)
        e = rng.standard_normal((count, n))
        e /= np.linalg.norm(e, axis=1, keepdims=True)
        out.append((n, A, B, e))
    return out


def bownik_sweep(pairs=10_000, seed=0, max_n=4, max_cond=1e6, alphas=ALPHAS):
    """|A^a B^a| <= n |AB|^a on random pairs for every alpha (batched)."""
    import time
    t0 = time.perf_counter()
    checks = bad = 0
    worst = 0.0
    for n, A, B, _ in _sweep_matrices(pairs, seed, max_n, max_cond):
        ab = op_norm(A @ B)
        for a in alphas:
            lhs = op_norm(frac_power(A, a) @ frac_power(B, a))
            rhs = n * ab ** a
            ratio = lhs / rhs
            checks += ratio.size
            bad += int(np.sum(ratio > 1 + SWEEP_REL_TOL))
            worst = max(worst, float(np.max(ratio)))
    return SweepReport("bownik", pairs, checks, bad, worst, time.perf_counter() - t0)


def holder_mccarthy_sweep(pairs=10_000, seed=0, max_n=4, max_cond=1e6, alphas=ALPHAS):
    """|A^a e| <= |A e|^a on the same matrices with random unit e."""
    import time
    t0 = time.perf_counter()
    checks = bad = 0
    worst = 0.0
    for _, A, _, e in _sweep_matrices(pairs, seed, max_n, max_cond):
        Ae = np.linalg.norm(np.einsum("kij,kj->ki", A, e), axis=1)
        for a in alphas:
            lhs = np.linalg.norm(np.einsum("kij,kj->ki", frac_power(A, a), e), axis=1)
            ratio = lhs / Ae ** a
            checks += ratio.size
            bad += int(np.sum(ratio > 1 + SWEEP_REL_TOL))
            worst = max(worst, float(np.max(ratio)))
    return SweepReport("holder-mccarthy", pairs, checks, bad, worst, time.perf_counter() - t0)


# --- reverse Holder -----------------------------------------------------------------

def rh_exponent(ainfty, d):
    return 1.0 + 1.0 / (2.0 ** (d + 11) * ainfty)


@dataclass
class RHRecord:
    weight: str
    d: int
    n: int
    scalar_worst: float
    matrix_worst: float
    matrix_bound: float

    @property
    def passed(self):
        return self.scalar_worst <= 2.0 and self.matrix_worst <= self.matrix_bound

    def to_json(self):
        return {"weight": self.weight, "d": self.d, "n": self.n,
                "scalar_worst": self.scalar_worst, "matrix_worst": self.matrix_worst,
                "matrix_bound": self.matrix_bound, "passed": self.passed}


def rh_check_weight(W, p=2.0, n_dirs=None, extra_matrices=2, seed=0):
    """Scalar RH on |W^{1/p} e|^p along probe directions, and the matrix RH
    ratio at the matrix exponent for A = I and a few random SPD matrices."""
    if p < 1:
        raise DomainError("p must be >= 1")
    d, n = W.geometry.d, W.n
    dirs = ainfty_directions(n, 8 * n if n_dirs is None else n_dirs)
    field = W.power(1.0 / p)
    worst_s = 0.0
    for e in dirs:
        w = np.sum(np.einsum("...ij,j->...i", field, e) ** 2, axis=-1) ** (p / 2.0)
        r = rh_exponent(fujii_ainfty(w), d)
        worst_s = max(worst_s, reverse_holder_ratio(w, r))
    rm = rh_matrix_exponent(ainfty_sc(W, p, n_dirs=n_dirs), d)
    rng = np.random.default_rng(seed)
    mats = [np.eye(n)] + [random_spd(rng, n, 1e3) for _ in range(extra_matrices)]
    worst_m = max(matrix_rh_check(W, p, A, rm) for A in mats)
    return RHRecord(W.kind, d, n, float(worst_s), float(worst_m), 2.0 * n)


__all__ = ["GridSpec", "ClaimResult", "ParamReport", "param_lemma_checks",
           "param_conjugate_bound", "param_split_identity", "param_power_bound",
           "param_second", "SweepReport", "bownik_sweep", "holder_mccarthy_sweep",
           "RHRecord", "rh_check_weight", "rh_exponent", "conj"]
