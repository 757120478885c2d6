"""Small symmetric positive definite matrix algebra.

Everything here works on stacks of matrices (shape ``(..., n, n)``) so that
the per-cell fields of a matrix weight can be processed in one call.  The
eigensolver is a cyclic Jacobi iteration written in numpy; it is exact
enough for n <= 8 and gives the same answer regardless of LAPACK build.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, IllConditionedError, InvalidInputError

MAX_DIM = 8
JACOBI_TOL = 1e-14
SYM_TOL = 1e-12
COND_CAP = 1e8
ILL_CONDITIONED = 1e-14


def _check_square(a):
    a = np.asarray(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise InvalidInputError(f"expected square matrices, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("matrix has non-finite entries")
    return a


def jacobi_eigh(a, tol=JACOBI_TOL, max_sweeps=60):
    """Eigen-decomposition of symmetric matrices by cyclic Jacobi rotations.

    Parameters
    ----------
    a : array_like, shape (..., n, n)
        Symmetric matrices. Only the symmetric part is used.
    tol : float
        Sweeps stop once the off-diagonal Frobenius mass is below
        ``tol`` times the full Frobenius norm, for every matrix in the stack.

    Returns
    -------
    w : ndarray, shape (..., n)
        Eigenvalues in ascending order.
    v : ndarray, shape (..., n, n)
        Orthonormal eigenvectors as columns, ``a = v @ diag(w) @ v.T``.
    """
    a = _check_square(a)
    batch_shape = a.shape[:-2]
    n = a.shape[-1]
    a = a.reshape(-1, n, n)
    a = 0.5 * (a + np.swapaxes(a, 1, 2))
    v = np.broadcast_to(np.eye(n), a.shape).copy()

    if n > 1:
        iu = np.triu_indices(n, 1)
        for _ in range(max_sweeps):
            total = np.sqrt(np.einsum("bij,bij->b", a, a))
            off = np.sqrt(2.0 * np.sum(a[:, iu[0], iu[1]] ** 2, axis=1))
            if np.all(off <= tol * total):
                break
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = a[:, p, q]
                    active = apq != 0.0
                    if not np.any(active):
                        continue
                    safe = np.where(active, apq, 1.0)
                    theta = (a[:, q, q] - a[:, p, p]) / (2.0 * safe)
                    sign = np.where(theta >= 0.0, 1.0, -1.0)
                    t = sign / (np.abs(theta) + np.hypot(1.0, theta))
                    t = np.where(active, t, 0.0)
                    c = 1.0 / np.sqrt(1.0 + t * t)
                    s = t * c
                    # columns p, q
                    ap = a[:, :, p].copy()
                    aq = a[:, :, q]
                    a[:, :, p] = c[:, None] * ap - s[:, None] * aq
                    a[:, :, q] = s[:, None] * ap + c[:, None] * aq
                    # rows p, q
                    ap = a[:, p, :].copy()
                    aq = a[:, q, :]
                    a[:, p, :] = c[:, None] * ap - s[:, None] * aq
                    a[:, q, :] = s[:, None] * ap + c[:, None] * aq
                    vp = v[:, :, p].copy()
                    vq = v[:, :, q]
                    v[:, :, p] = c[:, None] * vp - s[:, None] * vq
                    v[:, :, q] = s[:, None] * vp + c[:, None] * vq

    w = np.diagonal(a, axis1=1, axis2=2).copy()
    order = np.argsort(w, axis=1, kind="stable")
    w = np.take_along_axis(w, order, axis=1)
    v = np.take_along_axis(v, order[:, None, :], axis=2)
    return w.reshape(batch_shape + (n,)), v.reshape(batch_shape + (n, n))


def validate_spd(a, cond_cap=COND_CAP):
    """Check symmetry, positivity and conditioning; return the eigen-pair."""
    a = _check_square(a)
    if a.shape[-1] > MAX_DIM:
        raise InvalidInputError(f"dimension {a.shape[-1]} exceeds {MAX_DIM}")
    scale = np.max(np.abs(a), axis=(-2, -1), keepdims=True)
    asym = np.abs(a - np.swapaxes(a, -1, -2))
    if np.any(asym > SYM_TOL * np.maximum(scale, np.finfo(float).tiny)):
        raise InvalidInputError("matrix is not symmetric")
    w, v = jacobi_eigh(a)
    if np.any(w[..., 0] <= 0.0):
        raise InvalidInputError("matrix is not positive definite")
    if cond_cap is not None and np.any(w[..., -1] > cond_cap * w[..., 0]):
        raise IllConditionedError(f"condition number exceeds {cond_cap:g}")
    return w, v


def op_norm(a):
    """Operator (spectral) norm of a square matrix or a stack of them.

    Symmetric input returns the largest absolute eigenvalue; anything else
    goes through the Gram matrix ``a.T @ a``.
    """
    a = _check_square(a)
    if np.array_equal(a, np.swapaxes(a, -1, -2)):
        w, _ = jacobi_eigh(a)
        return np.maximum(np.abs(w[..., 0]), np.abs(w[..., -1]))
    gram = np.swapaxes(a, -1, -2) @ a
    w, _ = jacobi_eigh(gram)
    return np.sqrt(np.maximum(w[..., -1], 0.0))


def power_from_eigh(w, v, alpha):
    """Rebuild ``v diag(w**alpha) v.T`` from a decomposition."""
    scaled = v * (w ** alpha)[..., None, :]
    out = scaled @ np.swapaxes(v, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def frac_power(a, alpha):
    """Spectral power ``A**alpha`` of SPD matrices (negative alpha allowed).

    Raises IllConditionedError when an eigenvalue is below 1e-14 * trace.
    """
    a = _check_square(a)
    w, v = jacobi_eigh(a)
    trace = np.sum(w, axis=-1)
    if np.any(w[..., 0] <= ILL_CONDITIONED * trace):
        raise IllConditionedError("eigenvalue below 1e-14 * trace")
    return power_from_eigh(w, v, alpha)


def bownik_bound(a, b, alpha):
    """Compare ``|A^a B^a|`` with ``n |AB|^a``.

    Returns ``(lhs, rhs)``; the inequality lhs <= rhs is the claim.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    validate_spd(a, cond_cap=None)
    validate_spd(b, cond_cap=None)
    n = np.asarray(a).shape[-1]
    lhs = float(op_norm(frac_power(a, alpha) @ frac_power(b, alpha)))
    rhs = float(n * op_norm(np.asarray(a, float) @ np.asarray(b, float)) ** alpha)
    return lhs, rhs


def holder_mccarthy_check(a, alpha, e):
    """``(|A^alpha e|, |A e|^alpha)`` for a unit vector ``e``."""
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    e = np.asarray(e, dtype=float)
    if abs(np.linalg.norm(e) - 1.0) > 1e-12:
        raise DomainError("e must be a unit vector")
    validate_spd(a, cond_cap=None)
    lhs = float(np.linalg.norm(frac_power(a, alpha) @ e))
    rhs = float(np.linalg.norm(np.asarray(a, float) @ e) ** alpha)
    return lhs, rhs


@dataclass(frozen=True)
class SpdMatrix:
    """Validated SPD matrix with JSON round-tripping."""

    entries: np.ndarray

    def __post_init__(self):
        arr = np.array(self.entries, dtype=float)
        if arr.ndim != 2:
            raise InvalidInputError("SpdMatrix needs a 2-d array")
        validate_spd(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def dim(self):
        return self.entries.shape[0]

    def to_json(self):
        return {"dim": self.dim, "entries": self.entries.tolist()}

    @classmethod
    def from_json(cls, obj):
        entries = np.asarray(obj["entries"], dtype=float)
        if entries.shape != (obj["dim"], obj["dim"]):
            raise InvalidInputError("dim field does not match entries")
        return cls(entries)


def random_spd(rng, n, max_cond=1e6, size=None):
    """Random SPD matrices with log-uniform spectrum up to ``max_cond``."""
    shape = () if size is None else (size,)
    q, _ = np.linalg.qr(rng.standard_normal(shape + (n, n)))
    logs = rng.uniform(0.0, np.log(max_cond), size=shape + (n,))
    if n > 1:
        # pin the extremes so the condition number is actually reached sometimes
        logs[..., 0] = 0.0
    lam = np.exp(logs)
    return power_from_eigh(lam, q, 1.0)
