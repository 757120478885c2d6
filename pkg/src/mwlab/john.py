"""Ellipsoidal rounding of symmetric norms via minimum-volume enclosing ellipsoids.

Given a norm rho on R^n (known only through evaluations), sample the
boundary points e / rho(e) of its unit ball in deterministic probe
directions and fit the centred minimum-volume ellipsoid around them with
Khachiyan's barycentric ascent (Todd-Yildirim away steps included).

Whatever weights the solver stops at, two facts hold and are used as a
certificate:

* the inner ellipsoid {x : x^T X^{-1} x <= 1} lies in the convex hull of
  the (symmetrised) sample points, hence in the unit ball of rho;
* the outer ellipsoid {x : x^T X^{-1} x <= kappa} contains every sample,
  where kappa is the largest leverage score.

So with ``matrix = (X^{-1} / kappa)^{1/2}`` we get |matrix e| <= rho(e) on
every probe, and rho(e) <= sqrt(kappa) |matrix e| for *all* e.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc
from statistics import NormalDist

from .errors import NumericError
from .spd import jacobi_eigh, power_from_eigh

MVEE_TOL = 1e-9
MVEE_MAX_ITER = 1_000
# barrier finisher after MVEE_MAX_ITER coordinate steps
BARRIER_MAX_NEWTON = 2_000
BARRIER_CENTERING = 200
BARRIER_GROWTH = 8.0
BARRIER_HANDOFF = 1e-5
PROBES_PER_DIM = 64


def probe_directions(n, count=None):
    """Deterministic unit probe directions, one per antipodal pair.

    Axes first, then normalized pair diagonals, then low-discrepancy
    directions.  For n = 2 the set is the uniform angle grid, which already
    contains axes and diagonals when ``count`` is divisible by 4.  Prefixes
    are stable: a larger ``count`` extends a smaller one only for n >= 3.
    """
    count = PROBES_PER_DIM * n if count is None else count
    if n == 1:
        return np.ones((1, 1))
    if n == 2:
        theta = np.pi * np.arange(count) / count
        return np.column_stack([np.cos(theta), np.sin(theta)])
    dirs = [np.eye(n)[i] for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            for sgn in (1.0, -1.0):
                v = np.zeros(n)
                v[i], v[j] = 1.0, sgn
                dirs.append(v / np.sqrt(2.0))
    extra = max(count - len(dirs), 0)
    if extra:
        dirs.extend(halton_directions(n, extra))
    return np.array(dirs[:max(count, n)])


def halton_directions(n, count):
    """Unit vectors from an unscrambled Halton sequence pushed through the
    inverse normal CDF; prefix-stable in ``count``."""
    pts = qmc.Halton(d=n, scramble=False).random(count + 1)[1:]
    inv = np.vectorize(NormalDist().inv_cdf)
    g = inv(np.clip(pts, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


@dataclass
class MveeResult:
    shape: np.ndarray          # X = sum u_k x_k x_k^T
    weights: np.ndarray
    kappa: float               # max leverage x^T X^{-1} x
    iterations: int
    trace: list = field(default_factory=list)


def _leverages(P, u):
    X = (P * u[:, None]).T @ P
    Xi = np.linalg.inv(X)
    Xi = 0.5 * (Xi + Xi.T)
    return X, Xi, np.einsum("ki,ij,kj->k", P, Xi, P)


def _reduce_support(P, u, S):
    """Caratheodory reduction: while the outer products x x^T on S are
    linearly dependent, move along a dependency until a weight vanishes.

    Moving along a dependency v keeps X = sum u_k x_k x_k^T fixed while the
    total mass changes by -t sum(v); after renormalising, log det X can only
    grow, so the step is never harmful.
    """
    n = P.shape[1]
    iu = np.triu_indices(n)
    S = list(S)
    while len(S) > 1:
        Q = P[S]
        A = np.einsum("ki,kj->kij", Q, Q)[:, iu[0], iu[1]]
        _, sv, vt = np.linalg.svd(A.T, full_matrices=True)
        rank = int(np.sum(sv > 1e-12 * sv[0]))
        if rank == len(S):
            break
        v = vt[rank:][0]
        if np.sum(v) < 0 or (np.sum(v) == 0 and np.max(v) <= 0):
            v = -v
        pos = v > 0
        us = u[S]
        t = float(np.min(us[pos] / v[pos]))
        us = np.maximum(us - t * v, 0.0)
        drop = int(np.flatnonzero(pos)[np.argmin(u[S][pos] / v[pos])])
        us[drop] = 0.0
        u[S] = us
        u /= u.sum()
        S = [idx for idx in S if u[idx] > 0]
    return S


def _newton_on_support(P, u, support, max_steps=60):
    """Maximise log det sum_{k in S} u_k x_k x_k^T over the simplex on S.

    Newton steps on the affine hull of the simplex; a step that would make
    a weight negative is cut at the boundary and that point leaves S.
    """
    S = list(support)
    for _ in range(max_steps):
        S = _reduce_support(P, u, S)
        Q = P[S]
        _, Xi, g = _leverages(Q, u[S])
        G = Q @ Xi @ Q.T
        H = G * G                      # minus the Hessian
        k = len(S)
        K = np.zeros((k + 1, k + 1))
        K[:k, :k] = H
        K[:k, k] = 1.0
        K[k, :k] = 1.0
        rhs = np.concatenate([g, [0.0]])
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        delta = sol[:k]
        if np.max(np.abs(delta)) < 1e-15:
            break
        us = u[S]
        neg = delta < 0
        alpha = 1.0
        if np.any(neg):
            alpha = min(1.0, float(np.min(-us[neg] / delta[neg])))
        new = us + alpha * delta
        u[S] = np.maximum(new, 0.0)
        keep = [idx for idx, val in zip(S, u[S]) if val > 1e-14]
        dropped = set(S) - set(keep)
        for idx in dropped:
            u[idx] = 0.0
        u /= u.sum()
        S = keep
        if alpha == 1.0 and np.max(np.abs(delta)) < 1e-13:
            break
    return S


def mvee_centered(points, tol=MVEE_TOL, max_iter=MVEE_MAX_ITER, warm=None):
    """Centred minimum-volume ellipsoid of the symmetric set {+-points}.

    Barycentric (Khachiyan / Todd-Yildirim) coordinate steps from a
    Kumar-Yildirim start locate the support; Newton steps on the support
    then finish, and any point whose leverage exceeds ``n*(1+tol)`` is added
    back.  After ``max_iter`` coordinate steps a log-barrier Newton solve
    takes over; it handles the many-nearly-active-points case (norms close
    to Euclidean) where coordinate ascent crawls.
    """
    P = np.asarray(points, dtype=float)
    m, n = P.shape
    if n == 1:
        k = int(np.argmax(np.abs(P[:, 0])))
        u = np.zeros(m)
        u[k] = 1.0
        return MveeResult(np.array([[P[k, 0] ** 2]]), u, 1.0, 0, [])
    warm = 20 * n if warm is None else warm
    u = np.zeros(m)
    u[_spanning_subset(P)] = 1.0 / n
    trace = []
    it = 0
    phase_steps = warm
    newton = True
    while it <= max_iter:
        try:
            _, Xi, g = _leverages(P, u)
        except np.linalg.LinAlgError as exc:
            raise NumericError("singular shape matrix in MVEE", trace) from exc
        for _ in range(phase_steps):
            j = int(np.argmax(g))
            gs = np.where(u > 0, g, np.inf)
            i = int(np.argmin(gs))
            up = g[j] / n - 1.0
            down = 1.0 - g[i] / n
            if up <= tol:
                break
            if up >= down:
                k, step = j, (g[j] - n) / (n * (g[j] - 1.0))
            else:
                limit = u[i] / (1.0 - u[i])
                step = min((n - g[i]) / (n * (g[i] - 1.0)), limit) if g[i] > 1.0 else limit
                k, step = i, -step
            z = Xi @ P[k]
            denom = (1.0 - step) + step * g[k]
            g = (g - step * (P @ z) ** 2 / denom) / (1.0 - step)
            Xi = (Xi - step * np.outer(z, z) / denom) / (1.0 - step)
            u *= 1.0 - step
            u[k] += step
            if u[k] < 1e-300:
                u[k] = 0.0
            it += 1
        X, Xi, g = _leverages(P, u)
        kappa = float(np.max(g))
        trace.append((it, kappa / n - 1.0))
        if kappa / n - 1.0 <= tol:
            return MveeResult(X, u, kappa, it, trace)
        gap = kappa / n - 1.0
        if newton and len(trace) > 3 and gap > 0.5 * trace[-4][1]:
            # Newton polish stalled (singular Hessian on a flat face); its
            # iterate can trap coordinate steps, so restart without it.
            newton = False
            u = np.zeros(m)
            u[_spanning_subset(P)] = 1.0 / n
            phase_steps = 50
            continue
        if not newton:
            continue
        # polish on the current support plus the worst violators
        support = set(np.flatnonzero(u > 0).tolist())
        support.update(np.argsort(g)[-n:].tolist())
        for idx in support:
            if u[idx] == 0.0:
                u[idx] = 1e-6
        u /= u.sum()
        _newton_on_support(P, u, sorted(support))
        phase_steps = 4 * n
        it += 1
    return _mvee_barrier(P, tol, it, trace)


def _sym_basis(n):
    out = []
    for a in range(n):
        for b in range(a, n):
            E = np.zeros((n, n))
            E[a, b] = E[b, a] = 1.0
            out.append(E)
    return out


def _mvee_barrier(P, tol, it, trace, max_newton=BARRIER_MAX_NEWTON):
    """Log-barrier Newton on the primal: minimise -log det A subject to
    x_k^T A x_k <= 1, with A in the symmetric-matrix coordinates.

    At the centre for parameter t the dual weights lambda_k = 1/(t(1 - s_k))
    give a certificate with kappa/n - 1 <= m/(n t); the weights are handed
    back to ``_leverages`` so the returned kappa is measured, not assumed.
    """
    m, n = P.shape
    basis = _sym_basis(n)
    Es = np.array(basis)
    phi = np.einsum("ki,sij,kj->ks", P, Es, P)
    theta = np.array([1.0 if E[i, i] else 0.0 for E in basis
                      for i in [int(np.argmax(np.diag(E)))]])
    theta *= 1.0 / (1.0 + 1e-3) / float(np.max(np.einsum("ki,ki->k", P, P)))

    def mat(th):
        return sum(c * E for c, E in zip(th, basis))

    def value(th, t):
        s = phi @ th
        if np.any(s >= 1.0):
            return np.inf
        sign, logdet = np.linalg.slogdet(mat(th))
        if sign <= 0:
            return np.inf
        return -t * logdet - np.sum(np.log1p(-s))

    # the scaled identity start sits near the boundary, i.e. near the centre for large t
    t = float(m)
    steps = 0
    while steps < max_newton:
        centred = False
        for _ in range(BARRIER_CENTERING):
            s = phi @ theta
            B = np.linalg.inv(mat(theta))
            BE = np.einsum("ab,ibc->iac", B, Es)
            grad = -t * np.einsum("iaa->i", BE) + phi.T @ (1.0 / (1.0 - s))
            H = t * np.einsum("iab,jba->ij", BE, BE)
            H += (phi / (1.0 - s)[:, None] ** 2).T @ phi
            step = -np.linalg.solve(H, grad)
            decrement = float(-grad @ step)
            steps += 1
            if decrement < 1e-10:
                centred = True
                break
            # damped Newton step of a self-concordant barrier stays feasible
            a = 1.0 if decrement < 0.25 else 1.0 / (1.0 + np.sqrt(decrement))
            if not np.isfinite(value(theta + a * step, t)):
                break
            theta = theta + a * step
        if not centred:
            break
        s = phi @ theta
        u = 1.0 / (t * (1.0 - s))
        u /= u.sum()
        X, _, g = _leverages(P, u)
        kappa = float(np.max(g))
        trace.append((it + steps, kappa / n - 1.0))
        if kappa / n - 1.0 <= tol:
            return MveeResult(X, u, kappa, it + steps, trace)
        if kappa / n - 1.0 <= BARRIER_HANDOFF:
            # 1 - s_k loses digits on the active set; polish on the support instead
            polished = _polish_support(P, u, tol)
            if polished is not None:
                X, pu, kappa = polished
                trace.append((it + steps, kappa / n - 1.0))
                return MveeResult(X, pu, kappa, it + steps, trace)
        t *= BARRIER_GROWTH
    raise NumericError(f"MVEE did not converge ({it} coordinate steps, {steps} Newton steps)",
                       trace)


def _polish_support(P, u, tol, rounds=20):
    """Newton on the support of u, re-adding any point whose leverage
    exceeds n (1 + tol); None when that does not settle."""
    n = P.shape[1]
    u = u.copy()
    support = set(np.flatnonzero(u > 1e-3 * u.max()).tolist())
    for _ in range(rounds):
        u[[k for k in range(len(u)) if k not in support]] = 0.0
        u /= u.sum()
        S = _newton_on_support(P, u, sorted(support))
        X, _, g = _leverages(P, u)
        kappa = float(np.max(g))
        if kappa / n - 1.0 <= tol:
            return X, u, kappa
        support = set(S) | set(np.flatnonzero(g > n * (1.0 + tol)).tolist())
        for k in support:
            u[k] = max(u[k], 1e-6)
    return None


def _spanning_subset(P):
    """n points chosen greedily by residual norm (Kumar-Yildirim style start)."""
    m, n = P.shape
    R = P.copy()
    chosen = []
    for _ in range(n):
        k = int(np.argmax(np.einsum("ki,ki->k", R, R)))
        chosen.append(k)
        q = R[k] / np.linalg.norm(R[k])
        R = R - np.outer(R @ q, q)
    return chosen


@dataclass
class NormEllipsoid:
    """SPD ``matrix`` with |matrix e| <= rho(e) <= factor * |matrix e|.

    ``lower``/``upper`` are the observed extremes of rho(e)/|matrix e| over
    the probes; ``factor`` = sqrt(kappa) is valid for every e.
    """

    matrix: np.ndarray
    lower: float
    upper: float
    factor: float
    iterations: int
    probes: np.ndarray = None


def _unit_rows(a):
    return a / np.linalg.norm(a, axis=1, keepdims=True)


def round_norm(norm_fn, n, rounds=2, tol=MVEE_TOL, max_iter=MVEE_MAX_ITER):
    """Fit the John-type ellipsoid of the norm ``norm_fn``.

    ``norm_fn`` maps a (k, n) array of directions to their k norm values.
    The base probes are refined ``rounds`` times by pulling them back through
    the current ellipsoid, so the sample is well spread in rounded
    coordinates; the certificate holds for any probe set.
    """
    base = probe_directions(n)
    dirs = base
    rho = np.asarray(norm_fn(dirs), dtype=float)
    total_iter = 0
    matrix = None
    for stage in range(rounds + 1):
        res = mvee_centered(dirs / rho[:, None], tol=tol, max_iter=max_iter)
        total_iter += res.iterations
        w, v = jacobi_eigh(res.shape)
        matrix = power_from_eigh(1.0 / (w * res.kappa), v, 0.5)
        if stage == rounds:
            break
        # directions hitting the ellipsoid boundary uniformly in rounded coords
        pulled = _unit_rows(np.linalg.solve(matrix, base.T).T)
        dirs = np.vstack([base, pulled])
        rho = np.concatenate([rho[:base.shape[0]], np.asarray(norm_fn(pulled), dtype=float)])
    ratios = rho / np.linalg.norm(dirs @ matrix, axis=1)
    return NormEllipsoid(matrix, float(ratios.min()), float(ratios.max()),
                         float(np.sqrt(res.kappa)), total_iter, dirs)
