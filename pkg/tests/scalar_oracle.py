"""Independent scalar (n = 1, d = 1) sparse construction used as an oracle.

Natural cell order, dense kernel matrix, explicit loops over cubes.  Shares
only the kernel function k(t) with the library.
"""

import numpy as np


def kernel_matrix(T, L):
    N = 2 ** L
    h = 1.0 / N
    x = (np.arange(N) + 0.5) * h
    D = x[:, None] - x[None, :]
    K = np.zeros((N, N))
    off = ~np.eye(N, dtype=bool)
    K[off] = T.k(D[off]) * h
    return K


def triple(level, i, L):
    m = 2 ** (L - level)
    return max(0, (i - 1) * m), min(2 ** L, (i + 2) * m)


def avg_p(v, p):
    return float(np.mean(np.abs(v) ** p) ** (1.0 / p))


def threshold(v, budget, growth):
    k = 0
    while np.count_nonzero(v > growth ** k) > budget:
        k += 1
    return growth ** k


class ScalarSparse:
    def __init__(self, T, f, g, r, s, q=1.0, growth=2 ** 0.125):
        self.f, self.g = np.asarray(f, float), np.asarray(g, float)
        self.L = int(np.log2(self.f.size))
        self.K = kernel_matrix(T, self.L)
        self.r, self.s, self.q, self.growth = r, s, q, growth
        self.family = []

    def T_on(self, a, b):
        """T(f chi_[a,b)) at every cell."""
        return self.K[:, a:b] @ self.f[a:b]

    def step(self, level, i):
        L = self.L
        m = 2 ** (L - level)
        s0, e0 = i * m, (i + 1) * m
        a3, b3 = triple(level, i, L)
        if not self.g[s0:e0].any() or not self.f[a3:b3].any():
            return None
        t0 = self.T_on(a3, b3)[s0:e0]
        fq = avg_p(self.f[a3:b3], self.q)
        fr = avg_p(self.f[a3:b3], self.r)
        gs = avg_p(self.g[a3:b3], self.s)
        v1 = np.abs(t0) / fq
        v2 = np.zeros(m)
        for lev in range(level + 1, L + 1):
            w = 2 ** (L - lev)
            for j in range(s0 // w, e0 // w):
                c3 = triple(lev, j, L)
                u = np.abs(t0[j * w - s0:(j + 1) * w - s0] - self.T_on(*c3)[j * w:(j + 1) * w])
                val = np.mean(u * np.abs(self.g[j * w:(j + 1) * w]))
                v2[j * w - s0:(j + 1) * w - s0] = np.maximum(v2[j * w - s0:(j + 1) * w - s0], val)
        v2 = v2 / (fr * gs)
        budget = m // 16
        omega = (v1 > threshold(v1, budget, self.growth)) | (v2 > threshold(v2, budget, self.growth))
        kids = []

        def visit(lev, j):
            w = 2 ** (L - lev)
            seg = omega[j * w - s0:(j + 1) * w - s0]
            if seg.mean() > 0.25:
                kids.append((lev, j))
            elif w > 1 and seg.any():
                visit(lev + 1, 2 * j)
                visit(lev + 1, 2 * j + 1)

        if m > 1:
            visit(level + 1, 2 * i)
            visit(level + 1, 2 * i + 1)
        return kids

    def local(self, level, i):
        queue = [(level, i)]
        while queue:
            nxt = []
            for lev, j in queue:
                kids = self.step(lev, j)
                if kids is None:
                    continue
                self.family.append((lev, j))
                nxt.extend(kids)
            queue = nxt

    def run(self):
        """Global family over the ring partition around the support cube."""
        L = self.L
        nz = np.flatnonzero(self.f)
        lo, hi = int(nz[0]), int(nz[-1])
        level = L
        while level > 0 and lo >> (L - level) != hi >> (L - level):
            level -= 1
        parts = [(level, lo >> (L - level))]
        lev, j = parts[0]
        while lev > 0:
            parts.append((lev, j ^ 1))
            lev, j = lev - 1, j >> 1
        for lev, j in parts:
            self.local(lev, j)
        return self.family

    def lhs(self):
        return float(np.sum(np.abs((self.K @ self.f) * self.g)) / self.f.size)

    def rhs(self):
        tot = 0.0
        for lev, j in self.family:
            a, b = triple(lev, j, self.L)
            tot += avg_p(self.f[a:b], self.r) * avg_p(self.g[a:b], self.s) * (b - a) / self.f.size
        return tot
