# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. ``_pykernels`` is the reference twin; both must agree bit for bit.

Floating-point expressions here are written in the same operation order as the
Python twin and the module is built with -ffp-contract=off so no FMA contraction
changes a rounding.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, floor, ceil
from libc.stdint cimport int64_t, uint64_t, int32_t, uint8_t

cnp.import_array()

cdef enum:
    MAXN = 16

NAME = "cython"


cdef inline double _wrap(double v) noexcept nogil:
    cdef double r = v - floor(v)
    if r >= 1.0:
        r = 0.0
    return r


cdef inline int64_t _pmod(int64_t a, int64_t m) noexcept nogil:
    cdef int64_t r = a % m
    if r < 0:
        r += m
    return r


cdef class MapKernel:
    cdef int n
    cdef int S
    cdef bint exact
    cdef int32_t[::1] kinds
    cdef int32_t[::1] modify
    cdef int32_t[::1] read
    cdef int32_t[::1] phase
    cdef int64_t[::1] term_off
    cdef int64_t[::1] mat_off
    cdef int64_t[::1] int_mat
    cdef double[::1] omega
    cdef double[::1] amp
    cdef double[::1] mat

    def __init__(self, prog):
        if prog.n > MAXN:
            raise ValueError(f"dimension {prog.n} exceeds compiled limit {MAXN}")
        self.n = prog.n
        self.S = len(prog.kinds)
        self.exact = prog.exact
        # one-element padding keeps zero-length memoryviews out of the picture
        self.kinds = np.concatenate([prog.kinds, [0]]).astype(np.int32)
        self.modify = np.concatenate([prog.modify, [0]]).astype(np.int32)
        self.read = np.concatenate([prog.read, [0]]).astype(np.int32)
        self.phase = np.concatenate([prog.phase, [0]]).astype(np.int32)
        self.term_off = np.ascontiguousarray(prog.term_off, dtype=np.int64)
        self.mat_off = np.ascontiguousarray(prog.mat_off, dtype=np.int64)
        self.int_mat = np.ascontiguousarray(prog.int_mat, dtype=np.int64).ravel()
        self.omega = np.concatenate([prog.omega, [0.0]])
        self.amp = np.concatenate([prog.amp, [0.0]])
        self.mat = np.concatenate([prog.mat, [0.0]])

    cdef uint64_t _succ(self, uint64_t a, uint64_t N) noexcept nogil:
        cdef int64_t idx[MAXN]
        cdef int64_t nidx[MAXN]
        cdef double x[MAXN]
        cdef double y[MAXN]
        cdef int n = self.n
        cdef int d, r, c, s
        cdef int64_t t, acc_i
        cdef double p, arg, acc, Nd = <double>N
        cdef uint64_t out = 0
        for d in range(n - 1, -1, -1):
            idx[d] = <int64_t>(a % N)
            a = a // N
        if self.exact:
            for r in range(n):
                acc_i = 0
                for c in range(n):
                    acc_i += self.int_mat[r * n + c] * idx[c]
                nidx[r] = _pmod(acc_i, <int64_t>N)
        else:
            for d in range(n):
                x[d] = <double>idx[d] / Nd
            for s in range(self.S):
                if self.kinds[s] == 0:
                    p = 0.0
                    for t in range(self.term_off[s], self.term_off[s + 1]):
                        arg = self.omega[t] * x[self.read[s]]
                        if self.phase[t] == 0:
                            p += self.amp[t] * cos(arg)
                        else:
                            p += self.amp[t] * sin(arg)
                    x[self.modify[s]] = _wrap(x[self.modify[s]] + p)
                else:
                    for r in range(n):
                        acc = 0.0
                        for c in range(n):
                            acc += self.mat[self.mat_off[s] + r * n + c] * x[c]
                        y[r] = _wrap(acc)
                    for r in range(n):
                        x[r] = y[r]
            for d in range(n):
                nidx[d] = _pmod(<int64_t>ceil(Nd * x[d] - 0.5), <int64_t>N)
        for d in range(n):
            out = out * N + <uint64_t>nidx[d]
        return out

    def successor(self, uint64_t addr, uint64_t N):
        return self._succ(addr, N)

    def floyd(self, uint64_t start, uint64_t N, int64_t budget):
        """Return (tail, cycle_length, first_cycle_point, steps, ok)."""
        cdef uint64_t tort, hare
        cdef int64_t steps = 0, mu = 0, lam = 1
        with nogil:
            tort = self._succ(start, N)
            hare = self._succ(self._succ(start, N), N)
            steps = 3
            while tort != hare:
                if steps > budget:
                    break
                tort = self._succ(tort, N)
                hare = self._succ(self._succ(hare, N), N)
                steps += 3
            if tort == hare:
                tort = start
                while tort != hare:
                    if steps > budget:
                        break
                    tort = self._succ(tort, N)
                    hare = self._succ(hare, N)
                    steps += 2
                    mu += 1
            if tort == hare:
                hare = self._succ(tort, N)
                steps += 1
                while tort != hare:
                    if steps > budget:
                        break
                    hare = self._succ(hare, N)
                    steps += 1
                    lam += 1
        if tort != hare:
            return 0, 0, 0, steps, False
        return mu, lam, tort, steps, True

    def walk(self, uint64_t start, uint64_t N, int64_t count):
        out = np.empty(count, dtype=np.uint64)
        cdef uint64_t[::1] o = out
        cdef int64_t i
        cdef uint64_t v = start
        with nogil:
            for i in range(count):
                o[i] = v
                v = self._succ(v, N)
        return out.astype(np.int64)

    def materialize(self, uint64_t N, int64_t lo=0, int64_t hi=-1):
        cdef int64_t total = 1
        cdef int d
        for d in range(self.n):
            total *= <int64_t>N
        if hi < 0:
            hi = total
        out = np.empty(hi - lo, dtype=np.int64)
        cdef int64_t[::1] o = out
        cdef int64_t a
        with nogil:
            for a in range(lo, hi):
                o[a - lo] = <int64_t>self._succ(<uint64_t>a, N)
        return out


def floyd_table(const int64_t[::1] table, int64_t start, int64_t budget):
    cdef int64_t tort, hare, steps = 0, mu = 0, lam = 1
    with nogil:
        tort = table[start]
        hare = table[table[start]]
        steps = 3
        while tort != hare:
            if steps > budget:
                break
            tort = table[tort]
            hare = table[table[hare]]
            steps += 3
        if tort == hare:
            tort = start
            while tort != hare:
                if steps > budget:
                    break
                tort = table[tort]
                hare = table[hare]
                steps += 2
                mu += 1
        if tort == hare:
            hare = table[tort]
            steps += 1
            while tort != hare:
                if steps > budget:
                    break
                hare = table[hare]
                steps += 1
                lam += 1
    if tort != hare:
        return 0, 0, 0, steps, False
    return mu, lam, tort, steps, True


def walk_table(const int64_t[::1] table, int64_t start, int64_t count):
    out = np.empty(count, dtype=np.int64)
    cdef int64_t[::1] o = out
    cdef int64_t i, v = start
    with nogil:
        for i in range(count):
            o[i] = v
            v = table[v]
    return out


def label_graph(const int64_t[::1] table):
    """Terminal-cycle label per node (discovery order) and the periodic-node mask."""
    cdef int64_t M = table.shape[0]
    labels_arr = np.full(M, -2, dtype=np.int64)
    periodic_arr = np.zeros(M, dtype=np.uint8)
    path_arr = np.empty(max(M, 1), dtype=np.int64)
    cdef int64_t[::1] labels = labels_arr
    cdef uint8_t[::1] periodic = periodic_arr
    cdef int64_t[::1] path = path_arr
    cdef int64_t s, v, u, top, i, lab, cid = 0
    with nogil:
        for s in range(M):
            if labels[s] != -2:
                continue
            top = 0
            v = s
            while labels[v] == -2:
                labels[v] = -1
                path[top] = v
                top += 1
                v = table[v]
            if labels[v] == -1:
                lab = cid
                cid += 1
                u = v
                while True:
                    labels[u] = lab
                    periodic[u] = 1
                    u = table[u]
                    if u == v:
                        break
            else:
                lab = labels[v]
            for i in range(top):
                if labels[path[i]] == -1:
                    labels[path[i]] = lab
    return labels_arr, periodic_arr, cid


cdef int _rate_dfs(int level, const int64_t* y, int n, const double* mats,
                   const double* invs, const double* shifts, const double* halfw) noexcept nogil:
    cdef double cen[MAXN]
    cdef int64_t lo[MAXN]
    cdef int64_t hi[MAXN]
    cdef int64_t x[MAXN]
    cdef const double* A = mats + level * n * n
    cdef const double* inv = invs + level * n * n
    cdef const double* w = shifts + level * n
    cdef const double* h = halfw + level * n
    cdef int r, c, d, ok
    cdef double s, t
    for r in range(n):
        s = 0.0
        for c in range(n):
            s += inv[r * n + c] * (<double>y[c] - w[c])
        cen[r] = s
        lo[r] = <int64_t>ceil(s - h[r])
        hi[r] = <int64_t>floor(s + h[r])
        if lo[r] > hi[r]:
            return 0
        x[r] = lo[r]
    while True:
        ok = 1
        for r in range(n):
            s = 0.0
            for c in range(n):
                s += A[r * n + c] * <double>x[c]
            t = s + w[r]
            if <int64_t>ceil(t - 0.5) != y[r]:
                ok = 0
                break
        if ok:
            if level == 0:
                return 1
            if _rate_dfs(level - 1, x, n, mats, invs, shifts, halfw):
                return 1
        d = n - 1
        while d >= 0:
            x[d] += 1
            if x[d] <= hi[d]:
                break
            x[d] = lo[d]
            d -= 1
        if d < 0:
            return 0


def rate_members(const double[:, :, ::1] mats, const double[:, :, ::1] invs,
                 const double[:, ::1] shifts, const double[:, ::1] halfw,
                 const int64_t[:, ::1] targets):
    """1 where the target has a full preimage chain under the discretized stages."""
    cdef int k = mats.shape[0], n = mats.shape[1]
    cdef int64_t m = targets.shape[0], i
    if n > MAXN:
        raise ValueError("dimension too large for compiled kernel")
    out = np.zeros(m, dtype=np.uint8)
    cdef uint8_t[::1] o = out
    if m == 0:
        return out
    with nogil:
        for i in range(m):
            o[i] = _rate_dfs(k - 1, &targets[i, 0], n, &mats[0, 0, 0], &invs[0, 0, 0],
                             &shifts[0, 0], &halfw[0, 0])
    return out


cdef int _mc_dfs(int level, const double* cvec, int n, const double* mats,
                 const double* invs, const double* halfw, const double* u) noexcept nogil:
    cdef double cen[MAXN]
    cdef double nxt[MAXN]
    cdef int64_t lo[MAXN]
    cdef int64_t hi[MAXN]
    cdef int64_t z[MAXN]
    cdef const double* A = mats + level * n * n
    cdef const double* inv = invs + level * n * n
    cdef const double* h = halfw + level * n
    cdef int r, c, d, ok
    cdef double s, v
    for r in range(n):
        s = 0.0
        for c in range(n):
            s += inv[r * n + c] * cvec[c]
        cen[r] = s
        lo[r] = <int64_t>ceil(s - h[r])
        hi[r] = <int64_t>floor(s + h[r])
        if lo[r] > hi[r]:
            return 0
        z[r] = lo[r]
    while True:
        ok = 1
        for r in range(n):
            s = 0.0
            for c in range(n):
                s += A[r * n + c] * <double>z[c]
            v = cvec[r] - s
            if not (v > -0.5 and v <= 0.5):
                ok = 0
                break
        if ok:
            if level == 0:
                return 1
            for r in range(n):
                nxt[r] = u[(level - 1) * n + r] + <double>z[r]
            if _mc_dfs(level - 1, nxt, n, mats, invs, halfw, u):
                return 1
        d = n - 1
        while d >= 0:
            z[d] += 1
            if z[d] <= hi[d]:
                break
            z[d] = lo[d]
            d -= 1
        if d < 0:
            return 0


def mc_cover(const double[:, :, ::1] mats, const double[:, :, ::1] invs,
             const double[:, ::1] halfw, const double[:, ::1] u):
    """1 where the point u (rows, blocks of n) lies in the union of window cubes on the lattice."""
    cdef int k = mats.shape[0], n = mats.shape[1]
    cdef int64_t m = u.shape[0], i
    if n > MAXN:
        raise ValueError("dimension too large for compiled kernel")
    out = np.zeros(m, dtype=np.uint8)
    cdef uint8_t[::1] o = out
    if m == 0:
        return out
    with nogil:
        for i in range(m):
            o[i] = _mc_dfs(k - 1, &u[i, (k - 1) * n], n, &mats[0, 0, 0], &invs[0, 0, 0],
                           &halfw[0, 0], &u[i, 0])
    return out
