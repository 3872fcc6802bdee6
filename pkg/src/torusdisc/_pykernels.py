"""Pure Python / numpy kernels, used when the compiled extension is unavailable.

Every function mirrors one in ``_ckernels.pyx`` with the same signature and the
same floating-point operation order, so both backends return identical results.
"""

import math

import numpy as np

from .torus_maps import wrap_unit, wrap_unit_array

NAME = "python"

_CHUNK = 1 << 16


class MapKernel:
    def __init__(self, prog):
        self.prog = prog
        self.n = prog.n
        self.exact = bool(prog.exact)
        self.int_mat = [[int(v) for v in row] for row in np.asarray(prog.int_mat).reshape(self.n, self.n)]
        stages = []
        for s, kind in enumerate(prog.kinds.tolist()):
            if kind == 0:
                t0, t1 = int(prog.term_off[s]), int(prog.term_off[s + 1])
                terms = [
                    (float(prog.omega[t]), float(prog.amp[t]), int(prog.phase[t]))
                    for t in range(t0, t1)
                ]
                stages.append((0, int(prog.modify[s]), int(prog.read[s]), terms))
            else:
                m0 = int(prog.mat_off[s])
                n = self.n
                rows = [[float(prog.mat[m0 + r * n + c]) for c in range(n)] for r in range(n)]
                stages.append((1, -1, -1, rows))
        self.stages = stages

    def successor(self, addr, N):
        n = self.n
        idx = [0] * n
        a = int(addr)
        for d in range(n - 1, -1, -1):
            idx[d] = a % N
            a //= N
        if self.exact:
            nidx = [sum(m * i for m, i in zip(row, idx)) % N for row in self.int_mat]
        else:
            x = [i / N for i in idx]
            for kind, mod, rd, data in self.stages:
                if kind == 0:
                    p = 0.0
                    t = x[rd]
                    for om, am, ph in data:
                        arg = om * t
                        p += am * (math.cos(arg) if ph == 0 else math.sin(arg))
                    x[mod] = wrap_unit(x[mod] + p)
                else:
                    y = []
                    for row in data:
                        acc = 0.0
                        for a_rc, v in zip(row, x):
                            acc += a_rc * v
                        y.append(wrap_unit(acc))
                    x = y
            nidx = [math.ceil(N * c - 0.5) % N for c in x]
        out = 0
        for v in nidx:
            out = out * N + v
        return out

    def floyd(self, start, N, budget):
        return _floyd(lambda v: self.successor(v, N), int(start), budget)

    def walk(self, start, N, count):
        out = np.empty(count, dtype=np.int64)
        v = int(start)
        for i in range(count):
            out[i] = v
            v = self.successor(v, N)
        return out

    def materialize(self, N, lo=0, hi=-1):
        n = self.n
        total = N**n
        if hi < 0:
            hi = total
        out = np.empty(hi - lo, dtype=np.int64)
        for c0 in range(lo, hi, _CHUNK):
            c1 = min(c0 + _CHUNK, hi)
            out[c0 - lo : c1 - lo] = self._materialize_block(N, np.arange(c0, c1, dtype=np.int64))
        return out

    def _materialize_block(self, N, addr):
        n = self.n
        idx = np.empty((addr.size, n), dtype=np.int64)
        a = addr.copy()
        for d in range(n - 1, -1, -1):
            idx[:, d] = a % N
            a //= N
        if self.exact:
            M = np.array(self.int_mat, dtype=np.int64)
            nidx = np.empty_like(idx)
            for r in range(n):
                acc = np.zeros(addr.size, dtype=np.int64)
                for c in range(n):
                    acc += M[r, c] * idx[:, c]
                nidx[:, r] = acc % N
        else:
            x = idx / N
            for kind, mod, rd, data in self.stages:
                if kind == 0:
                    t = x[:, rd]
                    p = np.zeros(addr.size)
                    for om, am, ph in data:
                        arg = om * t
                        p = p + am * (np.cos(arg) if ph == 0 else np.sin(arg))
                    x[:, mod] = wrap_unit_array(x[:, mod] + p)
                else:
                    y = np.empty_like(x)
                    for r, row in enumerate(data):
                        acc = np.zeros(addr.size)
                        for c, a_rc in enumerate(row):
                            acc = acc + a_rc * x[:, c]
                        y[:, r] = wrap_unit_array(acc)
                    x = y
            nidx = np.ceil(N * x - 0.5).astype(np.int64) % N
        out = np.zeros(addr.size, dtype=np.int64)
        for d in range(n):
            out = out * N + nidx[:, d]
        return out


def _floyd(f, start, budget):
    tort = f(start)
    hare = f(f(start))
    steps = 3
    while tort != hare:
        if steps > budget:
            return 0, 0, 0, steps, False
        tort = f(tort)
        hare = f(f(hare))
        steps += 3
    mu = 0
    tort = start
    while tort != hare:
        if steps > budget:
            return 0, 0, 0, steps, False
        tort = f(tort)
        hare = f(hare)
        steps += 2
        mu += 1
    lam = 1
    hare = f(tort)
    steps += 1
    while tort != hare:
        if steps > budget:
            return 0, 0, 0, steps, False
        hare = f(hare)
        steps += 1
        lam += 1
    return mu, lam, tort, steps, True


def floyd_table(table, start, budget):
    tab = table.tolist() if len(table) < 1 << 22 else table
    return _floyd(lambda v: int(tab[v]), int(start), budget)


def walk_table(table, start, count):
    out = np.empty(count, dtype=np.int64)
    v = int(start)
    for i in range(count):
        out[i] = v
        v = int(table[v])
    return out


def label_graph(table):
    tab = table.tolist()
    M = len(tab)
    labels = [-2] * M
    periodic = np.zeros(M, dtype=np.uint8)
    cid = 0
    for s in range(M):
        if labels[s] != -2:
            continue
        path = []
        v = s
        while labels[v] == -2:
            labels[v] = -1
            path.append(v)
            v = tab[v]
        if labels[v] == -1:
            lab = cid
            cid += 1
            u = v
            while True:
                labels[u] = lab
                periodic[u] = 1
                u = tab[u]
                if u == v:
                    break
        else:
            lab = labels[v]
        for p in path:
            if labels[p] == -1:
                labels[p] = lab
    return np.array(labels, dtype=np.int64), periodic, cid


def _box_candidates(cen, h):
    """All integer points of the boxes [ceil(cen - h), floor(cen + h)], row by row.

    Returns (row_index, points). Rows whose box is empty contribute nothing.
    """
    lo = np.ceil(cen - h).astype(np.int64)
    hi = np.floor(cen + h).astype(np.int64)
    width = hi - lo + 1
    valid = np.all(width > 0, axis=1)
    width = np.maximum(width, 0)
    n = cen.shape[1]
    span = width.max(axis=0) if len(width) else np.zeros(n, dtype=np.int64)
    offs = np.stack(np.meshgrid(*[np.arange(s) for s in span], indexing="ij"), axis=-1).reshape(-1, n)
    rows = np.repeat(np.arange(len(cen)), len(offs))
    pts = np.repeat(lo, len(offs), axis=0) + np.tile(offs, (len(cen), 1))
    keep = valid[rows] & np.all(pts <= np.repeat(hi, len(offs), axis=0), axis=1)
    return rows[keep], pts[keep]


def _matvec_rows(A, pts):
    # sum in column order starting from 0.0, matching the compiled loop
    n = A.shape[0]
    out = np.empty((len(pts), n))
    for r in range(n):
        s = np.zeros(len(pts))
        for c in range(n):
            s = s + A[r, c] * pts[:, c]
        out[:, r] = s
    return out


def rate_members(mats, invs, shifts, halfw, targets):
    k, n = mats.shape[0], mats.shape[1]
    m = len(targets)
    out = np.zeros(m, dtype=np.uint8)
    for c0 in range(0, m, _CHUNK):
        c1 = min(c0 + _CHUNK, m)
        owner = np.arange(c0, c1)
        pts = np.asarray(targets[c0:c1], dtype=np.int64)
        for level in range(k - 1, -1, -1):
            if len(pts) == 0:
                break
            A, inv, w, h = mats[level], invs[level], shifts[level], halfw[level]
            cen = _matvec_rows(inv, pts.astype(np.float64) - w)
            rows, cand = _box_candidates(cen, h)
            t = _matvec_rows(A, cand.astype(np.float64)) + w
            ok = np.all(np.ceil(t - 0.5).astype(np.int64) == pts[rows], axis=1)
            owner, pts = owner[rows[ok]], cand[ok]
            if level > 0 and len(pts):
                key = np.unique(np.column_stack([owner, pts]), axis=0)
                owner, pts = key[:, 0], key[:, 1:]
        out[np.unique(owner)] = 1
    return out


def mc_cover(mats, invs, halfw, u):
    k, n = mats.shape[0], mats.shape[1]
    m = len(u)
    out = np.zeros(m, dtype=np.uint8)
    for c0 in range(0, m, _CHUNK):
        c1 = min(c0 + _CHUNK, m)
        owner = np.arange(c0, c1)
        cvec = np.asarray(u[c0:c1, (k - 1) * n : k * n], dtype=np.float64)
        for level in range(k - 1, -1, -1):
            if len(cvec) == 0:
                break
            cen = _matvec_rows(invs[level], cvec)
            rows, z = _box_candidates(cen, halfw[level])
            v = cvec[rows] - _matvec_rows(mats[level], z.astype(np.float64))
            ok = np.all((v > -0.5) & (v <= 0.5), axis=1)
            owner, z = owner[rows[ok]], z[ok]
            if level > 0:
                cvec = u[owner, (level - 1) * n : level * n] + z.astype(np.float64)
        out[np.unique(owner)] = 1
    return out
