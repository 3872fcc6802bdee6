"""Discretized linear maps on Z^n, rates of injectivity and the model-set mean rate.

The discretization of ``x -> A x + w`` sends an integer vector to the
componentwise nearest integer of ``A x + w``, with ties ``k + 1/2`` rounded
down to ``k``. The rate of injectivity of ``A_1, ..., A_k`` is the density in
Z^n of the image of the composed discretizations.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import _backend
from ._io import comment_header
from .errors import CapacityError

DET_TOL = 1e-9
BOX_MARGIN = 1e-7
MAX_BOX_CANDIDATES = 10**6
MAX_ENUM_POINTS = 5 * 10**7
MIN_RADIUS = 10
MC_CHUNK = 1 << 17
RNG_NAME = "numpy.PCG64"


@dataclass(frozen=True, eq=False)
class MatrixSequence:
    """Determinant-one matrices ``A_1..A_k`` (applied in that order) and optional translations."""

    matrices: np.ndarray
    translations: np.ndarray | None = None
    shears: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        m = np.array(self.matrices, dtype=np.float64)
        if m.ndim != 3 or m.shape[1] != m.shape[2] or m.shape[0] < 1:
            raise ValueError("matrices must have shape (k, n, n) with k >= 1")
        dets = np.linalg.det(m)
        bad = np.flatnonzero(np.abs(dets - 1.0) > DET_TOL)
        if bad.size:
            raise ValueError(f"matrix {int(bad[0]) + 1} has determinant {dets[bad[0]]!r}, not 1")
        k, n = m.shape[0], m.shape[1]
        if self.translations is None:
            w = np.zeros((k, n))
        else:
            w = np.array(self.translations, dtype=np.float64).reshape(k, n)
            if np.any(np.abs(w) > 0.5):
                raise ValueError("translations must lie in [-1/2, 1/2]^n")
        m.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "matrices", m)
        object.__setattr__(self, "translations", w)

    def __eq__(self, other):
        if not isinstance(other, MatrixSequence):
            return NotImplemented
        return (np.array_equal(self.matrices, other.matrices)
                and np.array_equal(self.translations, other.translations))

    __hash__ = None

    @property
    def k(self) -> int:
        return self.matrices.shape[0]

    @property
    def n(self) -> int:
        return self.matrices.shape[1]

    @property
    def inverses(self) -> np.ndarray:
        return np.linalg.inv(self.matrices)

    def prefix(self, k: int) -> "MatrixSequence":
        if not 1 <= k <= self.k:
            raise ValueError(f"prefix length {k} outside 1..{self.k}")
        sh = self.shears[:k] if self.shears is not None else None
        return MatrixSequence(self.matrices[:k], self.translations[:k], sh)

    def is_integer(self) -> bool:
        return bool(np.all(self.matrices == np.rint(self.matrices)))

    def to_dict(self) -> dict:
        d = {
            "dimension": self.n,
            "matrices": self.matrices.tolist(),
            "translations": self.translations.tolist(),
        }
        if self.shears is not None:
            d["shears"] = [[list(s) for s in m] for m in self.shears]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MatrixSequence":
        sh = d.get("shears")
        if sh is not None:
            sh = tuple(tuple((int(i), int(j), float(s)) for i, j, s in m) for m in sh)
        seq = cls(np.array(d["matrices"], dtype=float), d.get("translations"), sh)
        if "dimension" in d and int(d["dimension"]) != seq.n:
            raise ValueError("dimension field disagrees with the matrices")
        return seq


@dataclass(frozen=True)
class LatticeBasis:
    basis: np.ndarray
    inverse: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=np.float64)
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise ValueError("basis must be square")
        if not np.allclose(b @ self.inverse, np.eye(len(b)), rtol=0, atol=1e-9):
            raise ValueError("cached inverse does not invert the basis")

    @property
    def dim(self) -> int:
        return self.basis.shape[0]


@dataclass(frozen=True)
class RateEstimate:
    value: float
    method: str  # "brute_force" or "monte_carlo"
    radius_or_samples: int
    convergence_gap: float
    count: int = 0
    total: int = 0
    meta: dict = field(default_factory=dict, compare=False)


def _project(t: float) -> int:
    return math.ceil(t - 0.5)


def hat_apply(A, w, x) -> tuple[int, ...]:
    """Nearest-integer discretization of ``x -> A x + w`` at an integer vector."""
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    if len(x) != n:
        raise ValueError(f"vector has dimension {len(x)}, matrix has {n}")
    wv = np.zeros(n) if w is None else np.asarray(w, dtype=np.float64)
    out = []
    for r in range(n):
        s = 0.0
        for c in range(n):
            s += float(A[r, c]) * float(x[c])
        out.append(_project(s + float(wv[r])))
    return tuple(out)


def compose_discretized(seq: MatrixSequence, x) -> tuple[int, ...]:
    y = tuple(int(v) for v in x)
    for A, w in zip(seq.matrices, seq.translations):
        y = hat_apply(A, w, y)
    return y


def compose_discretized_array(seq: MatrixSequence, pts: np.ndarray) -> np.ndarray:
    """Vectorized :func:`compose_discretized` over rows of an integer array."""
    y = np.asarray(pts, dtype=np.int64)
    for A, w in zip(seq.matrices, seq.translations):
        xf = y.astype(np.float64)
        nxt = np.empty_like(y)
        for r in range(seq.n):
            s = np.zeros(len(y))
            for c in range(seq.n):
                s = s + A[r, c] * xf[:, c]
            nxt[:, r] = np.ceil((s + w[r]) - 0.5).astype(np.int64)
        y = nxt
    return y


def inf_norm(A) -> float:
    return float(np.abs(np.asarray(A)).sum(axis=1).max())


def _halfwidths(invs: np.ndarray) -> np.ndarray:
    return 0.5 * np.abs(invs).sum(axis=2) + BOX_MARGIN


def enumeration_radius(seq: MatrixSequence, R: int) -> int:
    """Radius of a ball of starting points containing every chain that ends in B_R."""
    r = float(R)
    for Ainv, w in zip(seq.inverses[::-1], seq.translations[::-1]):
        r = inf_norm(Ainv) * (r + 0.5 + float(np.abs(w).max(initial=0.0)))
    return int(math.ceil(r)) + 1


def ball_points(R: int, n: int) -> np.ndarray:
    count = (2 * R + 1) ** n
    if count > MAX_ENUM_POINTS:
        raise CapacityError(f"ball of radius {R} in dimension {n} has {count} points",
                            required=count, budget=MAX_ENUM_POINTS)
    axes = [np.arange(-R, R + 1, dtype=np.int64)] * n
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)


def _kernel_args(seq: MatrixSequence):
    invs = np.ascontiguousarray(seq.inverses)
    return (
        np.ascontiguousarray(seq.matrices),
        invs,
        np.ascontiguousarray(seq.translations),
        np.ascontiguousarray(_halfwidths(invs)),
    )


def image_membership(seq: MatrixSequence, targets: np.ndarray, backend=None,
                     workers: int = 1) -> np.ndarray:
    """Boolean mask: which target vectors lie in the image of the composed discretizations."""
    mats, invs, shifts, halfw = _kernel_args(seq)
    targets = np.ascontiguousarray(targets, dtype=np.int64)
    kern = _backend.get(backend)
    if workers <= 1 or len(targets) < 2 * workers:
        return kern.rate_members(mats, invs, shifts, halfw, targets).astype(bool)
    # membership is decided per target, so splitting the range cannot change the result
    parts = np.array_split(targets, workers)
    with ThreadPoolExecutor(workers) as ex:
        out = list(ex.map(lambda t: kern.rate_members(mats, invs, shifts, halfw,
                                                      np.ascontiguousarray(t)), parts))
    return np.concatenate(out).astype(bool)


def rate_brute_force(seq: MatrixSequence, R: int, strategy: str = "backward",
                     backend=None, workers: int = 1) -> RateEstimate:
    """Fraction of B_R covered by the image set, with the gap against radius R // 2.

    ``strategy="backward"`` decides membership of each point of B_R by an exact
    preimage search; ``"forward"`` pushes a whole enumeration ball through the
    maps and is only practical for small radii.
    """
    if R < MIN_RADIUS:
        raise ValueError(f"radius must be at least {MIN_RADIUS}")
    n = seq.n
    half = R // 2
    if strategy == "backward":
        pts = ball_points(R, n)
        member = image_membership(seq, pts, backend, workers)
        inside_half = np.abs(pts).max(axis=1) <= half
        count = int(member.sum())
        count_half = int(member[inside_half].sum())
    elif strategy == "forward":
        Rp = enumeration_radius(seq, R)
        img = np.unique(compose_discretized_array(seq, ball_points(Rp, n)), axis=0)
        norms = np.abs(img).max(axis=1)
        count = int((norms <= R).sum())
        count_half = int((norms <= half).sum())
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    total = (2 * R + 1) ** n
    value = count / total
    value_half = count_half / (2 * half + 1) ** n
    return RateEstimate(value, "brute_force", R, abs(value - value_half), count, total,
                        {"strategy": strategy})


def _block_bidiagonal(blocks: list[np.ndarray]) -> LatticeBasis:
    # diagonal blocks B_i, -Id on the superdiagonal; inverse block (i, j) = B_i^-1 ... B_j^-1
    n = blocks[0].shape[0]
    m = len(blocks)
    basis = np.zeros((n * m, n * m))
    inv = np.zeros_like(basis)
    binv = []
    for b in blocks:
        if abs(np.linalg.det(b)) < 1e-12:
            raise ValueError("singular block")
        binv.append(np.linalg.inv(b))
    for i in range(m):
        basis[i * n:(i + 1) * n, i * n:(i + 1) * n] = blocks[i]
        if i + 1 < m:
            basis[i * n:(i + 1) * n, (i + 1) * n:(i + 2) * n] = -np.eye(n)
        prod = np.eye(n)
        for j in range(i, m):
            prod = prod @ binv[j]
            inv[i * n:(i + 1) * n, j * n:(j + 1) * n] = prod
    return LatticeBasis(basis, inv)


def build_M(seq: MatrixSequence) -> LatticeBasis:
    """The n(k+1) block matrix with A_1..A_k, then Id, on the diagonal."""
    return _block_bidiagonal(list(seq.matrices) + [np.eye(seq.n)])


def build_M_tilde(seq: MatrixSequence) -> LatticeBasis:
    """The nk block matrix with A_1..A_k on the diagonal and -Id above it."""
    return _block_bidiagonal(list(seq.matrices))


def _box_size(halfw: np.ndarray) -> int:
    return int(np.prod(np.floor(2 * halfw).astype(np.int64) + 2))


def _lattice_points(basis: np.ndarray, t: np.ndarray) -> np.ndarray:
    # explicit column-ordered sums rather than BLAS, so results do not depend on threading
    out = np.empty_like(t)
    for r in range(basis.shape[0]):
        s = np.zeros(len(t))
        for c in range(basis.shape[1]):
            if basis[r, c] != 0.0:
                s = s + basis[r, c] * t[:, c]
        out[:, r] = s
    return out


def mean_rate_mc(seq: MatrixSequence, samples: int, rng_seed: int, backend=None,
                 chunk: int = MC_CHUNK) -> RateEstimate:
    """Monte Carlo density of the union of unit cubes centred on the lattice ``M~ Z^{nk}``.

    Points ``u = M~ t`` with ``t`` uniform in the unit cube fill one fundamental
    domain of covolume 1, so the covered fraction is the density. Membership is
    decided by back-substitution through the block-triangular structure.
    """
    if samples < 10**4:
        raise ValueError("mean_rate_mc needs at least 10^4 samples")
    if np.any(seq.translations != 0):
        raise ValueError("the mean rate is defined for linear sequences (zero translations)")
    mats, invs, _, halfw = _kernel_args(seq)
    for level in range(seq.k):
        if _box_size(halfw[level]) > MAX_BOX_CANDIDATES:
            raise CapacityError(
                f"stage {level + 1} enumeration box exceeds {MAX_BOX_CANDIDATES} candidates",
                required=_box_size(halfw[level]), budget=MAX_BOX_CANDIDATES,
            )
    basis = build_M_tilde(seq).basis
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    kern = _backend.get(backend)
    hits = np.empty(samples, dtype=np.uint8)
    dim = basis.shape[0]
    for c0 in range(0, samples, chunk):
        c1 = min(c0 + chunk, samples)
        t = rng.random((c1 - c0, dim))
        u = np.ascontiguousarray(_lattice_points(basis, t))
        hits[c0:c1] = kern.mc_cover(mats, invs, halfw, u)
    count = int(hits.sum())
    h = samples // 2
    p1 = hits[:h].mean()
    p2 = hits[h:].mean()
    return RateEstimate(count / samples, "monte_carlo", samples, float(abs(p1 - p2)), count,
                        samples, {"rng": RNG_NAME, "seed": int(rng_seed), "backend": kern.NAME})


def preimage_search(seq: MatrixSequence, target, R: int) -> list[tuple[int, ...]]:
    """All x with ``|x|_inf <= R`` mapped to ``target``, largest norm first then lexicographic."""
    target = tuple(int(v) for v in target)
    if len(target) != seq.n:
        raise ValueError("target dimension mismatch")
    invs = seq.inverses
    halfw = _halfwidths(invs)

    def back(level, y):
        A, w, inv, h = seq.matrices[level], seq.translations[level], invs[level], halfw[level]
        cen = inv @ (np.array(y, dtype=np.float64) - w)
        lo = np.ceil(cen - h).astype(np.int64)
        hi = np.floor(cen + h).astype(np.int64)
        if np.any(lo > hi):
            return
        for x in np.ndindex(*(hi - lo + 1)):
            x = tuple(int(a + b) for a, b in zip(x, lo))
            if hat_apply(A, w, x) == y:
                if level == 0:
                    yield x
                else:
                    yield from back(level - 1, x)

    found = {x for x in back(seq.k - 1, target) if max(abs(v) for v in x) <= R}
    return sorted(found, key=lambda x: (-max(abs(v) for v in x), x))


def shear_matrix(n: int, i: int, j: int, s: float) -> np.ndarray:
    m = np.eye(n)
    m[i, j] = s
    return m


def exact_shear_product(n: int, shears) -> list[list[Fraction]]:
    """Exact rational product of the recorded shear factors (left to right)."""
    m = [[Fraction(int(r == c)) for c in range(n)] for r in range(n)]
    for i, j, s in shears:
        e = [[Fraction(int(r == c)) for c in range(n)] for r in range(n)]
        e[i][j] = Fraction(s)
        m = [[sum(m[r][t] * e[t][c] for t in range(n)) for c in range(n)] for r in range(n)]
    return m


def random_sl_sequence(n: int, k: int, norm_bound: float, rng_seed: int,
                       max_draws: int = 10**5) -> MatrixSequence:
    """Products of random elementary shears, rejected until ``|A|, |A^-1| <= norm_bound``."""
    if norm_bound < 1:
        raise ValueError("norm_bound must be at least 1")
    if n < 2:
        raise ValueError("random shears need n >= 2")
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    n_shears = 3 * n * (n - 1) // 2
    amp = max(norm_bound - 1.0, 0.5)
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    mats, shears = [], []
    for _ in range(k):
        for _draw in range(max_draws):
            factors = []
            prev = None
            for _s in range(n_shears):
                choices = [p for p in pairs if p != prev]
                i, j = choices[int(rng.integers(len(choices)))]
                s = float(rng.uniform(-amp, amp))
                factors.append((i, j, s))
                prev = (i, j)
            m = np.eye(n)
            for i, j, s in factors:
                m = m @ shear_matrix(n, i, j, s)
            if inf_norm(m) <= norm_bound and inf_norm(np.linalg.inv(m)) <= norm_bound:
                mats.append(m)
                shears.append(tuple(factors))
                break
        else:
            raise ValueError(f"no matrix within norm bound {norm_bound} after {max_draws} draws")
    return MatrixSequence(np.array(mats), None, tuple(shears))


def default_radius(n: int) -> int:
    return {1: 5000, 2: 200, 3: 30}.get(n, 10)


def decay_experiment(n: int, k_max: int, norm_bound: float, trials: int, rng_seed: int,
                     R: int | None = None, backend=None, workers: int = 1) -> list[dict]:
    """Brute-force rates of every prefix 1..k_max of ``trials`` random sequences."""
    R = default_radius(n) if R is None else R
    seeds = np.random.SeedSequence(rng_seed).generate_state(trials, dtype=np.uint32)
    rows = []
    for trial, seed in enumerate(seeds.tolist()):
        seq = random_sl_sequence(n, k_max, norm_bound, seed)
        for k in range(1, k_max + 1):
            est = rate_brute_force(seq.prefix(k), R, backend=backend, workers=workers)
            rows.append({
                "trial": trial, "seed": seed, "k": k, "tau_estimate": est.value,
                "radius": R, "convergence_gap": est.convergence_gap,
            })
    return rows


DECAY_COLUMNS = ("trial", "seed", "k", "tau_estimate", "radius", "convergence_gap")


def rows_to_csv(rows: list[dict], columns, header=()) -> str:
    buf = io.StringIO()
    buf.write(comment_header(header))
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(row[c]) for c in columns) + "\n")
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)
