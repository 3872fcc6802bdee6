"""Probability measures on grids and the dyadic-cube distance between them."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from ._io import atomic_write_text, comment_header
from .errors import CapacityError
from .grid import DEFAULT_BUDGET_BYTES, DiscretizedMap, GridSpec

MASS_TOL = 1e-12
DEFAULT_LEVEL = 7
MAX_HIST_CELLS = 1 << 26


class DiscreteMeasure:
    """Finitely supported probability measure on the points of a grid.

    Atoms are kept as sorted linear addresses with strictly positive weights.
    The uniform measure is stored implicitly and only expanded on demand.
    """

    def __init__(self, grid: GridSpec, addresses, weights, check: bool = True):
        self.grid = grid
        self._uniform = False
        addresses = np.asarray(addresses, dtype=np.int64)
        weights = np.asarray(weights, dtype=np.float64)
        if addresses.shape != weights.shape or addresses.ndim != 1:
            raise ValueError("addresses and weights must be 1-d arrays of equal length")
        order = np.argsort(addresses, kind="stable")
        addresses, weights = addresses[order], weights[order]
        if check:
            if addresses.size == 0:
                raise ValueError("a probability measure needs at least one atom")
            if np.any(np.diff(addresses) == 0):
                raise ValueError("duplicate atoms")
            if addresses[0] < 0 or addresses[-1] >= grid.size:
                raise ValueError("atom outside the grid")
            if np.any(weights <= 0):
                raise ValueError("weights must be positive")
            total = math.fsum(weights)
            if abs(total - 1.0) > MASS_TOL:
                raise ValueError(f"weights sum to {total!r}, not 1")
        self._addr = addresses
        self._w = weights

    @classmethod
    def uniform(cls, grid: GridSpec, budget_bytes: int = DEFAULT_BUDGET_BYTES) -> "DiscreteMeasure":
        mu = cls.__new__(cls)
        mu.grid = grid
        mu._uniform = True
        mu._addr = None
        mu._w = None
        mu._budget = budget_bytes
        return mu

    @classmethod
    def dirac(cls, grid: GridSpec, idx) -> "DiscreteMeasure":
        return cls(grid, [grid.address(idx)], [1.0])

    @classmethod
    def from_atoms(cls, grid: GridSpec, atoms: dict) -> "DiscreteMeasure":
        """Build from ``{grid index tuple: weight}``."""
        items = list(atoms.items())
        return cls(grid, [grid.address(k) for k, _ in items], [w for _, w in items])

    @property
    def is_uniform(self) -> bool:
        return self._uniform

    def _expand(self):
        need = self.grid.size * 16
        if need > self._budget:
            raise CapacityError(
                f"expanding {self.grid.size} uniform atoms needs {need} bytes",
                required=need, budget=self._budget,
            )
        self._addr = np.arange(self.grid.size, dtype=np.int64)
        self._w = np.full(self.grid.size, 1.0 / self.grid.size)

    @property
    def addresses(self) -> np.ndarray:
        if self._addr is None:
            self._expand()
        return self._addr

    @property
    def weights(self) -> np.ndarray:
        if self._w is None:
            self._expand()
        return self._w

    def indices(self) -> np.ndarray:
        return self.grid.unravel_array(self.addresses)

    def atoms(self) -> dict:
        return {tuple(int(v) for v in idx): float(w) for idx, w in zip(self.indices(), self.weights)}

    def __len__(self):
        return self.grid.size if self._uniform else len(self._addr)

    def __eq__(self, other):
        if not isinstance(other, DiscreteMeasure) or other.grid != self.grid:
            return NotImplemented
        if self._uniform and other._uniform:
            return True
        return np.array_equal(self.addresses, other.addresses) and np.array_equal(self.weights, other.weights)

    def __repr__(self):
        kind = "uniform" if self._uniform else f"{len(self)} atoms"
        return f"DiscreteMeasure(n={self.grid.n}, N={self.grid.N}, {kind})"


def lebesgue(grid: GridSpec, budget_bytes: int = DEFAULT_BUDGET_BYTES) -> DiscreteMeasure:
    """Uniform measure with weight ``N**-n`` on every grid point."""
    return DiscreteMeasure.uniform(grid, budget_bytes)


@dataclass(frozen=True)
class DyadicHistogram:
    """Masses of the half-open dyadic cubes at levels ``0..K``; ``levels[k]`` has shape ``(2**k,)*n``."""

    n: int
    levels: tuple

    @property
    def K(self) -> int:
        return len(self.levels) - 1


def _axis_counts(N: int, cells: int) -> np.ndarray:
    # number of i in [0, N) with floor(i * cells / N) == j
    j = np.arange(cells + 1, dtype=object)
    edges = np.array([-((-int(v) * N) // cells) for v in j], dtype=object)
    return np.diff(edges)


def coarsen(level: np.ndarray) -> np.ndarray:
    """Parent masses: sum of the 2**n children, in lexicographic child order."""
    n = level.ndim
    out = None
    for child in np.ndindex(*(2,) * n):
        part = level[tuple(slice(c, None, 2) for c in child)]
        out = part.copy() if out is None else out + part
    return out


def to_histogram(mu: DiscreteMeasure, K: int = DEFAULT_LEVEL) -> DyadicHistogram:
    if K < 0:
        raise ValueError("level K must be nonnegative")
    g = mu.grid
    cells = 1 << K
    if cells**g.n > MAX_HIST_CELLS:
        raise CapacityError(f"level {K} histogram in dimension {g.n} is too large")
    if mu.is_uniform:
        counts = _axis_counts(g.N, cells)
        finest = counts
        for _ in range(g.n - 1):
            finest = np.multiply.outer(finest, counts)
        finest = np.array([int(c) / g.size for c in np.ravel(finest)], dtype=np.float64)
        finest = finest.reshape((cells,) * g.n)
    else:
        idx = mu.indices()
        if g.N * cells < 2**62:
            cube = (idx * cells) // g.N
        else:
            cube = np.array([[int(v) * cells // g.N for v in row] for row in idx], dtype=np.int64)
        flat = np.ravel_multi_index(tuple(cube.T), (cells,) * g.n)
        finest = np.bincount(flat, weights=mu.weights, minlength=cells**g.n).reshape((cells,) * g.n)
    levels = [finest]
    for _ in range(K):
        levels.append(coarsen(levels[-1]))
    return DyadicHistogram(g.n, tuple(reversed(levels)))


def dyadic_distance(mu, nu, K: int = DEFAULT_LEVEL) -> float:
    """``sum_{k=0}^{K} 2**-k * sum_cubes |mu(C) - nu(C)|``, in [0, 2]."""
    hm = mu if isinstance(mu, DyadicHistogram) else to_histogram(mu, K)
    hn = nu if isinstance(nu, DyadicHistogram) else to_histogram(nu, K)
    if hm.n != hn.n:
        raise ValueError(f"dimension mismatch: {hm.n} vs {hn.n}")
    if hm.K < K or hn.K < K:
        raise ValueError(f"histograms only reach level {min(hm.K, hn.K)} < {K}")
    total = 0.0
    for k in range(K + 1):
        total += math.ldexp(float(np.abs(hm.levels[k] - hn.levels[k]).sum()), -k)
    return total


def pushforward(mu: DiscreteMeasure, dmap: DiscretizedMap) -> DiscreteMeasure:
    """Image measure: each point receives the total weight of its preimages."""
    if mu.grid != dmap.grid:
        raise ValueError("measure and map live on different grids")
    img = dmap.successor_array(mu.addresses)
    uniq, inv = np.unique(img, return_inverse=True)
    w = np.bincount(inv, weights=mu.weights, minlength=len(uniq))
    return DiscreteMeasure(mu.grid, uniq, w, check=False)


def total_variation(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Sum of absolute weight differences over the union of supports."""
    a = dict(zip(mu.addresses.tolist(), mu.weights.tolist()))
    for k, w in zip(nu.addresses.tolist(), nu.weights.tolist()):
        a[k] = a.get(k, 0.0) - w
    return math.fsum(abs(v) for v in a.values())


def measure_to_csv(mu: DiscreteMeasure, header=()) -> str:
    g = mu.grid
    buf = io.StringIO()
    buf.write(comment_header(list(header) + [f"grid n={g.n} N={g.N}"]))
    buf.write(",".join([f"i{d}" for d in range(g.n)] + ["weight"]) + "\n")
    for idx, w in zip(mu.indices().tolist(), mu.weights.tolist()):
        buf.write(",".join(str(v) for v in idx) + "," + repr(w) + "\n")
    return buf.getvalue()


def write_measure_csv(path, mu: DiscreteMeasure, header=()) -> None:
    atomic_write_text(path, measure_to_csv(mu, header))


def read_measure_csv(path) -> DiscreteMeasure:
    n = N = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("grid "):
                    kv = dict(part.split("=") for part in body.split()[1:])
                    n, N = int(kv["n"]), int(kv["N"])
                continue
            if line.startswith("i0"):
                continue
            rows.append(line.split(","))
    if n is None:
        raise ValueError(f"{path}: missing '# grid n=.. N=..' header")
    g = GridSpec(n, N)
    if any(len(r) != n + 1 for r in rows):
        raise ValueError(f"{path}: malformed measure rows")
    addr = [g.address([int(v) for v in r[:n]]) for r in rows]
    return DiscreteMeasure(g, addr, [float(r[n]) for r in rows])


def histogram_to_csv(h: DyadicHistogram, header=()) -> str:
    buf = io.StringIO()
    buf.write(comment_header(header))
    buf.write(",".join(["level"] + [f"c{d}" for d in range(h.n)] + ["mass"]) + "\n")
    for k, lev in enumerate(h.levels):
        for cube in np.ndindex(*lev.shape):
            buf.write(f"{k}," + ",".join(map(str, cube)) + "," + repr(float(lev[cube])) + "\n")
    return buf.getvalue()
