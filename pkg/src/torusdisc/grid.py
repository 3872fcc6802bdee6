"""Uniform grids on the torus, nearest-point projection and discretized maps."""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _backend
from ._io import atomic_write_bytes
from .errors import CapacityError
from .torus_maps import TorusMapExpr, eval_map, wrap_unit

DEFAULT_BUDGET_BYTES = 2 * 1024**3
TABLE_MAGIC = b"EGRD"
TABLE_VERSION = 1


@dataclass(frozen=True)
class GridSpec:
    """The grid of points ``(i_1/N, ..., i_n/N)`` with ``0 <= i_d < N``."""

    n: int
    N: int

    def __post_init__(self):
        if self.n < 1 or self.N < 1:
            raise ValueError(f"grid needs n >= 1 and N >= 1, got n={self.n}, N={self.N}")
        if self.N**self.n >= 2**64:
            raise CapacityError(f"N^n = {self.N}^{self.n} does not fit in 64 bits")

    @property
    def size(self) -> int:
        return self.N**self.n

    def address(self, idx: Sequence[int]) -> int:
        """Row-major linear address, first index most significant."""
        if len(idx) != self.n:
            raise ValueError(f"index has dimension {len(idx)}, grid has {self.n}")
        a = 0
        for i in idx:
            if not 0 <= i < self.N:
                raise ValueError(f"index component {i} outside [0, {self.N})")
            a = a * self.N + int(i)
        return a

    def unravel(self, addr: int) -> tuple[int, ...]:
        if not 0 <= addr < self.size:
            raise ValueError(f"address {addr} outside grid of size {self.size}")
        out = []
        for _ in range(self.n):
            addr, r = divmod(int(addr), self.N)
            out.append(r)
        return tuple(reversed(out))

    def unravel_array(self, addr: np.ndarray) -> np.ndarray:
        a = np.asarray(addr, dtype=np.int64).copy()
        out = np.empty((a.size, self.n), dtype=np.int64)
        for d in range(self.n - 1, -1, -1):
            out[:, d] = a % self.N
            a //= self.N
        return out

    def embed(self, idx: Sequence[int]) -> tuple[float, ...]:
        return tuple(int(i) / self.N for i in idx)


def project_scalar(x: float) -> int:
    """The integer k with ``k - 1/2 < x <= k + 1/2``."""
    if not math.isfinite(x):
        raise ValueError(f"cannot project non-finite value {x!r}")
    return math.ceil(x - 0.5)


def grid_project(g: GridSpec, x: Sequence[float]) -> tuple[int, ...]:
    """Index of the grid point nearest to the torus point ``x``."""
    if len(x) != g.n:
        raise ValueError(f"point has dimension {len(x)}, grid has {g.n}")
    return tuple(project_scalar(g.N * wrap_unit(float(c))) % g.N for c in x)


class DiscretizedMap:
    """A finite self-map of a grid, lazy (from a map) or backed by a successor table."""

    def __init__(self, grid: GridSpec, expr: TorusMapExpr | None = None,
                 table: np.ndarray | None = None, backend: str | None = None):
        if (expr is None) == (table is None):
            raise ValueError("give exactly one of expr or table")
        self.grid = grid
        self.expr = expr
        self.backend = backend
        self._kern = _backend.get(backend)
        self._mk = None
        if expr is not None:
            if expr.dim != grid.n:
                raise ValueError(f"map dimension {expr.dim} does not match grid dimension {grid.n}")
            prog = expr.compile()
            if prog.exact:
                big = int(np.abs(prog.int_mat).max(initial=1)) * grid.N * grid.n
                if big >= 2**62:
                    raise CapacityError("integer map too large for 64-bit exact arithmetic")
            self._mk = self._kern.MapKernel(prog)
            self._table = None
        else:
            table = np.ascontiguousarray(table, dtype=np.int64)
            if table.shape != (grid.size,):
                raise ValueError(f"table must have {grid.size} entries, got shape {table.shape}")
            if table.size and (table.min() < 0 or table.max() >= grid.size):
                raise ValueError("table entries must be valid addresses")
            table.setflags(write=False)
            self._table = table

    @classmethod
    def from_table(cls, table, grid: GridSpec | None = None, backend=None) -> "DiscretizedMap":
        table = np.asarray(table, dtype=np.int64)
        if grid is None:
            grid = GridSpec(1, len(table))
        return cls(grid, table=table, backend=backend)

    @property
    def is_materialized(self) -> bool:
        return self._table is not None

    @property
    def table(self) -> np.ndarray:
        if self._table is None:
            raise ValueError("map is lazy; call materialize() first")
        return self._table

    @property
    def kernels(self):
        return self._kern

    def successor_address(self, addr: int) -> int:
        if self._table is not None:
            return int(self._table[addr])
        return int(self._mk.successor(int(addr), self.grid.N))

    def successor(self, idx: Sequence[int]) -> tuple[int, ...]:
        return self.grid.unravel(self.successor_address(self.grid.address(idx)))

    def successor_array(self, addr: np.ndarray) -> np.ndarray:
        addr = np.asarray(addr, dtype=np.int64)
        if self._table is not None:
            return self._table[addr]
        return np.array([self._mk.successor(int(a), self.grid.N) for a in addr], dtype=np.int64)

    def walk(self, start_addr: int, count: int) -> np.ndarray:
        """Addresses ``start, f(start), ..., f^(count-1)(start)``."""
        if self._table is not None:
            return self._kern.walk_table(self._table, int(start_addr), int(count))
        return self._mk.walk(int(start_addr), self.grid.N, int(count))

    def floyd_raw(self, start_addr: int, budget: int):
        if self._table is not None:
            return self._kern.floyd_table(self._table, int(start_addr), int(budget))
        return self._mk.floyd(int(start_addr), self.grid.N, int(budget))

    def materialize(self, budget_bytes: int = DEFAULT_BUDGET_BYTES, workers: int = 1) -> "DiscretizedMap":
        if self._table is not None:
            return self
        need = self.grid.size * 8
        if need > budget_bytes:
            raise CapacityError(
                f"successor table needs {need} bytes, budget is {budget_bytes}",
                required=need, budget=budget_bytes,
            )
        total = self.grid.size
        N = self.grid.N
        if workers <= 1 or total < 1 << 16:
            table = self._mk.materialize(N)
        else:
            bounds = np.linspace(0, total, workers + 1).astype(np.int64)
            with ThreadPoolExecutor(workers) as ex:
                parts = list(ex.map(lambda ab: self._mk.materialize(N, int(ab[0]), int(ab[1])),
                                    zip(bounds[:-1], bounds[1:])))
            table = np.concatenate(parts)
        return DiscretizedMap(self.grid, table=table, backend=self.backend)


def discretize(expr: TorusMapExpr, g: GridSpec, materialize: bool = False,
               budget_bytes: int = DEFAULT_BUDGET_BYTES, workers: int = 1,
               backend: str | None = None) -> DiscretizedMap:
    """The map ``i -> grid_project(expr(embed(i)))`` on the grid ``g``."""
    dm = DiscretizedMap(g, expr=expr, backend=backend)
    if materialize:
        dm = dm.materialize(budget_bytes, workers)
    return dm


def manual_successor(expr: TorusMapExpr, g: GridSpec, idx: Sequence[int]) -> tuple[int, ...]:
    """Reference composition through :func:`eval_map`, bypassing the kernels."""
    if expr.is_integer_linear:
        m = np.eye(g.n, dtype=object)
        for s in expr.stages:
            m = np.array(s.matrix, dtype=object) @ m
        return tuple(int(v) % g.N for v in m @ np.array(idx, dtype=object))
    return grid_project(g, eval_map(expr, g.embed(idx)))


def write_table(path, dmap: DiscretizedMap) -> None:
    """Binary dump: 'EGRD', version, n, N (uint32 LE), then uint64 LE successors."""
    g = dmap.grid
    if g.N >= 2**32:
        raise ValueError("N does not fit the 32-bit header field")
    header = TABLE_MAGIC + struct.pack("<III", TABLE_VERSION, g.n, g.N)
    atomic_write_bytes(path, header + dmap.table.astype("<u8").tobytes())


def read_table(path, backend=None) -> DiscretizedMap:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != TABLE_MAGIC:
        raise ValueError("not a successor table file")
    version, n, N = struct.unpack("<III", raw[4:16])
    if version != TABLE_VERSION:
        raise ValueError(f"unsupported table version {version}")
    g = GridSpec(n, N)
    table = np.frombuffer(raw, dtype="<u8", offset=16)
    if table.size != g.size:
        raise ValueError("truncated table file")
    return DiscretizedMap(g, table=table.astype(np.int64), backend=backend)
