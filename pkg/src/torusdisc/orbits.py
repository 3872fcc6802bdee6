"""Periodic orbits of discretized maps: single orbits via Floyd, whole grids via labelling."""

from __future__ import annotations

import io
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._io import atomic_write_text, comment_header
from .errors import BudgetExceeded, CapacityError
from .grid import DEFAULT_BUDGET_BYTES, DiscretizedMap, GridSpec
from .measures import DiscreteMeasure

DEFAULT_STEP_BUDGET = 10**10


@dataclass(frozen=True)
class OrbitResult:
    """Eventually periodic orbit: ``tail_length`` steps, then a cycle.

    ``cycle_points`` are linear addresses starting at the first cycle point reached.
    """

    grid: GridSpec
    start: int
    tail_length: int
    cycle_length: int
    cycle_points: np.ndarray
    steps: int

    def cycle_indices(self) -> list[tuple[int, ...]]:
        return [self.grid.unravel(int(a)) for a in self.cycle_points]


def floyd_orbit(dmap: DiscretizedMap, start, budget: int = DEFAULT_STEP_BUDGET) -> OrbitResult:
    """Tortoise-and-hare cycle detection from ``start`` (grid index or address).

    Raises :class:`BudgetExceeded` after ``budget`` map evaluations.
    """
    g = dmap.grid
    addr = int(start) if np.isscalar(start) else g.address(start)
    if not 0 <= addr < g.size:
        raise ValueError(f"start address {addr} outside the grid")
    tail, lam, first, steps, ok = dmap.floyd_raw(addr, budget)
    if not ok:
        raise BudgetExceeded(f"no cycle found within {budget} map evaluations", steps)
    cycle = dmap.walk(first, lam)
    return OrbitResult(g, addr, int(tail), int(lam), cycle, int(steps + lam))


def orbit_measure(result: OrbitResult) -> DiscreteMeasure:
    """Uniform probability on the cycle points."""
    c = result.cycle_length
    return DiscreteMeasure(result.grid, result.cycle_points, np.full(c, 1.0 / c))


@dataclass(frozen=True)
class GridAnalysis:
    grid: GridSpec
    labels: np.ndarray  # cycle id reached by each point
    periodic: np.ndarray  # bool mask of periodic points
    cycle_reps: np.ndarray  # smallest member address per cycle
    cycle_lengths: np.ndarray
    basin_sizes: np.ndarray
    _table: np.ndarray

    @property
    def n_cycles(self) -> int:
        return len(self.cycle_reps)

    @property
    def recurrence_degree(self) -> Fraction:
        return Fraction(int(self.cycle_lengths.sum()), self.grid.size)

    def cycle(self, i: int) -> np.ndarray:
        """Member addresses of cycle ``i`` in orbit order from its smallest member."""
        out = np.empty(int(self.cycle_lengths[i]), dtype=np.int64)
        v = int(self.cycle_reps[i])
        for j in range(len(out)):
            out[j] = v
            v = int(self._table[v])
        return out

    @property
    def cycles(self) -> list[np.ndarray]:
        return [self.cycle(i) for i in range(self.n_cycles)]


def analyze_full_grid(dmap: DiscretizedMap, budget_bytes: int = DEFAULT_BUDGET_BYTES,
                      workers: int = 1) -> GridAnalysis:
    """Every cycle of the functional graph with the exact size of its basin.

    Cycles are numbered by their smallest member address.
    """
    g = dmap.grid
    need = g.size * 25
    if need > budget_bytes:
        raise CapacityError(
            f"full-grid analysis needs about {need} bytes, budget is {budget_bytes}",
            required=need, budget=budget_bytes,
        )
    dmap = dmap.materialize(budget_bytes, workers)
    table = dmap.table
    raw, periodic, ncyc = dmap.kernels.label_graph(table)
    periodic = periodic.astype(bool)
    per_addr = np.flatnonzero(periodic)
    # scanning addresses upward, the first hit of a label is its smallest member
    lab_of_per = raw[per_addr]
    first_lab, first_pos = np.unique(lab_of_per, return_index=True)
    mins = np.empty(ncyc, dtype=np.int64)
    mins[first_lab] = per_addr[first_pos]
    order = np.argsort(mins, kind="stable")
    remap = np.empty(ncyc, dtype=np.int64)
    remap[order] = np.arange(ncyc)
    labels = remap[raw]
    lengths = np.bincount(labels[per_addr], minlength=ncyc).astype(np.int64)
    basins = np.bincount(labels, minlength=ncyc).astype(np.int64)
    return GridAnalysis(g, labels, periodic, mins[order], lengths, basins, table)


def global_measure(analysis: GridAnalysis) -> DiscreteMeasure:
    """Weight ``b / (c * N**n)`` on each point of a cycle of length c and basin size b."""
    per = np.flatnonzero(analysis.periodic)
    lab = analysis.labels[per]
    w = analysis.basin_sizes[lab] / (analysis.cycle_lengths[lab] * float(analysis.grid.size))
    return DiscreteMeasure(analysis.grid, per, w)


def recurrence_degree(analysis: GridAnalysis) -> Fraction:
    """Fraction of grid points that are periodic."""
    return analysis.recurrence_degree


def analysis_to_csv(analysis: GridAnalysis, header=()) -> str:
    buf = io.StringIO()
    buf.write(comment_header(header))
    buf.write("cycle_id,cycle_length,basin_size,basin_fraction,representative_index\n")
    total = analysis.grid.size
    for i in range(analysis.n_cycles):
        b = int(analysis.basin_sizes[i])
        buf.write(
            f"{i},{int(analysis.cycle_lengths[i])},{b},{b / total!r},{int(analysis.cycle_reps[i])}\n"
        )
    return buf.getvalue()


def write_analysis_csv(path, analysis: GridAnalysis, header=()) -> None:
    atomic_write_text(path, analysis_to_csv(analysis, header))
