"""Analytic torus maps built from trigonometric shears and unimodular matrices.

A map is an ordered list of stages applied left to right, so the composition
``Q o P`` (P first) is written ``TorusMapExpr((P, Q))``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

PHASES = ("cos", "sin")
BUILTIN_NAMES = ("identity", "anosov", "f1", "f2", "g1", "g2")
ANOSOV = ((2, 1), (1, 1))


def wrap_unit(v: float) -> float:
    """Reduce ``v`` mod 1 into [0, 1)."""
    r = v - math.floor(v)
    # x - floor(x) can round up to exactly 1.0 for tiny negative x; 1 == 0 on the circle.
    if r >= 1.0:
        r = 0.0
    return r


def wrap_unit_array(v: np.ndarray) -> np.ndarray:
    r = v - np.floor(v)
    r[r >= 1.0] = 0.0
    return r


@dataclass(frozen=True)
class ShearTerm:
    amplitude: float
    frequency: int
    phase: str = "cos"

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ValueError(f"phase must be one of {PHASES}, got {self.phase!r}")
        if int(self.frequency) != self.frequency or self.frequency <= 0:
            raise ValueError(f"frequency must be a positive integer, got {self.frequency!r}")


@dataclass(frozen=True)
class TrigShearSpec:
    """Shear ``x[modify] += p(x[read])`` with ``p(t) = sum a * phase(2 pi f t)``."""

    modify: int
    read: int
    terms: tuple[ShearTerm, ...]

    def __post_init__(self):
        if self.modify == self.read:
            raise ValueError("a shear must read a coordinate other than the one it modifies")
        if self.modify < 0 or self.read < 0:
            raise ValueError("axis indices must be nonnegative")
        object.__setattr__(self, "terms", tuple(self.terms))

    @property
    def min_dim(self) -> int:
        return max(self.modify, self.read) + 1

    def displacement(self, t: float) -> float:
        p = 0.0
        for term in self.terms:
            arg = (TWO_PI * term.frequency) * t
            p += term.amplitude * (math.cos(arg) if term.phase == "cos" else math.sin(arg))
        return p

    def inverse(self) -> "TrigShearSpec":
        return TrigShearSpec(
            self.modify,
            self.read,
            tuple(ShearTerm(-t.amplitude, t.frequency, t.phase) for t in self.terms),
        )


@dataclass(frozen=True)
class IntegerLinearSpec:
    matrix: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(int(v) for v in row) for row in self.matrix)
        n = len(rows)
        if n == 0 or any(len(r) != n for r in rows):
            raise ValueError("matrix must be square and non-empty")
        for row, orig in zip(rows, self.matrix):
            if any(float(a) != float(b) for a, b in zip(row, orig)):
                raise ValueError("matrix entries must be integers")
        object.__setattr__(self, "matrix", rows)
        det = _int_det(rows)
        if abs(det) != 1:
            raise ValueError(f"integer stage must be unimodular, det = {det}")

    @property
    def min_dim(self) -> int:
        return len(self.matrix)


def _int_det(rows) -> int:
    # Bareiss elimination keeps everything in exact integers.
    m = [list(r) for r in rows]
    n = len(m)
    sign, prev = 1, 1
    for k in range(n - 1):
        if m[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if m[i][k] != 0), None)
            if swap is None:
                return 0
            m[k], m[swap] = m[swap], m[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
        prev = m[k][k]
    return sign * m[n - 1][n - 1]


Stage = TrigShearSpec | IntegerLinearSpec


@dataclass(frozen=True)
class MapProgram:
    """Flat array encoding of a map, consumed by the compiled and Python kernels."""

    n: int
    kinds: np.ndarray  # int32, 0 = shear, 1 = linear
    modify: np.ndarray
    read: np.ndarray
    term_off: np.ndarray  # int64, len S + 1
    omega: np.ndarray  # 2 pi * frequency
    amp: np.ndarray
    phase: np.ndarray  # int32, 0 = cos, 1 = sin
    mat_off: np.ndarray  # int64, len S + 1
    mat: np.ndarray  # float64, row-major n x n blocks
    exact: bool  # all stages integer-linear
    int_mat: np.ndarray  # int64 n x n product, valid when exact


@dataclass(frozen=True)
class TorusMapExpr:
    stages: tuple[Stage, ...] = ()
    dim: int | None = None
    name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        need = max((s.min_dim for s in self.stages), default=1)
        dim = self.dim if self.dim is not None else need
        if dim < need:
            raise ValueError(f"dim={dim} is smaller than the stages require ({need})")
        for s in self.stages:
            if isinstance(s, IntegerLinearSpec) and s.min_dim != dim:
                raise ValueError("linear stage size does not match the map dimension")
        object.__setattr__(self, "dim", dim)

    @property
    def is_integer_linear(self) -> bool:
        return all(isinstance(s, IntegerLinearSpec) for s in self.stages)

    def then(self, other: "TorusMapExpr") -> "TorusMapExpr":
        """The map that applies ``self`` first, then ``other``."""
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        return TorusMapExpr(self.stages + other.stages, dim=self.dim)

    def inverse(self) -> "TorusMapExpr":
        inv = []
        for s in reversed(self.stages):
            if isinstance(s, TrigShearSpec):
                inv.append(s.inverse())
            else:
                m = np.rint(np.linalg.inv(np.array(s.matrix, dtype=float))).astype(int)
                inv.append(IntegerLinearSpec(tuple(map(tuple, m.tolist()))))
        return TorusMapExpr(tuple(inv), dim=self.dim)

    def __call__(self, x):
        return eval_map(self, x)

    def compile(self) -> MapProgram:
        return _compile(self)

    def to_dict(self) -> dict:
        out = []
        for s in self.stages:
            if isinstance(s, TrigShearSpec):
                out.append(
                    {
                        "kind": "shear",
                        "modify": s.modify,
                        "read": s.read,
                        "terms": [
                            {"a": t.amplitude, "freq": t.frequency, "phase": t.phase}
                            for t in s.terms
                        ],
                    }
                )
            else:
                out.append({"kind": "linear", "matrix": [list(r) for r in s.matrix]})
        return {"dim": self.dim, "stages": out}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def map_from_dict(doc: dict) -> TorusMapExpr:
    stages = []
    for st in doc.get("stages", []):
        kind = st.get("kind")
        if kind == "shear":
            terms = tuple(
                ShearTerm(float(t["a"]), int(t["freq"]), t.get("phase", "cos"))
                for t in st["terms"]
            )
            stages.append(TrigShearSpec(int(st["modify"]), int(st["read"]), terms))
        elif kind == "linear":
            stages.append(IntegerLinearSpec(tuple(tuple(r) for r in st["matrix"])))
        else:
            raise ValueError(f"unknown stage kind {kind!r}")
    return TorusMapExpr(tuple(stages), dim=doc.get("dim"), name=doc.get("name"))


def load_map(spec) -> TorusMapExpr:
    """Accept a builtin name, a JSON string, a dict document or a TorusMapExpr."""
    if isinstance(spec, TorusMapExpr):
        return spec
    if isinstance(spec, str):
        if spec in BUILTIN_NAMES:
            return builtin(spec)
        return map_from_dict(json.loads(spec))
    if isinstance(spec, dict):
        return map_from_dict(spec)
    raise TypeError(f"cannot build a map from {type(spec).__name__}")


def _shear(modify, read, coeffs) -> TrigShearSpec:
    return TrigShearSpec(modify, read, tuple(ShearTerm(a, f, ph) for a, f, ph in coeffs))


def builtin(name: str) -> TorusMapExpr:
    """The example maps: f1, f2 (single-orbit experiments), g1, g2 (full grids).

    ``f1 = Q o P`` with ``P(x, y) = (x, y + p(x))`` and ``Q(x, y) = (x + q(y), y)``;
    ``f2 = f1 o A`` applies the Anosov matrix A first.
    """
    A = TorusMapExpr((IntegerLinearSpec(ANOSOV),), dim=2)
    if name == "identity":
        return TorusMapExpr((), dim=2, name=name)
    if name == "anosov":
        return TorusMapExpr(A.stages, dim=2, name=name)
    if name in ("f1", "f2"):
        P = _shear(1, 0, [(1 / 209, 17, "cos"), (1 / 471, 29, "sin"), (-1 / 703, 39, "cos")])
        Q = _shear(0, 1, [(1 / 287, 15, "cos"), (1 / 403, 31, "sin"), (-1 / 841, 41, "sin")])
    elif name in ("g1", "g2"):
        P = _shear(1, 0, [(1 / 209, 17, "cos"), (1 / 271, 27, "sin"), (-1 / 703, 35, "cos")])
        Q = _shear(0, 1, [(1 / 287, 15, "cos"), (1 / 203, 27, "sin"), (-1 / 841, 38, "sin")])
    else:
        raise ValueError(f"unknown builtin map {name!r}; expected one of {BUILTIN_NAMES}")
    stages = (P, Q) if name.endswith("1") else A.stages + (P, Q)
    return TorusMapExpr(stages, dim=2, name=name)


def _compile(m: TorusMapExpr) -> MapProgram:
    n = m.dim
    kinds, modify, read, term_off, mat_off = [], [], [], [0], [0]
    omega, amp, phase, mat = [], [], [], []
    for s in m.stages:
        if isinstance(s, TrigShearSpec):
            kinds.append(0)
            modify.append(s.modify)
            read.append(s.read)
            for t in s.terms:
                omega.append(TWO_PI * t.frequency)
                amp.append(t.amplitude)
                phase.append(PHASES.index(t.phase))
        else:
            kinds.append(1)
            modify.append(-1)
            read.append(-1)
            for row in s.matrix:
                mat.extend(float(v) for v in row)
        term_off.append(len(omega))
        mat_off.append(len(mat))
    prod = np.eye(n, dtype=np.int64)
    if m.is_integer_linear:
        for s in m.stages:
            prod = np.array(s.matrix, dtype=np.int64) @ prod
    return MapProgram(
        n=n,
        kinds=np.array(kinds, dtype=np.int32),
        modify=np.array(modify, dtype=np.int32),
        read=np.array(read, dtype=np.int32),
        term_off=np.array(term_off, dtype=np.int64),
        omega=np.array(omega, dtype=np.float64),
        amp=np.array(amp, dtype=np.float64),
        phase=np.array(phase, dtype=np.int32),
        mat_off=np.array(mat_off, dtype=np.int64),
        mat=np.array(mat, dtype=np.float64),
        exact=m.is_integer_linear,
        int_mat=np.ascontiguousarray(prod, dtype=np.int64),
    )


def eval_stage(s: Stage, x: list[float]) -> list[float]:
    if isinstance(s, TrigShearSpec):
        x = list(x)
        x[s.modify] = wrap_unit(x[s.modify] + s.displacement(x[s.read]))
        return x
    out = []
    for row in s.matrix:
        acc = 0.0
        for a, v in zip(row, x):
            acc += float(a) * v
        out.append(wrap_unit(acc))
    return out


def eval_map(m: TorusMapExpr, x: Sequence[float]) -> tuple[float, ...]:
    """Evaluate the map at a torus point; every output coordinate lies in [0, 1)."""
    if len(x) != m.dim:
        raise ValueError(f"point has dimension {len(x)}, map has dimension {m.dim}")
    pt = [wrap_unit(float(v)) for v in x]
    for s in m.stages:
        pt = eval_stage(s, pt)
    return tuple(pt)


def eval_map_array(m: TorusMapExpr, pts: np.ndarray) -> np.ndarray:
    """Vectorized :func:`eval_map` over an ``(M, n)`` array, same operation order."""
    x = wrap_unit_array(np.array(pts, dtype=np.float64, copy=True))
    if x.ndim != 2 or x.shape[1] != m.dim:
        raise ValueError(f"expected an (M, {m.dim}) array")
    for s in m.stages:
        if isinstance(s, TrigShearSpec):
            t = x[:, s.read]
            p = np.zeros_like(t)
            for term in s.terms:
                arg = (TWO_PI * term.frequency) * t
                p = p + term.amplitude * (np.cos(arg) if term.phase == "cos" else np.sin(arg))
            x[:, s.modify] = wrap_unit_array(x[:, s.modify] + p)
        else:
            y = np.empty_like(x)
            for r, row in enumerate(s.matrix):
                acc = np.zeros(x.shape[0])
                for j, a in enumerate(row):
                    acc = acc + float(a) * x[:, j]
                y[:, r] = wrap_unit_array(acc)
            x = y
    return x
