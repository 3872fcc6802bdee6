"""Command-line experiment runner.

Each verb reads a JSON config (``--config``), lets flags override it, echoes
the effective config into the output directory and writes CSV / image
artifacts whose first lines carry a digest of that config.

Exit codes: 0 success, 2 config error, 3 budget exhaustion, 4 partial failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

import numpy as np

from . import linear_rates as lr
from ._io import atomic_write_text, comment_header
from .errors import BudgetExceeded, CapacityError
from .grid import DEFAULT_BUDGET_BYTES, GridSpec, discretize, grid_project
from .measures import (
    DEFAULT_LEVEL, dyadic_distance, lebesgue, read_measure_csv, to_histogram, write_measure_csv,
)
from .orbits import DEFAULT_STEP_BUDGET, analyze_full_grid, floyd_orbit, global_measure, orbit_measure
from .raster import RasterSpec, render_files
from .torus_maps import load_map

log = logging.getLogger("torusdisc")

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_PARTIAL = 0, 2, 3, 4
VERBS = ("measure-orbit", "measure-global", "linear-rate", "linear-meanrate",
         "linear-preimage", "linear-decay", "render")
# fields that change where or how fast results are produced, not what they are
NON_SEMANTIC = ("out", "workers")


class ConfigError(ValueError):
    pass


def config_digest(cfg: dict) -> str:
    body = {k: v for k, v in cfg.items() if k not in NON_SEMANTIC}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


def _require(cfg, key):
    if key not in cfg:
        raise ConfigError(f"config is missing required field {key!r}")
    return cfg[key]


def parse_orders(spec) -> list[int]:
    """Grid orders from an int, a list, or ``{"start", "stop", "step"}`` (stop inclusive)."""
    if isinstance(spec, bool):
        raise ConfigError("N must be an integer, list or range")
    if isinstance(spec, int):
        orders = [spec]
    elif isinstance(spec, list):
        orders = [int(v) for v in spec]
    elif isinstance(spec, dict):
        try:
            orders = list(range(int(spec["start"]), int(spec["stop"]) + 1, int(spec.get("step", 1))))
        except (KeyError, ValueError) as e:
            raise ConfigError(f"bad N range {spec!r}") from e
    else:
        raise ConfigError(f"bad N specification {spec!r}")
    if not orders or any(N < 1 for N in orders):
        raise ConfigError("grid orders must be positive")
    return orders


def parse_starts(cfg: dict, n: int) -> list[tuple[str, tuple[float, ...]]]:
    """``(tag, point)`` pairs; random points are uniform on the continuous torus."""
    spec = cfg.get("starts", [[0.5] * n])
    if isinstance(spec, dict):
        count = int(_require(spec, "random"))
        seed = int(spec.get("seed", cfg.get("seed", 0)))
        pts = np.random.Generator(np.random.PCG64(seed)).random((count, n))
        return [(f"s{seed}_{j}", tuple(float(v) for v in p)) for j, p in enumerate(pts)]
    out = []
    for j, p in enumerate(spec):
        if len(p) != n:
            raise ConfigError(f"start {p!r} does not have dimension {n}")
        out.append((f"p{j}", tuple(float(v) for v in p)))
    return out


def _map_and_name(cfg):
    spec = _require(cfg, "map")
    try:
        expr = load_map(spec)
    except (ValueError, KeyError, TypeError) as e:
        raise ConfigError(f"cannot load map: {e}") from e
    name = spec if isinstance(spec, str) and not spec.lstrip().startswith("{") else (expr.name or "map")
    return expr, name


def _raster(cfg):
    r = cfg.get("raster", {})
    if r is None:
        return None
    try:
        return RasterSpec.from_dict(r)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad raster spec: {e}") from e


class Run:
    """Output directory, header lines and status bookkeeping for one verb."""

    def __init__(self, verb: str, cfg: dict):
        self.verb = verb
        self.cfg = cfg
        self.digest = config_digest(cfg)
        self.dir = os.path.join(cfg.get("out", "out"), verb)
        self.header = [f"config_sha256={self.digest}", f"experiment={verb}"]
        os.makedirs(self.dir, exist_ok=True)
        echo = dict(cfg, _config_sha256=self.digest)
        atomic_write_text(self.path("config.json"), json.dumps(echo, indent=2, sort_keys=True) + "\n")

    def path(self, name: str) -> str:
        return os.path.join(self.dir, name)

    def write_csv(self, name: str, columns, rows) -> str:
        p = self.path(name)
        atomic_write_text(p, lr.rows_to_csv(rows, columns, self.header))
        return p


def _status_code(statuses: list[str]) -> int:
    failed = [s for s in statuses if s != "ok"]
    if not failed:
        return EXIT_OK
    if len(failed) == len(statuses) and all(s in ("budget_exceeded", "capacity") for s in failed):
        return EXIT_BUDGET
    return EXIT_PARTIAL


ORBIT_COLUMNS = ("N", "run", "start", "tail", "cycle_length", "distance_to_leb", "status")


def cmd_measure_orbit(cfg: dict) -> int:
    expr, name = _map_and_name(cfg)
    orders = parse_orders(_require(cfg, "N"))
    starts = parse_starts(cfg, expr.dim)
    level = int(cfg.get("level", DEFAULT_LEVEL))
    spec = _raster(cfg) if expr.dim == 2 else None
    png = bool(cfg.get("png", True))
    budget = int(cfg.get("budget_steps", DEFAULT_STEP_BUDGET))
    run = Run("measure-orbit", cfg)
    jobs = [(N, tag, x) for N in orders for tag, x in starts]
    leb = {}

    def one(job):
        N, tag, x = job
        g = GridSpec(expr.dim, N)
        idx = grid_project(g, x)
        row = {"N": N, "run": tag, "start": " ".join(map(str, idx)), "tail": "",
               "cycle_length": "", "distance_to_leb": "", "status": "ok"}
        try:
            res = floyd_orbit(discretize(expr, g), idx, budget)
        except BudgetExceeded as e:
            log.warning("N=%d %s: %s", N, tag, e)
            row["status"] = "budget_exceeded"
            return row
        mu = orbit_measure(res)
        if N not in leb:
            leb[N] = to_histogram(lebesgue(g), level)
        row.update(tail=res.tail_length, cycle_length=res.cycle_length,
                   distance_to_leb=dyadic_distance(to_histogram(mu, level), leb[N], level))
        stem = run.path(f"{name}_N{N}_{tag}")
        head = run.header + [f"N={N} start={row['start']}"]
        write_measure_csv(stem + "_measure.csv", mu, head)
        if spec is not None:
            render_files(mu, spec, stem, head, png)
        return row

    with ThreadPoolExecutor(max(1, int(cfg.get("workers", 1)))) as ex:
        rows = list(ex.map(one, jobs))
    run.write_csv(f"{name}_summary.csv", ORBIT_COLUMNS, rows)
    return _status_code([r["status"] for r in rows])


GLOBAL_COLUMNS = ("N", "n_cycles", "recurrence_degree", "recurrence_fraction",
                  "distance_to_leb", "status")


def cmd_measure_global(cfg: dict) -> int:
    expr, name = _map_and_name(cfg)
    orders = parse_orders(_require(cfg, "N"))
    level = int(cfg.get("level", DEFAULT_LEVEL))
    spec = _raster(cfg) if expr.dim == 2 else None
    png = bool(cfg.get("png", True))
    budget = int(cfg.get("budget_bytes", DEFAULT_BUDGET_BYTES))
    workers = max(1, int(cfg.get("workers", 1)))
    run = Run("measure-global", cfg)
    rows = []
    for N in orders:
        g = GridSpec(expr.dim, N)
        row = {"N": N, "n_cycles": "", "recurrence_degree": "", "recurrence_fraction": "",
               "distance_to_leb": "", "status": "ok"}
        try:
            an = analyze_full_grid(discretize(expr, g), budget, workers)
        except CapacityError as e:
            log.warning("N=%d skipped: %s", N, e)
            row["status"] = "capacity"
            rows.append(row)
            continue
        mu = global_measure(an)
        deg: Fraction = an.recurrence_degree
        row.update(n_cycles=an.n_cycles, recurrence_degree=f"{deg.numerator}/{deg.denominator}",
                   recurrence_fraction=float(deg),
                   distance_to_leb=dyadic_distance(mu, lebesgue(g), level))
        stem = run.path(f"{name}_N{N}")
        head = run.header + [f"N={N}"]
        write_measure_csv(stem + "_measure.csv", mu, head)
        if spec is not None:
            render_files(mu, spec, stem, head, png)
        rows.append(row)
    run.write_csv(f"{name}_summary.csv", GLOBAL_COLUMNS, rows)
    return _status_code([r["status"] for r in rows])


def parse_sequence(cfg: dict) -> lr.MatrixSequence:
    spec = _require(cfg, "sequence")
    try:
        if isinstance(spec, dict) and "random" in spec:
            r = spec["random"]
            return lr.random_sl_sequence(int(r.get("n", 2)), int(r["k"]),
                                         float(r.get("norm_bound", 5.0)),
                                         int(r.get("seed", cfg.get("seed", 0))))
        if isinstance(spec, dict) and "identity" in spec:
            n, k = int(spec.get("n", 2)), int(spec["identity"])
            return lr.MatrixSequence(np.stack([np.eye(n)] * k))
        if isinstance(spec, dict):
            return lr.MatrixSequence.from_dict(spec)
        if isinstance(spec, list):
            return lr.MatrixSequence(np.array(spec, dtype=float))
    except (KeyError, ValueError, TypeError) as e:
        raise ConfigError(f"bad sequence: {e}") from e
    raise ConfigError(f"bad sequence specification {spec!r}")


def _prefixes(cfg, seq) -> list[int]:
    ks = cfg.get("k", [seq.k])
    ks = [ks] if isinstance(ks, int) else [int(k) for k in ks]
    if any(not 1 <= k <= seq.k for k in ks):
        raise ConfigError(f"prefix lengths must lie in 1..{seq.k}")
    return ks


RATE_COLUMNS = ("k", "method", "tau_estimate", "radius_or_samples", "convergence_gap")


def _rate_row(k, est):
    return {"k": k, "method": est.method, "tau_estimate": est.value,
            "radius_or_samples": est.radius_or_samples, "convergence_gap": est.convergence_gap}


def cmd_linear_rate(cfg: dict) -> int:
    seq = parse_sequence(cfg)
    R = int(cfg.get("R", lr.default_radius(seq.n)))
    workers = max(1, int(cfg.get("workers", 1)))
    cross = bool(cfg.get("cross_check", False))
    samples = int(cfg.get("samples", 10**5))
    tol = float(cfg.get("tolerance", 0.02))
    seed = int(cfg.get("seed", 0))
    run = Run("linear-rate", cfg)
    rows, checks = [], []
    for k in _prefixes(cfg, seq):
        sub = seq.prefix(k)
        bf = lr.rate_brute_force(sub, R, workers=workers)
        rows.append(_rate_row(k, bf))
        if cross:
            mc = lr.mean_rate_mc(sub, samples, seed)
            rows.append(_rate_row(k, mc))
            ok = abs(bf.value - mc.value) <= tol
            checks.append(ok)
            print(f"k={k} brute_force={bf.value!r} monte_carlo={mc.value!r} "
                  f"{'PASS' if ok else 'FAIL'} (tolerance {tol})")
        else:
            print(f"k={k} tau_estimate={bf.value!r} gap={bf.convergence_gap!r}")
    run.write_csv("rates.csv", RATE_COLUMNS, rows)
    return EXIT_OK if all(checks) else EXIT_PARTIAL


def cmd_linear_meanrate(cfg: dict) -> int:
    seq = parse_sequence(cfg)
    samples = int(cfg.get("samples", 10**6))
    seed = int(cfg.get("seed", 0))
    run = Run("linear-meanrate", cfg)
    rows = []
    for k in _prefixes(cfg, seq):
        est = lr.mean_rate_mc(seq.prefix(k), samples, seed)
        rows.append(_rate_row(k, est))
        print(f"k={k} mean_rate={est.value!r} gap={est.convergence_gap!r} rng={est.meta['rng']}")
    run.write_csv("meanrates.csv", RATE_COLUMNS, rows)
    return EXIT_OK


def cmd_linear_preimage(cfg: dict) -> int:
    seq = parse_sequence(cfg)
    target = [int(v) for v in _require(cfg, "target")]
    R = int(_require(cfg, "R"))
    run = Run("linear-preimage", cfg)
    cols = tuple(f"x{d}" for d in range(seq.n)) + ("sup_norm",)
    found = lr.preimage_search(seq, target, R)
    rows = [dict(zip(cols, list(x) + [max(abs(v) for v in x)])) for x in found]
    run.write_csv("preimages.csv", cols, rows)
    print(f"{len(found)} preimages of {tuple(target)} within radius {R}")
    return EXIT_OK


def cmd_linear_decay(cfg: dict) -> int:
    n = int(cfg.get("n", 2))
    rows = lr.decay_experiment(n, int(cfg.get("k_max", 10)), float(cfg.get("norm_bound", 5.0)),
                               int(cfg.get("trials", 10)), int(cfg.get("seed", 0)),
                               cfg.get("R"), workers=max(1, int(cfg.get("workers", 1))))
    run = Run("linear-decay", cfg)
    run.write_csv("decay.csv", lr.DECAY_COLUMNS, rows)
    return EXIT_OK


def cmd_render(cfg: dict) -> int:
    src = _require(cfg, "input")
    if not os.path.exists(src):
        raise ConfigError(f"input measure {src!r} does not exist")
    try:
        mu = read_measure_csv(src)
    except (ValueError, KeyError) as e:
        raise ConfigError(f"malformed measure file {src!r}: {e}") from e
    spec = _raster(cfg) or RasterSpec()
    run = Run("render", cfg)
    base = os.path.basename(src)
    stem = base[: -len("_measure.csv")] if base.endswith("_measure.csv") else os.path.splitext(base)[0]
    render_files(mu, spec, run.path(stem), run.header, bool(cfg.get("png", True)))
    return EXIT_OK


COMMANDS = {
    "measure-orbit": cmd_measure_orbit,
    "measure-global": cmd_measure_global,
    "linear-rate": cmd_linear_rate,
    "linear-meanrate": cmd_linear_meanrate,
    "linear-preimage": cmd_linear_preimage,
    "linear-decay": cmd_linear_decay,
    "render": cmd_render,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="torusdisc", description=__doc__.splitlines()[0])
    p.add_argument("verb", choices=VERBS)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", help="output directory (default: out)")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--budget-bytes", type=int, dest="budget_bytes")
    p.add_argument("--budget-steps", type=int, dest="budget_steps")
    p.add_argument("--input", help="measure CSV to re-render (render only)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def effective_config(args) -> dict:
    cfg = {}
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {args.config!r}: {e}") from e
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    for key in ("out", "seed", "workers", "budget_bytes", "budget_steps", "input"):
        v = getattr(args, key)
        if v is not None:
            cfg[key] = v
    cfg.setdefault("out", "out")
    cfg["experiment"] = args.verb
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = effective_config(args)
        return COMMANDS[args.verb](cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (CapacityError, BudgetExceeded) as e:
        print(f"budget exhausted: {e}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
