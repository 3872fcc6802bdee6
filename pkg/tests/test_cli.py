import json

import numpy as np
import pytest

from torusdisc.cli import EXIT_BUDGET, EXIT_CONFIG, EXIT_OK, EXIT_PARTIAL, config_digest, main, parse_orders


def run(tmp_path, verb, cfg, *flags):
    path = tmp_path / f"{verb}.json"
    path.write_text(json.dumps(cfg))
    return main([verb, "--config", str(path), "--out", str(tmp_path / "out"), *flags])


def read_rows(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    head = lines[0].split(",")
    return [dict(zip(head, ln.split(","))) for ln in lines[1:]]


def test_parse_orders():
    assert parse_orders(5) == [5]
    assert parse_orders([3, 4]) == [3, 4]
    assert parse_orders({"start": 10, "stop": 14, "step": 2}) == [10, 12, 14]


def test_identity_orbit(tmp_path):
    assert run(tmp_path, "measure-orbit", {"map": "identity", "N": 16}) == EXIT_OK
    rows = read_rows(tmp_path / "out/measure-orbit/identity_summary.csv")
    assert rows[0]["cycle_length"] == "1"
    assert float(rows[0]["distance_to_leb"]) == pytest.approx(1.6, abs=0.1)


def test_anosov_orbit_row(tmp_path):
    assert run(tmp_path, "measure-orbit", {"map": "anosov", "N": 5, "starts": [[0.2, 0.0]]}) == 0
    row = read_rows(tmp_path / "out/measure-orbit/anosov_summary.csv")[0]
    assert (row["start"], row["tail"], row["cycle_length"]) == ("1 0", "0", "10")
    assert (tmp_path / "out/measure-orbit/anosov_N5_p0.ppm").exists()


def test_random_starts_and_header(tmp_path):
    cfg = {"map": "f1", "N": [257], "starts": {"random": 3}}
    assert run(tmp_path, "measure-orbit", cfg, "--seed", "9") == 0
    d = tmp_path / "out/measure-orbit"
    assert sorted(p.name for p in d.glob("*.ppm")) == [f"f1_N257_s9_{j}.ppm" for j in range(3)]
    echoed = json.loads((d / "config.json").read_text())
    digest = echoed.pop("_config_sha256")
    assert digest == config_digest(echoed)
    for p in d.glob("*.csv"):
        assert p.read_text().startswith(f"# config_sha256={digest}\n")
    assert f"config_sha256={digest}".encode() in (d / "f1_N257_s9_0.ppm").read_bytes()


def test_workers_do_not_change_outputs(tmp_path):
    cfg = {"map": "f2", "N": {"start": 300, "stop": 305}}
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    assert run(a, "measure-orbit", cfg, "--workers", "1") == 0
    assert run(b, "measure-orbit", cfg, "--workers", "3") == 0
    for p in (a / "out/measure-orbit").iterdir():
        if p.name != "config.json":
            assert p.read_bytes() == (b / "out/measure-orbit" / p.name).read_bytes()


def test_budget_exhaustion(tmp_path):
    assert run(tmp_path, "measure-orbit", {"map": "f1", "N": 4097}, "--budget-steps", "5") == EXIT_BUDGET
    rows = read_rows(tmp_path / "out/measure-orbit/f1_summary.csv")
    assert rows[0]["status"] == "budget_exceeded"


def test_partial_failure(tmp_path):
    cfg = {"map": "f1", "N": [64, 4098], "budget_steps": 2000}
    assert run(tmp_path, "measure-orbit", cfg) == EXIT_PARTIAL
    rows = read_rows(tmp_path / "out/measure-orbit/f1_summary.csv")
    assert [r["status"] for r in rows] == ["ok", "budget_exceeded"]


def test_global_identity_and_anosov(tmp_path):
    assert run(tmp_path, "measure-global", {"map": "identity", "N": 64}) == 0
    row = read_rows(tmp_path / "out/measure-global/identity_summary.csv")[0]
    assert row["recurrence_degree"] == "1/1" and float(row["distance_to_leb"]) == 0.0
    assert run(tmp_path, "measure-global", {"map": "anosov", "N": [10, 33]}) == 0
    rows = read_rows(tmp_path / "out/measure-global/anosov_summary.csv")
    assert [r["recurrence_degree"] for r in rows] == ["1/1", "1/1"]


def test_global_capacity_skips(tmp_path):
    code = run(tmp_path, "measure-global", {"map": "g1", "N": [32, 4096]}, "--budget-bytes", "100000")
    assert code == EXIT_PARTIAL
    rows = read_rows(tmp_path / "out/measure-global/g1_summary.csv")
    assert [r["status"] for r in rows] == ["ok", "capacity"]


def test_config_errors(tmp_path):
    assert run(tmp_path, "measure-orbit", {"N": 5}) == EXIT_CONFIG
    assert run(tmp_path, "measure-orbit", {"map": "nope", "N": 5}) == EXIT_CONFIG
    assert run(tmp_path, "measure-orbit", {"map": "f1", "N": -3}) == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["render", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["render", "--input", str(tmp_path / "missing.csv")]) == EXIT_CONFIG


def test_linear_identity_rate(tmp_path):
    cfg = {"sequence": {"identity": 2}, "R": 20}
    assert run(tmp_path, "linear-rate", cfg) == 0
    row = read_rows(tmp_path / "out/linear-rate/rates.csv")[0]
    assert float(row["tau_estimate"]) == 1.0


def test_linear_cross_check(tmp_path, capsys):
    cfg = {"sequence": {"matrices": [[[2, 0], [0, 0.5]]]}, "R": 100, "cross_check": True,
           "samples": 50000}
    assert run(tmp_path, "linear-rate", cfg) == 0
    assert "PASS" in capsys.readouterr().out
    rows = read_rows(tmp_path / "out/linear-rate/rates.csv")
    assert {r["method"] for r in rows} == {"brute_force", "monte_carlo"}
    assert all(abs(float(r["tau_estimate"]) - 0.5) < 0.02 for r in rows)


def test_linear_meanrate_and_preimage(tmp_path):
    cfg = {"sequence": {"random": {"k": 2}}, "k": [1, 2], "samples": 10000}
    assert run(tmp_path, "linear-meanrate", cfg, "--seed", "3") == 0
    assert len(read_rows(tmp_path / "out/linear-meanrate/meanrates.csv")) == 2
    cfg = {"sequence": {"matrices": [[[0.5, 0], [0, 2]]]}, "target": [0, 0], "R": 5}
    assert run(tmp_path, "linear-preimage", cfg) == 0
    rows = read_rows(tmp_path / "out/linear-preimage/preimages.csv")
    assert [(r["x0"], r["x1"]) for r in rows] == [("1", "0"), ("0", "0")]


def test_decay_is_byte_identical(tmp_path):
    cfg = {"trials": 2, "k_max": 3, "R": 30}
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    assert run(a, "linear-decay", cfg, "--seed", "5") == 0
    assert run(b, "linear-decay", cfg, "--seed", "5") == 0
    assert (a / "out/linear-decay/decay.csv").read_bytes() == (b / "out/linear-decay/decay.csv").read_bytes()


def test_render_uniform_and_idempotent(tmp_path):
    from torusdisc.grid import GridSpec
    from torusdisc.measures import DiscreteMeasure, write_measure_csv

    g = GridSpec(2, 256)
    write_measure_csv(tmp_path / "u_measure.csv",
                      DiscreteMeasure(g, np.arange(g.size), np.full(g.size, 1 / g.size)))
    args = ["render", "--input", str(tmp_path / "u_measure.csv"), "--out", str(tmp_path / "o")]
    assert main(args) == 0
    first = {p.name: p.read_bytes() for p in (tmp_path / "o/render").iterdir()}
    vals = [float(r["log10_mass"]) for r in read_rows(tmp_path / "o/render/u_pixels.csv")]
    assert len(vals) == 128 * 128 and max(abs(v + 4.2144199) for v in vals) < 1e-6
    assert main(args) == 0
    assert first == {p.name: p.read_bytes() for p in (tmp_path / "o/render").iterdir()}


def test_render_colormap_changes_image_only(tmp_path):
    from torusdisc.grid import GridSpec
    from torusdisc.measures import DiscreteMeasure, write_measure_csv

    write_measure_csv(tmp_path / "m_measure.csv",
                      DiscreteMeasure(GridSpec(2, 64), [0, 100, 3000], [0.5, 0.3, 0.2]))
    outs = []
    for i, cmap in enumerate([None, [[0, 0, 0], [255, 255, 255]]]):
        cfg = {"input": str(tmp_path / "m_measure.csv")}
        if cmap:
            cfg["raster"] = {"colormap": cmap}
        d = tmp_path / f"r{i}"
        d.mkdir()
        assert run(d, "render", cfg) == 0
        outs.append(d / "out/render")
    strip = lambda p: [ln for ln in p.read_text().splitlines() if not ln.startswith("#")]
    assert strip(outs[0] / "m_pixels.csv") == strip(outs[1] / "m_pixels.csv")
    assert (outs[0] / "m.ppm").read_bytes() != (outs[1] / "m.ppm").read_bytes()
