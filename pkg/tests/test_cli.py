import json

import pytest

from secondgrade.checkpoint import load_checkpoint
from secondgrade.cli import main
from secondgrade.config import ConfigError, load_config, parse_config
from secondgrade.diagnostics import CSV_COLUMNS

TG = {
    "grid": {"dim": 2, "n": 16},
    "solver": {"alpha": 0.1, "nu": 0.1, "dt": 0.01, "t_end": 0.1, "sample_every": 2},
    "initial": {"type": "taylor_green"},
    "sweep": {"alphas": [0.1, 0.01]},
    "probe": {"amplitudes": [0.0, 1.0]},
    "validate": {"levels": 2},
    "workers": 1,
}


def _write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc) if not isinstance(doc, str) else doc)
    return str(path)


# -- config -----------------------------------------------------------------------------


def test_defaults_resolve():
    cfg = parse_config({})
    d = cfg.as_dict()
    assert d["grid"] == {"dim": 2, "n": 32}
    assert d["initial"] == {"type": "taylor_green", "amplitude": 1.0}
    assert cfg.workers >= 1 and d["workers"] == cfg.workers
    assert set(d["solver"]) >= {"alpha", "nu", "dt", "t_end", "formulation", "integrator", "cfl_limit", "sample_every"}


def test_random_initial_defaults():
    cfg = parse_config({"initial": {"type": "random", "seed": 4}})
    assert cfg.initial == {"type": "random", "seed": 4, "slope": -2.0, "k_max": 4, "amplitude": 1.0}


@pytest.mark.parametrize("doc,needle", [
    ({"grid": {"dim": 2, "nn": 32}}, "grid.nn"),
    ({"extra": 1}, "extra"),
    ({"grid": {"dim": 4}}, "grid.dim"),
    ({"grid": {"n": 33}}, "grid.n"),
    ({"solver": {"alpha": 2.0}}, "solver.alpha"),
    ({"solver": {"nu": 0}}, "solver.nu"),
    ({"solver": {"dt": "fast"}}, "solver.dt"),
    ({"solver": {"sample_every": 1.5}}, "solver.sample_every"),
    ({"solver": {"formulation": "stream"}}, "solver.formulation"),
    ({"initial": {"type": "vortex"}}, "initial.type"),
    ({"initial": {"type": "taylor_green", "seed": 1}}, "initial.seed"),
    ({"initial": {"type": "random", "k_max": 20}}, "initial.k_max"),
    ({"initial": {"type": "checkpoint"}}, "initial.path"),
    ({"monitors": {"K": -1}}, "monitors.K"),
    ({"output": {"formats": ["xml"]}}, "output.formats"),
    ({"sweep": {"alphas": [0.01, 0.1]}}, "sweep.alphas"),
    ({"probe": {"amplitudes": [2, 1]}}, "probe.amplitudes"),
    ({"workers": 0}, "workers"),
])
def test_config_errors_name_key(doc, needle):
    with pytest.raises(ConfigError, match=needle.replace(".", r"\.")):
        parse_config(doc)


def test_malformed_json_reports_line(tmp_path):
    path = _write(tmp_path, '{\n  "grid": {"dim": 2,,\n}')
    with pytest.raises(ConfigError, match="line 2, column"):
        load_config(path)


# -- commands -------------------------------------------------------------------------------


def test_simulate_outputs(tmp_path):
    out = tmp_path / "o"
    assert main(["simulate", "--config", _write(tmp_path, TG), "--out", str(out)]) == 0
    csv_lines = (out / "trajectory.csv").read_text().splitlines()
    assert csv_lines[0] == ",".join(CSV_COLUMNS)
    assert len(csv_lines) == 1 + 6
    assert len((out / "diagnostics.jsonl").read_text().splitlines()) == 6
    ck = load_checkpoint(out / "final.g2ck")
    assert ck.time == pytest.approx(0.1) and ck.alpha == 0.1
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["solver"]["dt"] == 0.01
    assert report["config"]["output"]["dir"] == str(out)


def test_simulate_deterministic(tmp_path):
    cfg = _write(tmp_path, TG)
    for name in ("a", "b"):
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / name)]) == 0
    for f in ("trajectory.csv", "diagnostics.jsonl", "final.g2ck"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_simulate_from_checkpoint(tmp_path):
    main(["simulate", "--config", _write(tmp_path, TG), "--out", str(tmp_path / "a")])
    doc = dict(TG, initial={"type": "checkpoint", "path": str(tmp_path / "a" / "final.g2ck")})
    assert main(["simulate", "--config", _write(tmp_path, doc, "c.json"), "--out", str(tmp_path / "b")]) == 0
    bad = dict(doc, grid={"dim": 2, "n": 32})
    assert main(["simulate", "--config", _write(tmp_path, bad, "d.json"), "--out", str(tmp_path / "c")]) == 2


def test_blowup_exit_code(tmp_path):
    doc = dict(TG, solver={"alpha": 0.0, "nu": 0.001, "dt": 0.05, "t_end": 5.0},
               initial={"type": "random", "seed": 0, "slope": -1.0, "k_max": 5, "amplitude": 1e5})
    out = tmp_path / "o"
    assert main(["simulate", "--config", _write(tmp_path, doc), "--out", str(out)]) == 3
    report = json.loads((out / "report.json").read_text())
    assert report["summary"]["blowup"] is not None
    assert (out / "final.g2ck").exists()


def test_sweep_outputs(tmp_path):
    out = tmp_path / "o"
    assert main(["sweep", "--config", _write(tmp_path, TG), "--out", str(out)]) == 0
    rep = json.loads((out / "sweep.json").read_text())
    assert rep["report"]["alphas"] == [0.1, 0.01]
    assert "wall_times" not in rep["report"]
    assert (out / "sweep.csv").read_text().splitlines()[0] == "alpha,error,order_to_next"
    assert set(json.loads((out / "timings.json").read_text())) == {"0", "0.1", "0.01"}


def test_probe_validate_verify(tmp_path):
    cfg = _write(tmp_path, TG)
    assert main(["probe", "--config", cfg, "--out", str(tmp_path / "p")]) == 0
    assert (tmp_path / "p" / "probe.csv").read_text().splitlines()[1].startswith("0,completed,inf")
    assert main(["validate", "--config", cfg, "--out", str(tmp_path / "v")]) == 0
    val = json.loads((tmp_path / "v" / "validate.json").read_text())
    assert all(lv["max_rel_error"] <= 1e-12 for lv in val["levels"])
    assert main(["verify-identities", "--config", cfg, "--out", str(tmp_path / "i")]) == 0
    ident = json.loads((tmp_path / "i" / "identities.json").read_text())
    assert ident["report"]["passed"]


def test_validate_needs_2d(tmp_path):
    doc = dict(TG, grid={"dim": 3, "n": 16})
    assert main(["validate", "--config", _write(tmp_path, doc), "--out", str(tmp_path / "o")]) == 2


def test_config_error_exit_code(tmp_path, capsys):
    assert main(["simulate", "--config", _write(tmp_path, '{"grid": {"dim": 2,, }}')]) == 2
    assert "line 1" in capsys.readouterr().err
    assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == 2


def test_inspect_checkpoint(tmp_path, capsys):
    out = tmp_path / "o"
    main(["simulate", "--config", _write(tmp_path, TG), "--out", str(out)])
    capsys.readouterr()
    assert main(["inspect-checkpoint", str(out / "final.g2ck")]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["n"] == 16 and info["dim"] == 2
    raw = (out / "final.g2ck").read_bytes()
    (tmp_path / "cut.g2ck").write_bytes(raw[:200])
    assert main(["inspect-checkpoint", str(tmp_path / "cut.g2ck")]) == 2
    assert "truncated at byte 200" in capsys.readouterr().err


def test_parser_requires_subcommand():
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 2
