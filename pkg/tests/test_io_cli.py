import json

import numpy as np
import pytest

from gravjet.errors import ParseError, ValidationError
from gravjet.geometry import build_nozzle
from gravjet.io_cli import (EXIT_CONFIG, EXIT_FIT, EXIT_OK, EXIT_SOLVER, EXIT_VERIFY, dumps, main,
                            parse_config, parse_lattice)

CANON = """\
[physical]
Q = 3
g = 1
H = 1
H1 = 2
H2 = 3

[geometry]
kind = canonical
"""
FIT_POINT = ("4.6484421484375", "1.068")


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_minimal_config_defaults(tmp_path):
    cfg = parse_config(write(tmp_path, CANON))
    assert cfg.numerics.mu == 6.0
    assert cfg.spacing == (1 / 64, 1 / 64)
    assert cfg.tau == 2 / 64


def test_fraction_values(tmp_path):
    cfg = parse_config(write(tmp_path, CANON + "[numerics]\ndx = 1/32\n"))
    assert cfg.numerics.dx == 1 / 32


def test_flux_too_small(tmp_path):
    with pytest.raises(ValidationError) as e:
        parse_config(write(tmp_path, CANON.replace("Q = 3", "Q = 2")))
    assert e.value.field == "physical.Q" and "FluxTooSmall" in str(e.value)


def test_missing_wall_file_named(tmp_path):
    text = CANON.replace("kind = canonical", "kind = samples\nwall1 = w1.csv\nwall2 = w2.csv")
    with pytest.raises(ValidationError) as e:
        parse_config(write(tmp_path, text))
    assert "w1.csv" in str(e.value)


def test_unknown_key(tmp_path):
    with pytest.raises(ValidationError) as e:
        parse_config(write(tmp_path, CANON + "[numerics]\nomega = 1.5\n"))
    assert e.value.field == "numerics.omega"


def test_parse_error_reports_line(tmp_path):
    with pytest.raises(ParseError) as e:
        parse_config(write(tmp_path, CANON + "this is not a key value pair\n"))
    assert e.value.line == 10


def test_wall_samples_config(tmp_path):
    geo = build_nozzle(1.0, 2.0, 3.0)
    for i, (g, top) in enumerate(((geo.g1, 1.99), (geo.g2, 2.99)), start=1):
        y = np.linspace(1.0, top, 120)
        rows = "\n".join(f"{a:.17g},{b:.17g}" for a, b in zip(y, g(y)))
        (tmp_path / f"w{i}.csv").write_text("y,x\n" + rows + "\n")
    text = CANON.replace("kind = canonical", "kind = samples\nwall1 = w1.csv\nwall2 = w2.csv")
    cfg = parse_config(write(tmp_path, text))
    assert cfg.nozzle().kind == "samples"


def test_dumps_full_precision_and_null():
    s = dumps({"a": 0.1, "b": float("nan"), "c": [1, True]})
    d = json.loads(s)
    assert d == {"a": 0.1, "b": None, "c": [1, True]}
    assert "0.10000000000000001" in s


def test_params_worked_point(tmp_path, capsys):
    cfg = write(tmp_path, CANON)
    assert main(["params", "--config", str(cfg), "--h1", "0.5", "--h2", "0.6"]) == EXIT_OK
    d = json.loads(capsys.readouterr().out)
    assert d["Q1"] == pytest.approx(1.3736302, abs=1e-7)
    assert d["lambda"] == pytest.approx(4.2737200, abs=5e-7)
    assert [s["region"] for s in d["asymptotic_states"]] == ["left_downstream", "right_downstream", "upstream"]


def test_config_error_exit_code(tmp_path):
    cfg = write(tmp_path, CANON.replace("Q = 3", "Q = 2"))
    assert main(["params", "--config", str(cfg), "--h1", "0.5", "--h2", "0.6"]) == EXIT_CONFIG


def test_missing_state_is_config_error(tmp_path):
    assert main(["params", "--config", str(write(tmp_path, CANON))]) == EXIT_CONFIG


@pytest.fixture(scope="module")
def coarse_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("runs")
    cfg = write(d, CANON + "[numerics]\ndx = 1/16\n")
    out = d / "solve"
    code = main(["solve", "--config", str(cfg), "--out", str(out), "--lam", FIT_POINT[0], "--q1", FIT_POINT[1]])
    return cfg, out, code


def test_solve_writes_run_directory(coarse_run):
    _, out, code = coarse_run
    assert code == EXIT_OK
    for name in ("effective_config.ini", "fields.csv", "fields.vtk", "boundaries.csv", "interface.csv",
                 "summary.json"):
        assert (out / name).is_file(), name
    head = (out / "fields.csv").read_text().splitlines()[0]
    assert head == "x,y,psi,u,v,p,wet"
    assert json.loads((out / "summary.json").read_text())["solve"]["converged"]


def test_effective_config_reproduces_run(coarse_run, tmp_path):
    cfgp, out, _ = coarse_run
    again = tmp_path / "again"
    assert main(["solve", "--config", str(out / "effective_config.ini"), "--out", str(again),
                 "--lam", FIT_POINT[0], "--q1", FIT_POINT[1]]) == EXIT_OK
    for name in ("fields.csv", "summary.json", "fields.vtk", "boundaries.csv"):
        assert (again / name).read_bytes() == (out / name).read_bytes(), name


def test_verify_tampered_field(coarse_run, tmp_path, capsys):
    import shutil
    _, out, _ = coarse_run
    run = tmp_path / "tampered"
    shutil.copytree(out, run)
    lines = (run / "fields.csv").read_text().splitlines()
    # raise psi at an interior node in the lower strip well inside the jet
    for k, line in enumerate(lines[1:], start=1):
        x, y, psi, *rest = line.split(",")
        if abs(float(x) - 0.5) < 1e-9 and abs(float(y) - 0.25) < 1e-9:
            lines[k] = ",".join([x, y, "2.9"] + rest)
            break
    else:
        pytest.fail("node not found")
    (run / "fields.csv").write_text("\n".join(lines) + "\n")
    capsys.readouterr()
    assert main(["verify", "--config", str(run / "effective_config.ini"), "--run", str(run)]) == EXIT_VERIFY
    text = capsys.readouterr().out
    failing = text.strip().splitlines()[-1]
    assert "monotonicity" in failing or "barrier" in failing
    rep = json.loads((run / "verification.json").read_text())
    assert not rep["passed"]


def test_export_formats(coarse_run, tmp_path):
    cfg, out, _ = coarse_run
    dest = tmp_path / "exp"
    assert main(["export", "--config", str(cfg), "--run", str(out), "--out", str(dest), "--formats", "vtk"]) == EXIT_OK
    assert (dest / "fields.vtk").read_bytes() == (out / "fields.vtk").read_bytes()
    assert not (dest / "fields.csv").exists()


def test_solver_budget_exit_code(tmp_path):
    cfg = write(tmp_path, CANON + "[numerics]\ndx = 1/16\nmax_sweeps = 1\n")
    code = main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o"), "--lam", FIT_POINT[0],
                 "--q1", FIT_POINT[1]])
    assert code == EXIT_SOLVER


def test_fit_without_bracket_exit_code(tmp_path):
    cfg = write(tmp_path, CANON + "[numerics]\ndx = 1/16\n[fit]\nlam_hi = 2.2\n")
    assert main(["fit", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_FIT


def test_lattice_specs():
    assert parse_lattice("4:6:3", "--lams").tolist() == [4.0, 5.0, 6.0]
    assert parse_lattice("0.9,1.2", "--q1s").tolist() == [0.9, 1.2]
    assert parse_lattice("1/2", "--q1s").tolist() == [0.5]
    for bad in ("1:2", "1:2:0", "a,b", "1:2:3:4"):
        with pytest.raises(ValidationError):
            parse_lattice(bad, "--lams")
