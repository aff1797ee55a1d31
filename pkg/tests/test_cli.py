import csv
import subprocess
import sys

import pytest

from viscoshell.cli import cli_main, convergence_verdict

SMALL = ["-s", "mesh.nx=4", "-s", "mesh.ny=4", "-s", "mesh.nz=2", "-s", "time.T=0.2", "-s", "time.dt=0.1"]


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_verify_identities_defaults(tmp_path, capsys):
    assert cli_main(["verify-identities", "-o", str(tmp_path), "-s", "check.n_draws=100"]) == 0
    rows = _rows(tmp_path / "report_identities.csv")
    assert rows[0] == ["name", "residual", "pass"]
    assert all(r[2] == "True" for r in rows[1:])
    assert "r_a" in capsys.readouterr().out


def test_geometry_check(tmp_path):
    assert cli_main(["geometry-check", "-o", str(tmp_path), "-s", "chart.name=cylinder"]) == 0
    rows = _rows(tmp_path / "report_geometry.csv")
    assert [r[0] for r in rows[1:]] == ["gamma3_identity", "codazzi_asymmetry", "slope_g", "slope_Gamma_ab", "slope_Gamma_a3"]
    assert all(r[2] == "True" for r in rows[1:])
    assert len(_rows(tmp_path / "report_geometry_residuals.csv")) > 4


def test_geometry_check_graph(tmp_path):
    argv = ["geometry-check", "-o", str(tmp_path), "-s", "chart.name=graph", "-s", "chart.h=0.3*sin(2*y1)*y2"]
    assert cli_main(argv) == 0


def test_ode_check_small(tmp_path):
    assert cli_main(["ode-check", "-o", str(tmp_path), "-s", "check.ode_draws=3"]) == 0
    names = [r[0] for r in _rows(tmp_path / "report_ode.csv")[1:]]
    assert "m=t^2:deviation" in names and "random:derivative" in names


def test_solve2d_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert cli_main(["solve2d", "-o", str(d), *SMALL]) == 0
    for name in ("report_solve2d.csv", "solution2d.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    rows = _rows(a / "report_solve2d.csv")
    assert rows[0] == ["t", "bending_energy", "memory_norm", "residual", "max_abs_w"]
    assert len(rows) == 4 and float(rows[-1][4]) > 0


def test_solve3d(tmp_path):
    assert cli_main(["solve3d", "-o", str(tmp_path), *SMALL]) == 0
    rows = _rows(tmp_path / "report_solve3d.csv")
    assert len(rows) == 4 and rows[1][2] == "nan"
    assert len(_rows(tmp_path / "solution3d_average.csv")) == 26


def test_converge_small_with_svg(tmp_path, capsys):
    pytest.importorskip("matplotlib")
    code = cli_main(["converge", "-o", str(tmp_path), *SMALL, "-s", "output.svg=True"])
    assert code in (0, 1)
    rows = _rows(tmp_path / "report_convergence.csv")
    assert rows[0][0] == "epsilon" and len(rows) == 4
    assert (tmp_path / "convergence.svg").read_text().startswith("<?xml")
    assert "err_h1st_ratio" in capsys.readouterr().out


def test_config_file(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("chart.name = plate\nmesh.nx = 2\nmesh.ny = 2\nT = 0.1\ndt = 0.1\n")
    assert cli_main(["solve2d", str(cfg), "-o", str(tmp_path / "o")]) == 0


@pytest.mark.parametrize("argv, code, msg", [
    (["converge", "-s", "converge.epsilons=(0.1,)"], 2, ">=3"),
    (["solve2d", "/nonexistent/x.cfg"], 2, "/nonexistent/x.cfg"),
    (["solve2d", "-s", "mesh.nx=zero"], 2, "mesh.nx"),
    (["solve2d", "-s", "theta=0", "-s", "mesh.nx=2", "-s", "mesh.ny=2"], 1, "ElasticCaseUnsupported"),
])
def test_error_exit_codes(tmp_path, capsys, argv, code, msg):
    assert cli_main([*argv, "-o", str(tmp_path)]) == code
    assert msg in capsys.readouterr().err


def test_unknown_command(capsys):
    assert cli_main(["bogus"]) == 2


def test_verdict():
    rows = [{"err_h1st": 1.0, "err_shear": 3.0, "upsilon_norm": 2.0},
            {"err_h1st": 0.5, "err_shear": 2.0, "upsilon_norm": 1.0},
            {"err_h1st": 0.4, "err_shear": 1.0, "upsilon_norm": 0.5}]
    assert all(convergence_verdict(rows).values())
    rows[2]["err_h1st"] = 0.7
    v = convergence_verdict(rows)
    assert not v["err_h1st_ratio"] and v["err_shear_decreasing"]


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "viscoshell.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "converge" in out.stdout
