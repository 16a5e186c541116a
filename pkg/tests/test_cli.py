import csv
import io
import subprocess
import sys

import numpy as np
import pytest

from svlab.cli import run
from svlab.mesh import read_mesh


def _run(capsys, *argv):
    code = run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_generate_refine_quality(tmp_path, capsys):
    m0, m1 = tmp_path / "m0.svmesh", tmp_path / "m1.svmesh"
    code, _, err = _run(capsys, "generate", "--unit-square", "2", "--out", str(m0))
    assert code == 0 and err.startswith("# svlab 0.1.0 ")
    assert read_mesh(m0).num_cells == 8
    code, _, _ = _run(capsys, "refine", "--in", str(m0), "--strategy", "incenter",
                      "--levels", "2", "--out", str(m1))
    assert code == 0
    r = read_mesh(m1)
    assert r.num_cells == 72 and r.macro_parent is not None
    code, out, _ = _run(capsys, "quality", "--in", str(m1), "--delta", "0.1")
    rows = _rows(out)
    assert code == 0 and len(rows) == 73
    assert list(rows[0]) == ["cell_id", "h1", "h2", "h3", "alpha_max", "aspect", "lac_pass",
                             "alpha_min"]
    assert rows[-1]["cell_id"] == "summary"
    aspects = [float(x["aspect"]) for x in rows[:-1]]
    assert float(rows[-1]["aspect"]) == max(aspects)
    assert all(float(x["h1"]) <= float(x["h2"]) <= float(x["h3"]) for x in rows[:-1])


def test_generate_shishkin_default_tau(capsys):
    code, out, err = _run(capsys, "generate", "--shishkin", "4", "--eps", "0.01")
    assert code == 0
    assert "eps=0.01" in err
    xs = sorted({float(line.split()[0]) for line in out.splitlines()[2:27]})
    assert xs[2] == pytest.approx(0.06)


def test_quality_reports_degenerate_cell(tmp_path, capsys):
    p = tmp_path / "bad.svmesh"
    p.write_text("svmesh v1\nvertices 4\n0 0\n1 0\n2 0\n0 1\ncells 2\n0 3 1\n0 1 2\n")
    code, out, err = _run(capsys, "quality", "--in", str(p))
    assert code == 1
    assert "cell 1 is degenerate" in err


def test_parse_error_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.svmesh"
    p.write_text("svmesh v1\nvertices 3\n0 0\n")
    code, _, err = _run(capsys, "refine", "--in", str(p))
    assert code == 1 and "line 4" in err


def test_usage_errors(capsys):
    assert _run(capsys, "frobnicate")[0] == 2
    assert _run(capsys, "generate")[0] == 2
    assert _run(capsys, "refine", "--in", "x", "--strategy", "orthocenter")[0] == 2
    assert _run(capsys, "stokes", "--mesh", "x", "--tau", "0.1")[0] == 2


def test_missing_file(capsys):
    code, _, err = _run(capsys, "quality", "--in", "/nonexistent/mesh.svmesh")
    assert code == 1 and "FileNotFoundError" in err


def test_infsup_table(capsys):
    code, out, _ = _run(capsys, "infsup", "--strategy", "barycenter", "--levels", "2")
    rows = _rows(out)
    assert code == 0 and [r["level"] for r in rows] == ["1", "2"]
    assert float(rows[0]["beta"]) == pytest.approx(0.26301, abs=5e-6)
    assert float(rows[1]["rate"]) == pytest.approx(0.30749, abs=2e-3)


def test_infsup_local(capsys):
    code, out, _ = _run(capsys, "infsup-local", "0", "0", "1", "0", "0", "1")
    row = _rows(out)[0]
    assert code == 0 and float(row["beta_local"]) == pytest.approx(0.26301, abs=5e-6)


def test_stokes_with_dump(tmp_path, capsys):
    d = tmp_path / "mats"
    code, out, _ = _run(capsys, "stokes", "--N", "4", "--eps", "0.1", "--tau", "0.2",
                        "--strategy", "barycenter", "--dump-matrices", str(d))
    assert code == 0
    row = _rows(out)[0]
    assert float(row["linf_div"]) <= 1e-9 * float(row["h1_uh"])
    assert sorted(p.name for p in d.iterdir()) == ["B.txt", "K.txt", "M.txt"]
    header = (d / "K.txt").read_text().splitlines()[0].split()
    assert header[0] == "#" and header[1] == header[2]


def test_stokes_unsplit_mesh_fails_cleanly(capsys):
    # without the split the SV pair has spurious pressure modes
    code, _, err = _run(capsys, "stokes", "--N", "4", "--eps", "0.1", "--tau", "0.3",
                        "--strategy", "none")
    assert code == 1 and err.strip().splitlines()[-1].startswith("error: StokesError")


def test_convergence_csv(capsys):
    code, out, _ = _run(capsys, "convergence", "--N-list", "2,4", "--eps", "0.1", "--tau", "0.2")
    rows = _rows(out)
    assert code == 0 and len(rows) == 4
    assert [r["strategy"] for r in rows] == ["barycenter", "incenter"] * 2
    errs = [float(r["l2_vel"]) for r in rows]
    assert errs[2] < errs[0] and errs[3] < errs[1]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "svlab.cli", "infsup-local", "0", "0", "1", "0",
                          "0", "3", "--strategy", "incenter"], capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout.startswith("beta_local,aspect\n")
    assert np.isfinite(float(res.stdout.splitlines()[1].split(",")[0]))


def test_single_refinement(tmp_path, capsys):
    m0, m1 = tmp_path / "m.svmesh", tmp_path / "r.svmesh"
    assert _run(capsys, "generate", "--unit-square", "2", "--out", str(m0))[0] == 0
    assert _run(capsys, "refine", "--in", str(m0), "--strategy", "incenter", "--levels", "1",
                "--out", str(m1))[0] == 0
    assert read_mesh(m1).num_cells == 24


def test_infsup_third_level_rate(capsys):
    code, out, _ = _run(capsys, "infsup", "--levels", "3")
    rows = _rows(out)
    assert code == 0 and rows[0]["rate"] == ""
    assert 0.9 <= float(rows[2]["rate"]) <= 1.1
