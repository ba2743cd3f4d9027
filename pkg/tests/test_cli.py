import csv
import io
import json

import pytest

from rrmfem import cli
from rrmfem.exceptions import NumericalError
from rrmfem.mesh import build_uniform


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_dims_rrm(capsys):
    code, out, _ = run(capsys, "dims", "--m", "3", "--n", "3")
    data = json.loads(out)
    assert code == 0
    assert (data["dim_rrm"], data["n_constraints"], data["rank"]) == (10, 12, 12)


def test_dims_mc(capsys):
    _, out, _ = run(capsys, "dims", "--m", "1", "--n", "1", "--element", "mc")
    assert json.loads(out)["dim_mc"] == 6
    _, out, _ = run(capsys, "dims", "--m", "2", "--n", "2", "--element", "mc", "--homogeneous")
    assert json.loads(out)["dim_mc_hom"] == 5


def test_verify(capsys):
    code, out, _ = run(capsys, "verify", "--m", "4", "--n", "3")
    data = json.loads(out)
    assert code == 0 and data["passed"] and data["max_violation"] < 1e-10
    _, out, _ = run(capsys, "verify", "--m", "2", "--n", "2")
    assert json.loads(out)["n_basis"] == 5


def test_precondition_exit_code(capsys):
    code, out, err = run(capsys, "verify", "--m", "1", "--n", "2")
    assert code == 2 and out == ""
    assert json.loads(err) == {"error": "precondition",
                               "message": "m, n >= 2 required for the RRM basis"}
    code, _, err = run(capsys, "eigen", "--domain", "l-shape", "--formulation", "reduced")
    assert code == 2 and "saddle" in json.loads(err)["message"]
    code, _, _ = run(capsys, "dims", "--domain", "torus")
    assert code == 2


def test_numerical_exit_code(capsys, monkeypatch):
    def boom(cfg):
        raise NumericalError("rank gap 1")

    monkeypatch.setattr(cli, "run", boom)
    code, _, err = run(capsys, "dims")
    assert code == 3 and json.loads(err)["error"] == "numerical"


def test_eigen_table_row(capsys):
    code, out, _ = run(capsys, "eigen", "--element", "rrm", "--uniform", "--hx", "0.25",
                       "--aspect", "2", "--k", "6")
    rows = list(csv.reader(io.StringIO(out)))
    values = [float(v) for v in rows[1][3:9]]
    assert values == pytest.approx([18.559, 44.961, 45.655, 63.427, 90.249, 95.913], abs=0.002)


def test_eigen_l_shape(capsys):
    _, out, _ = run(capsys, "eigen", "--domain", "l-shape", "--hx", "0.125", "--k", "6")
    rows = list(csv.reader(io.StringIO(out)))
    assert float(rows[1][5]) == pytest.approx(19.428, abs=0.002)


def test_eigen_json_with_lower_bounds(capsys):
    _, out, _ = run(capsys, "eigen", "--hx", "0.25,0.125", "--k", "3", "--format", "json")
    data = json.loads(out)
    assert all(e["below_exact"] and e["monotone"] for e in data["lower_bounds"]["eigenvalues"])


def test_source_is_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert cli.main(["source", "--levels", "4,8,16", "--out", str(path), "--jobs", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = list(csv.reader(io.StringIO(a.read_text())))
    assert rows[0] == ["level", "h", "hx", "energy_err", "l2_err", "eoc_energy", "eoc_l2"]
    assert len(rows) == 4


def test_source_json_and_dump(capsys, tmp_path):
    code, out, _ = run(capsys, "source", "--levels", "4,8,16", "--format", "json",
                       "--dump-matrices", str(tmp_path / "mats"))
    data = json.loads(out)
    assert code == 0 and "l2_lower_bound" in data["meta"]
    assert (tmp_path / "mats" / "B.coo").exists()


def test_mesh_file(capsys, tmp_path):
    path = tmp_path / "grid.json"
    build_uniform(3, 2).to_json(path)
    _, out, _ = run(capsys, "dims", "--mesh-file", str(path))
    assert json.loads(out)["dim_rrm"] == 7


def test_parse_domain():
    assert cli.parse_domain("rect:2,1") == (2.0, 1.0)
    assert cli.parse_domain("rect(2, 0.5)") == (2.0, 0.5)
    assert cli.parse_domain("l-shape") == "l-shape"
